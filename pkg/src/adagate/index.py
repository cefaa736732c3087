"""Embedding and top-k retrieval over named namespaces.

The offline embedder is a hashed bag-of-words. Its exact definition, which
tests reproduce independently, is:

1. lowercase the text and split on whitespace;
2. strip leading and trailing characters outside ``[a-z0-9_]`` from each
   token, dropping tokens that become empty;
3. hash each token with FNV-1a 64-bit over its UTF-8 bytes;
4. accumulate a count at coordinate ``hash % dim`` (dim defaults to 256);
5. L2-normalize the result. Empty text yields the all-zero vector, and
   cosine against a zero vector is defined as 0.

Vectors are stored sparsely as coordinate -> value maps over the fixed
dimension, which keeps very large dims cheap; ``densify`` expands one to
its full component list. Hash collisions are acceptable; determinism is
the requirement. A remote HTTP backend implementing the common embeddings
wire format can be substituted via configuration; no test requires it.
"""

from __future__ import annotations

import json
import math
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import requests

from .corpus import Chunk, chunk_from_record, chunk_to_record
from .errors import (
    DuplicateIdError,
    ParseError,
    SchemaError,
    TransportError,
    UnknownNamespaceError,
)

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

_KEEP = frozenset("abcdefghijklmnopqrstuvwxyz0123456789_")

SNAPSHOT_SCHEMA = "index@1"
DEFAULT_DIM = 256

# Sparse unit vector: coordinate -> component, zero coordinates omitted.
Vector = dict[int, float]


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash."""
    h = FNV64_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV64_PRIME) & _MASK64
    return h


def normalize_tokens(text: str) -> list[str]:
    """Lowercased whitespace tokens with non-[a-z0-9_] edges stripped."""
    tokens = []
    for raw in text.lower().split():
        start = 0
        end = len(raw)
        while start < end and raw[start] not in _KEEP:
            start += 1
        while end > start and raw[end - 1] not in _KEEP:
            end -= 1
        if end > start:
            tokens.append(raw[start:end])
    return tokens


def cosine(a: Vector, b: Vector) -> float:
    """Cosine between unit (or zero) sparse vectors; zero vectors score 0."""
    if len(b) < len(a):
        a, b = b, a
    value = 0.0
    for coord in sorted(a):
        other = b.get(coord)
        if other is not None:
            value += a[coord] * other
    return max(-1.0, min(1.0, value))


def densify(vector: Vector, dim: int) -> list[float]:
    """Expand a sparse vector to its full component list."""
    dense = [0.0] * dim
    for coord, value in vector.items():
        dense[coord] = value
    return dense


class HashingEmbedder:
    """Deterministic hashed bag-of-words embedder."""

    backend = "hash"

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim
        self._cache: dict[str, Vector] = {}

    def embed_one(self, text: str) -> Vector:
        cached = self._cache.get(text)
        if cached is not None:
            return cached
        counts: dict[int, float] = {}
        for token in normalize_tokens(text):
            coord = fnv1a64(token.encode("utf-8")) % self.dim
            counts[coord] = counts.get(coord, 0.0) + 1.0
        norm = math.sqrt(sum(v * v for v in counts.values()))
        vector = {coord: value / norm for coord, value in sorted(counts.items())} if norm else {}
        self._cache[text] = vector
        return vector

    def embed(self, texts: Sequence[str]) -> list[Vector]:
        return [self.embed_one(text) for text in texts]


class RemoteEmbedder:
    """Client for an HTTP service speaking the common embeddings wire format.

    The API key is read from the environment variable named ``key_env``;
    it is never passed on the command line. Failures surface as
    TransportError with retry metadata.
    """

    backend = "remote"

    def __init__(
        self,
        url: str,
        dim: int,
        key_env: str = "ADAGATE_EMBED_KEY",
        model: str = "text-embedding-3-small",
        timeout: float = 30.0,
        max_attempts: int = 3,
        session: requests.Session | None = None,
    ):
        self.url = url.rstrip("/")
        self.dim = dim
        self.key_env = key_env
        self.model = model
        self.timeout = timeout
        self.max_attempts = max_attempts
        self._session = session or requests.Session()
        self._cache: dict[str, Vector] = {}

    def embed(self, texts: Sequence[str]) -> list[Vector]:
        missing = [t for t in texts if t not in self._cache]
        if missing:
            for text, values in zip(missing, self._request(missing)):
                if len(values) != self.dim:
                    raise TransportError(
                        f"embedding service returned dim {len(values)}, expected {self.dim}",
                        retriable=False,
                    )
                norm = math.sqrt(sum(v * v for v in values))
                self._cache[text] = (
                    {i: v / norm for i, v in enumerate(values) if v} if norm else {}
                )
        return [self._cache[t] for t in texts]

    def embed_one(self, text: str) -> Vector:
        return self.embed([text])[0]

    def _request(self, texts: list[str]) -> list[list[float]]:
        headers = {}
        key = os.environ.get(self.key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = {"model": self.model, "input": texts}
        last_error: Exception | None = None
        for attempt in range(1, self.max_attempts + 1):
            try:
                response = self._session.post(
                    f"{self.url}/embeddings", json=payload, headers=headers, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if response.status_code in (429, 500, 502, 503):
                last_error = TransportError(
                    f"embedding service returned {response.status_code}",
                    retriable=True,
                    attempts=attempt,
                )
                continue
            if response.status_code != 200:
                raise TransportError(
                    f"embedding service returned {response.status_code}: {response.text[:200]}",
                    retriable=False,
                    attempts=attempt,
                )
            body = response.json()
            try:
                return [item["embedding"] for item in body["data"]]
            except (KeyError, TypeError) as exc:
                raise TransportError(
                    f"malformed embedding response: {exc}", retriable=False, attempts=attempt
                ) from exc
        raise TransportError(
            f"embedding service unreachable after {self.max_attempts} attempts: {last_error}",
            retriable=True,
            attempts=self.max_attempts,
        )


@dataclass(frozen=True)
class RetrievalHit:
    chunk_id: str
    score: float
    namespace: str


class VectorIndex:
    """In-memory vector store with isolated namespaces.

    Reads are lock-free; writes take a lock per index. Pools stay small
    (tens of thousands of chunks), so queries are an exact scan.
    """

    def __init__(self, embedder: HashingEmbedder | RemoteEmbedder):
        self.embedder = embedder
        self._spaces: dict[str, dict[str, tuple[Chunk, Vector]]] = {}
        self._lock = threading.Lock()

    def namespaces(self) -> list[str]:
        return sorted(self._spaces)

    def size(self, namespace: str) -> int:
        return len(self._space(namespace))

    def upsert(self, namespace: str, chunks: Sequence[Chunk]) -> int:
        """Insert or replace chunks; returns the number processed."""
        seen: set[str] = set()
        duplicates: set[str] = set()
        for chunk in chunks:
            if chunk.chunk_id in seen:
                duplicates.add(chunk.chunk_id)
            seen.add(chunk.chunk_id)
        if duplicates:
            raise DuplicateIdError(sorted(duplicates))
        vectors = self.embedder.embed([c.text for c in chunks])
        with self._lock:
            space = self._spaces.setdefault(namespace, {})
            for chunk, vec in zip(chunks, vectors):
                space[chunk.chunk_id] = (chunk, vec)
        return len(chunks)

    def query_top_k(self, namespace: str, query_text: str, k: int) -> list[RetrievalHit]:
        """Top-k hits by cosine, tie-broken by ascending chunk id."""
        if k < 1:
            raise ValueError("k must be positive")
        space = self._space(namespace)
        query = self.embedder.embed_one(query_text)
        scored = [(chunk_id, cosine(vec, query)) for chunk_id, (_, vec) in space.items()]
        scored.sort(key=lambda pair: (-pair[1], pair[0]))
        return [
            RetrievalHit(chunk_id=chunk_id, score=score, namespace=namespace)
            for chunk_id, score in scored[:k]
        ]

    def get_chunk(self, namespace: str, chunk_id: str) -> Chunk:
        space = self._space(namespace)
        try:
            return space[chunk_id][0]
        except KeyError as exc:
            raise UnknownNamespaceError(f"chunk {chunk_id!r} not in namespace {namespace!r}") from exc

    def chunks(self, namespace: str) -> list[Chunk]:
        return [entry[0] for _, entry in sorted(self._space(namespace).items())]

    def _space(self, namespace: str) -> dict[str, tuple[Chunk, Vector]]:
        try:
            return self._spaces[namespace]
        except KeyError as exc:
            raise UnknownNamespaceError(f"unknown namespace {namespace!r}") from exc

    def save(self, path: str | Path) -> None:
        """Write a line-delimited snapshot: header, then (namespace, chunk, vector)."""
        path = Path(path)
        tmp = path.with_suffix(path.suffix + ".tmp")
        with tmp.open("w", encoding="utf-8") as handle:
            header = {
                "schema": SNAPSHOT_SCHEMA,
                "dim": self.embedder.dim,
                "embedder": self.embedder.backend,
            }
            handle.write(json.dumps(header) + "\n")
            for namespace in self.namespaces():
                space = self._spaces[namespace]
                for chunk_id in sorted(space):
                    chunk, vec = space[chunk_id]
                    coords = sorted(vec)
                    record = {
                        "namespace": namespace,
                        "chunk": chunk_to_record(chunk),
                        "vector": {
                            "idx": coords,
                            "val": [vec[c] for c in coords],
                        },
                    }
                    handle.write(json.dumps(record) + "\n")
        os.replace(tmp, path)

    @classmethod
    def load(
        cls, path: str | Path, embedder: HashingEmbedder | RemoteEmbedder | None = None
    ) -> "VectorIndex":
        path = Path(path)
        with path.open("r", encoding="utf-8") as handle:
            header_line = handle.readline()
            try:
                header = json.loads(header_line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"snapshot header is not JSON: {exc}") from exc
            if header.get("schema") != SNAPSHOT_SCHEMA:
                raise SchemaError(f"unexpected snapshot schema {header.get('schema')!r}")
            dim = int(header["dim"])
            if embedder is None:
                if header.get("embedder") != "hash":
                    raise SchemaError(
                        "snapshot was built with a remote embedder; pass the matching embedder explicitly"
                    )
                embedder = HashingEmbedder(dim=dim)
            elif embedder.dim != dim:
                raise SchemaError(f"snapshot dim {dim} does not match embedder dim {embedder.dim}")
            index = cls(embedder)
            for i, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                    chunk = chunk_from_record(record["chunk"])
                    sparse = record["vector"]
                    vec = {int(c): float(v) for c, v in zip(sparse["idx"], sparse["val"])}
                    namespace = str(record["namespace"])
                except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                    raise ParseError(f"snapshot record {i}: {exc}") from exc
                index._spaces.setdefault(namespace, {})[chunk.chunk_id] = (chunk, vec)
        return index


def brute_force_top_k(
    embedder: HashingEmbedder | RemoteEmbedder,
    chunks: Iterable[Chunk],
    query_text: str,
    k: int,
) -> list[tuple[str, float]]:
    """Exhaustive cosine scan; the reference oracle for query_top_k."""
    query = embedder.embed_one(query_text)
    scored = [(c.chunk_id, cosine(embedder.embed_one(c.text), query)) for c in chunks]
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[:k]
