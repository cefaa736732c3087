"""Shared builders for test fixtures."""

from __future__ import annotations

from adagate.corpus import Chunk, chunk_corpus, make_chunk
from adagate.index import HashingEmbedder, VectorIndex
from adagate.synthetic import WorldSpec, generate_world

WORLD_DIM = 2**20


def sized_chunk(chunk_id: str, token_len: int, source: str = "ex", title: str | None = None) -> Chunk:
    """Chunk with an exact token length and vocabulary unique to its id."""
    title = title or f"title {chunk_id}"
    needed = token_len - len(title.split())
    assert needed >= 0, "token_len too small for the title"
    body = " ".join(f"{chunk_id}w{i}" for i in range(needed))
    return make_chunk(chunk_id, title, body, source)


def fact_chunk(
    chunk_id: str,
    entity: str,
    relation: str,
    value: str,
    *,
    low: bool = False,
    filler: str = "",
    source: str = "ex",
    title: str | None = None,
) -> Chunk:
    mark = " ~" if low else ""
    body = f"the {entity} {relation} {value}. ENT[{entity}] REL[{relation}] VAL[{value}]{mark}."
    if filler:
        body = f"{body} {filler}"
    return make_chunk(chunk_id, title or f"{entity} page", body, source)


def build_world(n_questions: int, seed: int = 7, dim: int = WORLD_DIM, **spec_kwargs):
    """Examples, chunks, and a populated 'clean' index for a synthetic world."""
    examples = generate_world(WorldSpec(n_questions=n_questions, seed=seed, **spec_kwargs))
    chunks = chunk_corpus(examples)
    index = VectorIndex(HashingEmbedder(dim=dim))
    index.upsert("clean", chunks)
    return examples, chunks, index
