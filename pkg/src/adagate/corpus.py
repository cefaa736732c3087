"""Corpus loading, chunking, and token accounting.

Input files follow the HotpotQA distractor schema, one JSON record per line:
``_id``, ``question``, ``answer``, ``supporting_facts`` (list of
``[title, sentence_idx]`` pairs) and ``context`` (list of
``[title, [sentences]]`` pairs). Each context paragraph becomes one indexed
chunk whose text is the title heading followed by the paragraph body.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Protocol

from .errors import ParseError, ValidationError

PROVENANCE_ORIGINAL = "original"
PROVENANCE_NOISE_SYNTAX = "noise_syntax"
PROVENANCE_NOISE_CROSSQUERY = "noise_crossquery"
PROVENANCE_REDUNDANT = "redundant_variant"
PROVENANCES = (
    PROVENANCE_ORIGINAL,
    PROVENANCE_NOISE_SYNTAX,
    PROVENANCE_NOISE_CROSSQUERY,
    PROVENANCE_REDUNDANT,
)


class Tokenizer(Protocol):
    def count(self, text: str) -> int: ...


class WhitespaceTokenizer:
    """Counts whitespace-delimited tokens.

    Deterministic and additive over concatenation with a space:
    ``count(a + " " + b) == count(a) + count(b)`` for non-empty ``a``, ``b``.
    Live runs may substitute a model tokenizer implementing the same
    protocol; every offline test relies on this default.
    """

    def count(self, text: str) -> int:
        return len(text.split())


DEFAULT_TOKENIZER = WhitespaceTokenizer()


def count_tokens(text: str, tokenizer: Tokenizer | None = None) -> int:
    """Token length of ``text`` under the given (default: whitespace) tokenizer."""
    return (tokenizer or DEFAULT_TOKENIZER).count(text)


@dataclass(frozen=True)
class Example:
    """One multi-hop question with its gold supervision and context paragraphs."""

    id: str
    question: str
    gold_answer: str
    gold_titles: frozenset[str]
    paragraphs: tuple[tuple[str, tuple[str, ...]], ...]

    def validate(self) -> None:
        if not self.question.strip():
            raise ValidationError(f"example {self.id!r}: empty question")
        if not self.gold_titles:
            raise ValidationError(f"example {self.id!r}: no gold titles")
        titles = {title for title, _ in self.paragraphs}
        missing = sorted(self.gold_titles - titles)
        if missing:
            raise ValidationError(
                f"example {self.id!r}: gold titles not found in context: {', '.join(missing)}"
            )


@dataclass(frozen=True)
class Chunk:
    """One indexed passage: a title heading plus paragraph body."""

    chunk_id: str
    title: str
    body: str
    token_len: int
    source_example: str
    provenance: str = PROVENANCE_ORIGINAL

    def __post_init__(self) -> None:
        if self.provenance not in PROVENANCES:
            raise ValidationError(f"chunk {self.chunk_id!r}: unknown provenance {self.provenance!r}")
        if self.token_len < 0:
            raise ValidationError(f"chunk {self.chunk_id!r}: negative token_len")

    @property
    def text(self) -> str:
        """Full indexed text: the title as a heading line, then the body."""
        return f"{self.title}\n{self.body}"


def make_chunk(
    chunk_id: str,
    title: str,
    body: str,
    source_example: str,
    provenance: str = PROVENANCE_ORIGINAL,
    tokenizer: Tokenizer | None = None,
) -> Chunk:
    """Build a chunk with ``token_len`` recomputed from its text."""
    token_len = count_tokens(f"{title}\n{body}", tokenizer)
    return Chunk(
        chunk_id=chunk_id,
        title=title,
        body=body,
        token_len=token_len,
        source_example=source_example,
        provenance=provenance,
    )


def load_examples(path: str | Path, limit: int | None = None) -> list[Example]:
    """Load examples from a line-delimited HotpotQA-style file, in file order.

    Raises ParseError naming the offending record index for malformed
    records, and ValidationError when a gold title is absent from the
    context paragraphs.
    """
    path = Path(path)
    examples: list[Example] = []
    with path.open("r", encoding="utf-8") as handle:
        for i, line in enumerate(handle):
            if not line.strip():
                continue
            if limit is not None and len(examples) >= limit:
                break
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"record {i}: invalid JSON ({exc})") from exc
            examples.append(_example_from_record(record, i))
    if limit is not None:
        examples = examples[:limit]
    return examples


def _example_from_record(record: dict, index: int) -> Example:
    for field in ("_id", "question", "answer", "supporting_facts", "context"):
        if field not in record:
            raise ParseError(f"record {index}: missing field {field!r}")
    try:
        gold_titles = frozenset(str(title) for title, _ in record["supporting_facts"])
        paragraphs = tuple(
            (str(title), tuple(str(s) for s in sentences))
            for title, sentences in record["context"]
        )
    except (TypeError, ValueError) as exc:
        raise ParseError(f"record {index}: malformed context or supporting_facts ({exc})") from exc
    example = Example(
        id=str(record["_id"]),
        question=str(record["question"]),
        gold_answer=str(record["answer"]),
        gold_titles=gold_titles,
        paragraphs=paragraphs,
    )
    try:
        example.validate()
    except ValidationError as exc:
        raise ValidationError(f"record {index}: {exc}") from exc
    return example


def chunk_corpus(examples: Iterable[Example], tokenizer: Tokenizer | None = None) -> list[Chunk]:
    """One chunk per context paragraph, title preserved, provenance=original."""
    chunks: list[Chunk] = []
    for example in examples:
        for j, (title, sentences) in enumerate(example.paragraphs):
            chunks.append(
                make_chunk(
                    chunk_id=f"{example.id}-p{j}",
                    title=title,
                    body=" ".join(sentences),
                    source_example=example.id,
                    tokenizer=tokenizer,
                )
            )
    return chunks


def chunk_to_record(chunk: Chunk) -> dict:
    return {
        "chunk_id": chunk.chunk_id,
        "title": chunk.title,
        "body": chunk.body,
        "token_len": chunk.token_len,
        "source_example": chunk.source_example,
        "provenance": chunk.provenance,
    }


def chunk_from_record(record: dict) -> Chunk:
    try:
        return Chunk(
            chunk_id=str(record["chunk_id"]),
            title=str(record["title"]),
            body=str(record["body"]),
            token_len=int(record["token_len"]),
            source_example=str(record["source_example"]),
            provenance=str(record["provenance"]),
        )
    except KeyError as exc:
        raise ParseError(f"chunk record missing field {exc}") from exc


def write_chunks(path: str | Path, chunks: Iterable[Chunk]) -> int:
    count = 0
    with Path(path).open("w", encoding="utf-8") as handle:
        for chunk in chunks:
            handle.write(json.dumps(chunk_to_record(chunk)) + "\n")
            count += 1
    return count


def read_chunks(path: str | Path) -> list[Chunk]:
    chunks: list[Chunk] = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for i, line in enumerate(handle):
            if not line.strip():
                continue
            try:
                chunks.append(chunk_from_record(json.loads(line)))
            except json.JSONDecodeError as exc:
                raise ParseError(f"chunk record {i}: invalid JSON ({exc})") from exc
    return chunks


def builtin_fixture_path() -> Path:
    """Path of the bundled two-example fixture corpus."""
    return Path(str(resources.files("adagate").joinpath("data/fixture.jsonl")))
