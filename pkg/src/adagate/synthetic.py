"""Generator for self-contained two-hop QA worlds in the corpus file schema.

Each generated question has two gold paragraphs. The first names the
question's subject and links it to a bridge entity; the second carries the
bridge entity's target attribute, whose value is the gold answer. Bridge
paragraphs share no vocabulary with their question, so retrieval can reach
them only through a micro-query built from the bridge entity once the first
hop is in the ledger. Distractor paragraphs are filler with no extractable
facts; they come first in every context so that tie-broken retrieval
fills with inert passages. Every paragraph is padded to an exact token
length, keeping budget arithmetic in experiments predictable. The seed
offsets the filler vocabulary, so different seeds produce disjoint worlds.

Facts and question slots use the markup conventions of the rule-based
oracle (``ENT[..] REL[..] VAL[..]`` and ``SLOT[entity|relation]`` with
``*N`` back-references).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import count
from pathlib import Path
from typing import Iterable, Iterator

from .corpus import Example, count_tokens


@dataclass(frozen=True)
class WorldSpec:
    n_questions: int = 50
    distractors: int = 8
    chunk_tokens: int = 60
    fact_repeats: int = 3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_questions < 1:
            raise ValueError("n_questions must be >= 1")
        if self.chunk_tokens < 30:
            raise ValueError("chunk_tokens must be >= 30 to fit facts plus filler")


def _filler_sentences(words_needed: int, fresh: Iterator[int]) -> list[str]:
    sentences: list[str] = []
    remaining = words_needed
    while remaining > 0:
        size = min(6, remaining)
        words = [f"w{next(fresh)}" for _ in range(size)]
        sentences.append(" ".join(words) + ".")
        remaining -= size
    return sentences


def _pad_paragraph(title: str, sentences: list[str], target_tokens: int, fresh: Iterator[int]) -> list[str]:
    base = count_tokens(f"{title}\n{' '.join(sentences)}")
    if base > target_tokens:
        raise ValueError(f"paragraph {title!r} already has {base} tokens, target {target_tokens}")
    return sentences + _filler_sentences(target_tokens - base, fresh)


def generate_world(spec: WorldSpec) -> list[Example]:
    fresh = count(spec.seed * 1_000_003)
    examples: list[Example] = []
    for i in range(spec.n_questions):
        subj = f"subj{i:03d}"
        mid = f"mid{i:03d}"
        obj = f"obj{i:03d}"
        rel_a = f"rel{i:03d}a"
        rel_b = f"rel{i:03d}b"

        paragraphs: list[tuple[str, tuple[str, ...]]] = []
        for _ in range(spec.distractors):
            junk_title = f"entry w{next(fresh)}"
            junk_sentences = _pad_paragraph(junk_title, [], spec.chunk_tokens, fresh)
            paragraphs.append((junk_title, tuple(junk_sentences)))

        hop_title = f"{subj} profile"
        hop_sentences = [f"the {subj} {rel_a} {mid}."] * spec.fact_repeats
        hop_sentences.append(f"ENT[{subj}] REL[{rel_a}] VAL[{mid}].")
        hop_sentences = _pad_paragraph(hop_title, hop_sentences, spec.chunk_tokens, fresh)
        paragraphs.append((hop_title, tuple(hop_sentences)))

        bridge_title = f"{mid} record"
        bridge_sentences = [f"the {mid} {rel_b} {obj}."] * spec.fact_repeats
        bridge_sentences.append(f"ENT[{mid}] REL[{rel_b}] VAL[{obj}].")
        bridge_sentences = _pad_paragraph(bridge_title, bridge_sentences, spec.chunk_tokens, fresh)
        paragraphs.append((bridge_title, tuple(bridge_sentences)))

        question = (
            f"what do we learn about {subj} via SLOT[{subj}|{rel_a}] "
            f"and then SLOT[*1|{rel_b}] regarding {subj}"
        )
        examples.append(
            Example(
                id=f"q{i:03d}",
                question=question,
                gold_answer=obj,
                gold_titles=frozenset({hop_title, bridge_title}),
                paragraphs=tuple(paragraphs),
            )
        )
    return examples


def example_to_record(example: Example) -> dict:
    return {
        "_id": example.id,
        "question": example.question,
        "answer": example.gold_answer,
        "supporting_facts": [[title, 0] for title in sorted(example.gold_titles)],
        "context": [[title, list(sentences)] for title, sentences in example.paragraphs],
    }


def write_examples(path: str | Path, examples: Iterable[Example]) -> int:
    n = 0
    with Path(path).open("w", encoding="utf-8") as handle:
        for example in examples:
            handle.write(json.dumps(example_to_record(example)) + "\n")
            n += 1
    return n
