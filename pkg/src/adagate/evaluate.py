"""Evidence precision/recall/F1, token-efficiency statistics, and reports.

Evidence quality is computed against gold supporting titles with selected
titles deduplicated first. ``tokens_per_correct`` is the mean input token
count over correctly answered questions only; when nothing was answered
correctly it is reported as an undefined marker, never zero. Reports carry
one row per (condition, mode) pair actually present in the results.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ParseError, SchemaError, ValidationError

RESULT_SCHEMA = "result@1"
UNDEFINED = "n/a"


@dataclass(frozen=True)
class ExampleResult:
    example_id: str
    condition: str
    mode: str
    correct: bool
    precision: float
    recall: float
    f1: float
    input_tokens: int
    docs_passed: int
    termination_reason: str = "none"

    def to_record(self) -> dict:
        return {
            "schema": RESULT_SCHEMA,
            "example_id": self.example_id,
            "condition": self.condition,
            "mode": self.mode,
            "correct": self.correct,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "input_tokens": self.input_tokens,
            "docs_passed": self.docs_passed,
            "termination_reason": self.termination_reason,
        }

    @classmethod
    def from_record(cls, record: dict) -> "ExampleResult":
        try:
            return cls(
                example_id=str(record["example_id"]),
                condition=str(record["condition"]),
                mode=str(record["mode"]),
                correct=bool(record["correct"]),
                precision=float(record["precision"]),
                recall=float(record["recall"]),
                f1=float(record["f1"]),
                input_tokens=int(record["input_tokens"]),
                docs_passed=int(record["docs_passed"]),
                termination_reason=str(record.get("termination_reason", "none")),
            )
        except KeyError as exc:
            raise ParseError(f"result record missing field {exc}") from exc


def evidence_prf(
    selected_titles: Iterable[str], gold_titles: Iterable[str]
) -> tuple[float, float, float]:
    """Title-level precision, recall, and F1 with duplicate selections ignored."""
    gold = set(gold_titles)
    if not gold:
        raise ValidationError("gold title set must be non-empty")
    selected = set(selected_titles)
    if not selected:
        return 0.0, 0.0, 0.0
    overlap = len(selected & gold)
    precision = overlap / len(selected)
    recall = overlap / len(gold)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


@dataclass(frozen=True)
class TokenStats:
    avg_tokens: float
    avg_docs: float
    tokens_per_correct: float | None


def token_stats(results: Sequence[ExampleResult]) -> TokenStats:
    if not results:
        raise ValidationError("token_stats needs at least one result")
    avg_tokens = sum(r.input_tokens for r in results) / len(results)
    avg_docs = sum(r.docs_passed for r in results) / len(results)
    correct = [r.input_tokens for r in results if r.correct]
    tokens_per_correct = sum(correct) / len(correct) if correct else None
    return TokenStats(avg_tokens=avg_tokens, avg_docs=avg_docs, tokens_per_correct=tokens_per_correct)


@dataclass(frozen=True)
class ReportRow:
    condition: str
    mode: str
    n: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    avg_tokens: float
    avg_docs: float
    tokens_per_correct: float | None


@dataclass(frozen=True)
class Report:
    rows: tuple[ReportRow, ...]


def aggregate(results: Sequence[ExampleResult]) -> Report:
    """One row of arithmetic means per (condition, mode) pair present."""
    groups: dict[tuple[str, str], list[ExampleResult]] = {}
    for result in results:
        groups.setdefault((result.condition, result.mode), []).append(result)
    rows = []
    for (condition, mode), members in sorted(groups.items()):
        stats = token_stats(members)
        rows.append(
            ReportRow(
                condition=condition,
                mode=mode,
                n=len(members),
                accuracy=100.0 * sum(1 for r in members if r.correct) / len(members),
                precision=sum(r.precision for r in members) / len(members),
                recall=sum(r.recall for r in members) / len(members),
                f1=sum(r.f1 for r in members) / len(members),
                avg_tokens=stats.avg_tokens,
                avg_docs=stats.avg_docs,
                tokens_per_correct=stats.tokens_per_correct,
            )
        )
    return Report(rows=tuple(rows))


def read_results(paths: Sequence[str | Path]) -> list[ExampleResult]:
    """Read line-delimited result records; mixed schema tags are an error."""
    results: list[ExampleResult] = []
    schema_seen: str | None = None
    for path in paths:
        with Path(path).open("r", encoding="utf-8") as handle:
            for i, line in enumerate(handle):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(f"{path}: record {i}: invalid JSON ({exc})") from exc
                if record.get("error"):
                    continue
                schema = record.get("schema")
                if schema_seen is None:
                    schema_seen = schema
                elif schema != schema_seen:
                    raise SchemaError(
                        f"{path}: record {i}: schema {schema!r} mixed with {schema_seen!r}"
                    )
                if schema != RESULT_SCHEMA:
                    raise SchemaError(f"{path}: record {i}: unexpected schema {schema!r}")
                results.append(ExampleResult.from_record(record))
    return results


_COLUMNS = (
    "condition",
    "mode",
    "n",
    "accuracy",
    "precision",
    "recall",
    "f1",
    "avg_tokens",
    "avg_docs",
    "tokens_per_correct",
)


def _row_cells(row: ReportRow) -> list[str]:
    tpc = UNDEFINED if row.tokens_per_correct is None else f"{row.tokens_per_correct:.1f}"
    return [
        row.condition,
        row.mode,
        str(row.n),
        f"{row.accuracy:.1f}",
        f"{row.precision:.3f}",
        f"{row.recall:.3f}",
        f"{row.f1:.3f}",
        f"{row.avg_tokens:.1f}",
        f"{row.avg_docs:.1f}",
        tpc,
    ]


def render_table(report: Report) -> str:
    """Aligned text table, header always present."""
    table = [list(_COLUMNS)] + [_row_cells(row) for row in report.rows]
    widths = [max(len(line[i]) for line in table) for i in range(len(_COLUMNS))]
    lines = ["  ".join(cell.ljust(width) for cell, width in zip(line, widths)).rstrip() for line in table]
    return "\n".join(lines)


def render_csv(report: Report) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(_COLUMNS)
    for row in report.rows:
        cells = _row_cells(row)
        cells[-1] = "" if row.tokens_per_correct is None else cells[-1]
        writer.writerow(cells)
    return buffer.getvalue()


def build_report(paths: Sequence[str | Path]) -> Report:
    return aggregate(read_results(paths))
