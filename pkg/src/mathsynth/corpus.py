"""Persisted record types and the JSONL dataset store.

Every pipeline stage reads and writes JSONL files of the record types below.
Records are immutable value objects with content-derived ids, so re-running
a stage on identical inputs reproduces identical files byte for byte.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .answers import NormalizedAnswer


class InvariantError(ValueError):
    """A record violates one of its declared invariants."""


class RecordParseError(ValueError):
    """A JSONL line could not be decoded into a record."""


class QuestionOrigin(str, Enum):
    SEED = "seed"
    AUGMENTED = "augmented"


class DatasetTag(str, Enum):
    GSM8K_LIKE = "gsm8k-like"
    MATH_LIKE = "math-like"
    OTHER = "other"


class SegmentKind(str, Enum):
    TEXT = "text"
    CODE = "code"
    EXECUTION_RESULT = "execution_result"


class ExecStatus(str, Enum):
    OK = "ok"
    ERROR = "error"
    TIMEOUT = "timeout"


class SolutionStatus(str, Enum):
    COMPLETE = "complete"
    INCOMPLETE = "incomplete"


class Verdict(str, Enum):
    CORRECT = "correct"
    WRONG = "wrong"
    INDETERMINATE = "indeterminate"


def content_id(*parts: object) -> str:
    """Derive a stable 16-hex-digit id from the identifying content."""
    digest = hashlib.blake2b(digest_size=8)
    for part in parts:
        digest.update(b"\x1f")
        digest.update(str(part).encode("utf-8"))
    return digest.hexdigest()


@dataclass(frozen=True)
class Question:
    id: str
    text: str
    origin: QuestionOrigin
    source_solution_id: str | None = None
    dataset_tag: DatasetTag = DatasetTag.OTHER

    @classmethod
    def make(
        cls,
        text: str,
        origin: QuestionOrigin,
        source_solution_id: str | None = None,
        dataset_tag: DatasetTag = DatasetTag.OTHER,
    ) -> "Question":
        qid = content_id("question", text, origin.value, source_solution_id)
        return cls(qid, text, origin, source_solution_id, dataset_tag)

    def validate(self) -> None:
        if not self.id:
            raise InvariantError("Question.id must be non-empty")
        if self.origin is QuestionOrigin.AUGMENTED and not self.source_solution_id:
            raise InvariantError(
                "Question invariant violated: origin=augmented requires source_solution_id"
            )
        if self.origin is QuestionOrigin.SEED and self.source_solution_id:
            raise InvariantError(
                "Question invariant violated: origin=seed forbids source_solution_id"
            )

    def to_dict(self) -> dict:
        return {
            "kind": "question",
            "id": self.id,
            "text": self.text,
            "origin": self.origin.value,
            "source_solution_id": self.source_solution_id,
            "dataset_tag": self.dataset_tag.value,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "Question":
        return cls(
            id=payload["id"],
            text=payload["text"],
            origin=QuestionOrigin(payload["origin"]),
            source_solution_id=payload.get("source_solution_id"),
            dataset_tag=DatasetTag(payload.get("dataset_tag", "other")),
        )


@dataclass(frozen=True)
class NLSolution:
    """A natural-language solution, either a seed (round 0) or a rewrite."""

    id: str
    text: str
    round: int
    question_id: str | None = None
    parent_solution_id: str | None = None
    template_id: str | None = None

    @classmethod
    def seed(cls, text: str, question_id: str | None = None) -> "NLSolution":
        sid = content_id("solution", text, 0, None, None)
        return cls(sid, text, 0, question_id=question_id)

    @classmethod
    def derived(
        cls, text: str, round: int, parent_solution_id: str, template_id: str
    ) -> "NLSolution":
        sid = content_id("solution", text, round, parent_solution_id, template_id)
        return cls(
            sid,
            text,
            round,
            parent_solution_id=parent_solution_id,
            template_id=template_id,
        )

    def validate(self) -> None:
        if self.round < 0:
            raise InvariantError("NLSolution invariant violated: round must be >= 0")
        is_seed = self.round == 0
        if is_seed and (self.parent_solution_id or self.template_id):
            raise InvariantError(
                "NLSolution invariant violated: round=0 forbids parent_solution_id/template_id"
            )
        if not is_seed and not (self.parent_solution_id and self.template_id):
            raise InvariantError(
                "NLSolution invariant violated: round>0 requires parent_solution_id and template_id"
            )

    def to_dict(self) -> dict:
        return {
            "kind": "nl_solution",
            "id": self.id,
            "text": self.text,
            "round": self.round,
            "question_id": self.question_id,
            "parent_solution_id": self.parent_solution_id,
            "template_id": self.template_id,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "NLSolution":
        return cls(
            id=payload["id"],
            text=payload["text"],
            round=payload["round"],
            question_id=payload.get("question_id"),
            parent_solution_id=payload.get("parent_solution_id"),
            template_id=payload.get("template_id"),
        )


@dataclass(frozen=True)
class Segment:
    """One piece of a code-integrated transcript."""

    kind: SegmentKind
    body: str
    status: ExecStatus | None = None
    lang: str = "python"

    def validate(self) -> None:
        if self.kind is SegmentKind.CODE and not self.body.strip():
            raise InvariantError("Segment invariant violated: code body is empty")
        if self.kind is SegmentKind.EXECUTION_RESULT and self.status is None:
            raise InvariantError(
                "Segment invariant violated: execution result requires a status"
            )
        if self.kind is not SegmentKind.EXECUTION_RESULT and self.status is not None:
            raise InvariantError(
                "Segment invariant violated: only execution results carry a status"
            )

    def to_dict(self) -> dict:
        payload: dict = {"kind": self.kind.value, "body": self.body}
        if self.kind is SegmentKind.CODE:
            payload["lang"] = self.lang
        if self.kind is SegmentKind.EXECUTION_RESULT:
            payload["status"] = self.status.value if self.status else None
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> "Segment":
        kind = SegmentKind(payload["kind"])
        status = None
        if kind is SegmentKind.EXECUTION_RESULT:
            status = ExecStatus(payload.get("status", "ok"))
        return cls(
            kind=kind,
            body=payload["body"],
            status=status,
            lang=payload.get("lang", "python"),
        )


def text_segment(body: str) -> Segment:
    return Segment(SegmentKind.TEXT, body)


def code_segment(body: str, lang: str = "python") -> Segment:
    return Segment(SegmentKind.CODE, body, lang=lang)


def result_segment(body: str, status: ExecStatus = ExecStatus.OK) -> Segment:
    return Segment(SegmentKind.EXECUTION_RESULT, body, status=status)


@dataclass(frozen=True)
class CodeIntegratedSolution:
    id: str
    question_id: str
    segments: tuple[Segment, ...]
    status: SolutionStatus
    final_answer: NormalizedAnswer | None
    generation_count: int

    @classmethod
    def make(
        cls,
        question_id: str,
        segments: Sequence[Segment],
        final_answer: NormalizedAnswer | None,
        generation_count: int,
        sample_index: int = 0,
    ) -> "CodeIntegratedSolution":
        # sample_index salts the id: sampled candidates for one question may
        # produce identical transcripts yet must remain distinct records.
        status = (
            SolutionStatus.COMPLETE if final_answer is not None else SolutionStatus.INCOMPLETE
        )
        body_key = "\x1e".join(f"{s.kind.value}:{s.body}" for s in segments)
        sid = content_id("code_solution", question_id, body_key, generation_count, sample_index)
        return cls(sid, question_id, tuple(segments), status, final_answer, generation_count)

    def validate(self) -> None:
        if not self.segments:
            raise InvariantError(
                "CodeIntegratedSolution invariant violated: segments must be non-empty"
            )
        if self.generation_count < 1:
            raise InvariantError(
                "CodeIntegratedSolution invariant violated: generation_count must be >= 1"
            )
        for seg in self.segments:
            seg.validate()
        for prev, cur in zip(self.segments, self.segments[1:]):
            if (
                cur.kind is SegmentKind.EXECUTION_RESULT
                and prev.kind is not SegmentKind.CODE
            ):
                raise InvariantError(
                    "CodeIntegratedSolution invariant violated: execution result must follow a code segment"
                )
        complete = self.status is SolutionStatus.COMPLETE
        if complete != (self.final_answer is not None):
            raise InvariantError(
                "CodeIntegratedSolution invariant violated: final_answer present iff status=complete"
            )

    def to_dict(self) -> dict:
        return {
            "kind": "code_solution",
            "id": self.id,
            "question_id": self.question_id,
            "segments": [s.to_dict() for s in self.segments],
            "status": self.status.value,
            "final_answer": self.final_answer.to_json() if self.final_answer else None,
            "generation_count": self.generation_count,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "CodeIntegratedSolution":
        answer = payload.get("final_answer")
        return cls(
            id=payload["id"],
            question_id=payload["question_id"],
            segments=tuple(Segment.from_dict(s) for s in payload["segments"]),
            status=SolutionStatus(payload["status"]),
            final_answer=NormalizedAnswer.from_json(answer) if answer else None,
            generation_count=payload["generation_count"],
        )


@dataclass(frozen=True)
class VerificationRecord:
    id: str
    solution_id: str
    rationale: tuple[Segment, ...]
    verdict: Verdict | None
    rederived_answer: NormalizedAnswer | None = None

    @classmethod
    def make(
        cls,
        solution_id: str,
        rationale: Sequence[Segment],
        verdict: Verdict | None = None,
        rederived_answer: NormalizedAnswer | None = None,
    ) -> "VerificationRecord":
        body_key = "\x1e".join(f"{s.kind.value}:{s.body}" for s in rationale)
        rid = content_id("verification", solution_id, body_key)
        return cls(rid, solution_id, tuple(rationale), verdict, rederived_answer)

    def with_verdict(
        self, verdict: Verdict, rederived_answer: NormalizedAnswer | None
    ) -> "VerificationRecord":
        return VerificationRecord(
            self.id, self.solution_id, self.rationale, verdict, rederived_answer
        )

    def validate(self) -> None:
        if self.verdict is None:
            raise InvariantError(
                "VerificationRecord invariant violated: verdict must be set before persisting"
            )
        for seg in self.rationale:
            seg.validate()

    def to_dict(self) -> dict:
        return {
            "kind": "verification",
            "id": self.id,
            "solution_id": self.solution_id,
            "rationale": [s.to_dict() for s in self.rationale],
            "verdict": self.verdict.value if self.verdict else None,
            "rederived_answer": self.rederived_answer.to_json()
            if self.rederived_answer
            else None,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "VerificationRecord":
        rederived = payload.get("rederived_answer")
        return cls(
            id=payload["id"],
            solution_id=payload["solution_id"],
            rationale=tuple(Segment.from_dict(s) for s in payload["rationale"]),
            verdict=Verdict(payload["verdict"]) if payload.get("verdict") else None,
            rederived_answer=NormalizedAnswer.from_json(rederived) if rederived else None,
        )


_RECORD_TYPES = {
    "question": Question,
    "nl_solution": NLSolution,
    "code_solution": CodeIntegratedSolution,
    "verification": VerificationRecord,
}

Record = Question | NLSolution | CodeIntegratedSolution | VerificationRecord


def save_records(path: str | Path, records: Iterable[Record]) -> int:
    """Write records as JSONL, one object per line with stable field order.

    Every record is validated first and ids must be unique within the store;
    a violation aborts the write naming the violated invariant. The file is
    replaced atomically. Returns the number of lines written.
    """
    path = Path(path)
    lines = []
    seen_ids: set[str] = set()
    for record in records:
        record.validate()
        if record.id in seen_ids:
            raise InvariantError(f"store invariant violated: duplicate record id {record.id}")
        seen_ids.add(record.id)
        lines.append(json.dumps(record.to_dict(), ensure_ascii=False))
    payload = "".join(line + "\n" for line in lines)
    scratch = path.with_name(path.name + ".tmp")
    scratch.write_text(payload, encoding="utf-8")
    scratch.replace(path)
    return len(lines)


def load_records(path: str | Path) -> list[Record]:
    """Read a JSONL record file, preserving on-disk order.

    Malformed lines raise RecordParseError naming the 1-based line number.
    """
    path = Path(path)
    records: list[Record] = []
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, 1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordParseError(f"{path}: invalid JSON on line {lineno}: {exc}") from exc
            kind = payload.get("kind")
            record_type = _RECORD_TYPES.get(kind)
            if record_type is None:
                raise RecordParseError(f"{path}: unknown record kind {kind!r} on line {lineno}")
            try:
                record = record_type.from_dict(payload)
            except (KeyError, ValueError) as exc:
                raise RecordParseError(f"{path}: bad record on line {lineno}: {exc}") from exc
            record.validate()
            records.append(record)
    return records


def normalized_text_key(text: str) -> str:
    """Dedup key: whitespace-collapsed, lowercased text."""
    return " ".join(text.split()).lower()


def dedup_solutions(solutions: Sequence[NLSolution]) -> list[NLSolution]:
    """Keep the first occurrence per normalized text, preserving order."""
    seen: set[str] = set()
    kept: list[NLSolution] = []
    for solution in solutions:
        key = normalized_text_key(solution.text)
        if key in seen:
            continue
        seen.add(key)
        kept.append(solution)
    return kept


# Stage keys in pipeline order; the tail of this chain must be monotone
# non-increasing for a fixed question population.
FILTER_CHAIN_STAGES = (
    "candidate_solutions",
    "consistency_survivors",
    "verified_pairs",
)


@dataclass
class DatasetManifest:
    """Per-run accounting: stage counts and a drop-reason histogram.

    Question-level drop reasons: ``consistency`` (candidate answers disagree)
    and ``no_answer`` (no candidate produced an answer). Solution-level drop
    reasons: ``verified_wrong``, ``verified_indeterminate``,
    ``solution_incomplete``, ``generation_error``.
    """

    stage_counts: dict[str, int] = field(default_factory=dict)
    drop_reasons: dict[str, int] = field(default_factory=dict)
    notes: dict[str, int] = field(default_factory=dict)

    def record_stage(self, stage: str, count: int) -> None:
        self.stage_counts[stage] = count

    def record_drop(self, reason: str, count: int = 1) -> None:
        self.drop_reasons[reason] = self.drop_reasons.get(reason, 0) + count

    def record_note(self, key: str, count: int = 1) -> None:
        self.notes[key] = self.notes.get(key, 0) + count

    def validate_filter_chain(self) -> None:
        present = [s for s in FILTER_CHAIN_STAGES if s in self.stage_counts]
        for earlier, later in zip(present, present[1:]):
            if self.stage_counts[later] > self.stage_counts[earlier]:
                raise InvariantError(
                    f"DatasetManifest invariant violated: stage {later!r} count exceeds {earlier!r}"
                )

    def to_dict(self) -> dict:
        return {
            "stage_counts": dict(sorted(self.stage_counts.items())),
            "drop_reasons": dict(sorted(self.drop_reasons.items())),
            "notes": dict(sorted(self.notes.items())),
        }

    def write(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    @classmethod
    def read(cls, path: str | Path) -> "DatasetManifest":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            stage_counts=payload.get("stage_counts", {}),
            drop_reasons=payload.get("drop_reasons", {}),
            notes=payload.get("notes", {}),
        )
