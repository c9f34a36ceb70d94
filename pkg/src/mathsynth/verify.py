"""Verification-based solution filtering.

Candidate solutions first pass an answer-consistency check (a question is
dropped when its candidates disagree); survivors get a code-integrated
verification rationale, and only solutions whose rationale reads as Correct
are retained.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .answers import NormalizedAnswer, answers_equal, normalize_answer
from .corpus import (
    CodeIntegratedSolution,
    DatasetManifest,
    ExecStatus,
    Question,
    Segment,
    SegmentKind,
    SolutionStatus,
    VerificationRecord,
    Verdict,
)
from .executor import ExecutorConfig
from .gateway import Gateway, GatewayError, ModelRole
from .solver import SolveConfig, generate_solution, run_transcript_loop
from .transcript import serialize_segments

logger = logging.getLogger(__name__)

VERIFY_INSTRUCTION = (
    "Above is a math problem and its solution. Please use code to verify the solution above."
)

# Cue phrases harvested from real verification rationales. Negative cues are
# checked first so that e.g. "incorrect" never matches a positive "correct".
DEFAULT_NEGATIVE_CUES = (
    "verified as wrong",
    "verified to be wrong",
    "there was an error",
    "an error in",
    "does not match",
    "doesn't match",
    "incorrect",
    "not",
)
DEFAULT_POSITIVE_CUES = (
    "verified and correct",
    "verified as correct",
    "verified to be correct",
    "answer is correct",
    "solution is correct",
    "matches",
)


class ConsistencyMode(str, Enum):
    STRICT = "strict"
    MAJORITY = "majority"


@dataclass
class FilterConfig:
    n_candidates: int = 3
    consistency_mode: ConsistencyMode = ConsistencyMode.STRICT
    negative_cues: tuple[str, ...] = DEFAULT_NEGATIVE_CUES
    positive_cues: tuple[str, ...] = DEFAULT_POSITIVE_CUES
    require_rederived_match: bool = False
    temperature: float = 0.7

    def __post_init__(self) -> None:
        if self.n_candidates < 1:
            raise ValueError("n_candidates must be >= 1")


@dataclass(frozen=True)
class ConsistencyDecision:
    kept: tuple[CodeIntegratedSolution, ...]
    dropped: bool
    reason: str | None = None  # "consistency" or "no_answer" when dropped


def consistency_filter(
    question: Question,
    candidates: Sequence[CodeIntegratedSolution],
    mode: ConsistencyMode = ConsistencyMode.STRICT,
) -> ConsistencyDecision:
    """Keep or drop a question based on agreement of its candidate answers.

    Strict mode drops the question if any candidate lacks an answer or any
    two answers differ. Majority mode keeps the candidates of a strict
    majority answer when one exists.
    """
    for candidate in candidates:
        if candidate.question_id != question.id:
            raise ValueError("candidate does not belong to the question under test")
    if not candidates:
        return ConsistencyDecision((), dropped=True, reason="no_answer")

    answers = [c.final_answer for c in candidates]
    if all(a is None for a in answers):
        return ConsistencyDecision((), dropped=True, reason="no_answer")

    if mode is ConsistencyMode.STRICT:
        if any(a is None for a in answers):
            return ConsistencyDecision((), dropped=True, reason="no_answer")
        first = answers[0]
        for other in answers[1:]:
            if not answers_equal(first, other):
                return ConsistencyDecision((), dropped=True, reason="consistency")
        return ConsistencyDecision(tuple(candidates), dropped=False)

    # Majority mode: group answered candidates by answer equality, first-seen.
    groups: list[list[CodeIntegratedSolution]] = []
    for candidate in candidates:
        if candidate.final_answer is None:
            continue
        for group in groups:
            if answers_equal(group[0].final_answer, candidate.final_answer):
                group.append(candidate)
                break
        else:
            groups.append([candidate])
    best = max(groups, key=len)
    if 2 * len(best) > len(candidates):
        return ConsistencyDecision(tuple(best), dropped=False)
    return ConsistencyDecision((), dropped=True, reason="consistency")


def render_verify_prompt(question: Question, solution: CodeIntegratedSolution) -> str:
    """The exact verification prompt: question block, solution block, instruction."""
    if not question.text.strip():
        raise ValueError("cannot verify against an empty question")
    solution_text = serialize_segments(solution.segments)
    return (
        f"**Question**:\n\n{question.text}\n\n"
        f"**Solution**:\n\n{solution_text}\n\n"
        f"{VERIFY_INSTRUCTION}"
    )


def generate_rationale(
    question: Question,
    solution: CodeIntegratedSolution,
    gateway: Gateway,
    config: SolveConfig | None = None,
    executor_config: ExecutorConfig | None = None,
    temperature: float = 0.0,
    sample_index: int = 0,
) -> VerificationRecord:
    """Run the solve loop on the verification prompt; verdict is left unset."""
    config = config or SolveConfig()
    loop = run_transcript_loop(
        render_verify_prompt(question, solution),
        gateway,
        ModelRole.SOLVER_VERIFIER,
        config,
        executor_config,
        temperature=temperature,
        sample_index=sample_index,
    )
    segments = loop.segments or [Segment(SegmentKind.TEXT, "")]
    return VerificationRecord.make(solution_id=solution.id, rationale=segments)


def _cue_pattern(cue: str) -> re.Pattern:
    return re.compile(rf"\b{re.escape(cue)}\b", re.IGNORECASE)


def _rederived_answer(rationale: Sequence[Segment]) -> NormalizedAnswer | None:
    results = [
        s
        for s in rationale
        if s.kind is SegmentKind.EXECUTION_RESULT and s.status is ExecStatus.OK
    ]
    if not results:
        return None
    lines = [line for line in results[-1].body.splitlines() if line.strip()]
    if not lines:
        return None
    return normalize_answer(lines[-1])


def parse_verdict(
    record: VerificationRecord,
    solution_answer: NormalizedAnswer | None,
    config: FilterConfig | None = None,
) -> VerificationRecord:
    """Decide Correct/Wrong/Indeterminate for a rationale.

    Decision order: a re-derived answer from the last execution result that
    disagrees with the solution's answer is decisive (Wrong); agreement is
    decisive (Correct) only with require_rederived_match. Otherwise the
    final prose segment is scanned for negative cues before positive ones.
    Total: never raises on any rationale.
    """
    config = config or FilterConfig()
    rederived = _rederived_answer(record.rationale)

    if rederived is not None and solution_answer is not None:
        if not answers_equal(rederived, solution_answer):
            return record.with_verdict(Verdict.WRONG, rederived)
        if config.require_rederived_match:
            return record.with_verdict(Verdict.CORRECT, rederived)

    final_text = ""
    for segment in reversed(record.rationale):
        if segment.kind is SegmentKind.TEXT:
            final_text = segment.body
            break
    if final_text:
        for cue in config.negative_cues:
            if _cue_pattern(cue).search(final_text):
                return record.with_verdict(Verdict.WRONG, rederived)
        for cue in config.positive_cues:
            if _cue_pattern(cue).search(final_text):
                return record.with_verdict(Verdict.CORRECT, rederived)
    return record.with_verdict(Verdict.INDETERMINATE, rederived)


@dataclass
class FilterOutcome:
    pairs: list[tuple[Question, CodeIntegratedSolution]]
    records: list[VerificationRecord]
    manifest: DatasetManifest

    def retained_questions(self) -> list[Question]:
        """Unique retained questions, first occurrence order (a question
        appears in ``pairs`` once per retained solution)."""
        seen: set[str] = set()
        unique: list[Question] = []
        for question, _ in self.pairs:
            if question.id not in seen:
                seen.add(question.id)
                unique.append(question)
        return unique


def filter_dataset(
    questions: Sequence[Question],
    gateway: Gateway,
    config: FilterConfig | None = None,
    solve_config: SolveConfig | None = None,
    executor_config: ExecutorConfig | None = None,
) -> FilterOutcome:
    """Generate, consistency-check, and verify candidate solutions.

    Drop reasons partition the losses exactly:
    question level, ``questions_in = consistency + no_answer + questions_verified``;
    candidate level, ``questions_in * n_candidates = candidate_solutions +
    candidate_generation_error``; solution level, ``consistency_survivors =
    verified_pairs + verified_wrong + verified_indeterminate +
    verification_error``.
    """
    config = config or FilterConfig()
    solve_config = solve_config or SolveConfig()
    manifest = DatasetManifest()
    pairs: list[tuple[Question, CodeIntegratedSolution]] = []
    records: list[VerificationRecord] = []
    candidate_count = 0
    survivor_count = 0
    questions_verified = 0

    for question in questions:
        candidates: list[CodeIntegratedSolution] = []
        for sample_index in range(config.n_candidates):
            try:
                candidate = generate_solution(
                    question,
                    gateway,
                    solve_config,
                    executor_config,
                    temperature=config.temperature,
                    sample_index=sample_index,
                )
            except GatewayError as exc:
                logger.warning("candidate generation failed for %s: %s", question.id, exc)
                manifest.record_drop("candidate_generation_error")
                continue
            candidates.append(candidate)
            if candidate.status is SolutionStatus.INCOMPLETE:
                manifest.record_note("incomplete_candidates")
        candidate_count += len(candidates)

        decision = consistency_filter(question, candidates, config.consistency_mode)
        if decision.dropped:
            manifest.record_drop(decision.reason or "consistency")
            continue
        questions_verified += 1
        survivor_count += len(decision.kept)

        for solution in decision.kept:
            try:
                record = generate_rationale(
                    question, solution, gateway, solve_config, executor_config
                )
            except GatewayError as exc:
                logger.warning("verification failed for %s: %s", solution.id, exc)
                manifest.record_drop("verification_error")
                continue
            record = parse_verdict(record, solution.final_answer, config)
            records.append(record)
            if record.verdict is Verdict.CORRECT:
                pairs.append((question, solution))
            elif record.verdict is Verdict.WRONG:
                manifest.record_drop("verified_wrong")
            else:
                manifest.record_drop("verified_indeterminate")

    manifest.record_stage("questions_in", len(questions))
    manifest.record_stage("questions_verified", questions_verified)
    manifest.record_stage("candidate_solutions", candidate_count)
    manifest.record_stage("consistency_survivors", survivor_count)
    manifest.record_stage("verified_pairs", len(pairs))
    manifest.validate_filter_chain()
    return FilterOutcome(pairs, records, manifest)
