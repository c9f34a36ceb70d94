"""Evaluation-time strategies: greedy solve, k-path voting, verified inference.

The decision logic (majority grouping, the verify/re-solve episode loop) is
factored into pure functions driven by callables, so large synthetic
simulations exercise exactly the code the gateway-facing strategies run.
Cost accounting follows the one-generation-per-solve-or-verify rule: a solve
or a verify counts as 1 regardless of internal continuation calls.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

from .answers import NormalizedAnswer, answers_equal, normalize_answer
from .corpus import CodeIntegratedSolution, Question, Verdict
from .executor import ExecutorConfig
from .gateway import Gateway, GatewayError
from .solver import SolveConfig, generate_solution
from .verify import FilterConfig, generate_rationale, parse_verdict

logger = logging.getLogger(__name__)


class TieBreak(str, Enum):
    FIRST_SEEN = "first_seen"
    LEXICOGRAPHIC = "lexicographic"


class Strategy(str, Enum):
    GREEDY = "greedy"
    VOTING = "voting"
    VERIFIED = "verified"


@dataclass
class InferenceConfig:
    strategy: Strategy = Strategy.GREEDY
    k_paths: int = 1  # sampled paths for voting
    max_verify_rounds: int = 2  # verification budget for verified inference
    temperature: float = 0.7  # sampling temperature for voting paths
    tie_break: TieBreak = TieBreak.FIRST_SEEN

    def __post_init__(self) -> None:
        if self.k_paths < 1:
            raise ValueError("k_paths must be >= 1")
        if self.max_verify_rounds < 1:
            raise ValueError("max_verify_rounds must be >= 1")

    def label(self) -> str:
        if self.strategy is Strategy.GREEDY:
            return "greedy"
        if self.strategy is Strategy.VOTING:
            return f"vote:{self.k_paths}"
        return f"verify:{self.max_verify_rounds}"


@dataclass
class CostLedger:
    """Per-question logical generation counts; N-times is their mean."""

    per_question: dict[str, int] = field(default_factory=dict)

    def add(self, question_id: str, generations: int) -> None:
        self.per_question[question_id] = self.per_question.get(question_id, 0) + generations

    def merge(self, other: "CostLedger") -> None:
        for qid, count in other.per_question.items():
            self.add(qid, count)

    @property
    def total(self) -> int:
        return sum(self.per_question.values())

    def n_times(self) -> float:
        if not self.per_question:
            return 0.0
        return self.total / len(self.per_question)


# -- pure decision cores ----------------------------------------------------


def majority_answer(
    answers: Sequence[NormalizedAnswer | None],
    tie_break: TieBreak = TieBreak.FIRST_SEEN,
) -> NormalizedAnswer | None:
    """Group answers by equality and return the largest group's representative.

    Groups form in first-seen order; ties pick the earliest group
    (FIRST_SEEN) or the smallest canonical display string (LEXICOGRAPHIC).
    Answerless entries never form groups.
    """
    groups: list[tuple[NormalizedAnswer, int]] = []
    for answer in answers:
        if answer is None:
            continue
        for i, (representative, count) in enumerate(groups):
            if answers_equal(representative, answer):
                groups[i] = (representative, count + 1)
                break
        else:
            groups.append((answer, 1))
    if not groups:
        return None
    best = max(count for _, count in groups)
    tied = [rep for rep, count in groups if count == best]
    if tie_break is TieBreak.LEXICOGRAPHIC:
        return min(tied, key=lambda rep: rep.display())
    return tied[0]


def run_verified_episode(
    solve: Callable[[int], NormalizedAnswer | None],
    verify: Callable[[NormalizedAnswer | None, int], Verdict],
    max_rounds: int,
) -> tuple[NormalizedAnswer | None, int]:
    """The verify/re-solve loop over abstract solve and verify callables.

    Solve once; then for up to max_rounds: verify the current answer, stop on
    Correct or Indeterminate, re-solve on Wrong. The attempt index is passed
    to the callables. Returns (final answer, logical generation count).
    """
    generations = 1
    answer = solve(0)
    for round_number in range(1, max_rounds + 1):
        generations += 1
        verdict = verify(answer, round_number - 1)
        if verdict is not Verdict.WRONG:
            return answer, generations
        generations += 1
        answer = solve(round_number)
    return answer, generations


# -- gateway-facing strategies ------------------------------------------------


@dataclass
class InferenceOutcome:
    answer: NormalizedAnswer | None
    generations: int
    ledger: CostLedger

    @classmethod
    def make(cls, question_id: str, answer: NormalizedAnswer | None, generations: int):
        ledger = CostLedger()
        ledger.add(question_id, generations)
        return cls(answer, generations, ledger)


def solve_greedy(
    question: Question,
    gateway: Gateway,
    solve_config: SolveConfig | None = None,
    executor_config: ExecutorConfig | None = None,
) -> InferenceOutcome:
    """One greedy (temperature 0) solve; 1 logical generation."""
    solution = generate_solution(
        question, gateway, solve_config, executor_config, temperature=0.0
    )
    return InferenceOutcome.make(question.id, solution.final_answer, 1)


def majority_vote(
    question: Question,
    k: int,
    gateway: Gateway,
    solve_config: SolveConfig | None = None,
    executor_config: ExecutorConfig | None = None,
    temperature: float = 0.7,
    tie_break: TieBreak = TieBreak.FIRST_SEEN,
) -> InferenceOutcome:
    """Sample k solutions and return the most common answer; k generations."""
    if k < 1:
        raise ValueError("k must be >= 1")
    answers: list[NormalizedAnswer | None] = []
    for sample_index in range(k):
        solution = generate_solution(
            question,
            gateway,
            solve_config,
            executor_config,
            temperature=temperature,
            sample_index=sample_index,
        )
        answers.append(solution.final_answer)
    return InferenceOutcome.make(question.id, majority_answer(answers, tie_break), k)


def verified_inference(
    question: Question,
    max_rounds: int,
    gateway: Gateway,
    solve_config: SolveConfig | None = None,
    executor_config: ExecutorConfig | None = None,
    filter_config: FilterConfig | None = None,
) -> InferenceOutcome:
    """Greedy solve, then verify-and-re-solve up to max_rounds times.

    Per-call failures are treated as Indeterminate (keep the current answer
    rather than inflating cost on an unreadable rationale).
    """
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    filter_config = filter_config or FilterConfig()
    solutions: dict[int, CodeIntegratedSolution] = {}

    def solve(attempt: int) -> NormalizedAnswer | None:
        solution = generate_solution(
            question,
            gateway,
            solve_config,
            executor_config,
            temperature=0.0,
            sample_index=attempt,
        )
        solutions[attempt] = solution
        return solution.final_answer

    def verify(answer: NormalizedAnswer | None, attempt: int) -> Verdict:
        solution = solutions[max(solutions)]
        try:
            record = generate_rationale(
                question,
                solution,
                gateway,
                solve_config,
                executor_config,
                sample_index=attempt,
            )
        except GatewayError as exc:
            logger.warning("verification failed for %s: %s", question.id, exc)
            return Verdict.INDETERMINATE
        return parse_verdict(record, answer, filter_config).verdict or Verdict.INDETERMINATE

    answer, generations = run_verified_episode(solve, verify, max_rounds)
    return InferenceOutcome.make(question.id, answer, generations)


# -- evaluation ---------------------------------------------------------------


@dataclass
class QuestionTrace:
    question_id: str
    dataset_tag: str
    predicted: NormalizedAnswer | None
    gold: NormalizedAnswer
    correct: bool
    generations: int


@dataclass
class EvalReport:
    label: str
    accuracy: float
    n_times: float
    traces: list[QuestionTrace]
    skipped: int  # gold answers that failed to parse

    def by_tag(self) -> dict[str, tuple[float, float]]:
        """Per-dataset (accuracy, n_times) breakdown."""
        grouped: dict[str, list[QuestionTrace]] = {}
        for trace in self.traces:
            grouped.setdefault(trace.dataset_tag, []).append(trace)
        return {
            tag: (
                sum(t.correct for t in traces) / len(traces),
                sum(t.generations for t in traces) / len(traces),
            )
            for tag, traces in sorted(grouped.items())
        }

    def to_dict(self) -> dict:
        return {
            "strategy": self.label,
            "accuracy": round(self.accuracy, 6),
            "n_times": round(self.n_times, 6),
            "questions": len(self.traces),
            "skipped": self.skipped,
            "by_dataset": {
                tag: {"accuracy": round(acc, 6), "n_times": round(nx, 6)}
                for tag, (acc, nx) in self.by_tag().items()
            },
        }


def _run_strategy(
    question: Question,
    config: InferenceConfig,
    gateway: Gateway,
    solve_config: SolveConfig | None,
    executor_config: ExecutorConfig | None,
) -> InferenceOutcome:
    if config.strategy is Strategy.GREEDY:
        return solve_greedy(question, gateway, solve_config, executor_config)
    if config.strategy is Strategy.VOTING:
        return majority_vote(
            question,
            config.k_paths,
            gateway,
            solve_config,
            executor_config,
            temperature=config.temperature,
            tie_break=config.tie_break,
        )
    return verified_inference(
        question, config.max_verify_rounds, gateway, solve_config, executor_config
    )


def evaluate(
    dataset: Sequence[tuple[Question, str]],
    config: InferenceConfig,
    gateway: Gateway,
    solve_config: SolveConfig | None = None,
    executor_config: ExecutorConfig | None = None,
) -> EvalReport:
    """Run a strategy over (question, gold answer) pairs and score it.

    Gold answers that cannot be normalized are excluded with a warning.
    """
    ledger = CostLedger()
    traces: list[QuestionTrace] = []
    skipped = 0
    for question, gold_raw in dataset:
        gold = normalize_answer(gold_raw)
        if gold is None:
            logger.warning("unparseable gold answer for %s; excluded", question.id)
            skipped += 1
            continue
        outcome = _run_strategy(question, config, gateway, solve_config, executor_config)
        ledger.merge(outcome.ledger)
        traces.append(
            QuestionTrace(
                question_id=question.id,
                dataset_tag=question.dataset_tag.value,
                predicted=outcome.answer,
                gold=gold,
                correct=answers_equal(outcome.answer, gold),
                generations=outcome.generations,
            )
        )
    accuracy = sum(t.correct for t in traces) / len(traces) if traces else 0.0
    return EvalReport(config.label(), accuracy, ledger.n_times(), traces, skipped)


def sweep(
    dataset: Sequence[tuple[Question, str]],
    configs: Sequence[InferenceConfig],
    gateway: Gateway,
    solve_config: SolveConfig | None = None,
    executor_config: ExecutorConfig | None = None,
) -> list[EvalReport]:
    """Evaluate several strategy configurations over the same dataset."""
    return [
        evaluate(dataset, config, gateway, solve_config, executor_config)
        for config in configs
    ]


def render_sweep_table(reports: Sequence[EvalReport]) -> str:
    """Accuracy / N-times table: one row per strategy, one column pair per
    dataset tag (plus the overall pair when several tags are present)."""
    tags = sorted({trace.dataset_tag for report in reports for trace in report.traces})
    multi = len(tags) > 1
    columns = (tags if multi else []) + ["overall"]
    header = f"{'strategy':<12}" + "".join(f"{c + ' acc':>16}{'Nx':>8}" for c in columns)
    lines = [header]
    for report in reports:
        per_tag = report.by_tag()
        cells = ""
        for column in columns:
            if column == "overall":
                acc, nx = report.accuracy, report.n_times
            else:
                acc, nx = per_tag.get(column, (float("nan"), float("nan")))
            cells += f"{acc * 100:>15.1f}%{nx:>7.2f}x"
        lines.append(f"{report.label:<12}" + cells)
    return "\n".join(lines)
