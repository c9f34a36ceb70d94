"""Question back-translation: turn augmented solutions into new questions."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

from .corpus import DatasetTag, NLSolution, Question, QuestionOrigin
from .gateway import Gateway, GenerationRequest, ModelRole

logger = logging.getLogger(__name__)

PROMPT_HEADER = "Create a New Problem based on the Solution:"
PROBLEM_MARKER = "New Problem:"


def render_bt_prompt(solution: NLSolution) -> str:
    """Header line, blank line, then the solution text byte-exact."""
    if not solution.text.strip():
        raise ValueError("cannot back-translate an empty solution")
    return f"{PROMPT_HEADER}\n\n{solution.text}"


@dataclass(frozen=True)
class ParsedProblem:
    text: str
    lenient: bool  # True when the marker was missing and the whole completion was used


def parse_new_problem(completion: str) -> ParsedProblem:
    """Extract the question after the first "New Problem:" marker.

    Falls back to the whole trimmed completion (flagged lenient) when the
    marker is absent; small models frequently drop the boilerplate.
    """
    if not completion.strip():
        raise ValueError("empty back-translation completion")
    marker_at = completion.find(PROBLEM_MARKER)
    if marker_at == -1:
        return ParsedProblem(completion.strip(), lenient=True)
    return ParsedProblem(completion[marker_at + len(PROBLEM_MARKER) :].strip(), lenient=False)


@dataclass
class BacktranslationResult:
    questions: list[Question]
    lenient_count: int
    skipped: int


def backtranslate(
    solutions: Sequence[NLSolution],
    gateway: Gateway,
    temperature: float = 0.7,
    dataset_tag: DatasetTag = DatasetTag.OTHER,
) -> BacktranslationResult:
    """Produce one augmented Question per solution; failures are skipped."""
    requests = [
        GenerationRequest(
            role=ModelRole.BACK_TRANSLATOR,
            prompt=render_bt_prompt(solution),
            temperature=temperature,
        )
        for solution in solutions
    ]
    questions: list[Question] = []
    lenient = 0
    skipped = 0
    for solution, item in zip(solutions, gateway.generate_batch(requests)):
        if not item.ok:
            logger.warning("skipping back-translation of %s: %s", solution.id, item.error)
            skipped += 1
            continue
        try:
            parsed = parse_new_problem(item.response.text)
        except ValueError as exc:
            logger.warning("skipping back-translation of %s: %s", solution.id, exc)
            skipped += 1
            continue
        if parsed.lenient:
            lenient += 1
        questions.append(
            Question.make(
                text=parsed.text,
                origin=QuestionOrigin.AUGMENTED,
                source_solution_id=solution.id,
                dataset_tag=dataset_tag,
            )
        )
    return BacktranslationResult(questions, lenient, skipped)
