import re
from pathlib import Path

import pytest

from mathsynth.corpus import Question, QuestionOrigin
from mathsynth.gateway import Gateway, GenerationRequest, RetryPolicy
from mathsynth.mockmodel import MockBackend

DATA_DIR = Path(__file__).parent / "data"

RATIONALE_CORRECT = DATA_DIR / "rationale_verified_correct.txt"
RATIONALE_WRONG = DATA_DIR / "rationale_verified_wrong.txt"


@pytest.fixture
def no_sleep_retry():
    return RetryPolicy(max_retries=3, base_delay=0.0, sleep=lambda _: None)


def make_gateway(backend, parallelism: int = 4, retry: RetryPolicy | None = None) -> Gateway:
    gateway = Gateway(
        parallelism=parallelism,
        retry=retry or RetryPolicy(max_retries=3, base_delay=0.0, sleep=lambda _: None),
    )
    gateway.bind_all(backend)
    return gateway


def make_question(text: str, tag_suffix: str = "") -> Question:
    return Question.make(text=text, origin=QuestionOrigin.SEED)


_BOXED_ANSWER = re.compile(r"Q\[(?P<qid>[^\]]+)\]")


def text_solver_backend(answers_by_question: dict[str, list[str]]) -> MockBackend:
    """A solver that answers immediately in prose, no code cells.

    Questions must contain a ``Q[name]`` token; ``answers_by_question[name]``
    lists the boxed answer per sample_index (the last entry repeats).
    """

    def handler(request: GenerationRequest) -> str:
        match = _BOXED_ANSWER.search(request.prompt)
        if not match:
            raise AssertionError(f"no Q[...] token in prompt: {request.prompt[:80]!r}")
        answers = answers_by_question[match.group("qid")]
        answer = answers[min(request.sample_index, len(answers) - 1)]
        return f"The answer is $\\boxed{{{answer}}}$.\n"

    return MockBackend(handler=handler)
