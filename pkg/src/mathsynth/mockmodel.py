"""Deterministic mock backends for offline runs and tests.

MockBackend serves scripted completions keyed on (prompt, sample_index) with
optional transient-failure and latency injection. PipelineMockModel is a
self-contained toy mathematician: it recognizes the augmentation,
back-translation, solving, and verification prompt shapes and produces
deterministic, hash-derived completions in a closed grammar of small
add/remove word problems, including real executable code cells. Everything
is a pure function of (seed, prompt, sample_index), so whole pipeline runs
are byte-reproducible.
"""

from __future__ import annotations

import hashlib
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Callable

from .gateway import (
    BackendError,
    FinishReason,
    GenerationRequest,
    GenerationResponse,
    TransientBackendError,
)

NOUNS = (
    "marbles",
    "apples",
    "stickers",
    "coins",
    "pebbles",
    "beads",
    "cards",
    "shells",
    "buttons",
    "acorns",
)

NAMES = ("Ava", "Ben", "Cleo", "Dan", "Edie", "Finn", "Gia", "Hugo", "Iris", "Jude")


def stable_hash(*parts: object) -> int:
    digest = hashlib.blake2b(digest_size=8)
    for part in parts:
        digest.update(b"\x1f")
        digest.update(str(part).encode("utf-8"))
    return int.from_bytes(digest.digest(), "big")


@dataclass
class CallRecord:
    prompt: str
    sample_index: int
    temperature: float


@dataclass
class MockBackend:
    """Scripted backend: exact (prompt, sample_index) table plus a handler.

    ``script`` maps (prompt, sample_index) to the completion text.
    ``handler`` serves anything not in the table; with neither, the call
    fails. ``fail_first`` injects that many transient failures per prompt
    before succeeding, for retry tests. ``latency`` (seconds, may be a
    callable of the call index) delays responses, for ordering tests.
    """

    script: dict[tuple[str, int], str] = field(default_factory=dict)
    handler: Callable[[GenerationRequest], str] | None = None
    fail_first: dict[str, int] = field(default_factory=dict)
    latency: float | Callable[[int], float] = 0.0

    def __post_init__(self) -> None:
        self._lock = threading.Lock()
        self._failures_seen: dict[str, int] = {}
        self.calls: list[CallRecord] = []
        self._in_flight = 0
        self.max_in_flight = 0

    @property
    def call_count(self) -> int:
        return len(self.calls)

    def reset_counters(self) -> None:
        with self._lock:
            self.calls = []
            self._failures_seen = {}
            self.max_in_flight = 0

    def complete(self, request: GenerationRequest) -> GenerationResponse:
        with self._lock:
            index = len(self.calls)
            self.calls.append(
                CallRecord(request.prompt, request.sample_index, request.temperature)
            )
            self._in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self._in_flight)
            budget = self.fail_first.get(request.prompt, 0)
            seen = self._failures_seen.get(request.prompt, 0)
            must_fail = seen < budget
            if must_fail:
                self._failures_seen[request.prompt] = seen + 1
        try:
            delay = self.latency(index) if callable(self.latency) else self.latency
            if delay:
                time.sleep(delay)
            if must_fail:
                raise TransientBackendError(f"scripted transient failure #{seen + 1}")
            key = (request.prompt, request.sample_index)
            if key in self.script:
                return GenerationResponse(self.script[key], FinishReason.STOP)
            if self.handler is not None:
                return GenerationResponse(self.handler(request), FinishReason.STOP)
            raise BackendError(f"no scripted response for prompt {request.prompt[:60]!r}")
        finally:
            with self._lock:
                self._in_flight -= 1


_SOLUTION_RE = re.compile(
    r"Start with (?P<a>\d+) (?P<noun>\w+)\. Add (?P<b>\d+) more \w+ to get \d+ \+ \d+ = (?P<s>\d+) \w+\."
    r"(?: Remove (?P<c>\d+) \w+ to leave \d+ - \d+ = (?P<t>\d+) \w+\.)?"
    r" The answer is (?P<answer>\d+)\."
)

_QUESTION_RE = re.compile(
    r"(?P<name>\w+) starts with (?P<a>\d+) (?P<noun>\w+)\. \w+ finds (?P<b>\d+) more \w+\."
    r"(?: Then \w+ gives away (?P<c>\d+) \w+\.)?"
    r" How many \w+ does \w+ end up with\?"
)

_BOXED_INT_RE = re.compile(r"\\boxed\{(-?\d+)\}")

VERIFY_INSTRUCTION = (
    "Above is a math problem and its solution. Please use code to verify the solution above."
)
BACKTRANSLATE_HEADER = "Create a New Problem based on the Solution:"
AUGMENT_MARKER = "to create a new solution."


@dataclass(frozen=True)
class ToyProblem:
    a: int
    b: int
    c: int | None
    noun: str

    @property
    def total(self) -> int:
        if self.c is None:
            return self.a + self.b
        return self.a + self.b - self.c

    def solution_text(self) -> str:
        s = self.a + self.b
        parts = [
            f"Start with {self.a} {self.noun}.",
            f"Add {self.b} more {self.noun} to get {self.a} + {self.b} = {s} {self.noun}.",
        ]
        if self.c is not None:
            parts.append(
                f"Remove {self.c} {self.noun} to leave {s} - {self.c} = {s - self.c} {self.noun}."
            )
        parts.append(f"The answer is {self.total}.")
        return " ".join(parts)

    def question_text(self, name: str) -> str:
        parts = [
            f"{name} starts with {self.a} {self.noun}.",
            f"{name} finds {self.b} more {self.noun}.",
        ]
        if self.c is not None:
            parts.append(f"Then {name} gives away {self.c} {self.noun}.")
        parts.append(f"How many {self.noun} does {name} end up with?")
        return " ".join(parts)


def parse_toy_solution(text: str) -> ToyProblem | None:
    match = _SOLUTION_RE.search(text)
    if not match:
        return None
    c = match.group("c")
    return ToyProblem(
        a=int(match.group("a")),
        b=int(match.group("b")),
        c=int(c) if c else None,
        noun=match.group("noun"),
    )


def parse_toy_question(text: str) -> ToyProblem | None:
    match = _QUESTION_RE.search(text)
    if not match:
        return None
    c = match.group("c")
    return ToyProblem(
        a=int(match.group("a")),
        b=int(match.group("b")),
        c=int(c) if c else None,
        noun=match.group("noun"),
    )


_FALLBACK = ToyProblem(a=1, b=1, c=None, noun="widgets")


@dataclass
class PipelineMockModel:
    """Deterministic toy model covering every pipeline stage.

    ``wrong_path_pct``: percentage of solve paths whose boxed answer is
    deliberately perturbed (the code cell still computes the true value).
    ``indeterminate_pct``: percentage of verifications that end with an
    inconclusive closing sentence instead of a verdict cue.
    """

    seed: int = 0
    wrong_path_pct: int = 20
    indeterminate_pct: int = 5

    def __post_init__(self) -> None:
        self._lock = threading.Lock()
        self.calls: list[CallRecord] = []

    @property
    def call_count(self) -> int:
        return len(self.calls)

    def complete(self, request: GenerationRequest) -> GenerationResponse:
        with self._lock:
            self.calls.append(
                CallRecord(request.prompt, request.sample_index, request.temperature)
            )
        prompt = request.prompt
        if AUGMENT_MARKER in prompt:
            text = self._augment(prompt)
        elif prompt.startswith(BACKTRANSLATE_HEADER):
            text = self._backtranslate(prompt)
        elif prompt.startswith("**Question**:"):
            text = self._verify(prompt, request.sample_index)
        else:
            text = self._solve(prompt, request.sample_index)
        return GenerationResponse(text, FinishReason.STOP)

    def _h(self, *parts: object) -> int:
        return stable_hash(self.seed, *parts)

    # -- augmentation ----------------------------------------------------

    def _augment(self, prompt: str) -> str:
        header, _, rest = prompt.partition("Solution:\n\n")
        solution_text = rest.split("\n\nYou must", 1)[0]
        problem = parse_toy_solution(solution_text) or _FALLBACK
        action = header.strip().splitlines()[0] if header.strip() else ""

        if action.startswith("Replace the objects and verbs"):
            noun = NOUNS[self._h("noun", solution_text) % len(NOUNS)]
            new = ToyProblem(problem.a, problem.b, problem.c, noun)
        elif action.startswith("Add an extra step"):
            s = problem.a + problem.b
            c = 1 + self._h("extra", solution_text) % max(1, s - 1)
            new = ToyProblem(problem.a, problem.b, c, problem.noun)
        else:
            # Both number-rewriting prompts: fresh values, same shape.
            salt = "numbers" if action.startswith("Change the numbers") else "variables"
            a = 2 + self._h(salt, "a", solution_text) % 98
            b = 2 + self._h(salt, "b", solution_text) % 98
            c = problem.c
            if c is not None:
                c = 1 + self._h(salt, "c", solution_text) % (a + b - 1)
            new = ToyProblem(a, b, c, problem.noun)
        return new.solution_text() + "\n"

    # -- back-translation ------------------------------------------------

    def _backtranslate(self, prompt: str) -> str:
        solution_text = prompt.partition(BACKTRANSLATE_HEADER)[2].strip()
        problem = parse_toy_solution(solution_text) or _FALLBACK
        name = NAMES[self._h("name", solution_text) % len(NAMES)]
        return f"New Problem: {problem.question_text(name)}\n"


    # -- solving ----------------------------------------------------------

    def _split_question(self, prompt: str) -> tuple[str, str]:
        question, _, transcript = prompt.partition("\n\n")
        return question, transcript

    def _solve(self, prompt: str, sample_index: int) -> str:
        question, transcript = self._split_question(prompt)
        problem = parse_toy_question(question) or _FALLBACK
        if "Result:" not in transcript:
            if problem.c is None:
                code = f"a = {problem.a}\nb = {problem.b}\nprint(a + b)"
            else:
                code = f"a = {problem.a}\nb = {problem.b}\nc = {problem.c}\nprint(a + b - c)"
            return f"Let's compute the total with code.\n```python\n{code}\n```\n"
        answer = problem.total
        if self._h("solve-err", question, sample_index) % 100 < self.wrong_path_pct:
            # The perturbation is per-question, not per-sample: paths that go
            # wrong agree on the same wrong answer, so some slip past the
            # consistency filter and must be caught by verification.
            answer += 1 + self._h("solve-delta", question) % 7
        return f"The answer is $\\boxed{{{answer}}}$.\n"

    # -- verification ------------------------------------------------------

    def _verify(self, prompt: str, sample_index: int) -> str:
        head, _, tail = prompt.partition(VERIFY_INSTRUCTION)
        question = head.partition("**Question**:\n\n")[2].split("\n\n**Solution**:", 1)[0]
        solution = head.partition("**Solution**:\n\n")[2]
        problem = parse_toy_question(question) or _FALLBACK
        boxed = _BOXED_INT_RE.findall(solution)
        claimed = int(boxed[-1]) if boxed else None

        if "Result:" not in tail:
            if problem.c is None:
                expr = f"{problem.a} + {problem.b}"
            else:
                expr = f"{problem.a} + {problem.b} - {problem.c}"
            return f"Let's re-derive the total with code.\n```python\nprint({expr})\n```\n"

        truth = problem.total
        if claimed is not None and claimed == truth:
            if self._h("verify-ind", question, claimed, sample_index) % 100 < self.indeterminate_pct:
                return "The verification step is inconclusive here.\n"
            return (
                "The result matches the answer from the solution. "
                "Thus, our answer is verified and correct.\n"
            )
        shown = claimed if claimed is not None else "unknown"
        return (
            "It seems there was an error in our calculations. "
            f"The correct answer is {truth}, not {shown}.\n"
        )
