"""Iterative solution augmentation.

Round k is produced by applying rewrite prompts to every solution of round
k-1; the final augmented set is the deduplicated union of all rounds (the
round-0 seeds themselves are excluded).
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

from .corpus import NLSolution, dedup_solutions
from .gateway import Gateway, GenerationRequest, ModelRole

logger = logging.getLogger(__name__)


class AugTemplate(str, Enum):
    REPLACE_OBJECTS_VERBS = "replace_objects_verbs"
    ADD_EXTRA_STEP = "add_extra_step"
    CHANGE_NUMBERS = "change_numbers"
    REPLACE_NUMBERS_VARIABLES = "replace_numbers_variables"

    @property
    def prompt_template(self) -> str:
        return _TEMPLATE_TEXT[self]


_TEMPLATE_TEXT = {
    AugTemplate.REPLACE_OBJECTS_VERBS: (
        "Replace the objects and verbs in Solution.\n"
        "Solution:\n"
        "\n"
        "{solution}\n"
        "\n"
        "You must replace the objects and verbs in the Solution with objects and verbs "
        "very different from before to create a new solution."
    ),
    AugTemplate.ADD_EXTRA_STEP: (
        "Add an extra step to the solution so that it is more complicated.\n"
        "Solution:\n"
        "\n"
        "{solution}\n"
        "\n"
        "You must add an extra step to the Solution to create a new solution."
    ),
    AugTemplate.CHANGE_NUMBERS: (
        "Change the numbers in Solution.\n"
        "Solution:\n"
        "\n"
        "{solution}\n"
        "\n"
        "You must change the numbers in the Solution to create a new solution."
    ),
    AugTemplate.REPLACE_NUMBERS_VARIABLES: (
        "Replace the numbers and variables in Solution with different variables and "
        "numbers you pick randomly.\n"
        "Solution:\n"
        "\n"
        "{solution}\n"
        "\n"
        "You must replace the numbers and variables in the Solution with different "
        "numbers and variables you pick randomly to create a new solution."
    ),
}


@dataclass
class AugConfig:
    rounds: int = 3
    templates: tuple[AugTemplate, ...] = tuple(AugTemplate)
    fan_out: int | None = None  # templates applied per solution per round; None = all
    temperature: float = 0.7
    seed: int = 0

    def __post_init__(self) -> None:
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if not self.templates:
            raise ValueError("templates must be non-empty")
        if self.fan_out is not None and not (1 <= self.fan_out <= len(self.templates)):
            raise ValueError("fan_out must be between 1 and the template count")


def render_aug_prompt(solution: NLSolution, template: AugTemplate) -> str:
    """Substitute the solution into the rewrite template (single pass)."""
    if not solution.text.strip():
        raise ValueError("cannot augment an empty solution")
    return template.prompt_template.replace("{solution}", solution.text, 1)


def _templates_for(solution: NLSolution, config: AugConfig) -> Sequence[AugTemplate]:
    if config.fan_out is None or config.fan_out >= len(config.templates):
        return config.templates
    rng = random.Random(f"{config.seed}|{solution.id}")
    return rng.sample(list(config.templates), config.fan_out)


def augment_round(
    prev: Sequence[NLSolution], config: AugConfig, gateway: Gateway
) -> list[NLSolution]:
    """Apply the configured templates to every solution of one round.

    All inputs must share a round number; outputs carry round+1 and full
    provenance. Per-item gateway failures are logged and skipped.
    """
    if not prev:
        return []
    rounds = {s.round for s in prev}
    if len(rounds) > 1:
        raise ValueError(f"augment_round requires a single input round, got {sorted(rounds)}")
    next_round = prev[0].round + 1

    plan: list[tuple[NLSolution, AugTemplate]] = []
    for solution in prev:
        for template in _templates_for(solution, config):
            plan.append((solution, template))

    requests = [
        GenerationRequest(
            role=ModelRole.SOLUTION_AUGMENTER,
            prompt=render_aug_prompt(solution, template),
            temperature=config.temperature,
        )
        for solution, template in plan
    ]
    produced: list[NLSolution] = []
    for (solution, template), item in zip(plan, gateway.generate_batch(requests)):
        if not item.ok:
            logger.warning(
                "skipping augmentation of %s with %s: %s", solution.id, template.value, item.error
            )
            continue
        text = item.response.text.strip()
        if not text:
            logger.warning("skipping empty augmentation of %s", solution.id)
            continue
        produced.append(
            NLSolution.derived(
                text=text,
                round=next_round,
                parent_solution_id=solution.id,
                template_id=template.value,
            )
        )
    return produced


def iterate(
    seeds: Sequence[NLSolution],
    config: AugConfig,
    gateway: Gateway,
    on_round: Callable[[int, list[NLSolution]], None] | None = None,
) -> list[NLSolution]:
    """Run the full multi-round augmentation and return the deduplicated union.

    ``on_round`` is called with (round_number, solutions) after each round,
    e.g. to persist per-round files. Per-item failures only shrink a round;
    a nonempty round failing entirely raises, since every later round would
    be empty too.
    """
    if any(s.round != 0 for s in seeds):
        raise ValueError("iterate expects round-0 seed solutions")
    union: list[NLSolution] = []
    current: Sequence[NLSolution] = seeds
    for round_number in range(1, config.rounds + 1):
        produced = augment_round(current, config, gateway)
        if on_round is not None:
            on_round(round_number, list(produced))
        if not produced and current:
            raise RuntimeError(f"augmentation round {round_number} failed entirely")
        current = produced
        union.extend(produced)
    return dedup_solutions(union)
