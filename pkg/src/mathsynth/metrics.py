"""Verification-quality metrics over verdict/correctness confusion counts.

Cell naming convention (kept exactly as the verification literature we
target defines it, including the nonstandard TN):

    TP  verified correct and actually correct
    FP  verified correct but actually wrong
    TN  verified wrong but actually correct
    FN  verified wrong and actually wrong

``recall`` uses TP / (TP + TN) under this naming ("what proportion of
actually correct solutions were verified correct"); ``recall_standard``
exposes the textbook TP / (TP + FN) separately.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable

from .corpus import Verdict


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def tally(records: Iterable[tuple[Verdict, bool]]) -> ConfusionCounts:
    """Partition (verdict, actually_correct) pairs into confusion cells.

    Verdicts must be Correct or Wrong; Indeterminate is excluded upstream
    and counted separately by callers.
    """
    tp = fp = tn = fn = 0
    for verdict, actually_correct in records:
        if verdict is Verdict.CORRECT:
            if actually_correct:
                tp += 1
            else:
                fp += 1
        elif verdict is Verdict.WRONG:
            if actually_correct:
                tn += 1
            else:
                fn += 1
        else:
            raise ValueError("tally accepts only Correct/Wrong verdicts")
    return ConfusionCounts(tp, fp, tn, fn)


def accuracy(counts: ConfusionCounts) -> float | None:
    """Fraction of solutions actually correct; None when the population is empty."""
    if counts.total == 0:
        return None
    return (counts.tp + counts.tn) / counts.total


def precision(counts: ConfusionCounts) -> float | None:
    """TP / (TP + FP); None (undefined) when nothing was verified correct."""
    denominator = counts.tp + counts.fp
    if denominator == 0:
        return None
    return counts.tp / denominator


def recall(counts: ConfusionCounts) -> float | None:
    """TP / (TP + TN) under this module's cell naming; None when undefined."""
    denominator = counts.tp + counts.tn
    if denominator == 0:
        return None
    return counts.tp / denominator


def recall_standard(counts: ConfusionCounts) -> float | None:
    """Textbook recall TP / (TP + FN); not the default reported figure."""
    denominator = counts.tp + counts.fn
    if denominator == 0:
        return None
    return counts.tp / denominator


def synthetic_verified_population(
    n: int, a: float, r: float, f: float, seed: int = 0
) -> list[tuple[Verdict, bool]]:
    """Simulate a solver/verifier population for oracle tests.

    Each record is actually correct with probability ``a``; the verifier
    passes correct solutions with rate ``r`` and wrong ones with rate ``f``.
    Deterministic for a fixed seed.
    """
    for name, value in (("a", a), ("r", r), ("f", f)):
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"{name} must be within [0, 1]")
    rng = random.Random(seed)
    population: list[tuple[Verdict, bool]] = []
    for _ in range(n):
        actually_correct = rng.random() < a
        pass_rate = r if actually_correct else f
        verdict = Verdict.CORRECT if rng.random() < pass_rate else Verdict.WRONG
        population.append((verdict, actually_correct))
    return population


def retained_accuracy_closed_form(a: float, r: float, f: float) -> float:
    """Expected true-accuracy of the verified-correct subset: ar / (ar + (1-a)f)."""
    kept_correct = a * r
    kept_wrong = (1.0 - a) * f
    return kept_correct / (kept_correct + kept_wrong)


def _fmt(value: float | None) -> str:
    return "undefined" if value is None else f"{value * 100:.1f}"


def render_metrics_table(per_tag: dict[str, ConfusionCounts]) -> str:
    """Accuracy / Precision / Recall rows, one column per dataset tag plus Average."""
    tags = list(per_tag)
    rows = {
        "Accuracy": [accuracy(per_tag[t]) for t in tags],
        "Precision": [precision(per_tag[t]) for t in tags],
        "Recall": [recall(per_tag[t]) for t in tags],
    }
    if len(tags) > 1:
        tags.append("Average")
        for name, values in rows.items():
            defined = [v for v in values if v is not None]
            values.append(sum(defined) / len(defined) if defined else None)
    width = max(12, *(len(t) + 2 for t in tags))
    header = f"{'Metric':<10}" + "".join(f"{t:>{width}}" for t in tags)
    lines = [header]
    for name, values in rows.items():
        lines.append(f"{name:<10}" + "".join(f"{_fmt(v):>{width}}" for v in values))
    return "\n".join(lines)
