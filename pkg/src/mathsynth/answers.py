"""Final-answer normalization and equivalence checking.

Answers extracted from solution transcripts come in three shapes: exact
rationals (integers and fractions), floats, and free-form strings (base-3
numerals, expressions, units). Equality is exact for rationals and strings
and tolerance-based as soon as a float is involved.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

FLOAT_REL_TOL = 1e-6

# Strict numeral grammar. Underscores are deliberately rejected so that
# base-tagged strings like "222_3" stay strings instead of parsing as 2223.
_INT_RE = re.compile(r"^[+-]?\d+$")
_FRACTION_RE = re.compile(r"^[+-]?\d+\s*/\s*[1-9]\d*$")
_FLOAT_RE = re.compile(r"^[+-]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?$")
_THOUSANDS_RE = re.compile(r"^[+-]?\d{1,3}(?:,\d{3})+(?:\.\d+)?$")

_STRIP_PUNCT = ".,;:!?\"'`$*"


class AnswerForm(str, Enum):
    RATIONAL = "rational"
    FLOAT = "float"
    STRING = "string"


@dataclass(frozen=True)
class NormalizedAnswer:
    """A final answer in canonical form.

    ``value`` is a ``Fraction`` for RATIONAL (lowest terms, positive
    denominator), a ``float`` for FLOAT, and a cleaned string for STRING
    (whitespace collapsed, case preserved, surrounding punctuation removed).
    """

    form: AnswerForm
    value: Fraction | float | str

    def display(self) -> str:
        if self.form is AnswerForm.RATIONAL:
            frac = self.value
            assert isinstance(frac, Fraction)
            if frac.denominator == 1:
                return str(frac.numerator)
            return f"{frac.numerator}/{frac.denominator}"
        return str(self.value)

    def to_json(self) -> dict:
        if self.form is AnswerForm.RATIONAL:
            return {"form": self.form.value, "value": self.display()}
        return {"form": self.form.value, "value": self.value}

    @classmethod
    def from_json(cls, payload: dict) -> "NormalizedAnswer":
        form = AnswerForm(payload["form"])
        raw = payload["value"]
        if form is AnswerForm.RATIONAL:
            return cls(form, Fraction(str(raw)))
        if form is AnswerForm.FLOAT:
            return cls(form, float(raw))
        return cls(form, str(raw))


def canonical_text(raw: str) -> str:
    """Collapse whitespace and strip surrounding punctuation, keeping case."""
    collapsed = " ".join(raw.split())
    return collapsed.strip(_STRIP_PUNCT).strip()


def parse_numeric(raw: str) -> Fraction | float | None:
    """Parse a strict numeral: integer, a/b fraction, or decimal/scientific.

    Returns None for anything else ("222_3", "x+1", "3 apples", ...).
    """
    text = raw.strip()
    if _THOUSANDS_RE.match(text):
        text = text.replace(",", "")
    if _INT_RE.match(text):
        return Fraction(int(text))
    if _FRACTION_RE.match(text):
        num, _, den = text.partition("/")
        return Fraction(int(num), int(den))
    if _FLOAT_RE.match(text):
        return float(text)
    return None


def normalize_answer(raw: str) -> NormalizedAnswer | None:
    """Turn a raw answer string into its canonical form, or None if empty."""
    cleaned = canonical_text(raw)
    if not cleaned:
        return None
    parsed = parse_numeric(cleaned)
    if isinstance(parsed, Fraction):
        return NormalizedAnswer(AnswerForm.RATIONAL, parsed)
    if isinstance(parsed, float):
        return NormalizedAnswer(AnswerForm.FLOAT, parsed)
    return NormalizedAnswer(AnswerForm.STRING, cleaned)


def _as_float(answer: NormalizedAnswer) -> float | None:
    if answer.form is AnswerForm.FLOAT:
        return float(answer.value)
    if answer.form is AnswerForm.RATIONAL:
        return float(answer.value)
    parsed = parse_numeric(str(answer.value))
    if parsed is None:
        return None
    return float(parsed)


def _floats_close(a: float, b: float) -> bool:
    if a == b:
        return True
    return abs(a - b) <= FLOAT_REL_TOL * max(abs(a), abs(b))


def answers_equal(a: NormalizedAnswer | None, b: NormalizedAnswer | None) -> bool:
    """Symmetric answer equality.

    Rational vs rational is exact; any float involved compares with relative
    tolerance after coercion; string vs string is exact; numeric vs string
    tries a strict numeric parse of the string and is unequal otherwise.
    """
    if a is None or b is None:
        return False
    if a.form is AnswerForm.RATIONAL and b.form is AnswerForm.RATIONAL:
        return a.value == b.value
    if a.form is AnswerForm.STRING and b.form is AnswerForm.STRING:
        return a.value == b.value
    if AnswerForm.FLOAT in (a.form, b.form):
        fa, fb = _as_float(a), _as_float(b)
        if fa is None or fb is None:
            return False
        return _floats_close(fa, fb)
    # One rational, one string: compare exactly when the string is numeric.
    rational = a if a.form is AnswerForm.RATIONAL else b
    other = b if rational is a else a
    parsed = parse_numeric(str(other.value))
    if parsed is None:
        return False
    if isinstance(parsed, Fraction):
        return rational.value == parsed
    return _floats_close(float(rational.value), parsed)


_BOXED_RE = re.compile(r"\\boxed\s*\{")


def extract_boxed(text: str) -> str | None:
    """Return the payload of the last \\boxed{...}, handling nested braces."""
    matches = list(_BOXED_RE.finditer(text))
    if not matches:
        return None
    start = matches[-1].end()
    depth = 1
    pos = start
    while pos < len(text) and depth > 0:
        if text[pos] == "{":
            depth += 1
        elif text[pos] == "}":
            depth -= 1
        pos += 1
    if depth != 0:
        return None
    return text[start : pos - 1].strip()


_NUMERAL_SCAN_RE = re.compile(
    r"[+-]?\d{1,3}(?:,\d{3})+(?:\.\d+)?|[+-]?\d+\.\d+|[+-]?\d+\s*/\s*[1-9]\d*|[+-]?\d+"
)


def last_numeral(text: str) -> str | None:
    """Return the last numeric literal in the text, or None."""
    found = _NUMERAL_SCAN_RE.findall(text)
    return found[-1] if found else None
