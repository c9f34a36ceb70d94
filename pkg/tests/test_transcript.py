import random

import pytest

from mathsynth.corpus import ExecStatus, SegmentKind
from mathsynth.transcript import (
    TranscriptParseError,
    parse_segments,
    serialize_segments,
)

from conftest import RATIONALE_CORRECT, RATIONALE_WRONG


def test_golden_correct_rationale_segmentation():
    text = RATIONALE_CORRECT.read_text()
    segments = parse_segments(text)
    kinds = [s.kind for s in segments]
    assert kinds == [
        SegmentKind.TEXT,
        SegmentKind.CODE,
        SegmentKind.EXECUTION_RESULT,
        SegmentKind.TEXT,
    ]
    assert "decimal_value" in segments[1].body
    assert segments[2].body == "0.5454545454545454"
    assert segments[2].status is ExecStatus.OK


def test_golden_wrong_rationale_segmentation():
    text = RATIONALE_WRONG.read_text()
    segments = parse_segments(text)
    results = [s for s in segments if s.kind is SegmentKind.EXECUTION_RESULT]
    assert len(results) == 1
    assert results[0].body == "1202"


@pytest.mark.parametrize("path", [RATIONALE_CORRECT, RATIONALE_WRONG])
def test_golden_round_trip_byte_exact(path):
    text = path.read_text()
    assert serialize_segments(parse_segments(text)) == text


def test_plain_prose_single_segment():
    text = "Just a solution in words.\nNothing else.\n"
    segments = parse_segments(text)
    assert len(segments) == 1
    assert segments[0].kind is SegmentKind.TEXT
    assert segments[0].body == text


def test_empty_input():
    assert parse_segments("") == []


def test_unterminated_fence_errors_with_offset():
    text = "intro\n```python\nx = 1\n"
    with pytest.raises(TranscriptParseError, match="offset 6"):
        parse_segments(text)


def test_result_without_preceding_code_stays_text():
    text = "Result:\n42\n"
    segments = parse_segments(text)
    assert [s.kind for s in segments] == [SegmentKind.TEXT]


def test_result_requires_exact_header_line():
    text = "```python\nx\n```\nResult: inline\n"
    segments = parse_segments(text)
    assert [s.kind for s in segments] == [SegmentKind.CODE, SegmentKind.TEXT]
    assert segments[1].body == "Result: inline\n"


def test_empty_result_body():
    text = "```python\npass\n```\nResult:\n\nDone.\n"
    segments = parse_segments(text)
    assert [s.kind for s in segments] == [
        SegmentKind.CODE,
        SegmentKind.EXECUTION_RESULT,
        SegmentKind.TEXT,
    ]
    assert segments[1].body == ""
    assert serialize_segments(segments) == text


def test_multiline_result_body():
    text = "```python\nprint('a')\nprint('b')\n```\nResult:\na\nb\n\ntail\n"
    segments = parse_segments(text)
    assert segments[1].body == "a\nb"
    assert serialize_segments(segments) == text


def test_code_with_interior_blank_lines():
    text = "```python\nx = 1\n\nx\n```\n"
    segments = parse_segments(text)
    assert segments[0].body == "x = 1\n\nx"
    assert serialize_segments(segments) == text


def _random_transcript(rng: random.Random) -> str:
    pieces = []
    for _ in range(rng.randint(1, 8)):
        kind = rng.randrange(3)
        if kind == 0:
            lines = [
                f"prose line {rng.randint(0, 9)} with $x_{rng.randint(0, 9)}$"
                for _ in range(rng.randint(1, 3))
            ]
            pieces.append("\n".join(lines) + "\n")
        else:
            body_lines = [f"value_{rng.randint(0, 99)} = {rng.randint(0, 99)}"]
            if rng.random() < 0.4:
                body_lines.append("")
                body_lines.append(f"value_{rng.randint(0, 99)}")
            lang = rng.choice(["python", "py", ""])
            pieces.append(f"```{lang}\n" + "\n".join(body_lines) + "\n```\n")
            if kind == 2:
                result_lines = [str(rng.randint(0, 10**6)) for _ in range(rng.randint(0, 2))]
                pieces.append("Result:\n" + "".join(line + "\n" for line in result_lines))
                if rng.random() < 0.7:
                    pieces.append("\n")
    return "".join(pieces)


def test_round_trip_property_randomized():
    rng = random.Random(20240501)
    for _ in range(200):
        text = _random_transcript(rng)
        assert serialize_segments(parse_segments(text)) == text
