"""Parsing and serialization of code-integrated transcripts.

The surface format interleaves prose, fenced code blocks, and captured
execution output:

    prose...
    ```python
    code
    ```
    Result:
    output lines

    prose continues...

``serialize_segments(parse_segments(text)) == text`` holds for every
well-formed transcript (balanced fences, newline-terminated). A "Result:"
line is only an execution result when it immediately follows a code block;
the result body runs until the first blank line, fence, or end of input.
"""

from __future__ import annotations

import re

from .corpus import ExecStatus, Segment, SegmentKind

RESULT_HEADER = "Result:"

_FENCE_OPEN_RE = re.compile(r"^```([A-Za-z0-9+._-]*)$")
_FENCE_CLOSE = "```"


class TranscriptParseError(ValueError):
    """Raised for structurally broken transcripts (e.g. unterminated fence)."""


def _split_lines(text: str) -> list[str]:
    return text.splitlines(keepends=True)


def parse_segments(text: str) -> list[Segment]:
    """Parse a transcript into Text / Code / ExecutionResult segments.

    An unterminated code fence raises TranscriptParseError with the byte
    offset of the opening fence. Execution results parsed from text carry
    status Ok (the surface format does not encode status).
    """
    lines = _split_lines(text)
    segments: list[Segment] = []
    text_buf: list[str] = []
    offset = 0
    i = 0

    def flush_text() -> None:
        if text_buf:
            segments.append(Segment(SegmentKind.TEXT, "".join(text_buf)))
            text_buf.clear()

    while i < len(lines):
        line = lines[i]
        stripped = line.rstrip("\n")
        fence = _FENCE_OPEN_RE.match(stripped)
        if fence:
            flush_text()
            lang = fence.group(1)
            fence_offset = offset
            offset += len(line)
            i += 1
            code_lines: list[str] = []
            closed = False
            while i < len(lines):
                inner = lines[i]
                if inner.rstrip("\n") == _FENCE_CLOSE:
                    closed = True
                    offset += len(inner)
                    i += 1
                    break
                code_lines.append(inner)
                offset += len(inner)
                i += 1
            if not closed:
                raise TranscriptParseError(
                    f"unterminated code fence starting at offset {fence_offset}"
                )
            body = "".join(code_lines)
            if body.endswith("\n"):
                body = body[:-1]
            segments.append(Segment(SegmentKind.CODE, body, lang=lang))
            # A Result: header directly after the fence starts a result block.
            if i < len(lines) and lines[i].rstrip("\n") == RESULT_HEADER:
                offset += len(lines[i])
                i += 1
                result_lines: list[str] = []
                while i < len(lines):
                    candidate = lines[i]
                    candidate_stripped = candidate.rstrip("\n")
                    if candidate_stripped == "" or _FENCE_OPEN_RE.match(candidate_stripped):
                        break
                    result_lines.append(candidate)
                    offset += len(candidate)
                    i += 1
                result_body = "".join(result_lines)
                if result_body.endswith("\n"):
                    result_body = result_body[:-1]
                segments.append(
                    Segment(SegmentKind.EXECUTION_RESULT, result_body, status=ExecStatus.OK)
                )
            continue
        text_buf.append(line)
        offset += len(line)
        i += 1

    flush_text()
    return segments


def serialize_segments(segments: list[Segment] | tuple[Segment, ...]) -> str:
    """Render segments back to the surface format (inverse of parse)."""
    parts: list[str] = []
    for segment in segments:
        if segment.kind is SegmentKind.TEXT:
            parts.append(segment.body)
        elif segment.kind is SegmentKind.CODE:
            parts.append(f"```{segment.lang}\n{segment.body}\n```\n")
        else:
            if segment.body:
                parts.append(f"{RESULT_HEADER}\n{segment.body}\n")
            else:
                parts.append(f"{RESULT_HEADER}\n")
    return "".join(parts)


def render_result_block(output: str) -> str:
    """The exact bytes appended to a running transcript after running a cell."""
    if output:
        return f"{RESULT_HEADER}\n{output}\n"
    return f"{RESULT_HEADER}\n"
