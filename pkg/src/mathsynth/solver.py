"""Code-integrated solution generation.

Drives the generate/execute loop: the model is sampled with a stop sequence
at the closing code fence; each received cell is executed and its output is
appended to the transcript as a Result block before generation continues.
The loop ends when the model stops emitting code or a cap is hit.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

from .answers import NormalizedAnswer, extract_boxed, last_numeral, normalize_answer
from .corpus import (
    CodeIntegratedSolution,
    ExecStatus,
    Question,
    Segment,
    SegmentKind,
)
from .executor import ExecSession, ExecutorConfig
from .gateway import FinishReason, Gateway, GenerationRequest, ModelRole
from .transcript import parse_segments, render_result_block, serialize_segments

logger = logging.getLogger(__name__)

# Generation stops at a bare closing fence; opening fences carry a language
# tag and therefore do not match.
CODE_FENCE_STOP = "\n```\n"

ANSWER_STEP_BOXED = "boxed"
ANSWER_STEP_RESULT = "last_result"
ANSWER_STEP_TEXT = "last_text_numeral"
DEFAULT_ANSWER_PRIORITY = (ANSWER_STEP_BOXED, ANSWER_STEP_RESULT, ANSWER_STEP_TEXT)


@dataclass
class SolveConfig:
    max_cells: int = 8
    max_calls: int = 10
    n_samples: int = 1
    temperature: float = 0.0
    answer_priority: tuple[str, ...] = DEFAULT_ANSWER_PRIORITY
    max_tokens: int = 2048

    def __post_init__(self) -> None:
        if self.max_cells < 1 or self.max_calls < 1 or self.n_samples < 1:
            raise ValueError("solve caps must be >= 1")


_CHUNK_CODE_RE = re.compile(r"(?s)^(?P<pre>.*?)```(?P<lang>[A-Za-z0-9+._-]*)\n(?P<code>.*)$")


@dataclass
class TranscriptLoopResult:
    segments: list[Segment]
    transcript: str
    model_calls: int
    capped: bool


def run_transcript_loop(
    base_prompt: str,
    gateway: Gateway,
    role: ModelRole,
    config: SolveConfig,
    executor_config: ExecutorConfig | None = None,
    temperature: float | None = None,
    sample_index: int = 0,
) -> TranscriptLoopResult:
    """Generate a code-integrated transcript for the given base prompt.

    Segments are accumulated live so execution results keep their real
    status; the text transcript is their exact serialization.
    """
    segments: list[Segment] = []
    pending_text = ""
    transcript = ""
    cells = 0
    calls = 0
    capped = False
    temp = config.temperature if temperature is None else temperature

    def flush_text() -> None:
        nonlocal pending_text
        if pending_text:
            segments.append(Segment(SegmentKind.TEXT, pending_text))
            pending_text = ""

    with ExecSession(executor_config) as session:
        while True:
            if calls >= config.max_calls:
                capped = True
                break
            prompt = base_prompt if not transcript else f"{base_prompt}\n\n{transcript}"
            response = gateway.generate(
                GenerationRequest(
                    role=role,
                    prompt=prompt,
                    temperature=temp,
                    max_tokens=config.max_tokens,
                    stop_sequences=(CODE_FENCE_STOP,),
                    sample_index=sample_index,
                )
            )
            calls += 1
            chunk = response.text

            if response.finish_reason is not FinishReason.STOP_SEQUENCE:
                pending_text += chunk
                transcript += chunk
                break

            match = _CHUNK_CODE_RE.match(chunk)
            if match is None:
                # Stopped on a stray fence with no opener; keep the text.
                pending_text += chunk
                transcript += chunk
                break
            cells += 1
            if cells > config.max_cells:
                pending_text += match.group("pre")
                transcript += match.group("pre")
                capped = True
                break
            code = match.group("code")
            lang = match.group("lang") or "python"
            pending_text += match.group("pre")
            flush_text()
            segments.append(Segment(SegmentKind.CODE, code, lang=lang))
            transcript += f"{match.group('pre')}```{lang}\n{code}\n```\n"
            result = session.run(code)
            segments.append(result)
            # Blank line after the result block: it terminates the block so
            # the model's continuation parses as prose, not as output lines.
            pending_text = "\n"
            transcript += render_result_block(result.body) + "\n"
            if result.status is ExecStatus.TIMEOUT:
                logger.warning("cell timed out; transcript continues on fresh state")

    flush_text()
    return TranscriptLoopResult(segments, transcript, calls, capped)


def extract_answer(
    source: str | list[Segment] | tuple[Segment, ...],
    priority: tuple[str, ...] = DEFAULT_ANSWER_PRIORITY,
) -> NormalizedAnswer | None:
    """Pull the final answer out of a transcript.

    Priority: last boxed{} payload, then the last line of the last successful
    Result block, then the last numeric literal in the final prose segment.
    """
    if isinstance(source, str):
        segments = parse_segments(source)
        text = source
    else:
        segments = list(source)
        text = serialize_segments(segments)

    for step in priority:
        if step == ANSWER_STEP_BOXED:
            payload = extract_boxed(text)
            if payload is not None:
                answer = normalize_answer(payload)
                if answer is not None:
                    return answer
        elif step == ANSWER_STEP_RESULT:
            results = [
                s
                for s in segments
                if s.kind is SegmentKind.EXECUTION_RESULT and s.status is ExecStatus.OK
            ]
            if results:
                lines = [line for line in results[-1].body.splitlines() if line.strip()]
                if lines:
                    answer = normalize_answer(lines[-1])
                    if answer is not None:
                        return answer
        elif step == ANSWER_STEP_TEXT:
            texts = [s for s in segments if s.kind is SegmentKind.TEXT]
            if texts:
                numeral = last_numeral(texts[-1].body)
                if numeral is not None:
                    return normalize_answer(numeral)
    return None


def generate_solution(
    question: Question,
    gateway: Gateway,
    config: SolveConfig | None = None,
    executor_config: ExecutorConfig | None = None,
    temperature: float | None = None,
    sample_index: int = 0,
) -> CodeIntegratedSolution:
    """Generate one code-integrated solution for a question.

    The solution is Complete iff the loop finished under its caps and an
    answer could be extracted; otherwise it is Incomplete with no answer.
    """
    config = config or SolveConfig()
    loop = run_transcript_loop(
        question.text,
        gateway,
        ModelRole.SOLVER_VERIFIER,
        config,
        executor_config,
        temperature=temperature,
        sample_index=sample_index,
    )
    answer = None if loop.capped else extract_answer(loop.segments, config.answer_priority)
    segments = loop.segments or [Segment(SegmentKind.TEXT, "")]
    return CodeIntegratedSolution.make(
        question_id=question.id,
        segments=segments,
        final_answer=answer,
        generation_count=max(1, loop.model_calls),
        sample_index=sample_index,
    )
