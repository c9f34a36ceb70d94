"""Uniform text-generation gateway over pluggable backends.

Three model roles (solution augmenter, question back-translator, and the
combined solver/verifier) are each bound to a backend at run time. The
gateway adds retry with exponential backoff, client-side stop-sequence
trimming, order-preserving bounded-parallelism batching, and a record/replay
cassette for offline reruns.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Protocol, Sequence

import httpx

logger = logging.getLogger(__name__)


class ModelRole(str, Enum):
    SOLUTION_AUGMENTER = "solution_augmenter"
    BACK_TRANSLATOR = "back_translator"
    SOLVER_VERIFIER = "solver_verifier"


class FinishReason(str, Enum):
    STOP = "stop"
    LENGTH = "length"
    STOP_SEQUENCE = "stop_sequence"


@dataclass(frozen=True)
class GenerationRequest:
    role: ModelRole
    prompt: str
    temperature: float = 0.0
    top_p: float = 1.0
    max_tokens: int = 2048
    stop_sequences: tuple[str, ...] = ()
    sample_index: int = 0


@dataclass(frozen=True)
class GenerationResponse:
    text: str
    finish_reason: FinishReason
    usage: dict | None = None


class GatewayError(RuntimeError):
    """Base class for gateway failures."""


class RoleNotBoundError(GatewayError):
    pass


class RetriesExhaustedError(GatewayError):
    pass


class CassetteMissError(GatewayError):
    pass


class BackendError(GatewayError):
    """Non-retryable backend failure."""


class TransientBackendError(GatewayError):
    """Retryable transport-level failure."""


class Backend(Protocol):
    def complete(self, request: GenerationRequest) -> GenerationResponse:
        """Produce a completion. May raise TransientBackendError / BackendError."""
        ...


def request_hash(request: GenerationRequest) -> str:
    payload = {
        "role": request.role.value,
        "prompt": request.prompt,
        "temperature": request.temperature,
        "top_p": request.top_p,
        "max_tokens": request.max_tokens,
        "stop_sequences": list(request.stop_sequences),
        "sample_index": request.sample_index,
    }
    blob = json.dumps(payload, sort_keys=True, ensure_ascii=False).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def apply_stop_sequences(text: str, stops: Sequence[str]) -> tuple[str, bool]:
    """Trim at the earliest stop-sequence occurrence; the match is excluded."""
    cut = None
    for stop in stops:
        if not stop:
            continue
        idx = text.find(stop)
        if idx != -1 and (cut is None or idx < cut):
            cut = idx
    if cut is None:
        return text, False
    return text[:cut], True


@dataclass
class RetryPolicy:
    max_retries: int = 3
    base_delay: float = 0.5
    factor: float = 2.0
    sleep: Callable[[float], None] = time.sleep

    def delay(self, attempt: int) -> float:
        return self.base_delay * (self.factor**attempt)


class ReplayMode(str, Enum):
    OFF = "off"
    RECORD = "record"
    REPLAY = "replay"


@dataclass
class BatchItem:
    """One slot of a batch result: a response or the error that replaced it."""

    response: GenerationResponse | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.response is not None


@dataclass
class Gateway:
    parallelism: int = 8
    retry: RetryPolicy = field(default_factory=RetryPolicy)

    def __post_init__(self) -> None:
        self._backends: dict[ModelRole, Backend] = {}
        self._mode = ReplayMode.OFF
        self._cassette_path: Path | None = None
        self._cassette: dict[str, dict] = {}
        self._cassette_lock = threading.Lock()

    def bind(self, role: ModelRole, backend: Backend) -> None:
        self._backends[role] = backend

    def bind_all(self, backend: Backend) -> None:
        for role in ModelRole:
            self._backends[role] = backend

    def record_replay(self, mode: ReplayMode, cassette: str | Path) -> None:
        """Switch cassette mode. Replay loads the cassette and serves from it;
        Record appends request-hash/response pairs as calls happen."""
        path = Path(cassette)
        self._mode = mode
        self._cassette_path = path
        self._cassette = {}
        if mode is ReplayMode.REPLAY:
            if not path.exists():
                raise CassetteMissError(f"cassette not found: {path}")
            with path.open("r", encoding="utf-8") as handle:
                for line in handle:
                    if not line.strip():
                        continue
                    entry = json.loads(line)
                    self._cassette[entry["request_hash"]] = entry["response"]
        elif mode is ReplayMode.RECORD:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text("", encoding="utf-8")

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        """Run one generation with retries and stop-sequence enforcement."""
        if self._mode is ReplayMode.REPLAY:
            key = request_hash(request)
            hit = self._cassette.get(key)
            if hit is None:
                raise CassetteMissError(f"no cassette entry for request {key}")
            return GenerationResponse(
                text=hit["text"],
                finish_reason=FinishReason(hit["finish_reason"]),
                usage=hit.get("usage"),
            )

        backend = self._backends.get(request.role)
        if backend is None:
            raise RoleNotBoundError(f"role not bound: {request.role.value}")

        attempt = 0
        while True:
            try:
                raw = backend.complete(request)
                break
            except TransientBackendError as exc:
                if attempt >= self.retry.max_retries:
                    raise RetriesExhaustedError(
                        f"{request.role.value}: giving up after "
                        f"{self.retry.max_retries} retries: {exc}"
                    ) from exc
                delay = self.retry.delay(attempt)
                logger.warning(
                    "transient backend failure (%s), retry %d in %.2fs",
                    exc,
                    attempt + 1,
                    delay,
                )
                self.retry.sleep(delay)
                attempt += 1

        text = raw.text
        finish = raw.finish_reason
        trimmed, hit_stop = apply_stop_sequences(text, request.stop_sequences)
        if hit_stop:
            text = trimmed
            finish = FinishReason.STOP_SEQUENCE
        response = GenerationResponse(text=text, finish_reason=finish, usage=raw.usage)

        if self._mode is ReplayMode.RECORD and self._cassette_path is not None:
            entry = {
                "request_hash": request_hash(request),
                "response": {
                    "text": response.text,
                    "finish_reason": response.finish_reason.value,
                    "usage": response.usage,
                },
            }
            with self._cassette_lock:
                with self._cassette_path.open("a", encoding="utf-8") as handle:
                    handle.write(json.dumps(entry, ensure_ascii=False) + "\n")
        return response

    def generate_batch(self, requests: Sequence[GenerationRequest]) -> list[BatchItem]:
        """Run requests with at most ``parallelism`` in flight.

        Results align index-wise with the input; a failed slot carries its
        error message instead of aborting the siblings.
        """
        if not requests:
            return []
        results: list[BatchItem] = [BatchItem() for _ in requests]

        def run(index: int) -> None:
            try:
                results[index] = BatchItem(response=self.generate(requests[index]))
            except GatewayError as exc:
                results[index] = BatchItem(error=str(exc))

        workers = max(1, min(self.parallelism, len(requests)))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, range(len(requests))))
        return results


DEFAULT_TOKEN_ENV = "MATHSYNTH_API_TOKEN"


class HttpBackend:
    """Chat-completions backend speaking the de-facto JSON schema over HTTP.

    Sends {model, messages, temperature, top_p, max_tokens, stop} and reads
    choices[0].message.content plus finish_reason. 429 and 5xx responses and
    transport errors are transient; other HTTP errors are not.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_token: str | None = None,
        timeout: float = 60.0,
        client: httpx.Client | None = None,
    ) -> None:
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_token = api_token
        self._client = client or httpx.Client(timeout=timeout)

    def complete(self, request: GenerationRequest) -> GenerationResponse:
        headers = {"Content-Type": "application/json"}
        if self.api_token:
            headers["Authorization"] = f"Bearer {self.api_token}"
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "top_p": request.top_p,
            "max_tokens": request.max_tokens,
        }
        if request.stop_sequences:
            payload["stop"] = list(request.stop_sequences)
        try:
            response = self._client.post(
                f"{self.endpoint}/chat/completions", json=payload, headers=headers
            )
        except httpx.TransportError as exc:
            raise TransientBackendError(f"transport failure: {exc}") from exc
        if response.status_code == 429 or response.status_code >= 500:
            raise TransientBackendError(f"server returned {response.status_code}")
        if response.status_code != 200:
            raise BackendError(f"server returned {response.status_code}: {response.text[:200]}")
        body = response.json()
        try:
            choice = body["choices"][0]
            text = choice["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed completion payload: {exc}") from exc
        reason = choice.get("finish_reason", "stop")
        finish = {
            "stop": FinishReason.STOP,
            "length": FinishReason.LENGTH,
        }.get(reason, FinishReason.STOP)
        return GenerationResponse(text=text, finish_reason=finish, usage=body.get("usage"))
