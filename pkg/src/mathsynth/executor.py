"""Sandboxed, persistent interpreter sessions for code cells.

Each session owns one interpreter subprocess with its own scratch working
directory and no network access. State persists across cells within a
session; a timeout kills and recycles the subprocess (state is lost), while
ordinary errors keep it alive. Sessions are never shared across solutions.
"""

from __future__ import annotations

import json
import logging
import os
import select
import shutil
import subprocess
import sys
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from .corpus import ExecStatus, Segment, SegmentKind

logger = logging.getLogger(__name__)

# The child is stdlib-only; running it by path keeps session startup cheap
# (importing this package would drag in the HTTP stack for every cell).
_CHILD_SCRIPT = str(Path(__file__).with_name("_exec_child.py"))

# Process-wide cap on live interpreter subprocesses, shared by all sessions.
MAX_LIVE_SESSIONS = 32
_live_sessions = threading.BoundedSemaphore(MAX_LIVE_SESSIONS)

TIMEOUT_BODY = "[cell timed out]"
BUDGET_BODY = "[session wall-clock budget exhausted]"


class DeadSessionError(RuntimeError):
    """The session was closed and can no longer run cells."""


@dataclass
class ExecutorConfig:
    cell_timeout: float = 10.0
    session_budget: float = 120.0
    output_cap: int = 64 * 1024
    interpreter: tuple[str, ...] | None = None

    def command(self) -> list[str]:
        if self.interpreter:
            return list(self.interpreter)
        return [sys.executable, "-u", _CHILD_SCRIPT]


class ExecSession:
    """Handle to one persistent interpreter subprocess."""

    def __init__(self, config: ExecutorConfig | None = None) -> None:
        self.config = config or ExecutorConfig()
        self._proc: subprocess.Popen | None = None
        self._workdir: str | None = None
        self._spent = 0.0
        self._closed = False

    def __enter__(self) -> "ExecSession":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def _ensure_proc(self) -> subprocess.Popen:
        if self._closed:
            raise DeadSessionError("session is closed")
        if self._proc is not None and self._proc.poll() is not None:
            self._kill_proc()
        if self._proc is None:
            _live_sessions.acquire()
            try:
                self._workdir = tempfile.mkdtemp(prefix="mathsynth-cell-")
                self._proc = subprocess.Popen(
                    self.config.command(),
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    stderr=subprocess.DEVNULL,
                    cwd=self._workdir,
                    text=False,
                )
            except BaseException:
                _live_sessions.release()
                raise
        return self._proc

    def _kill_proc(self) -> None:
        if self._proc is not None:
            try:
                self._proc.kill()
                self._proc.wait(timeout=5)
            except Exception:  # pragma: no cover - best-effort cleanup
                pass
            self._proc = None
            _live_sessions.release()
        if self._workdir is not None:
            shutil.rmtree(self._workdir, ignore_errors=True)
            self._workdir = None

    def close(self) -> None:
        self._kill_proc()
        self._closed = True

    def _read_frame(self, proc: subprocess.Popen, deadline: float) -> bytes | None:
        """Read one newline-terminated frame, or None on deadline/EOF."""
        assert proc.stdout is not None
        fd = proc.stdout.fileno()
        buf = bytearray()
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return None
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                return None
            chunk = os.read(fd, 65536)
            if not chunk:
                return None
            buf.extend(chunk)
            newline = buf.find(b"\n")
            if newline != -1:
                return bytes(buf[: newline + 1])

    def run(self, code: str) -> Segment:
        """Execute one cell, returning an ExecutionResult segment.

        Output is captured stdout plus the repr of a trailing bare
        expression, truncated at the configured byte cap. Timeouts recycle
        the subprocess; errors keep the session state.
        """
        if self._closed:
            raise DeadSessionError("session is closed")
        if self._spent >= self.config.session_budget:
            return Segment(SegmentKind.EXECUTION_RESULT, BUDGET_BODY, status=ExecStatus.TIMEOUT)

        proc = self._ensure_proc()
        timeout = min(self.config.cell_timeout, self.config.session_budget - self._spent)
        frame = json.dumps({"code": code, "output_cap": self.config.output_cap})
        started = time.monotonic()
        try:
            assert proc.stdin is not None
            proc.stdin.write(frame.encode("utf-8") + b"\n")
            proc.stdin.flush()
        except (BrokenPipeError, OSError):
            self._kill_proc()
            raise DeadSessionError("executor subprocess died")

        reply = self._read_frame(proc, started + timeout)
        self._spent += time.monotonic() - started
        if reply is None:
            logger.warning("cell timed out after %.1fs; recycling session", timeout)
            self._kill_proc()
            return Segment(SegmentKind.EXECUTION_RESULT, TIMEOUT_BODY, status=ExecStatus.TIMEOUT)

        payload = json.loads(reply.decode("utf-8"))
        output = payload["output"].rstrip("\n")
        status = ExecStatus.OK if payload["status"] == "ok" else ExecStatus.ERROR
        return Segment(SegmentKind.EXECUTION_RESULT, output, status=status)


def run_cell(session: ExecSession, code: str) -> Segment:
    """Run one code cell in the given session."""
    return session.run(code)
