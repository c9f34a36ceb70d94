"""Child-process side of the code-cell executor.

Reads JSON frames ({"code": ..., "output_cap": ...}) from stdin, executes
each cell in a persistent namespace, and writes one JSON reply frame
({"status": "ok"|"error", "output": ...}) per request to stdout. User
stdout is captured into the reply; the real stdout carries only frames.
Jupyter-style display: if the last statement is a bare expression, its repr
is appended to the output.
"""

from __future__ import annotations

import ast
import io
import json
import sys
import traceback

TRUNCATION_MARKER = "\n...[output truncated]"


def _disable_network() -> None:
    import socket

    def _blocked(*args, **kwargs):
        raise OSError("network access is disabled inside the executor sandbox")

    socket.socket = _blocked  # type: ignore[misc,assignment]
    socket.create_connection = _blocked  # type: ignore[assignment]


def _truncate(output: str, cap: int) -> str:
    encoded = output.encode("utf-8", errors="replace")
    if len(encoded) <= cap:
        return output
    clipped = encoded[:cap].decode("utf-8", errors="ignore")
    return clipped + TRUNCATION_MARKER


def _run_cell(code: str, namespace: dict) -> tuple[str, str]:
    buffer = io.StringIO()
    real_stdout = sys.stdout
    sys.stdout = buffer
    status = "ok"
    try:
        tree = ast.parse(code, mode="exec")
        trailing_expr = None
        if tree.body and isinstance(tree.body[-1], ast.Expr):
            trailing_expr = ast.Expression(tree.body[-1].value)
            tree.body = tree.body[:-1]
        exec(compile(tree, "<cell>", "exec"), namespace)
        if trailing_expr is not None:
            value = eval(compile(trailing_expr, "<cell>", "eval"), namespace)
            if value is not None:
                buffer.write(repr(value) + "\n")
    except BaseException:
        status = "error"
        etype, value, tb = sys.exc_info()
        # Drop the harness frame so the traceback starts at the cell.
        if tb is not None and tb.tb_next is not None:
            tb = tb.tb_next
        buffer.write("".join(traceback.format_exception(etype, value, tb)))
    finally:
        sys.stdout = real_stdout
    return status, buffer.getvalue()


def _claim_protocol_fds() -> tuple:
    """Move the frame protocol onto private fds.

    User code that writes to fd 1 or reads fd 0 directly would otherwise
    corrupt the channel; after this, raw stdout goes to /dev/null and raw
    stdin reads EOF.
    """
    import os

    proto_in = os.fdopen(os.dup(0), "r", encoding="utf-8")
    proto_out = os.fdopen(os.dup(1), "w", encoding="utf-8")
    devnull = os.open(os.devnull, os.O_RDWR)
    os.dup2(devnull, 0)
    os.dup2(devnull, 1)
    os.close(devnull)
    return proto_in, proto_out


def main() -> None:
    _disable_network()
    proto_in, proto_out = _claim_protocol_fds()
    namespace: dict = {"__name__": "__main__"}
    for line in proto_in:
        if not line.strip():
            continue
        request = json.loads(line)
        status, output = _run_cell(request["code"], namespace)
        output = _truncate(output, int(request.get("output_cap", 65536)))
        proto_out.write(json.dumps({"status": status, "output": output}) + "\n")
        proto_out.flush()


if __name__ == "__main__":
    main()
