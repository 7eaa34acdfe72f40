"""Newline-delimited JSON wire protocol to external simulator processes.

Any simulator, in any language, exposes its fitness function by reading
request lines and writing response lines on stdio:

    request:  {"id": 7, "theta": [0.25, 0.5, ...]}
    response: {"id": 7, "rho": 3.125}        on success
              {"id": 7, "error": "message"}  on failure

Responses may arrive in any order and are re-associated by id. A reader
thread drains stdout continuously, so a child may buffer arbitrarily many
requests before answering (and requests are written from a side thread, so
a slow child never deadlocks the caller).
"""

from __future__ import annotations

import json
import subprocess
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, EvaluationError, ProtocolError
from .scenario import BlackBox


def encode_request(request_id: int, theta) -> str:
    return json.dumps({"id": int(request_id), "theta": [float(v) for v in theta]})


def parse_response(line: str) -> dict:
    """Parse one response line; raises ProtocolError on malformed input."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as err:
        raise ProtocolError(f"malformed response line: {err}", payload=line) from err
    if not isinstance(obj, dict) or not isinstance(obj.get("id"), int):
        raise ProtocolError("response must be an object with an integer 'id'", payload=line)
    if "rho" not in obj and "error" not in obj:
        raise ProtocolError("response needs a 'rho' or 'error' field", payload=line)
    return obj


@dataclass
class SubprocessBlackBox:
    """One external simulator child speaking the stdio protocol.

    ``timeout`` is an inactivity limit: it applies to the gap since the last
    response, so long pipelined batches are fine as long as the child keeps
    answering.
    """

    command: list[str]
    max_concurrency: int = 1
    timeout: float = 60.0
    _proc: subprocess.Popen | None = field(default=None, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)
    _cond: threading.Condition = field(default=None, repr=False)
    _responses: dict = field(default_factory=dict, repr=False)
    _pending: set = field(default_factory=set, repr=False)
    _dead: str | None = field(default=None, repr=False)
    _next_id: int = field(default=0, repr=False)

    def __post_init__(self):
        if self.timeout <= 0:
            raise ContractViolation("timeout must be > 0")
        if not self.command:
            raise ContractViolation("command must be non-empty")
        self._cond = threading.Condition(self._lock)

    # -- lifecycle ---------------------------------------------------------

    def _ensure_started(self) -> None:
        if self._proc is not None:
            return
        self._proc = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
            bufsize=1,
        )
        threading.Thread(target=self._read_loop, daemon=True).start()

    def _read_loop(self) -> None:
        assert self._proc is not None and self._proc.stdout is not None
        for line in self._proc.stdout:
            line = line.strip()
            if not line:
                continue
            try:
                obj = parse_response(line)
            except ProtocolError as err:
                with self._cond:
                    self._dead = f"protocol failure: {err} (line={err.payload!r})"
                    self._cond.notify_all()
                return
            with self._cond:
                self._responses[obj["id"]] = obj
                self._cond.notify_all()
        with self._cond:
            if self._dead is None:
                self._dead = "child closed its stdout"
            self._cond.notify_all()

    def close(self) -> None:
        if self._proc is not None:
            try:
                if self._proc.stdin:
                    self._proc.stdin.close()
                self._proc.terminate()
                self._proc.wait(timeout=5)
            except Exception:
                self._proc.kill()
            self._proc = None

    def __enter__(self) -> "SubprocessBlackBox":
        self._ensure_started()
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- evaluation --------------------------------------------------------

    def evaluate(self, theta: np.ndarray) -> float:
        return self.evaluate_many([theta])[0]

    def evaluate_many(self, thetas) -> list[float]:
        """Pipeline all requests, then collect responses by id."""
        self._ensure_started()
        thetas = [np.asarray(t, dtype=float) for t in thetas]
        with self._lock:
            ids = list(range(self._next_id, self._next_id + len(thetas)))
            self._next_id += len(thetas)
            self._pending.update(ids)
        id_set = set(ids)
        lines = "".join(encode_request(i, t) + "\n" for i, t in zip(ids, thetas))

        def write_all():
            try:
                assert self._proc is not None and self._proc.stdin is not None
                self._proc.stdin.write(lines)
                self._proc.stdin.flush()
            except Exception:
                pass  # reader side reports the child failure

        writer = threading.Thread(target=write_all, daemon=True)
        writer.start()

        results: dict[int, dict] = {}
        try:
            with self._cond:
                deadline = time.monotonic() + self.timeout
                seen = 0
                while len(results) < len(ids):
                    for i in ids:
                        if i not in results and i in self._responses:
                            results[i] = self._responses.pop(i)
                    if len(results) > seen:
                        seen = len(results)
                        deadline = time.monotonic() + self.timeout
                    if len(results) == len(ids):
                        break
                    stray = [k for k in self._responses if k not in self._pending]
                    if stray:
                        raise ProtocolError(
                            f"response id {stray[0]} matches no outstanding request",
                            payload=self._responses[stray[0]],
                        )
                    if self._dead is not None:
                        raise ProtocolError(self._dead, payload=self._dead)
                    remaining = deadline - time.monotonic()
                    if remaining <= 0:
                        missing = [i for i in ids if i not in results]
                        raise ProtocolError(
                            f"timed out waiting for response ids {missing[:5]}"
                            f"{'...' if len(missing) > 5 else ''}",
                            payload={"missing": missing},
                        )
                    self._cond.wait(timeout=remaining)
        finally:
            # the condition's lock is released once the with-block above exits
            with self._lock:
                self._pending.difference_update(id_set)

        out = []
        for i, theta in zip(ids, thetas):
            obj = results[i]
            if "error" in obj:
                raise EvaluationError(
                    f"simulator error: {obj['error']}", theta=theta, payload=obj
                )
            try:
                out.append(float(obj["rho"]))
            except (TypeError, ValueError) as err:
                raise ProtocolError("non-numeric rho in response", payload=obj) from err
        return out

    def as_blackbox(self) -> BlackBox:
        return BlackBox(
            evaluate=self.evaluate,
            descriptor="subprocess:" + " ".join(self.command),
            concurrency_safe=False,
        )
