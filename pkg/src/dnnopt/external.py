"""Subprocess evaluator speaking line-delimited JSON over standard streams.

Per evaluation the harness writes one request line::

    {"id": <int>, "design": [<d raw reals>]}

and reads one reply line::

    {"id": <int>, "specs": [<m+1 raw reals>]}   or
    {"id": <int>, "error": "<text>"}

Raw replies are canonicalized harness-side.  Timeouts, crashes and malformed
lines degrade to failure markers (a NaN spec vector) rather than aborting the
run; the child is restarted where its state can no longer be trusted.  An id
mismatch restarts the child once; a second mismatch is fatal.
"""

from __future__ import annotations

import json
import queue
import subprocess
import threading
from typing import Sequence

import numpy as np

from .evaluators import Evaluator, canonicalize_rows
from .problem import ProblemDefinition

DEFAULT_TIMEOUT = 300.0


class ProtocolError(RuntimeError):
    """Unrecoverable wire-protocol failure; aborts the run."""


class _Child:
    """One worker process with a background reader pumping stdout lines."""

    def __init__(self, command: Sequence[str]) -> None:
        self.command = list(command)
        self.proc = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self.lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self) -> None:
        assert self.proc.stdout is not None
        for line in self.proc.stdout:
            self.lines.put(line)
        self.lines.put(None)  # EOF sentinel

    def send(self, obj: dict) -> None:
        assert self.proc.stdin is not None
        self.proc.stdin.write(json.dumps(obj) + "\n")
        self.proc.stdin.flush()

    def recv(self, timeout: float) -> str | None:
        """Next stdout line, None on EOF; raises queue.Empty on timeout."""
        return self.lines.get(timeout=timeout)

    def kill(self) -> None:
        if self.proc.poll() is None:
            self.proc.kill()
        try:
            self.proc.wait(timeout=5.0)
        except subprocess.TimeoutExpired:
            pass


class ExternalProcessEvaluator(Evaluator):
    """Evaluator backed by a pool of worker subprocesses."""

    deterministic = False
    concurrency_safe = False

    def __init__(
        self,
        problem: ProblemDefinition,
        command: Sequence[str],
        timeout: float = DEFAULT_TIMEOUT,
        pool_size: int = 1,
    ) -> None:
        if pool_size < 1:
            raise ValueError("pool_size must be >= 1")
        if not command:
            raise ValueError("external evaluator needs a non-empty command")
        self.problem = problem
        self.command = list(command)
        self.timeout = float(timeout)
        self._children: list[_Child | None] = [None] * pool_size
        self._turn = 0
        self._next_id = 0
        self._mismatch_restarts = 0

    def _child(self, slot: int) -> _Child:
        child = self._children[slot]
        if child is None or child.proc.poll() is not None:
            child = _Child(self.command)
            self._children[slot] = child
        return child

    def _restart(self, slot: int) -> None:
        child = self._children[slot]
        if child is not None:
            child.kill()
        self._children[slot] = None

    def evaluate(self, design: np.ndarray) -> np.ndarray:
        design = np.asarray(design, dtype=float)
        eval_id = self._next_id
        self._next_id += 1
        slot = self._turn % len(self._children)
        self._turn += 1
        failure = self.failure_vector()

        child = self._child(slot)
        try:
            child.send({"id": eval_id, "design": [float(v) for v in design]})
        except (BrokenPipeError, OSError):
            self._restart(slot)
            return failure

        try:
            line = child.recv(self.timeout)
        except queue.Empty:
            # Late replies would desync the stream; start over.
            self._restart(slot)
            return failure
        if line is None:  # child exited
            self._restart(slot)
            return failure

        try:
            reply = json.loads(line)
            reply_id = reply["id"]
        except (json.JSONDecodeError, TypeError, KeyError):
            return failure  # malformed line: failure marker for this id

        if reply_id != eval_id:
            self._mismatch_restarts += 1
            if self._mismatch_restarts > 1:
                raise ProtocolError(
                    f"reply id {reply_id} does not match request id {eval_id} (second occurrence)"
                )
            self._restart(slot)
            return failure

        if "error" in reply:
            return failure
        specs = reply.get("specs")
        if not isinstance(specs, list) or len(specs) != len(self.problem.specs):
            return failure
        try:
            raw = np.asarray([float(v) for v in specs], dtype=float)
            if not np.all(np.isfinite(raw)):
                return failure
            return canonicalize_rows(raw[None, :], self.problem.specs)[0]
        except (TypeError, ValueError):
            return failure

    def close(self) -> None:
        for slot in range(len(self._children)):
            self._restart(slot)
