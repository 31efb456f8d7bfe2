"""Line protocol for objective evaluation in a separate process.

The optimizer writes to the evaluator's stdin and reads its stdout, one
UTF-8 line per message::

    -> INIT <d>                 <- READY
    -> EVAL <id> <x_0> ... <x_{d-1}>
                                <- RESULT <id> <value>
                                <- FAULT <id> <message...>
    -> SHUTDOWN

Numbers are written with 17 significant digits so that every double survives
the round trip unchanged. A session keeps at most one request outstanding;
concurrency comes from a :class:`SessionPool` of several processes.
"""

from __future__ import annotations

import logging
import math
import queue
import shlex
import subprocess
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .errors import EncodingError, EvaluationError, EvaluationTimeout, ProtocolError
from .objectives import Objective

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 60.0


@dataclass(frozen=True)
class EvalRequest:
    id: int
    x: tuple


@dataclass(frozen=True)
class EvalResponse:
    id: int
    value: Optional[float] = None
    fault: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.fault is None


def format_number(value: float) -> str:
    return format(float(value), ".17g")


def encode_request(req: EvalRequest) -> str:
    x = [float(v) for v in req.x]
    if not x:
        raise EncodingError("EVAL needs at least one component")
    if not all(math.isfinite(v) for v in x):
        raise EncodingError(f"cannot encode non-finite component in request {req.id}")
    return "EVAL %d %s\n" % (req.id, " ".join(format_number(v) for v in x))


def parse_request(line: str) -> EvalRequest:
    """Evaluator-side parser for ``EVAL`` lines."""
    parts = line.split()
    if len(parts) < 3 or parts[0] != "EVAL":
        raise ProtocolError(f"not an EVAL line: {line!r}", line=line)
    try:
        return EvalRequest(int(parts[1]), tuple(float(p) for p in parts[2:]))
    except ValueError:
        raise ProtocolError(f"malformed EVAL line: {line!r}", line=line) from None


def parse_response(line: str) -> EvalResponse:
    stripped = line.rstrip("\r\n")
    parts = stripped.split(" ", 2)
    try:
        if parts[0] == "RESULT" and len(parts) == 3:
            value = float(parts[2])
            return EvalResponse(int(parts[1]), value=value)
        if parts[0] == "FAULT" and len(parts) >= 2:
            return EvalResponse(int(parts[1]), fault=parts[2] if len(parts) == 3 else "")
    except ValueError:
        pass
    raise ProtocolError(f"malformed response line: {stripped!r}", line=line)


def encode_response(resp: EvalResponse) -> str:
    """Evaluator-side counterpart of :func:`parse_response`."""
    if resp.fault is not None:
        return f"FAULT {resp.id} {resp.fault}\n"
    return f"RESULT {resp.id} {format_number(resp.value)}\n"


_EOF = object()


class Session(Objective):
    """One evaluator process driven over the line protocol.

    Transient failures (FAULT replies, timeouts) are retried ``retries``
    times before an :class:`EvaluationError` reaches the caller. A timed-out
    request is abandoned; if its answer shows up later it is dropped.
    """

    serial = True

    def __init__(self, command: Union[str, Sequence[str]], dimension: int,
                 timeout: float = DEFAULT_TIMEOUT, retries: int = 1,
                 startup_timeout: Optional[float] = None):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.dimension = int(dimension)
        self.timeout = float(timeout)
        self.retries = int(retries)
        self.startup_timeout = max(self.timeout, 10.0) if startup_timeout is None else startup_timeout
        self.next_id = 0
        self.retried = 0
        self._abandoned = set()
        self._lines: "queue.Queue" = queue.Queue()
        self._lock = threading.Lock()
        try:
            self.proc = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, encoding="utf-8", bufsize=1)
        except OSError as exc:
            raise EvaluationError(f"cannot start evaluator {self.command!r}: {exc}") from exc
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        self._handshake()

    def _pump(self):
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(_EOF)

    def _send(self, text):
        try:
            self.proc.stdin.write(text)
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError, ValueError) as exc:
            raise EvaluationError(f"evaluator process is gone ({exc})") from exc

    def _readline(self, timeout):
        try:
            line = self._lines.get(timeout=timeout)
        except queue.Empty:
            raise EvaluationTimeout(f"no reply within {timeout} s") from None
        if line is _EOF:
            self._lines.put(_EOF)
            code = self.proc.poll()
            raise EvaluationError(f"evaluator exited (status {code})")
        return line

    def _handshake(self):
        self._send(f"INIT {self.dimension}\n")
        try:
            line = self._readline(self.startup_timeout)
        except EvaluationError:
            self.close(kill=True)
            raise
        if line.strip() != "READY":
            self.close(kill=True)
            raise ProtocolError(f"expected READY, got {line.strip()!r}", line=line)

    def request(self, x) -> EvalResponse:
        """Send one EVAL and wait for its reply, without retrying."""
        with self._lock:
            req = EvalRequest(self.next_id, tuple(float(v) for v in x))
            self.next_id += 1
            self._send(encode_request(req))
            while True:
                try:
                    line = self._readline(self.timeout)
                except EvaluationTimeout:
                    self._abandoned.add(req.id)
                    raise EvaluationTimeout(f"request {req.id}: no reply within {self.timeout} s")
                resp = parse_response(line)
                if resp.id == req.id:
                    return resp
                if resp.id in self._abandoned:
                    self._abandoned.discard(resp.id)
                    log.debug("dropping late reply to abandoned request %d", resp.id)
                    continue
                raise ProtocolError(f"reply for unknown request {resp.id}", line=line)

    def evaluate(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise ValueError(f"expected {self.dimension} components, got shape {x.shape}")
        attempts = 0
        while True:
            try:
                resp = self.request(x)
                if resp.ok:
                    return resp.value
                raise EvaluationError(f"evaluator fault on request {resp.id}: {resp.fault}",
                                      transient=True)
            except EvaluationError as exc:
                if not exc.transient or attempts >= self.retries:
                    raise
                attempts += 1
                self.retried += 1
                log.info("retrying after transient failure: %s", exc)

    def close(self, kill=False):
        if self.proc.poll() is None:
            if not kill:
                try:
                    self._send("SHUTDOWN\n")
                    self.proc.stdin.close()
                    self.proc.wait(timeout=max(self.timeout, 1.0))
                except (EvaluationError, subprocess.TimeoutExpired):
                    kill = True
            if kill:
                self.proc.kill()
                self.proc.wait()
        for stream in (self.proc.stdin, self.proc.stdout):
            try:
                stream.close()
            except (OSError, ValueError):
                pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def session(command, dimension, timeout=DEFAULT_TIMEOUT, **kwargs) -> Session:
    return Session(command, dimension, timeout=timeout, **kwargs)


class SessionPool(Objective):
    """Several sessions evaluating the rows of a batch concurrently.

    Each row goes to whichever session is free; values come back in row
    order. With a deterministic evaluator the result is independent of the
    pool size.
    """

    def __init__(self, command, dimension, size=2, timeout=DEFAULT_TIMEOUT, **kwargs):
        self.dimension = int(dimension)
        self.sessions = [Session(command, dimension, timeout=timeout, **kwargs)
                         for _ in range(int(size))]
        self._free: "queue.Queue[Session]" = queue.Queue()
        for s in self.sessions:
            self._free.put(s)
        self._executor = ThreadPoolExecutor(max_workers=len(self.sessions))

    def evaluate(self, x):
        s = self._free.get()
        try:
            return s.evaluate(x)
        finally:
            self._free.put(s)

    def batch(self, X, pool=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.fromiter(self._executor.map(self.evaluate, X), dtype=float, count=len(X))

    def close(self):
        self._executor.shutdown(wait=True)
        for s in self.sessions:
            s.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
