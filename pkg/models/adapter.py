"""
Stdio adapter for external models.

Protocol: newline-delimited JSON over the child's stdin/stdout.
    request  {"id": 7, "image": {"h": 40, "w": 40, "rgb_b64": "<base64 row-major RGB bytes>"}}
    response {"id": 7, "logits": [0.1, 0.9]}

One request is in flight per process; AdapterPool hands out processes to
parallel workers.
"""

import base64
import json
import logging
import queue
import subprocess
import threading
import time
from collections import deque
from contextlib import contextmanager
from typing import Deque, List, Optional

import numpy as np

from common.errors import ProtocolError, TransportError
from common.settings import adapter_timeout
from models.scorers import ModelKind, ModelSpec, Prediction

logger = logging.getLogger(__name__)


def encode_request(request_id: int, image: np.ndarray) -> str:
    h, w = image.shape[:2]
    payload = base64.b64encode(np.ascontiguousarray(image, dtype=np.uint8).tobytes()).decode("ascii")
    return json.dumps({"id": request_id, "image": {"h": h, "w": w, "rgb_b64": payload}})


def decode_image(message: dict) -> np.ndarray:
    """Inverse of encode_request's image field (used by adapter processes)."""
    image = message["image"]
    raw = base64.b64decode(image["rgb_b64"])
    return np.frombuffer(raw, dtype=np.uint8).reshape(int(image["h"]), int(image["w"]), 3)


class AdapterHandle:
    """A running adapter process and its reader threads."""

    def __init__(self, command: List[str], timeout: Optional[float] = None):
        self.command = list(command)
        self.timeout = adapter_timeout() if timeout is None else timeout
        self._proc = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        if self._proc.stdin is None or self._proc.stdout is None or self._proc.stderr is None:
            raise TransportError("failed to open stdio pipes for adapter process")
        self._next_id = 1
        self._request_lock = threading.Lock()
        self._lines: "queue.Queue[str]" = queue.Queue()
        self._stderr_lines: Deque[str] = deque(maxlen=50)
        self._stdout_closed = threading.Event()
        threading.Thread(target=self._read_loop, daemon=True).start()
        threading.Thread(target=self._read_stderr_loop, daemon=True).start()
        logger.info("Adapter started: %s (pid %s)", " ".join(self.command), self._proc.pid)

    def _read_loop(self) -> None:
        try:
            for line in self._proc.stdout:
                line = line.strip()
                if line:
                    self._lines.put(line)
        finally:
            self._stdout_closed.set()

    def _read_stderr_loop(self) -> None:
        for line in self._proc.stderr:
            line = line.strip()
            if line:
                self._stderr_lines.append(line)

    def _stderr_summary(self) -> str:
        return " | ".join(self._stderr_lines) if self._stderr_lines else "<no stderr>"

    def _assert_running(self, context: str) -> None:
        code = self._proc.poll()
        if code is not None:
            raise TransportError(f"adapter exited ({code}) during {context}. stderr: {self._stderr_summary()}")

    @property
    def alive(self) -> bool:
        return self._proc.poll() is None

    def predict(self, image: np.ndarray) -> Prediction:
        with self._request_lock:
            self._assert_running("send")
            request_id = self._next_id
            self._next_id += 1
            try:
                self._proc.stdin.write(encode_request(request_id, image) + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as e:
                raise TransportError(f"failed to send request {request_id}: {e}") from e

            deadline = time.monotonic() + self.timeout
            while True:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise TransportError(
                        f"timeout after {self.timeout:.1f}s waiting for response {request_id}. "
                        f"stderr: {self._stderr_summary()}"
                    )
                try:
                    line = self._lines.get(timeout=min(remaining, 0.2))
                    break
                except queue.Empty:
                    if self._stdout_closed.is_set() and self._lines.empty():
                        self._proc.poll()
                        raise TransportError(
                            f"adapter closed stdout while waiting for response {request_id}. "
                            f"stderr: {self._stderr_summary()}"
                        )

        return self._parse_response(line, request_id)

    @staticmethod
    def _parse_response(line: str, request_id: int) -> Prediction:
        try:
            message = json.loads(line)
        except json.JSONDecodeError as e:
            raise ProtocolError(f"malformed adapter response: {line[:80]!r}") from e
        if not isinstance(message, dict) or "logits" not in message or "id" not in message:
            raise ProtocolError(f"adapter response lacks 'id' or 'logits': {line[:80]!r}")
        if message["id"] != request_id:
            raise ProtocolError(f"response id {message['id']} does not match request {request_id}")
        try:
            return Prediction(np.asarray(message["logits"], dtype=float))
        except (TypeError, ValueError) as e:
            raise ProtocolError(f"adapter logits are not numeric: {e}") from e

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            self._proc.terminate()
            try:
                self._proc.wait(timeout=3)
            except subprocess.TimeoutExpired:
                self._proc.kill()

    def kill(self) -> None:
        self._proc.kill()
        self._proc.wait(timeout=3)


def adapter_predict(handle: AdapterHandle, image: np.ndarray) -> Prediction:
    return handle.predict(image)


class AdapterPool:
    """A fixed set of adapter processes shared by parallel workers."""

    def __init__(self, command: List[str], size: int = 1, timeout: Optional[float] = None):
        self.handles = [AdapterHandle(command, timeout) for _ in range(max(1, size))]
        self._idle: "queue.Queue[AdapterHandle]" = queue.Queue()
        for handle in self.handles:
            self._idle.put(handle)

    @contextmanager
    def acquire(self):
        handle = self._idle.get()
        try:
            yield handle
        finally:
            self._idle.put(handle)

    def predict(self, image: np.ndarray) -> Prediction:
        with self.acquire() as handle:
            return handle.predict(image)

    def close(self) -> None:
        for handle in self.handles:
            handle.close()


def attach_adapter(model: ModelSpec, pool_size: int = 1) -> ModelSpec:
    """Start the adapter processes for an adapter model."""
    if model.kind != ModelKind.ADAPTER:
        return model
    if model.adapter is None:
        model.adapter = AdapterPool(model.command, size=pool_size)
    return model
