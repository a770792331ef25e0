"""Line-delimited JSON protocol for external detector and OCR backends.

One request per line on the backend's stdin, one response per line on its
stdout, in request order::

    {"id": 3, "task": "marks", "width": 4, "height": 4, "format": "gray8", "data": "<base64>"}
    {"id": 3, "detections": [{"x0": 0, "y0": 0, "x1": 2, "y1": 2, "score": 0.9, "label": "mark"}]}

OCR requests carry ``"op": "ocr"`` instead of ``"task"`` and are answered
with ``{"id": ..., "text": "...", "scores": [...]}``. Unknown response
fields are ignored. Backend stderr is passed through to ours.
"""

from __future__ import annotations

import base64
import json
import logging
import shlex
import subprocess
import threading
from typing import Optional, Sequence

import numpy as np

from .errors import DetectorUnavailable, ProtocolError

log = logging.getLogger(__name__)


def encode_image(image: np.ndarray) -> dict:
    image = np.ascontiguousarray(image, dtype=np.uint8)
    return {
        "width": int(image.shape[1]),
        "height": int(image.shape[0]),
        "format": "gray8" if image.ndim == 2 else "rgb8",
        "data": base64.b64encode(image.tobytes()).decode("ascii"),
    }


def decode_image(msg: dict) -> np.ndarray:
    """Inverse of :func:`encode_image`, for backends written in Python."""
    w, h = int(msg["width"]), int(msg["height"])
    raw = np.frombuffer(base64.b64decode(msg["data"]), dtype=np.uint8)
    shape = (h, w) if msg["format"] == "gray8" else (h, w, 3)
    return raw.reshape(shape)


def split_command(command: str | Sequence[str]) -> list[str]:
    if isinstance(command, str):
        return shlex.split(command)
    return [str(c) for c in command]


class BackendProcess:
    """A long-lived backend subprocess answering one request at a time.

    Calls are serialized with a lock, so one instance may be shared between
    threads; requests still reach the backend strictly one after another.
    """

    def __init__(self, command: str | Sequence[str]):
        self.argv = split_command(command)
        if not self.argv:
            raise DetectorUnavailable("empty backend command")
        self._next_id = 0
        self._lock = threading.Lock()
        try:
            self.proc = subprocess.Popen(
                self.argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, encoding="utf-8", bufsize=1)
        except OSError as exc:
            raise DetectorUnavailable(f"cannot start backend {self.argv[0]!r}: {exc}") from None

    def _dead(self, what: str) -> DetectorUnavailable:
        try:
            code = self.proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            code = None
        return DetectorUnavailable(f"backend {self.argv[0]!r} {what} (exit status {code})")

    def request(self, payload: dict) -> dict:
        with self._lock:
            req_id = self._next_id
            self._next_id += 1
            msg = {"id": req_id, **payload}
            try:
                self.proc.stdin.write(json.dumps(msg) + "\n")
                self.proc.stdin.flush()
            except (BrokenPipeError, OSError):
                raise self._dead("closed its input") from None
            line = self.proc.stdout.readline()
            if line == "":
                raise self._dead("exited without answering")
            if not line.endswith("\n"):
                raise ProtocolError(f"truncated response line: {line[:80]!r}")
            try:
                resp = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ProtocolError(f"malformed response: {exc}") from None
            if not isinstance(resp, dict):
                raise ProtocolError("response is not a JSON object")
            if resp.get("id") != req_id:
                raise ProtocolError(f"response id {resp.get('id')!r} does not match request {req_id}")
            return resp

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()
        if self.proc.stdout:
            self.proc.stdout.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _require_int(d: dict, key: str) -> int:
    v = d.get(key)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ProtocolError(f"detection field {key!r} must be an integer, got {v!r}")
    return v


def parse_detection(d) -> tuple[int, int, int, int, float, str]:
    if not isinstance(d, dict):
        raise ProtocolError(f"detection must be an object, got {d!r}")
    x0, y0, x1, y1 = (_require_int(d, k) for k in ("x0", "y0", "x1", "y1"))
    score = d.get("score", 1.0)
    if isinstance(score, bool) or not isinstance(score, (int, float)) or not 0.0 <= score <= 1.0:
        raise ProtocolError(f"detection score must be a number in [0, 1], got {score!r}")
    label = d.get("label", "")
    if not isinstance(label, str):
        raise ProtocolError(f"detection label must be a string, got {label!r}")
    if x0 >= x1 or y0 >= y1:
        raise ProtocolError(f"empty detection box ({x0}, {y0}, {x1}, {y1})")
    return x0, y0, x1, y1, float(score), label


def parse_ocr(resp: dict) -> tuple[str, list[float]]:
    text = resp.get("text")
    scores = resp.get("scores")
    if not isinstance(text, str) or not isinstance(scores, list):
        raise ProtocolError("OCR response needs a string 'text' and a list 'scores'")
    if len(scores) != len(text):
        raise ProtocolError(f"{len(scores)} scores for {len(text)} characters")
    out = []
    for s in scores:
        if isinstance(s, bool) or not isinstance(s, (int, float)) or not 0.0 <= s <= 1.0:
            raise ProtocolError(f"OCR score must be a number in [0, 1], got {s!r}")
        out.append(float(s))
    return text, out


def probe(command: str | Sequence[str], task: Optional[str] = "marks",
          ocr: bool = False) -> tuple[dict, dict]:
    """Send one small fixed image to a backend; return (request, response)."""
    image = np.zeros((8, 8), dtype=np.uint8)
    image[2:6, 2:6] = 255
    payload = {"op": "ocr"} if ocr else {"task": task}
    payload.update(encode_image(image))
    with BackendProcess(command) as backend:
        resp = backend.request(payload)
    return {"id": 0, **payload}, resp
