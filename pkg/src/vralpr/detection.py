"""Bounding-box detection for marks, vehicles and plates.

Two backends sit behind the same call: a classical blob detector (column
median background, absolute-difference threshold, 4-connected components)
and an external subprocess speaking the line protocol in
:mod:`vralpr.protocol`, which is where neural detectors plug in.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy import ndimage

from .errors import ConfigError, InvalidCrop, ProtocolError
from .protocol import BackendProcess, encode_image, parse_detection, split_command
from .video_io import Frame, to_gray

log = logging.getLogger(__name__)

TASKS = ("marks", "vehicles", "plates")
TASK_LABELS = {"marks": "mark", "vehicles": "vehicle", "plates": "plate"}


@dataclass(frozen=True)
class BBox:
    """Pixel box, ``x0, y0`` inclusive and ``x1, y1`` exclusive."""

    x0: int
    y0: int
    x1: int
    y1: int
    score: float = 1.0
    label: str = ""

    def __post_init__(self):
        if not (0 <= self.x0 < self.x1 and 0 <= self.y0 < self.y1):
            raise ValueError(f"invalid box ({self.x0}, {self.y0}, {self.x1}, {self.y1})")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def center_x(self) -> float:
        return (self.x0 + self.x1) / 2

    @property
    def coords(self) -> tuple[int, int, int, int]:
        return self.x0, self.y0, self.x1, self.y1

    def shifted(self, dx: int, dy: int) -> "BBox":
        return BBox(self.x0 + dx, self.y0 + dy, self.x1 + dx, self.y1 + dy, self.score, self.label)

    def to_dict(self) -> dict:
        return {"x0": self.x0, "y0": self.y0, "x1": self.x1, "y1": self.y1,
                "score": self.score, "label": self.label}

    @classmethod
    def from_dict(cls, d: dict) -> "BBox":
        return cls(int(d["x0"]), int(d["y0"]), int(d["x1"]), int(d["y1"]),
                   float(d.get("score", 1.0)), str(d.get("label", "")))


def clip_box(x0: int, y0: int, x1: int, y1: int, width: int, height: int,
             score: float = 1.0, label: str = "") -> Optional[BBox]:
    """Intersect a raw box with ``[0, width) x [0, height)``; None if nothing is left."""
    x0, y0 = max(x0, 0), max(y0, 0)
    x1, y1 = min(x1, width), min(y1, height)
    if x0 >= x1 or y0 >= y1:
        return None
    return BBox(x0, y0, x1, y1, score, label)


@dataclass(frozen=True)
class Mark:
    """A detected mark in a VR chunk; ``global_bottom`` is a frame index."""

    bbox: BBox
    chunk_index: int
    global_bottom: int

    @classmethod
    def from_vr(cls, bbox: BBox, chunk_index: int, start_frame: int) -> "Mark":
        return cls(bbox, chunk_index, start_frame + bbox.y1 - 1)


@dataclass
class DetectorConfig:
    backend: str = "builtin"
    threshold: int = 25
    min_area: int = 64
    background: Union[str, int] = "auto_median"
    command: Optional[list[str]] = field(default=None)

    def __post_init__(self):
        if self.backend not in ("builtin", "external"):
            raise ConfigError(f"unknown detector backend {self.backend!r}")
        if self.backend == "external":
            if not self.command:
                raise ConfigError("external detector needs a command")
            self.command = split_command(self.command)
        if not 0 <= self.threshold <= 255:
            raise ConfigError("threshold must be in 0..255")
        if self.min_area < 1:
            raise ConfigError("min_area must be >= 1")
        bg = self.background
        if bg != "auto_median" and not (isinstance(bg, int) and 0 <= bg <= 255):
            raise ConfigError("background must be 'auto_median' or a gray value 0..255")

    @classmethod
    def from_dict(cls, d: dict) -> "DetectorConfig":
        unknown = set(d) - {"backend", "threshold", "min_area", "background", "command"}
        if unknown:
            raise ConfigError(f"unknown detector fields {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        if self.backend == "external":
            return {"backend": "external", "command": list(self.command)}
        return {"backend": "builtin", "threshold": self.threshold,
                "min_area": self.min_area, "background": self.background}


def _as_array(image) -> np.ndarray:
    px = image.pixels if isinstance(image, Frame) else np.asarray(image)
    if px.size == 0:
        raise ValueError("cannot detect on an empty image")
    return px


def builtin_blob_detect(image, threshold: int = 25, min_area: int = 64,
                        background: Union[str, int] = "auto_median",
                        label: str = "") -> list[BBox]:
    """Tight boxes of 4-connected foreground components, all with score 1.0.

    Foreground is ``|pixel - background| > threshold``, where the background
    is either the per-column median over rows or a fixed gray value.
    Components with fewer than ``min_area`` pixels are dropped.
    """
    gray = to_gray(_as_array(image)).astype(np.float64)
    if background == "auto_median":
        bg = np.median(gray, axis=0)[None, :]
    else:
        bg = float(background)
    mask = np.abs(gray - bg) > threshold
    labels, n = ndimage.label(mask)
    if n == 0:
        return []
    areas = np.bincount(labels.ravel(), minlength=n + 1)
    boxes = []
    for i, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None or areas[i] < min_area:
            continue
        ys, xs = sl
        boxes.append(BBox(xs.start, ys.start, xs.stop, ys.stop, 1.0, label))
    boxes.sort(key=lambda b: (b.y0, b.x0))
    return boxes


class BuiltinDetector:
    def __init__(self, cfg: DetectorConfig):
        self.cfg = cfg

    def detect(self, image, task: str) -> list[BBox]:
        return builtin_blob_detect(image, self.cfg.threshold, self.cfg.min_area,
                                   self.cfg.background, TASK_LABELS.get(task, task))

    def close(self):
        pass


class ExternalDetector:
    """Detector backed by one long-lived subprocess."""

    def __init__(self, command: str | Sequence[str]):
        self.backend = BackendProcess(command)

    def detect(self, image, task: str) -> list[BBox]:
        return external_detect(image, task, self.backend)

    def close(self):
        self.backend.close()


def make_detector(cfg: DetectorConfig):
    if cfg.backend == "builtin":
        return BuiltinDetector(cfg)
    return ExternalDetector(cfg.command)


def external_detect(image, task: str, backend: BackendProcess) -> list[BBox]:
    px = _as_array(image)
    h, w = px.shape[:2]
    resp = backend.request({"task": task, **encode_image(px)})
    dets = resp.get("detections")
    if not isinstance(dets, list):
        raise ProtocolError("response has no 'detections' list")
    boxes = []
    for d in dets:
        x0, y0, x1, y1, score, label = parse_detection(d)
        box = clip_box(x0, y0, x1, y1, w, h, score, label)
        if box is not None:
            boxes.append(box)
    return boxes


def detect(image, task: str, detector) -> list[BBox]:
    """Run one detection task; boxes come back clipped and sorted by descending score.

    ``detector`` is a detector object from :func:`make_detector` or a
    :class:`DetectorConfig`; an external config passed directly spawns a
    backend just for this call.
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    px = _as_array(image)
    h, w = px.shape[:2]
    if isinstance(detector, DetectorConfig):
        det = make_detector(detector)
        try:
            boxes = det.detect(px, task)
        finally:
            det.close()
    else:
        boxes = detector.detect(px, task)
    clipped = []
    for b in boxes:
        c = clip_box(b.x0, b.y0, b.x1, b.y1, w, h, b.score, b.label)
        if c is not None:
            clipped.append(c)
    clipped.sort(key=lambda b: -b.score)
    return clipped


def crop_region(image, box) -> tuple[np.ndarray, tuple[int, int]]:
    """Intersection of ``box`` with the image, plus the crop's origin in image coordinates.

    ``box`` is a BBox or a raw ``(x0, y0, x1, y1)`` tuple, so degenerate
    boxes can be passed in and rejected here.
    """
    px = _as_array(image)
    x0, y0, x1, y1 = box.coords if isinstance(box, BBox) else (int(v) for v in box)
    if x0 >= x1 or y0 >= y1:
        raise InvalidCrop(f"zero-area box ({x0}, {y0}, {x1}, {y1})")
    c = clip_box(x0, y0, x1, y1, px.shape[1], px.shape[0])
    if c is None:
        raise InvalidCrop(f"box ({x0}, {y0}, {x1}, {y1}) does not intersect the image")
    return px[c.y0:c.y1, c.x0:c.x1].copy(), (c.x0, c.y0)
