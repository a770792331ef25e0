"""End-to-end run: VR chunks -> marks -> one frame per vehicle -> plate text.

For every chunk: build the VR image, detect marks, keep the marks this chunk
owns, and for each (in crossing-frame, x order) read the single frame at the
mark's bottom row, find the vehicle under the mark, find and crop its plate,
and read it. A per-mark failure becomes a record status; only an
unreadable source or a broken detector backend aborts the run.
"""

from __future__ import annotations

import contextlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .association import associate_vehicle, mark_to_frame_index, own_mark
from .detection import TASKS, BBox, DetectorConfig, Mark, crop_region, detect, make_detector
from .errors import (
    ConfigError,
    DetectorUnavailable,
    EmptyReading,
    InvalidCrop,
    NoVehicleMatch,
    ProtocolError,
    VralprError,
)
from .ocr import OCRConfig, crop_plate, make_ocr
from .records import NO_PLATE, NO_VEHICLE, OCR_EMPTY, OK, PlateRecord
from .rhythm import ChunkSpec, LineSpec, VRImage, build_vr_chunk
from .video_io import Frame, FrameSource, FrameSourceConfig, open_frame_source, write_netpbm

log = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    source: FrameSourceConfig
    line: LineSpec = field(default_factory=LineSpec)
    chunks: ChunkSpec = field(default_factory=ChunkSpec)
    detectors: dict = field(default_factory=lambda: {t: DetectorConfig() for t in TASKS})
    ocr: OCRConfig = field(default_factory=OCRConfig)
    min_overlap_ratio: float = 0.25
    output: Optional[str] = None

    def __post_init__(self):
        missing = set(TASKS) - set(self.detectors)
        if missing:
            raise ConfigError(f"no detector configured for {sorted(missing)}")
        if not 0.0 <= self.min_overlap_ratio <= 1.0:
            raise ConfigError("min_overlap_ratio must be in [0, 1]")

    @classmethod
    def from_dict(cls, d: dict, base_dir: Optional[Path] = None) -> "PipelineConfig":
        """Build from the config document; relative paths resolve against ``base_dir``."""
        known = {"source", "line", "chunks", "detectors", "ocr", "min_overlap_ratio", "output"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        if "source" not in d:
            raise ConfigError("config has no 'source'")

        def resolve(p):
            if p is None or p == "-" or base_dir is None:
                return p
            return str(base_dir / p)

        try:
            src = dict(d["source"])
            src["path"] = resolve(src.get("path"))
            dets = {t: DetectorConfig() for t in TASKS}
            for task, dc in (d.get("detectors") or {}).items():
                if task not in TASKS:
                    raise ConfigError(f"unknown detector task {task!r}")
                dets[task] = DetectorConfig.from_dict(dc)
            return cls(
                source=FrameSourceConfig.from_dict(src),
                line=LineSpec(**(d.get("line") or {})),
                chunks=ChunkSpec(**(d.get("chunks") or {})),
                detectors=dets,
                ocr=OCRConfig.from_dict(d.get("ocr") or {}),
                min_overlap_ratio=float(d.get("min_overlap_ratio", 0.25)),
                output=resolve(d.get("output")),
            )
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        return {
            "source": self.source.to_dict(),
            "line": {"row_y": self.line.row_y, "x_start": self.line.x_start, "x_end": self.line.x_end},
            "chunks": {"chunk_len_T": self.chunks.chunk_len_T, "overlap_V": self.chunks.overlap_V},
            "detectors": {t: self.detectors[t].to_dict() for t in TASKS},
            "ocr": self.ocr.to_dict(),
            "min_overlap_ratio": self.min_overlap_ratio,
            "output": self.output,
        }


def load_config(path) -> PipelineConfig:
    p = Path(path)
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return PipelineConfig.from_dict(doc, p.resolve().parent)


@contextlib.contextmanager
def _stage(name: str):
    try:
        yield
    except (DetectorUnavailable, ProtocolError) as exc:
        raise type(exc)(f"{name}: {exc}") from exc


def crop_vehicle(frame, vehicle_bbox: BBox) -> tuple[np.ndarray, tuple[int, int]]:
    """Vehicle sub-image and its origin; boxes found in it map back by adding the origin."""
    return crop_region(frame, vehicle_bbox)


def _burn_box(img: np.ndarray, box: BBox, color) -> None:
    img[box.y0, box.x0:box.x1] = color
    img[box.y1 - 1, box.x0:box.x1] = color
    img[box.y0:box.y1, box.x0] = color
    img[box.y0:box.y1, box.x1 - 1] = color


def annotate_frame(frame: Frame, line_y: int, record: PlateRecord) -> np.ndarray:
    px = frame.pixels
    img = np.repeat(px[:, :, None], 3, axis=2) if px.ndim == 2 else px.copy()
    img[line_y, :] = (255, 255, 0)
    if record.vehicle_bbox is not None:
        _burn_box(img, record.vehicle_bbox, (0, 255, 0))
    if record.plate_bbox is not None:
        _burn_box(img, record.plate_bbox, (255, 0, 0))
    return img


class Pipeline:
    """Holds the detector/OCR backends for one run; use as a context manager."""

    def __init__(self, cfg: PipelineConfig, source: Optional[FrameSource] = None,
                 workers: int = 1, dump_dir=None,
                 on_chunk: Optional[Callable[[VRImage, list, list], None]] = None):
        self.cfg = cfg
        self.workers = max(1, workers)
        self.dump_dir = Path(dump_dir) if dump_dir else None
        self.on_chunk = on_chunk
        self._own_source = source is None
        with _stage("open source"):
            self.source = open_frame_source(cfg.source) if source is None else source
        self.detectors = {}
        self.ocr = None
        try:
            for task in TASKS:
                with _stage(f"start {task} detector"):
                    self.detectors[task] = make_detector(cfg.detectors[task])
            with _stage("start OCR backend"):
                self.ocr = make_ocr(cfg.ocr)
        except BaseException:
            self.close()
            raise

    def close(self):
        for det in self.detectors.values():
            det.close()
        if self.ocr is not None:
            self.ocr.close()
        if self._own_source:
            self.source.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def run(self) -> list[PlateRecord]:
        cfg = self.cfg
        n = len(self.source)
        if n == 0:
            return []
        width, height, _ = self.source.geometry
        cfg.line.resolve(width, height)
        if self.dump_dir:
            self.dump_dir.mkdir(parents=True, exist_ok=True)
        records: list[PlateRecord] = []
        pool = ThreadPoolExecutor(self.workers) if self.workers > 1 else None
        try:
            for k in range(cfg.chunks.num_chunks(n)):
                vr = build_vr_chunk(self.source, cfg.line, cfg.chunks, k)
                with _stage(f"chunk {k} mark detection"):
                    boxes = detect(vr.pixels, "marks", self.detectors["marks"])
                marks = [Mark.from_vr(b, k, vr.start_frame) for b in boxes]
                owned = [m for m in marks if own_mark(m, cfg.chunks, n)]
                owned.sort(key=lambda m: (m.global_bottom, m.bbox.x0))
                log.info("chunk %d: frames %d-%d, %d marks, %d owned", k, vr.start_frame,
                         vr.start_frame + vr.rows - 1, len(marks), len(owned))
                if self.on_chunk:
                    self.on_chunk(vr, marks, owned)
                first_id = len(records)
                jobs = [(first_id + i, m, vr.x_start) for i, m in enumerate(owned)]
                if pool:
                    records.extend(pool.map(lambda job: self.process_mark(*job), jobs))
                else:
                    records.extend(self.process_mark(*job) for job in jobs)
        finally:
            if pool:
                pool.shutdown()
        return records

    def process_mark(self, vehicle_id: int, mark: Mark, x_start: int = 0) -> PlateRecord:
        cfg = self.cfg
        n = len(self.source)
        t = mark_to_frame_index(mark, cfg.chunks, n)
        b = mark.bbox
        start = mark.global_bottom - (b.y1 - 1)
        mark_global = BBox(b.x0 + x_start, start + b.y0, b.x1 + x_start, start + b.y1,
                           b.score, b.label)
        frame = self.source.read(t)
        base = dict(vehicle_id=vehicle_id, frame_index=t, mark_bbox=mark_global)

        with _stage(f"vehicle detection (frame {t})"):
            vboxes = detect(frame, "vehicles", self.detectors["vehicles"])
        try:
            vbox = associate_vehicle(mark_global, vboxes, cfg.min_overlap_ratio)
            crop, (ox, oy) = crop_vehicle(frame, vbox)
        except (NoVehicleMatch, InvalidCrop) as exc:
            log.info("vehicle %d: %s", vehicle_id, exc)
            return self._emit(frame, PlateRecord(status=NO_VEHICLE, **base))

        with _stage(f"plate detection (frame {t})"):
            pboxes = detect(crop, "plates", self.detectors["plates"])
        if not pboxes:
            log.info("vehicle %d: no plate found", vehicle_id)
            return self._emit(frame, PlateRecord(status=NO_PLATE, vehicle_bbox=vbox, **base))
        pbox = pboxes[0]
        try:
            plate = crop_plate(crop, pbox)
        except InvalidCrop as exc:
            log.info("vehicle %d: %s", vehicle_id, exc)
            return self._emit(frame, PlateRecord(status=NO_PLATE, vehicle_bbox=vbox, **base))
        pbox = pbox.shifted(ox, oy)

        try:
            with _stage(f"OCR (frame {t})"):
                reading = self.ocr.read(plate)
        except EmptyReading as exc:
            log.info("vehicle %d: %s", vehicle_id, exc)
            return self._emit(frame, PlateRecord(status=OCR_EMPTY, vehicle_bbox=vbox,
                                                 plate_bbox=pbox, **base))
        return self._emit(frame, PlateRecord(
            status=OK, vehicle_bbox=vbox, plate_bbox=pbox, text=reading.text,
            per_char_scores=[float(s) for s in reading.per_char_scores], **base))

    def _emit(self, frame: Frame, record: PlateRecord) -> PlateRecord:
        if self.dump_dir:
            img = annotate_frame(frame, self.cfg.line.row_y, record)
            write_netpbm(self.dump_dir / f"vehicle_{record.vehicle_id:05d}_frame_{record.frame_index:06d}.ppm", img)
        return record


def run_pipeline(cfg: PipelineConfig, source: Optional[FrameSource] = None, workers: int = 1,
                 dump_dir=None, on_chunk=None) -> list[PlateRecord]:
    """Run every chunk of the video and return one record per owned mark, by vehicle id."""
    with Pipeline(cfg, source, workers, dump_dir, on_chunk) as p:
        return p.run()


def default_workers() -> int:
    env = os.environ.get("VRALPR_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"VRALPR_WORKERS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


__all__ = ["PipelineConfig", "Pipeline", "run_pipeline", "load_config", "crop_vehicle",
           "annotate_frame", "default_workers", "VralprError"]
