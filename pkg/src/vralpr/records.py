"""Per-vehicle pipeline output and its line-delimited JSON encoding."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .detection import BBox

OK = "OK"
NO_VEHICLE = "NO_VEHICLE"
NO_PLATE = "NO_PLATE"
OCR_EMPTY = "OCR_EMPTY"
STATUSES = (OK, NO_VEHICLE, NO_PLATE, OCR_EMPTY)


@dataclass(frozen=True)
class PlateRecord:
    """One vehicle crossing and how far the pipeline got with it.

    ``mark_bbox`` is in global VR coordinates: x in frame columns, y in
    global frame indices. ``vehicle_bbox`` and ``plate_bbox`` are in
    coordinates of the extracted frame.
    """

    vehicle_id: int
    frame_index: int
    mark_bbox: BBox
    status: str
    vehicle_bbox: Optional[BBox] = None
    plate_bbox: Optional[BBox] = None
    text: Optional[str] = None
    per_char_scores: Optional[list] = None

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        # populated fields are exactly the stages that succeeded
        stages = [self.vehicle_bbox, self.plate_bbox, self.text]
        reached = {NO_VEHICLE: 0, NO_PLATE: 1, OCR_EMPTY: 2, OK: 3}[self.status]
        for i, value in enumerate(stages):
            if (value is not None) != (i < reached):
                raise ValueError(f"record fields inconsistent with status {self.status}")
        if (self.per_char_scores is None) != (self.text is None):
            raise ValueError("text and per_char_scores go together")

    def to_dict(self) -> dict:
        box = lambda b: None if b is None else b.to_dict()  # noqa: E731
        return {
            "vehicle_id": self.vehicle_id,
            "frame_index": self.frame_index,
            "mark_bbox": box(self.mark_bbox),
            "vehicle_bbox": box(self.vehicle_bbox),
            "plate_bbox": box(self.plate_bbox),
            "text": self.text,
            "per_char_scores": self.per_char_scores,
            "status": self.status,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlateRecord":
        box = lambda b: None if b is None else BBox.from_dict(b)  # noqa: E731
        return cls(
            vehicle_id=int(d["vehicle_id"]),
            frame_index=int(d["frame_index"]),
            mark_bbox=box(d["mark_bbox"]),
            status=d["status"],
            vehicle_bbox=box(d.get("vehicle_bbox")),
            plate_bbox=box(d.get("plate_bbox")),
            text=d.get("text"),
            per_char_scores=d.get("per_char_scores"),
        )


def dumps_jsonl(rows: Iterable[dict]) -> str:
    return "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows)


def loads_jsonl(text: str, what: str = "record") -> list[dict]:
    rows = []
    for n, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ValueError(f"{what} line {n}: {exc}") from None
    return rows


def write_records(path, records: Iterable[PlateRecord]) -> None:
    Path(path).write_text(dumps_jsonl(r.to_dict() for r in records), encoding="utf-8")


def read_records(path) -> list[PlateRecord]:
    return [PlateRecord.from_dict(d)
            for d in loads_jsonl(Path(path).read_text(encoding="utf-8"), "record")]
