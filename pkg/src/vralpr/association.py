"""From a mark to its vehicle: crossing frame, chunk ownership, x-overlap match."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .detection import BBox, Mark
from .errors import NoVehicleMatch
from .rhythm import ChunkSpec

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CrossingEvent:
    vehicle_id: int
    frame_index: int
    mark: Mark
    vehicle_bbox: Optional[BBox] = None


def mark_to_frame_index(mark: Mark, chunks: ChunkSpec, n_frames: Optional[int] = None) -> int:
    """Frame in which the vehicle has fully crossed: the mark's bottom row, made global."""
    t = mark.chunk_index * chunks.stride + mark.bbox.y1 - 1
    if n_frames is not None:
        t = min(t, n_frames - 1)
    return t


def ownership_window(chunk_index: int, chunks: ChunkSpec,
                     n_frames: Optional[int] = None) -> tuple[int, float]:
    """Half-open range of crossing frames that chunk ``chunk_index`` reports.

    Each chunk owns ``[k*S, (k+1)*S)``; when ``n_frames`` is known the last
    chunk also owns everything up to the end of the video, since no later
    chunk exists to pick up its overlap tail.
    """
    lo = chunk_index * chunks.stride
    hi: float = lo + chunks.stride
    if n_frames is not None and chunk_index >= chunks.num_chunks(n_frames) - 1:
        hi = math.inf
    return lo, hi


def own_mark(mark: Mark, chunks: ChunkSpec, n_frames: Optional[int] = None) -> bool:
    """True iff this mark's chunk is the one that reports it (exactly-once across overlaps)."""
    lo, hi = ownership_window(mark.chunk_index, chunks, n_frames)
    return lo <= mark.global_bottom < hi


def _span(mark) -> tuple[int, int]:
    box = mark.bbox if isinstance(mark, Mark) else mark
    return box.x0, box.x1


def select_vehicle(mark, vehicle_boxes: Sequence[BBox], min_overlap_ratio: float = 0.25) -> int:
    """Index of the vehicle box whose x-interval best overlaps the mark's.

    ``mark`` is a Mark or BBox whose x-range is already in frame columns.
    Ties on overlap length go to the box whose center is nearest the mark's
    center, then to the smaller x0.
    """
    mx0, mx1 = _span(mark)
    if not vehicle_boxes:
        raise NoVehicleMatch("no vehicles detected in the extracted frame")
    mcenter = (mx0 + mx1) / 2

    def key(i):
        b = vehicle_boxes[i]
        overlap = max(0, min(mx1, b.x1) - max(mx0, b.x0))
        return (-overlap, abs(b.center_x - mcenter), b.x0)

    order = sorted(range(len(vehicle_boxes)), key=key)
    best = order[0]
    best_overlap = -key(best)[0]
    if best_overlap < min_overlap_ratio * (mx1 - mx0) or best_overlap == 0:
        raise NoVehicleMatch(
            f"best x-overlap {best_overlap} px is below {min_overlap_ratio:g} of the "
            f"{mx1 - mx0} px mark")
    if len(order) > 1 and key(order[1])[0] == -best_overlap:
        log.warning("ambiguous vehicle match for mark x=[%d, %d): %d boxes tie at %d px overlap",
                    mx0, mx1, sum(1 for i in order if key(i)[0] == -best_overlap), best_overlap)
    return best


def associate_vehicle(mark, vehicle_boxes: Sequence[BBox],
                      min_overlap_ratio: float = 0.25) -> BBox:
    return vehicle_boxes[select_vehicle(mark, vehicle_boxes, min_overlap_ratio)]
