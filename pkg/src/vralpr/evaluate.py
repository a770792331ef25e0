"""Character Error Rate against ground truth, with the missed-plate penalty.

A ground-truth plate that no record matches, or whose record failed before
OCR produced text, costs its full length in edits. Records that match no
ground truth are reported but never enter the CER.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import EvalError
from .records import OK, STATUSES, PlateRecord, dumps_jsonl, loads_jsonl

_PLATE_CHARS = re.compile(r"[A-Z0-9]+")


@dataclass(frozen=True)
class GroundTruthEntry:
    crossing_frame: int
    plate_text: str

    def __post_init__(self):
        if self.crossing_frame < 0:
            raise ValueError("crossing_frame must be >= 0")
        if not _PLATE_CHARS.fullmatch(self.plate_text or ""):
            raise ValueError(f"plate_text {self.plate_text!r} must be non-empty A-Z0-9")

    def to_dict(self) -> dict:
        return {"crossing_frame": self.crossing_frame, "plate_text": self.plate_text}


def write_ground_truth(path, entries: Sequence[GroundTruthEntry]) -> None:
    Path(path).write_text(dumps_jsonl(e.to_dict() for e in entries), encoding="utf-8")


def read_ground_truth(path) -> list[GroundTruthEntry]:
    rows = loads_jsonl(Path(path).read_text(encoding="utf-8"), "ground-truth")
    try:
        return [GroundTruthEntry(int(r["crossing_frame"]), str(r["plate_text"])) for r in rows]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"bad ground-truth entry: {exc}") from None


def edit_distance(a: str, b: str) -> int:
    """Levenshtein distance with unit insert, delete and substitute costs."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def match_records(records: Sequence[PlateRecord], gts: Sequence[GroundTruthEntry],
                  frame_tolerance: int = 3) -> list[tuple[int, int]]:
    """Greedy one-to-one pairing by frame distance; returns (record_idx, gt_idx) pairs.

    Candidates within ``frame_tolerance`` are taken in order of absolute
    frame difference, then ground-truth order, then record order.
    """
    cands = []
    for ri, r in enumerate(records):
        for gi, g in enumerate(gts):
            d = abs(r.frame_index - g.crossing_frame)
            if d <= frame_tolerance:
                cands.append((d, gi, ri))
    cands.sort()
    used_r, used_g, pairs = set(), set(), []
    for _, gi, ri in cands:
        if ri in used_r or gi in used_g:
            continue
        used_r.add(ri)
        used_g.add(gi)
        pairs.append((ri, gi))
    pairs.sort(key=lambda p: p[1])
    return pairs


AGGREGATIONS = ("micro", "macro")


@dataclass
class CERReport:
    pairs: list  # (record, gt, edit distance)
    unmatched_gt: list
    unmatched_records: list
    total_edits: int
    total_gt_chars: int
    frame_tolerance: int
    status_counts: dict = field(default_factory=dict)
    aggregation: str = "micro"

    @property
    def cer(self) -> float:
        """Headline CER under the chosen aggregation."""
        return self.cer_macro if self.aggregation == "macro" else self.cer_micro

    @property
    def cer_micro(self) -> float:
        """Total edits over total ground-truth characters."""
        return self.total_edits / self.total_gt_chars

    @property
    def cer_macro(self) -> float:
        """Mean per-plate error rate; a failed plate contributes 1.0."""
        per_plate = [d / len(g.plate_text) for _, g, d in self.pairs]
        per_plate += [1.0] * len(self.unmatched_gt)
        return sum(per_plate) / len(per_plate)

    def to_dict(self) -> dict:
        return {
            "aggregation": self.aggregation,
            "frame_tolerance": self.frame_tolerance,
            "cer": self.cer,
            "cer_micro": self.cer_micro,
            "cer_macro": self.cer_macro,
            "total_edits": self.total_edits,
            "total_gt_chars": self.total_gt_chars,
            "status_counts": self.status_counts,
            "pairs": [
                {"vehicle_id": r.vehicle_id, "frame_index": r.frame_index,
                 "crossing_frame": g.crossing_frame, "gt_text": g.plate_text,
                 "text": r.text, "status": r.status, "edit_distance": d}
                for r, g, d in self.pairs
            ],
            "unmatched_gt": [g.to_dict() for g in self.unmatched_gt],
            "unmatched_records": [r.to_dict() for r in self.unmatched_records],
        }

    def summary(self) -> str:
        lines = [
            f"{'vehicle':>7}  {'frame':>6}  {'gt_frame':>8}  {'truth':<10}  {'read':<10}  {'status':<10}  edits",
        ]
        for r, g, d in self.pairs:
            lines.append(f"{r.vehicle_id:>7}  {r.frame_index:>6}  {g.crossing_frame:>8}  "
                         f"{g.plate_text:<10}  {r.text or '-':<10}  {r.status:<10}  {d}")
        for g in self.unmatched_gt:
            lines.append(f"{'-':>7}  {'-':>6}  {g.crossing_frame:>8}  {g.plate_text:<10}  "
                         f"{'-':<10}  {'MISSED':<10}  {len(g.plate_text)}")
        lines.append("")
        lines.append(f"ground truth plates : {len(self.pairs) + len(self.unmatched_gt)}"
                     f" ({len(self.unmatched_gt)} unmatched)")
        lines.append(f"spurious records    : {len(self.unmatched_records)}")
        counts = ", ".join(f"{k}={v}" for k, v in self.status_counts.items())
        lines.append(f"record statuses     : {counts or 'none'}")
        lines.append(f"CER micro           : {self.total_edits}/{self.total_gt_chars}"
                     f" = {self.cer_micro:.4%}")
        lines.append(f"CER macro           : {self.cer_macro:.4%}")
        lines.append(f"CER ({self.aggregation}, tol={self.frame_tolerance})".ljust(20) + f": {self.cer:.4%}")
        return "\n".join(lines)


def compute_cer(records: Sequence[PlateRecord], gts: Sequence[GroundTruthEntry],
                frame_tolerance: int = 3, aggregation: str = "micro") -> CERReport:
    if aggregation not in AGGREGATIONS:
        raise EvalError(f"aggregation must be one of {AGGREGATIONS}, got {aggregation!r}")
    if not gts:
        raise EvalError("CER is undefined without ground truth")
    pairs_idx = match_records(records, gts, frame_tolerance)
    pairs = []
    for ri, gi in pairs_idx:
        r, g = records[ri], gts[gi]
        d = edit_distance(r.text, g.plate_text) if r.status == OK else len(g.plate_text)
        pairs.append((r, g, d))
    matched_g = {gi for _, gi in pairs_idx}
    matched_r = {ri for ri, _ in pairs_idx}
    unmatched_gt = [g for gi, g in enumerate(gts) if gi not in matched_g]
    unmatched_records = [r for ri, r in enumerate(records) if ri not in matched_r]
    counts = Counter(r.status for r in records)
    return CERReport(
        pairs=pairs,
        unmatched_gt=unmatched_gt,
        unmatched_records=unmatched_records,
        total_edits=sum(d for _, _, d in pairs) + sum(len(g.plate_text) for g in unmatched_gt),
        total_gt_chars=sum(len(g.plate_text) for g in gts),
        frame_tolerance=frame_tolerance,
        status_counts={s: counts[s] for s in STATUSES if counts[s]},
        aggregation=aggregation,
    )
