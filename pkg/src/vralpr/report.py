"""Figures written next to the delimited outputs (PNG, Agg canvas, no pyplot state)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure
from matplotlib.patches import Rectangle

from .records import STATUSES

_STATUS_COLORS = {"OK": "tab:green", "NO_VEHICLE": "tab:red", "NO_PLATE": "tab:orange",
                  "OCR_EMPTY": "tab:purple", "MISSED": "black"}


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    FigureCanvasAgg(fig)
    fig.savefig(path, dpi=100)
    return path


def plot_vr_chunk(vr, marks, owned, path) -> Path:
    """VR image with detected marks; owned marks solid, the rest dashed."""
    h, w = vr.pixels.shape[:2]
    fig = Figure(figsize=(max(4.0, w / 80), max(3.0, min(h / 40, 12.0))))
    ax = fig.add_subplot()
    cmap = "gray" if vr.pixels.ndim == 2 else None
    ax.imshow(vr.pixels, cmap=cmap, aspect="auto", interpolation="nearest",
              extent=(vr.x_start - 0.5, vr.x_start + w - 0.5,
                      vr.start_frame + h - 0.5, vr.start_frame - 0.5))
    owned_ids = {id(m) for m in owned}
    for m in marks:
        b = m.bbox
        mine = id(m) in owned_ids
        ax.add_patch(Rectangle((vr.x_start + b.x0 - 0.5, vr.start_frame + b.y0 - 0.5),
                               b.width, b.height, fill=False, lw=1.5,
                               ls="-" if mine else "--",
                               ec="yellow" if mine else "cyan"))
        if mine:
            ax.plot(vr.x_start + (b.x0 + b.x1 - 1) / 2, m.global_bottom, "r.", ms=6)
    ax.set_xlabel("column (px)")
    ax.set_ylabel("frame index")
    ax.set_title(f"VR chunk {vr.chunk_index}: {len(owned)} of {len(marks)} marks owned")
    fig.tight_layout()
    return _save(fig, path)


def plot_cer_report(report, path) -> Path:
    """Per-plate edit counts (left) and record statuses (right)."""
    fig = Figure(figsize=(10, 4))
    ax, ax2 = fig.subplots(1, 2, gridspec_kw={"width_ratios": [3, 1]})

    rows = [(g.crossing_frame, d, r.status) for r, g, d in report.pairs]
    rows += [(g.crossing_frame, len(g.plate_text), "MISSED") for g in report.unmatched_gt]
    rows.sort()
    x = np.arange(len(rows))
    ax.bar(x, [d for _, d, _ in rows], color=[_STATUS_COLORS[s] for _, _, s in rows])
    ax.set_xticks(x, [str(f) for f, _, _ in rows], rotation=90, fontsize=7)
    ax.set_xlabel("ground-truth crossing frame")
    ax.set_ylabel("edits")
    ax.set_ylim(0, max([d for _, d, _ in rows] + [1]) + 0.5)
    ax.yaxis.get_major_locator().set_params(integer=True)
    ax.set_title(f"CER {report.total_edits}/{report.total_gt_chars} = {report.cer:.2%}")

    names = [s for s in STATUSES if report.status_counts.get(s)]
    counts = [report.status_counts[s] for s in names]
    if report.unmatched_gt:
        names.append("MISSED")
        counts.append(len(report.unmatched_gt))
    ax2.bar(range(len(names)), counts, color=[_STATUS_COLORS[s] for s in names])
    ax2.set_xticks(range(len(names)), names, rotation=45, ha="right", fontsize=8)
    ax2.set_title("outcomes")
    fig.tight_layout()
    return _save(fig, path)
