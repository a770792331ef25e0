"""Visual rhythm: one sampled row per frame, stacked along the time axis.

Chunk ``k`` covers frames ``[k*S, k*S + T)`` where ``S = T - V`` is the
stride between chunk starts and ``V`` the number of frames shared with the
previous chunk. The last chunk of a video may be shorter than ``T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from .errors import ConfigError, EmptyChunk, LineOutOfBounds
from .video_io import Frame, FrameSource


@dataclass(frozen=True)
class LineSpec:
    """Horizontal sampling line at ``row_y`` covering columns ``[x_start, x_end)``.

    ``x_end=None`` means the full frame width.
    """

    row_y: int = 800
    x_start: int = 0
    x_end: Optional[int] = None

    def resolve(self, width: int, height: int) -> tuple[int, int, int]:
        x_end = width if self.x_end is None else self.x_end
        if not 0 <= self.row_y < height:
            raise LineOutOfBounds(f"line row {self.row_y} outside frame height {height}")
        if not 0 <= self.x_start < x_end <= width:
            raise LineOutOfBounds(
                f"line columns [{self.x_start}, {x_end}) invalid for frame width {width}")
        return self.row_y, self.x_start, x_end


@dataclass(frozen=True)
class ChunkSpec:
    chunk_len_T: int = 600
    overlap_V: int = 0

    def __post_init__(self):
        if self.chunk_len_T < 1:
            raise ConfigError("chunk length T must be >= 1")
        if not 0 <= self.overlap_V < self.chunk_len_T:
            raise ConfigError("overlap V must satisfy 0 <= V < T")

    @property
    def stride(self) -> int:
        return self.chunk_len_T - self.overlap_V

    def start_frame(self, chunk_index: int) -> int:
        return chunk_index * self.stride

    def num_chunks(self, n_frames: int) -> int:
        """Chunks needed so that every frame of an ``n_frames`` video is covered."""
        if n_frames <= 0:
            return 0
        if n_frames <= self.chunk_len_T:
            return 1
        return 1 + math.ceil((n_frames - self.chunk_len_T) / self.stride)


@dataclass(frozen=True)
class VRImage:
    chunk_index: int
    start_frame: int
    pixels: np.ndarray
    x_start: int = 0

    @property
    def rows(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def format(self) -> str:
        return "gray8" if self.pixels.ndim == 2 else "rgb8"

    def as_frame(self) -> Frame:
        return Frame(self.pixels)


def sample_line(frame: Frame, line: LineSpec) -> np.ndarray:
    """Exact copy of the pixels under the line, no interpolation."""
    row, x0, x1 = line.resolve(frame.width, frame.height)
    return frame.pixels[row, x0:x1].copy()


def build_vr_chunk(source: FrameSource, line: LineSpec, chunks: ChunkSpec,
                   chunk_index: int) -> VRImage:
    start = chunks.start_frame(chunk_index)
    stop = min(start + chunks.chunk_len_T, len(source))
    if start >= stop:
        raise EmptyChunk(f"chunk {chunk_index} starts at frame {start}, "
                         f"past the end of a {len(source)}-frame video")
    rows = [sample_line(f, line) for f in source.frames(start, stop)]
    return VRImage(chunk_index, start, np.stack(rows), line.x_start)


def iter_vr_chunks(source: FrameSource, line: LineSpec,
                   chunks: ChunkSpec) -> Iterator[VRImage]:
    for k in range(chunks.num_chunks(len(source))):
        yield build_vr_chunk(source, line, chunks, k)
