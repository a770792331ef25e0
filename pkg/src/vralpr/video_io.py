"""Frame sources: binary Netpbm directories and headerless raw streams.

Frames are numpy ``uint8`` arrays, shape ``(height, width)`` for gray8 and
``(height, width, 3)`` for rgb8. A source is an ordered sequence with a
sequential iterator plus positioned reads, so the pipeline can come back for
the single frame it needs per vehicle without buffering the video.
"""

from __future__ import annotations

import os
import re
import shutil
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .errors import (
    ConfigError,
    GeometryMismatch,
    SourceNotFound,
    TruncatedFrame,
    UnsupportedDepth,
    UnsupportedFormat,
)

FORMATS = {"gray8": 1, "rgb8": 3}
NETPBM_SUFFIXES = (".ppm", ".pgm")


@dataclass(frozen=True)
class Frame:
    """One decoded video frame.

    ``index`` is the global 0-based frame number, or None for a frame that
    was decoded outside of any source.
    """

    pixels: np.ndarray
    index: Optional[int] = None

    def __post_init__(self):
        px = self.pixels
        if px.dtype != np.uint8:
            raise ValueError(f"frame pixels must be uint8, got {px.dtype}")
        if not (px.ndim == 2 or (px.ndim == 3 and px.shape[2] == 3)):
            raise ValueError(f"bad frame shape {px.shape}")
        if px.shape[0] == 0 or px.shape[1] == 0:
            raise ValueError("frame width and height must be positive")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def format(self) -> str:
        return "gray8" if self.pixels.ndim == 2 else "rgb8"

    @property
    def channels(self) -> int:
        return FORMATS[self.format]

    @property
    def geometry(self) -> tuple[int, int, str]:
        return self.width, self.height, self.format

    def with_index(self, index: int) -> "Frame":
        return Frame(self.pixels, index)

    def to_bytes(self) -> bytes:
        return np.ascontiguousarray(self.pixels).tobytes()


def to_gray(pixels: np.ndarray) -> np.ndarray:
    """Luma conversion ``round(0.299 R + 0.587 G + 0.114 B)``, in integers.

    Gray input is returned unchanged. Rounding is half-up, so an rgb pixel
    with R = G = B = g maps to exactly g.
    """
    if pixels.ndim == 2:
        return pixels
    rgb = pixels.astype(np.uint32)
    y = (299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2] + 500) // 1000
    return y.astype(np.uint8)


# -- Netpbm ---------------------------------------------------------------

_MAGIC = {b"P5": "gray8", b"P6": "rgb8"}


def decode_netpbm(data: bytes) -> Frame:
    """Decode a binary P5/P6 image with maxval 255.

    Header comments (``#`` to end of line) are allowed between tokens.
    Bytes after the raster are ignored.
    """
    magic = bytes(data[:2])
    if magic not in _MAGIC:
        raise UnsupportedFormat(f"unsupported Netpbm magic {magic!r}; only P5 and P6 are read")
    fmt = _MAGIC[magic]

    pos = 2
    tokens = []
    n = len(data)
    while len(tokens) < 3:
        if pos >= n:
            raise TruncatedFrame("header ends before width/height/maxval")
        c = data[pos:pos + 1]
        if c.isspace():
            pos += 1
        elif c == b"#":
            eol = data.find(b"\n", pos)
            if eol < 0:
                raise TruncatedFrame("header comment runs to end of data")
            pos = eol + 1
        else:
            m = re.compile(rb"\d+").match(data, pos)
            if m is None:
                raise UnsupportedFormat(f"non-numeric header token at byte {pos}")
            end = m.end()
            if end < n and not (data[end:end + 1].isspace() or data[end:end + 1] == b"#"):
                raise UnsupportedFormat(f"malformed header token at byte {pos}")
            tokens.append(int(m.group()))
            pos = end
    width, height, maxval = tokens
    if pos >= n or not data[pos:pos + 1].isspace():
        raise TruncatedFrame("missing whitespace after maxval")
    pos += 1
    if maxval != 255:
        raise UnsupportedDepth(f"maxval {maxval} is not supported (only 255)")
    if width <= 0 or height <= 0:
        raise UnsupportedFormat(f"degenerate geometry {width}x{height}")

    channels = FORMATS[fmt]
    size = width * height * channels
    if n - pos < size:
        raise TruncatedFrame(f"expected {size} payload bytes, found {n - pos}")
    px = np.frombuffer(data, dtype=np.uint8, count=size, offset=pos)
    shape = (height, width) if channels == 1 else (height, width, 3)
    return Frame(px.reshape(shape).copy())


def encode_netpbm(frame: Frame | np.ndarray) -> bytes:
    px = frame.pixels if isinstance(frame, Frame) else frame
    magic = "P5" if px.ndim == 2 else "P6"
    header = f"{magic}\n{px.shape[1]} {px.shape[0]}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(px, dtype=np.uint8).tobytes()


def write_netpbm(path: str | os.PathLike, frame: Frame | np.ndarray) -> None:
    Path(path).write_bytes(encode_netpbm(frame))


# -- sources --------------------------------------------------------------

@dataclass
class FrameSourceConfig:
    kind: str
    path: str
    width: Optional[int] = None
    height: Optional[int] = None
    format: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("ppm_dir", "raw_stream"):
            raise ConfigError(f"unknown source kind {self.kind!r}")
        if not self.path:
            raise ConfigError("source path is empty")
        if self.kind == "raw_stream":
            if self.width is None or self.height is None or self.format is None:
                raise ConfigError("raw_stream needs width, height and format")
        for name in ("width", "height"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ConfigError(f"source {name} must be positive")
        if self.format is not None and self.format not in FORMATS:
            raise ConfigError(f"unknown pixel format {self.format!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "FrameSourceConfig":
        unknown = set(d) - {"kind", "path", "width", "height", "format"}
        if unknown:
            raise ConfigError(f"unknown source fields {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "path": self.path}
        if self.kind == "raw_stream":
            d.update(width=self.width, height=self.height, format=self.format)
        return d


class FrameSource:
    """Ordered frames with a sequential iterator and positioned reads.

    The first frame decoded fixes the geometry; any later frame with a
    different width, height or pixel format raises GeometryMismatch.
    """

    def __init__(self):
        self._geometry: Optional[tuple[int, int, str]] = None

    def __len__(self) -> int:
        raise NotImplementedError

    def _load(self, index: int) -> Frame:
        raise NotImplementedError

    @property
    def geometry(self) -> Optional[tuple[int, int, str]]:
        """(width, height, format), known once a frame has been read."""
        if self._geometry is None and len(self) > 0:
            self.read(0)
        return self._geometry

    def read(self, index: int) -> Frame:
        if not 0 <= index < len(self):
            raise IndexError(f"frame {index} outside [0, {len(self)})")
        frame = self._load(index).with_index(index)
        if self._geometry is None:
            self._geometry = frame.geometry
        elif frame.geometry != self._geometry:
            w, h, f = self._geometry
            raise GeometryMismatch(
                f"frame {index} is {frame.width}x{frame.height} {frame.format}, "
                f"expected {w}x{h} {f}")
        return frame

    def frames(self, start: int = 0, stop: Optional[int] = None) -> Iterator[Frame]:
        stop = len(self) if stop is None else min(stop, len(self))
        for i in range(start, stop):
            yield self.read(i)

    def __iter__(self) -> Iterator[Frame]:
        return self.frames()

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class ArraySource(FrameSource):
    """In-memory frames, mostly for tests and small generated clips."""

    def __init__(self, frames):
        super().__init__()
        self._frames = [f.pixels if isinstance(f, Frame) else np.asarray(f, dtype=np.uint8)
                        for f in frames]

    def __len__(self):
        return len(self._frames)

    def _load(self, index):
        return Frame(self._frames[index])


class PpmDirSource(FrameSource):
    def __init__(self, path: str | os.PathLike):
        super().__init__()
        root = Path(path)
        names = [p.name for p in root.iterdir()
                 if p.is_file() and p.suffix.lower() in NETPBM_SUFFIXES]
        # byte order of the filename, not locale collation
        names.sort(key=os.fsencode)
        self.files = [root / name for name in names]

    def __len__(self):
        return len(self.files)

    def _load(self, index):
        return decode_netpbm(self.files[index].read_bytes())


class RawStreamSource(FrameSource):
    """Headerless concatenated frames; ``path == "-"`` reads standard input.

    Standard input is spooled to a temporary file first so that frames can
    be re-read by position.
    """

    def __init__(self, path: str, width: int, height: int, fmt: str):
        super().__init__()
        self.shape = (height, width) if fmt == "gray8" else (height, width, 3)
        self.frame_bytes = width * height * FORMATS[fmt]
        self._geometry = (width, height, fmt)
        if path == "-":
            self._fh = tempfile.TemporaryFile()
            shutil.copyfileobj(sys.stdin.buffer, self._fh)
            self._fh.flush()
        else:
            self._fh = open(path, "rb")
        size = os.fstat(self._fh.fileno()).st_size
        count, rest = divmod(size, self.frame_bytes)
        if rest:
            raise TruncatedFrame(
                f"raw stream holds {size} bytes, not a multiple of the "
                f"{self.frame_bytes}-byte frame size")
        self._count = count

    def __len__(self):
        return self._count

    def _load(self, index):
        buf = os.pread(self._fh.fileno(), self.frame_bytes, index * self.frame_bytes)
        if len(buf) != self.frame_bytes:
            raise TruncatedFrame(f"short read for frame {index}")
        return Frame(np.frombuffer(buf, dtype=np.uint8).reshape(self.shape).copy())

    def close(self):
        self._fh.close()


def open_frame_source(cfg: FrameSourceConfig) -> FrameSource:
    if cfg.kind == "ppm_dir":
        if not Path(cfg.path).is_dir():
            raise SourceNotFound(f"frame directory not found: {cfg.path}")
        return PpmDirSource(cfg.path)
    if cfg.path != "-" and not Path(cfg.path).is_file():
        raise SourceNotFound(f"raw stream not found: {cfg.path}")
    return RawStreamSource(cfg.path, cfg.width, cfg.height, cfg.format)
