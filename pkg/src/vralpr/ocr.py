"""Plate cropping and reading.

The builtin reader is a fixed-font template matcher: Otsu binarization,
glyph segmentation on empty columns, nearest-neighbour scaling to the glyph
cell, Hamming-distance scoring against every glyph. It reads what
:func:`render_plate_glyphs` draws, which is all the synthetic scenes need;
real footage goes through an external OCR backend.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .detection import BBox, crop_region
from .errors import ConfigError, EmptyReading, InvalidGlyph, ProtocolError
from .protocol import BackendProcess, encode_image, parse_ocr, split_command
from .video_io import Frame, to_gray

ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"

# Every glyph's ink touches all four sides of its 5x7 cell and every column
# holds ink, so a clean glyph segments to exactly its cell.
_GLYPHS_5X7 = {
    "A": ".###. #...# #...# ##### #...# #...# #...#",
    "B": "####. #...# #...# ####. #...# #...# ####.",
    "C": ".###. #...# #.... #.... #.... #...# .###.",
    "D": "####. #...# #...# #...# #...# #...# ####.",
    "E": "##### #.... #.... ####. #.... #.... #####",
    "F": "##### #.... #.... ####. #.... #.... #....",
    "G": ".###. #...# #.... #.### #...# #...# .###.",
    "H": "#...# #...# #...# ##### #...# #...# #...#",
    "I": "##### ..#.. ..#.. ..#.. ..#.. ..#.. #####",
    "J": "..### ...#. ...#. ...#. #..#. #..#. .##..",
    "K": "#...# #..#. #.#.. ##... #.#.. #..#. #...#",
    "L": "#.... #.... #.... #.... #.... #.... #####",
    "M": "#...# ##.## #.#.# #.#.# #...# #...# #...#",
    "N": "#...# #...# ##..# #.#.# #..## #...# #...#",
    "O": ".###. #...# #...# #...# #...# #...# .###.",
    "P": "####. #...# #...# ####. #.... #.... #....",
    "Q": ".###. #...# #...# #...# #.#.# #..#. .##.#",
    "R": "####. #...# #...# ####. #.#.. #..#. #...#",
    "S": ".#### #.... #.... .###. ....# ....# ####.",
    "T": "##### ..#.. ..#.. ..#.. ..#.. ..#.. ..#..",
    "U": "#...# #...# #...# #...# #...# #...# .###.",
    "V": "#...# #...# #...# #...# #...# .#.#. ..#..",
    "W": "#...# #...# #...# #.#.# #.#.# #.#.# .#.#.",
    "X": "#...# #...# .#.#. ..#.. .#.#. #...# #...#",
    "Y": "#...# #...# .#.#. ..#.. ..#.. ..#.. ..#..",
    "Z": "##### ....# ...#. ..#.. .#... #.... #####",
    "0": ".###. #...# #..## #.#.# ##..# #...# .###.",
    "1": "..#.. .##.. ..#.. ..#.. ..#.. ..#.. #####",
    "2": ".###. #...# ....# ...#. ..#.. .#... #####",
    "3": "##### ...#. ..#.. ...#. ....# #...# .###.",
    "4": "...#. ..##. .#.#. #..#. ##### ...#. ...#.",
    "5": "##### #.... ####. ....# ....# #...# .###.",
    "6": "..##. .#... #.... ####. #...# #...# .###.",
    "7": "##### ....# ...#. ..#.. .#... .#... .#...",
    "8": ".###. #...# #...# .###. #...# #...# .###.",
    "9": ".###. #...# #...# .#### ....# ...#. .##..",
}


@dataclass(frozen=True)
class GlyphFont:
    glyphs: dict  # char -> bool array (H_g, W_g)
    advance: int = 1

    def __post_init__(self):
        shapes = {g.shape for g in self.glyphs.values()}
        if len(shapes) != 1:
            raise ValueError("all glyphs must share one size")
        if any(not g.any() for g in self.glyphs.values()):
            raise ValueError("glyph bitmaps must be non-empty")
        if len({g.tobytes() for g in self.glyphs.values()}) != len(self.glyphs):
            raise ValueError("glyph bitmaps must be distinct")

    @property
    def cell(self) -> tuple[int, int]:
        """(H_g, W_g)"""
        return next(iter(self.glyphs.values())).shape

    @classmethod
    def from_strings(cls, table: dict, advance: int = 1) -> "GlyphFont":
        glyphs = {}
        for ch, rows in table.items():
            glyphs[ch] = np.array([[c == "#" for c in row] for row in rows.split()], dtype=bool)
        return cls(glyphs, advance)


BUILTIN_FONT = GlyphFont.from_strings(_GLYPHS_5X7, advance=1)


@dataclass
class PlateReading:
    text: str
    per_char_scores: list = field(default_factory=list)
    backend: str = "builtin"

    def __post_init__(self):
        if len(self.text) != len(self.per_char_scores):
            raise ValueError("one score per character required")


def render_plate_glyphs(text: str, font: GlyphFont = BUILTIN_FONT, scale: int = 1) -> np.ndarray:
    """Boolean ink image of ``text``, glyphs left to right separated by ``font.advance``.

    Unscaled size is ``H_g x (len * (W_g + advance) - advance)``; ``scale``
    magnifies the whole layout by pixel replication.
    """
    hg, wg = font.cell
    width = max(0, len(text) * (wg + font.advance) - font.advance)
    out = np.zeros((hg, width), dtype=bool)
    for i, ch in enumerate(text):
        if ch not in font.glyphs:
            raise InvalidGlyph(f"character {ch!r} has no glyph")
        x = i * (wg + font.advance)
        out[:, x:x + wg] = font.glyphs[ch]
    if scale != 1:
        out = np.kron(out, np.ones((scale, scale), dtype=bool))
    return out


def otsu_threshold(gray: np.ndarray) -> int:
    """Threshold ``t`` maximizing between-class variance of ``gray <= t`` vs ``gray > t``."""
    hist = np.bincount(gray.ravel(), minlength=256).astype(np.float64)
    levels = np.arange(256, dtype=np.float64)
    w0 = np.cumsum(hist)
    w1 = w0[-1] - w0
    m0 = np.cumsum(hist * levels)
    total = m0[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        mu0 = m0 / w0
        mu1 = (total - m0) / w1
        between = w0 * w1 * (mu0 - mu1) ** 2
    between[~np.isfinite(between)] = -1.0
    return int(np.argmax(between))


def binarize(image, dark_ink: bool = True) -> np.ndarray:
    """Ink mask of a plate image. Boolean input is taken as the mask itself."""
    px = image.pixels if isinstance(image, Frame) else np.asarray(image)
    if px.dtype == bool:
        return px
    gray = to_gray(px.astype(np.uint8))
    if gray.size == 0 or gray.min() == gray.max():
        return np.zeros(gray.shape, dtype=bool)
    t = otsu_threshold(gray)
    return gray <= t if dark_ink else gray > t


def segment_columns(ink: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of columns holding at least one ink pixel."""
    cols = ink.any(axis=0).astype(np.int8)
    edges = np.diff(np.concatenate(([0], cols, [0])))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    return list(zip(starts.tolist(), stops.tolist()))


def _resize_nearest(mask: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    h, w = mask.shape
    oh, ow = shape
    rows = (2 * np.arange(oh) + 1) * h // (2 * oh)
    cols = (2 * np.arange(ow) + 1) * w // (2 * ow)
    return mask[rows][:, cols]


def template_ocr(plate_image, font: GlyphFont = BUILTIN_FONT, dark_ink: bool = True) -> PlateReading:
    ink = binarize(plate_image, dark_ink)
    if not ink.any():
        raise EmptyReading("plate image has no foreground")
    hg, wg = font.cell
    chars = list(font.glyphs)
    bank = np.stack([font.glyphs[c] for c in chars])
    text, scores = [], []
    for a, b in segment_columns(ink):
        seg = ink[:, a:b]
        rows = np.flatnonzero(seg.any(axis=1))
        seg = seg[rows[0]:rows[-1] + 1]
        cell = _resize_nearest(seg, (hg, wg))
        dist = (bank != cell[None]).sum(axis=(1, 2))
        best = int(np.argmin(dist))
        text.append(chars[best])
        scores.append(float(1.0 - dist[best] / (hg * wg)))
    return PlateReading("".join(text), scores, "builtin")


_LEGACY = re.compile(r"[A-Z]{3}[0-9]{4}")
_MERCOSUL = re.compile(r"[A-Z]{3}[0-9][A-Z][0-9]{2}")


def validate_plate_format(text: str) -> str:
    """Brazilian plate layout: 'valid_legacy' (LLLNNNN), 'valid_mercosul' (LLLNLNN) or 'invalid'."""
    if _LEGACY.fullmatch(text):
        return "valid_legacy"
    if _MERCOSUL.fullmatch(text):
        return "valid_mercosul"
    return "invalid"


def crop_plate(vehicle_crop, plate_bbox: BBox | Sequence[int]) -> np.ndarray:
    return crop_region(vehicle_crop, plate_bbox)[0]


@dataclass
class OCRConfig:
    backend: str = "builtin"
    command: Optional[list] = None

    def __post_init__(self):
        if self.backend not in ("builtin", "external"):
            raise ConfigError(f"unknown OCR backend {self.backend!r}")
        if self.backend == "external":
            if not self.command:
                raise ConfigError("external OCR needs a command")
            self.command = split_command(self.command)

    @classmethod
    def from_dict(cls, d: dict) -> "OCRConfig":
        unknown = set(d) - {"backend", "command"}
        if unknown:
            raise ConfigError(f"unknown ocr fields {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        if self.backend == "external":
            return {"backend": "external", "command": list(self.command)}
        return {"backend": "builtin"}


class TemplateOCR:
    def __init__(self, font: GlyphFont = BUILTIN_FONT):
        self.font = font

    def read(self, plate_image) -> PlateReading:
        return template_ocr(plate_image, self.font)

    def close(self):
        pass


class ExternalOCR:
    def __init__(self, command):
        self.backend = BackendProcess(command)

    def read(self, plate_image) -> PlateReading:
        px = plate_image.pixels if isinstance(plate_image, Frame) else np.asarray(plate_image)
        resp = self.backend.request({"op": "ocr", **encode_image(px)})
        text, scores = parse_ocr(resp)
        bad = set(text) - set(ALPHABET)
        if bad:
            raise ProtocolError(f"OCR text holds characters outside A-Z0-9: {sorted(bad)}")
        return PlateReading(text, scores, "external")

    def close(self):
        self.backend.close()


def make_ocr(cfg: OCRConfig):
    if cfg.backend == "builtin":
        return TemplateOCR()
    return ExternalOCR(cfg.command)
