"""Synthetic top-view traffic: vehicles moving straight down past a counting line.

Motion is integer-rounded linear: at frame ``t`` a vehicle's leading (lower)
edge sits at row ``floor((t - entry_frame) * speed)`` and its body covers
``[lead - height, lead)``. The vehicle has entirely crossed the line once
its trailing edge reaches ``line_y``, which gives the closed form
``crossing_frame = entry_frame + ceil((line_y + height) / speed)``.

Noise is a Bernoulli pixel flip (``v -> 255 - v``) driven by a counter-based
splitmix64 stream: the draw for pixel ``i`` of frame ``t`` is
``splitmix64(seed + (t * H * W + i + 1) * 0x9E3779B97F4A7C15)``, top 53 bits
as a uniform in [0, 1). Any frame can be rendered alone and reproduced
exactly from the seed.
"""

from __future__ import annotations

import math
import random
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .detection import BBox, clip_box
from .errors import SceneInfeasible
from .evaluate import GroundTruthEntry
from .ocr import BUILTIN_FONT, GlyphFont, render_plate_glyphs
from .video_io import Frame, FrameSource

# contrast floor against the builtin detector's default threshold
MIN_CONTRAST = 25

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def splitmix64(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def noise_uniforms(seed: int, frame_index: int, n_pixels: int) -> np.ndarray:
    counter = np.arange(n_pixels, dtype=np.uint64) + np.uint64(frame_index * n_pixels + 1)
    with np.errstate(over="ignore"):
        z = np.uint64(seed % 2**64) + counter * _GOLDEN
        bits = splitmix64(z)
    return (bits >> np.uint64(11)).astype(np.float64) * 2.0**-53


@dataclass
class VehicleSpec:
    x: int
    width: int
    height: int
    speed: float
    entry_frame: int
    body_gray: int
    plate_text: Optional[str] = None
    plate_offset: Optional[tuple[int, int]] = None
    # draw the plate; False keeps plate_text in the ground truth but leaves the body blank
    render_plate: bool = True

    def lead(self, t) -> np.ndarray:
        """Leading-edge row at frame(s) ``t``, exact for fractional speeds."""
        sp = Fraction(self.speed)
        t = np.asarray(t, dtype=np.int64)
        return (t - self.entry_frame) * sp.numerator // sp.denominator

    def crossing_frame(self, line_y: int) -> int:
        return self.entry_frame + math.ceil(Fraction(line_y + self.height) / Fraction(self.speed))

    def first_on_line(self, line_y: int) -> int:
        """First frame whose line row is covered by this vehicle (lead > line_y)."""
        return self.entry_frame + math.floor(Fraction(line_y) / Fraction(self.speed)) + 1

    def last_on_line(self, line_y: int) -> int:
        """Last frame whose line row is covered (trailing edge still at or above it)."""
        return self.entry_frame + math.ceil(Fraction(line_y + self.height + 1) / Fraction(self.speed)) - 1


@dataclass
class SceneSpec:
    frames: int
    width: int
    height: int
    background: int = 60
    line_y: int = 120
    vehicles: list = field(default_factory=list)
    noise: float = 0.0
    seed: int = 0
    format: str = "rgb8"
    plate_scale: int = 1
    plate_margin: int = 2
    plate_paper: int = 255
    plate_ink: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        for v in d["vehicles"]:
            if v["plate_offset"] is not None:
                v["plate_offset"] = list(v["plate_offset"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        vehicles = []
        for v in d.pop("vehicles", []):
            v = dict(v)
            if v.get("plate_offset") is not None:
                v["plate_offset"] = tuple(v["plate_offset"])
            vehicles.append(VehicleSpec(**v))
        return cls(vehicles=vehicles, **d)


@dataclass(frozen=True)
class VehicleTruth:
    crossing_frame: int
    plate_text: Optional[str]
    vehicle_bbox: Optional[BBox]
    plate_bbox: Optional[BBox]


@dataclass
class SceneGroundTruth:
    vehicles: list

    def entries(self) -> list[GroundTruthEntry]:
        """Evaluation ground truth, in crossing order; vehicles without plate text are left out."""
        out = [GroundTruthEntry(v.crossing_frame, v.plate_text)
               for v in self.vehicles if v.plate_text]
        out.sort(key=lambda e: e.crossing_frame)
        return out


def _plate_patch(text: str, spec: SceneSpec, font: GlyphFont) -> np.ndarray:
    ink = render_plate_glyphs(text, font, spec.plate_scale)
    m = spec.plate_margin
    patch = np.full((ink.shape[0] + 2 * m, ink.shape[1] + 2 * m), spec.plate_paper, dtype=np.uint8)
    patch[m:m + ink.shape[0], m:m + ink.shape[1]][ink] = spec.plate_ink
    return patch


def _plate_offset(v: VehicleSpec, patch: np.ndarray) -> tuple[int, int]:
    if v.plate_offset is not None:
        return tuple(v.plate_offset)
    return (v.width - patch.shape[1]) // 2, (v.height - patch.shape[0]) // 2


def validate_scene(spec: SceneSpec, font: GlyphFont = BUILTIN_FONT) -> None:
    if spec.frames < 0 or spec.width <= 0 or spec.height <= 0:
        raise ValueError("scene needs non-negative frames and positive geometry")
    if not 0 <= spec.line_y < spec.height:
        raise ValueError(f"line_y {spec.line_y} outside frame height {spec.height}")
    if spec.format not in ("gray8", "rgb8"):
        raise ValueError(f"unknown format {spec.format!r}")
    if not 0.0 <= spec.noise <= 1.0:
        raise ValueError("noise rate must be in [0, 1]")
    for i, v in enumerate(spec.vehicles):
        if v.width <= 0 or v.height <= 0:
            raise ValueError(f"vehicle {i}: extent must be positive")
        if not (0 <= v.x and v.x + v.width <= spec.width):
            raise ValueError(f"vehicle {i} does not fit horizontally")
        if v.speed <= 0:
            raise ValueError(f"vehicle {i}: speed must be positive")
        if abs(v.body_gray - spec.background) <= MIN_CONTRAST:
            raise ValueError(f"vehicle {i}: body gray too close to the background")
        if v.plate_text is not None and v.render_plate:
            patch = _plate_patch(v.plate_text, spec, font)
            dx, dy = _plate_offset(v, patch)
            if dx < 0 or dy < 0 or dx + patch.shape[1] > v.width or dy + patch.shape[0] > v.height:
                raise ValueError(f"vehicle {i}: plate does not fit on the vehicle")
    _check_overlap(spec)


def _check_overlap(spec: SceneSpec) -> None:
    """Reject scenes where two vehicles overlap or touch in any frame."""
    t = np.arange(spec.frames)
    spans = []
    for v in spec.vehicles:
        lead = v.lead(t)
        spans.append((np.clip(lead - v.height, 0, spec.height), np.clip(lead, 0, spec.height)))
    for i, a in enumerate(spec.vehicles):
        for j in range(i + 1, len(spec.vehicles)):
            b = spec.vehicles[j]
            if a.x > b.x + b.width or b.x > a.x + a.width:
                continue
            (a0, a1), (b0, b1) = spans[i], spans[j]
            visible = (a1 > a0) & (b1 > b0)
            touching = visible & (a0 <= b1) & (b0 <= a1)
            if touching.any():
                f = int(np.flatnonzero(touching)[0])
                raise SceneInfeasible(f"vehicles {i} and {j} overlap or touch at frame {f}")


class SyntheticSource(FrameSource):
    """Frames rendered on demand from a SceneSpec."""

    def __init__(self, spec: SceneSpec, font: GlyphFont = BUILTIN_FONT):
        super().__init__()
        self.spec = spec
        self._patches = [
            _plate_patch(v.plate_text, spec, font) if v.plate_text and v.render_plate else None
            for v in spec.vehicles
        ]

    def __len__(self):
        return self.spec.frames

    def render_gray(self, t: int) -> np.ndarray:
        s = self.spec
        img = np.full((s.height, s.width), s.background, dtype=np.uint8)
        for v, patch in zip(s.vehicles, self._patches):
            lead = int(v.lead(t))
            top = lead - v.height
            y0, y1 = max(top, 0), min(lead, s.height)
            if y0 >= y1:
                continue
            img[y0:y1, v.x:v.x + v.width] = v.body_gray
            if patch is not None:
                dx, dy = _plate_offset(v, patch)
                py, px = top + dy, v.x + dx
                c = clip_box(px, py, px + patch.shape[1], py + patch.shape[0], s.width, s.height)
                if c is not None:
                    img[c.y0:c.y1, c.x0:c.x1] = patch[c.y0 - py:c.y1 - py, c.x0 - px:c.x1 - px]
        if s.noise > 0:
            flip = noise_uniforms(s.seed, t, img.size).reshape(img.shape) < s.noise
            img[flip] = 255 - img[flip]
        return img

    def _load(self, index):
        gray = self.render_gray(index)
        if self.spec.format == "rgb8":
            gray = np.repeat(gray[:, :, None], 3, axis=2)
        return Frame(gray)


def scene_ground_truth(spec: SceneSpec, font: GlyphFont = BUILTIN_FONT) -> SceneGroundTruth:
    """Ground truth from the motion model alone, independent of rendering."""
    out = []
    for v in spec.vehicles:
        c = v.crossing_frame(spec.line_y)
        lead = int(v.lead(c))
        vbox = clip_box(v.x, lead - v.height, v.x + v.width, lead, spec.width, spec.height,
                        label="vehicle")
        pbox = None
        if v.plate_text and v.render_plate:
            patch = _plate_patch(v.plate_text, spec, font)
            dx, dy = _plate_offset(v, patch)
            py, px = lead - v.height + dy, v.x + dx
            pbox = clip_box(px, py, px + patch.shape[1], py + patch.shape[0],
                            spec.width, spec.height, label="plate")
        out.append(VehicleTruth(c, v.plate_text, vbox, pbox))
    return SceneGroundTruth(out)


def generate_scene(spec: SceneSpec, font: GlyphFont = BUILTIN_FONT
                   ) -> tuple[SyntheticSource, SceneGroundTruth]:
    validate_scene(spec, font)
    return SyntheticSource(spec, font), scene_ground_truth(spec, font)


def random_plate(rng: random.Random) -> str:
    letters = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
    digits = "0123456789"
    head = "".join(rng.choice(letters) for _ in range(3))
    if rng.random() < 0.5:
        return head + "".join(rng.choice(digits) for _ in range(4))
    return head + rng.choice(digits) + rng.choice(letters) + "".join(rng.choice(digits) for _ in range(2))


def random_scene(n_vehicles: int, seed: int = 0, width: int = 320, height: int = 240,
                 line_y: int = 120, lanes: int = 3, vehicle_size: tuple[int, int] = (64, 40),
                 speeds=(3, 4, 5), chunk_len: Optional[int] = None, background: int = 60,
                 noise: float = 0.0, tail: int = 5, min_crossing_gap: int = 7) -> SceneSpec:
    """A feasible scene with ``n_vehicles`` plated vehicles spread over lanes.

    Vehicles are placed one at a time, each as early as the constraints
    allow: no overlap in any frame, marks in the same columns separated by
    at least one VR row, no other vehicle in the same columns visible in a
    vehicle's extraction frame, crossings at least ``min_crossing_gap``
    frames apart (the default keeps frame-based ground-truth matching with
    tolerance 3 unambiguous), and with ``chunk_len`` every mark inside a
    single chunk of that length.
    """
    rng = random.Random(seed)
    vw, vh = vehicle_size
    lane_w = width // lanes
    if vw > lane_w:
        raise ValueError("vehicles wider than a lane")
    placed: list[VehicleSpec] = []
    cursor = 0
    for _ in range(n_vehicles):
        lane = rng.randrange(lanes)
        v = VehicleSpec(
            x=lane * lane_w + (lane_w - vw) // 2, width=vw, height=vh,
            speed=rng.choice(speeds), entry_frame=cursor + rng.randint(0, 6),
            body_gray=rng.randint(100, 200), plate_text=random_plate(rng))
        while not _fits(v, placed, line_y, height, chunk_len, min_crossing_gap):
            v.entry_frame += 1
        placed.append(v)
        cursor = v.entry_frame
    frames = max((v.crossing_frame(line_y) for v in placed), default=0) + tail
    if chunk_len:
        # a short final chunk would let one mark dominate its columns' median
        frames = math.ceil(frames / chunk_len) * chunk_len
    spec = SceneSpec(frames=frames, width=width, height=height, background=background,
                     line_y=line_y, vehicles=placed, noise=noise, seed=seed)
    validate_scene(spec)
    return spec


def _fits(v: VehicleSpec, placed: list, line_y: int, height: int,
          chunk_len: Optional[int], min_crossing_gap: int) -> bool:
    first, last = v.first_on_line(line_y), v.last_on_line(line_y)
    if chunk_len and first // chunk_len != last // chunk_len:
        return False
    c = v.crossing_frame(line_y)
    for o in placed:
        if abs(o.crossing_frame(line_y) - c) < min_crossing_gap:
            return False
        if o.x > v.x + v.width or v.x > o.x + o.width:
            continue
        ofirst, olast = o.first_on_line(line_y), o.last_on_line(line_y)
        if not (last + 1 < ofirst or olast + 1 < first):
            return False
        for lo, hi, other in ((first, last, o), (ofirst, olast, v)):
            lead = other.lead(np.arange(lo, hi + 1))
            if ((lead > 0) & (lead - other.height < height)).any():
                return False
        lo = min(v.entry_frame, o.entry_frame)
        hi = max(v.crossing_frame(height), o.crossing_frame(height)) + 1
        t = np.arange(lo, hi)
        a1, b1 = v.lead(t), o.lead(t)
        a0, b0 = a1 - v.height, b1 - o.height
        both = (np.minimum(a1, height) > np.maximum(a0, 0)) & (np.minimum(b1, height) > np.maximum(b0, 0))
        if (both & (a0 <= b1) & (b0 <= a1)).any():
            return False
    return True
