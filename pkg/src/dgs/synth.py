"""Deterministic synthetic videos with exact motion ground truth.

Scenes are rectangles moving at rational velocities over a constant-gray or
frozen-noise background. Sub-pixel positions are floored to integer pixel
origins, so the swept-area ground truth is exact integer arithmetic, never a
sampled approximation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from dgs.errors import OutOfBounds, UnsupportedFormat
from dgs.snippets import Segment
from dgs.video_io import ArraySource

_LUMA = np.array([299, 587, 114], dtype=np.int64)


@dataclass(frozen=True)
class ConstantBackground:
    gray: int = 0


@dataclass(frozen=True)
class NoiseBackground:
    """Per-pixel gray noise, frozen for the whole video (contributes no motion)."""

    seed: int
    lo: int = 0
    hi: int = 64


@dataclass(frozen=True)
class MovingRect:
    """Axis-aligned rectangle at x(t) = floor(x0 + vx*t), y likewise.

    ``values`` is cycled per frame, so a single entry is a constant color and
    several entries make a stationary object flicker.
    """

    x0: Fraction
    y0: Fraction
    w: int
    h: int
    values: tuple[tuple[int, int, int], ...]
    vx: Fraction = Fraction(0)
    vy: Fraction = Fraction(0)

    @classmethod
    def gray(cls, x0, y0, w, h, gray: int | Sequence[int], vx=0, vy=0) -> "MovingRect":
        grays = (gray,) if isinstance(gray, int) else tuple(gray)
        return cls(Fraction(x0), Fraction(y0), w, h,
                   tuple((g, g, g) for g in grays), Fraction(vx), Fraction(vy))

    def origin_at(self, t: int) -> tuple[int, int]:
        return (math.floor(self.x0 + self.vx * t), math.floor(self.y0 + self.vy * t))

    def value_at(self, t: int) -> tuple[int, int, int]:
        return self.values[t % len(self.values)]


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    n_frames: int
    background: ConstantBackground | NoiseBackground = ConstantBackground(0)
    objects: tuple[MovingRect, ...] = ()
    out_of_bounds: str = "clip"  # "clip" | "reject"


@dataclass(frozen=True)
class MotionGroundTruth:
    """Exact per-segment swept-area mask plus per-frame-pair displacements.

    ``object_displacements[j][o]`` is the integer (dx, dy) of object ``o``
    between frames start+j and start+j+1.
    """

    mask: np.ndarray
    object_displacements: list[tuple[tuple[int, int], ...]]


def _background_gray(spec: SceneSpec) -> np.ndarray:
    """The frozen (h, w) uint8 background gray raster."""
    bg = spec.background
    if isinstance(bg, ConstantBackground):
        return np.full((spec.height, spec.width), bg.gray, dtype=np.uint8)
    rng = np.random.Generator(np.random.PCG64(bg.seed))
    return rng.integers(bg.lo, bg.hi + 1, size=(spec.height, spec.width),
                        dtype=np.int64).astype(np.uint8)


def _check_bounds(spec: SceneSpec) -> None:
    for obj in spec.objects:
        for t in (0, spec.n_frames - 1):
            x, y = obj.origin_at(t)
            if x < 0 or y < 0 or x + obj.w > spec.width or y + obj.h > spec.height:
                raise OutOfBounds(
                    f"object leaves the {spec.width}x{spec.height} canvas at frame {t}"
                )


def _paint(canvas: np.ndarray, obj: MovingRect, t: int, value) -> None:
    x, y = obj.origin_at(t)
    xs, xe = max(0, x), min(canvas.shape[1], x + obj.w)
    ys, ye = max(0, y), min(canvas.shape[0], y + obj.h)
    if xs < xe and ys < ye:
        canvas[ys:ye, xs:xe] = value


def render(spec: SceneSpec) -> ArraySource:
    """Render the scene to an in-memory source. Deterministic per spec."""
    if spec.n_frames < 1 or spec.width < 1 or spec.height < 1:
        raise UnsupportedFormat("scene needs n_frames, width, height >= 1")
    if spec.out_of_bounds == "reject":
        _check_bounds(spec)
    bg_gray = _background_gray(spec)
    bg = np.repeat(bg_gray[..., None], 3, axis=2)
    frames = np.empty((spec.n_frames, spec.height, spec.width, 3), dtype=np.uint8)
    for t in range(spec.n_frames):
        frame = bg.copy()
        for obj in spec.objects:
            _paint(frame, obj, t, np.asarray(obj.value_at(t), dtype=np.uint8))
        frames[t] = frame
    return ArraySource(frames, origin="synth")


def ground_truth(spec: SceneSpec, seg: Segment) -> MotionGroundTruth:
    """Exact swept-area mask for one segment.

    A pixel is static iff its luma is identical in the first and last frame
    and its exact temporal mean equals that value; everything else is swept.
    Computed from the scene geometry directly (integer luma, scaled x1000),
    without rendering frames.
    """
    if seg.start < 0 or seg.start + seg.len > spec.n_frames:
        raise OutOfBounds(f"segment [{seg.start}, {seg.start + seg.len}) outside scene")
    lum = np.empty((spec.height, spec.width), dtype=np.int64)
    bg_lum = _background_gray(spec).astype(np.int64) * 1000
    first = last = None
    total = np.zeros((spec.height, spec.width), dtype=np.int64)
    for j in range(seg.len):
        t = seg.start + j
        lum[:] = bg_lum
        for obj in spec.objects:
            _paint(lum, obj, t, int(np.asarray(obj.value_at(t), dtype=np.int64) @ _LUMA))
        if j == 0:
            first = lum.copy()
        if j == seg.len - 1:
            last = lum.copy()
        total += lum
    static = (first == last) & (total == first * seg.len)
    displacements = []
    for j in range(seg.len - 1):
        t = seg.start + j
        displacements.append(tuple(
            (obj.origin_at(t + 1)[0] - obj.origin_at(t)[0],
             obj.origin_at(t + 1)[1] - obj.origin_at(t)[1])
            for obj in spec.objects
        ))
    return MotionGroundTruth(mask=~static, object_displacements=displacements)


def parse_scene(text: str) -> SceneSpec:
    """Parse the declarative scene format.

    Example::

        size 320 240
        frames 400
        background gray 32        # or: background noise <seed> <lo> <hi>
        bounds clip               # or: reject
        rect x=10 y=20 w=12 h=12 gray=224 vx=1 vy=0
        rect x=5 y=5 w=8 h=8 rgb=200,30,40 vx=1/2 vy=-1/3
        rect x=2 y=2 w=4 h=4 gray=10/250       # flickers between 10 and 250
    """
    width = height = n_frames = None
    background: ConstantBackground | NoiseBackground = ConstantBackground(0)
    out_of_bounds = "clip"
    objects: list[MovingRect] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        kind, args = tokens[0], tokens[1:]
        try:
            if kind == "size":
                width, height = int(args[0]), int(args[1])
            elif kind == "frames":
                n_frames = int(args[0])
            elif kind == "background":
                if args[0] == "gray":
                    background = ConstantBackground(int(args[1]))
                elif args[0] == "noise":
                    background = NoiseBackground(int(args[1]), int(args[2]), int(args[3]))
                else:
                    raise ValueError(f"unknown background {args[0]!r}")
            elif kind == "bounds":
                if args[0] not in ("clip", "reject"):
                    raise ValueError(f"bounds must be clip or reject, got {args[0]!r}")
                out_of_bounds = args[0]
            elif kind == "rect":
                objects.append(_parse_rect(args))
            else:
                raise ValueError(f"unknown directive {kind!r}")
        except (IndexError, ValueError, ZeroDivisionError) as exc:
            raise UnsupportedFormat(f"scene line {lineno}: {exc}") from exc
    if width is None or height is None or n_frames is None:
        raise UnsupportedFormat("scene must declare size and frames")
    return SceneSpec(width=width, height=height, n_frames=n_frames,
                     background=background, objects=tuple(objects),
                     out_of_bounds=out_of_bounds)


def _parse_rect(args: list[str]) -> MovingRect:
    fields: dict[str, str] = {}
    for token in args:
        key, _, value = token.partition("=")
        if not value:
            raise ValueError(f"rect field {token!r} is not key=value")
        fields[key] = value
    if "rgb" in fields:
        values = []
        for part in fields["rgb"].split("/"):
            r, g, b = (int(v) for v in part.split(","))
            values.append((r, g, b))
    else:
        values = [(int(g),) * 3 for g in fields["gray"].split("/")]
    return MovingRect(
        x0=Fraction(fields["x"]), y0=Fraction(fields["y"]),
        w=int(fields["w"]), h=int(fields["h"]), values=tuple(values),
        vx=Fraction(fields.get("vx", "0")), vy=Fraction(fields.get("vy", "0")),
    )


def load_scene(path: str | Path) -> SceneSpec:
    return parse_scene(Path(path).read_text())
