"""Dynamic grayscale snippet synthesis.

A video is split into contiguous, non-overlapping segments of X frames; each
segment collapses to one 3-channel image: R = grayscale of the first frame,
G = grayscale temporal mean, B = grayscale of the last frame. Static pixels
come out achromatic (r == g == b), moving pixels colored.

Conventions fixed here: BT.601 luma weights 0.299/0.587/0.114, exact integer
accumulation for means, rounding half away from zero, bilinear resize with
half-pixel centers.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

from dgs.errors import EmptySegment, GeometryMismatch, VideoTooShort
from dgs.rounding import round_to_u8
from dgs.video_io import Frame, VideoSource

DEFAULT_SEGMENT_LENGTH = 40
DEFAULT_RESIZE = (224, 224)


@dataclass(frozen=True)
class SegmentSpec:
    """Segmentation parameters: frames per segment and trailing-frame policy."""

    length_x: int = DEFAULT_SEGMENT_LENGTH
    partial_policy: str = "drop"  # "drop" | "keep"

    def __post_init__(self):
        if self.length_x < 2:
            raise ValueError(f"segment length must be >= 2, got {self.length_x}")
        if self.partial_policy not in ("drop", "keep"):
            raise ValueError(f"partial_policy must be drop or keep, got {self.partial_policy!r}")


@dataclass(frozen=True)
class Segment:
    """A contiguous frame run [start, start + len) within one video."""

    video_id: str
    k: int
    start: int
    len: int


@dataclass(frozen=True)
class DgsImage:
    """The packed snippet: r/g/b are (h, w) uint8 grayscale rasters."""

    r: np.ndarray
    g: np.ndarray
    b: np.ndarray
    segment: Segment | None = None

    @property
    def width(self) -> int:
        return self.r.shape[1]

    @property
    def height(self) -> int:
        return self.r.shape[0]

    def packed(self) -> np.ndarray:
        """Return the (h, w, 3) uint8 RGB raster."""
        return np.stack([self.r, self.g, self.b], axis=-1)

    @classmethod
    def from_packed(cls, rgb: np.ndarray, segment: Segment | None = None) -> "DgsImage":
        rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
        if rgb.ndim != 3 or rgb.shape[2] != 3:
            raise GeometryMismatch("packed snippet must be an (h, w, 3) raster")
        return cls(r=rgb[..., 0].copy(), g=rgb[..., 1].copy(), b=rgb[..., 2].copy(),
                   segment=segment)


def segment_video(src: VideoSource, spec: SegmentSpec, video_id: str | None = None) -> list[Segment]:
    """Partition a source into non-overlapping segments covering a prefix.

    Under ``drop`` a trailing run shorter than ``length_x`` is discarded;
    under ``keep`` it is appended if it still spans >= 2 frames.
    """
    n = src.frame_count
    if n < 2:
        raise VideoTooShort(f"{n} frames; need at least 2")
    vid = video_id if video_id is not None else src.origin
    x = spec.length_x
    full = n // x
    if full == 0 and spec.partial_policy == "drop":
        raise VideoTooShort(f"{n} frames; need at least one segment of {x}")
    segments = [Segment(video_id=vid, k=k, start=k * x, len=x) for k in range(full)]
    rest = n - full * x
    if spec.partial_policy == "keep" and rest >= 2:
        segments.append(Segment(video_id=vid, k=full, start=full * x, len=rest))
    if not segments:
        raise VideoTooShort(f"{n} frames leave no usable segment at length {x}")
    return segments


def to_gray(frame: Frame | np.ndarray) -> np.ndarray:
    """BT.601 luma: y = round(0.299 R + 0.587 G + 0.114 B), half away from zero.

    Computed in exact integer arithmetic (weights scaled by 1000).
    """
    pixels = frame.pixels if isinstance(frame, Frame) else np.asarray(frame)
    scaled = (
        pixels[..., 0].astype(np.uint32) * 299
        + pixels[..., 1].astype(np.uint32) * 587
        + pixels[..., 2].astype(np.uint32) * 114
    )
    return ((scaled + 500) // 1000).astype(np.uint8)


def mean_gray(frames: Iterable[Frame | np.ndarray]) -> np.ndarray:
    """Pixelwise mean of per-frame grayscale values.

    Grays are accumulated as exact integers; the division rounds half away
    from zero: mean = (2*sum + n) // (2*n).
    """
    total: np.ndarray | None = None
    n = 0
    shape = None
    for f in frames:
        g = to_gray(f)
        if total is None:
            total = g.astype(np.int64)
            shape = g.shape
        else:
            if g.shape != shape:
                raise GeometryMismatch(f"frame geometry {g.shape} != {shape}")
            total += g
        n += 1
    if total is None or n == 0:
        raise EmptySegment("mean over zero frames")
    return ((2 * total + n) // (2 * n)).astype(np.uint8)


def synthesize_dgs(src: VideoSource, seg: Segment) -> DgsImage:
    """Build the snippet for one segment: first / mean / last grayscale."""
    frames = [src.read_frame(seg.start + j) for j in range(seg.len)]
    return DgsImage(
        r=to_gray(frames[0]),
        g=mean_gray(frames),
        b=to_gray(frames[-1]),
        segment=seg,
    )


def _bilinear_axis(n_src: int, n_dst: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Source sampling for one axis under half-pixel-center alignment."""
    coords = (np.arange(n_dst, dtype=np.float64) + 0.5) * (n_src / n_dst) - 0.5
    coords = np.clip(coords, 0.0, n_src - 1.0)
    lo = np.floor(coords).astype(np.intp)
    hi = np.minimum(lo + 1, n_src - 1)
    return lo, hi, coords - lo


def resize_gray(channel: np.ndarray, width: int, height: int) -> np.ndarray:
    """Bilinear resize of one grayscale raster with half-pixel centers."""
    h_src, w_src = channel.shape
    if (w_src, h_src) == (width, height):
        return channel.copy()
    y0, y1, wy = _bilinear_axis(h_src, height)
    x0, x1, wx = _bilinear_axis(w_src, width)
    src = channel.astype(np.float64)
    top = src[np.ix_(y0, x0)] * (1 - wx) + src[np.ix_(y0, x1)] * wx
    bot = src[np.ix_(y1, x0)] * (1 - wx) + src[np.ix_(y1, x1)] * wx
    out = top * (1 - wy)[:, None] + bot * wy[:, None]
    return round_to_u8(out)


def resize_dgs(img: DgsImage, width: int = DEFAULT_RESIZE[0],
               height: int = DEFAULT_RESIZE[1]) -> DgsImage:
    """Resize each channel independently; identity sizes return a bit-exact copy."""
    if width < 1 or height < 1:
        raise ValueError(f"target size must be >= 1, got {width}x{height}")
    return DgsImage(
        r=resize_gray(img.r, width, height),
        g=resize_gray(img.g, width, height),
        b=resize_gray(img.b, width, height),
        segment=img.segment,
    )


def snippet_filename(video_id: str, k: int, length: int, ext: str = "png") -> str:
    """Canonical snippet name: <video_id>_k<ordinal>_x<length>.<ext>."""
    return f"{sanitize_video_id(video_id)}_k{k}_x{length}.{ext}"


def sanitize_video_id(video_id: str) -> str:
    """Restrict ids to filename-safe characters."""
    return "".join(c if c.isalnum() or c in "-." else "_" for c in video_id)


def save_dgs(img: DgsImage, path: str | Path) -> None:
    """Write the snippet as a lossless 8-bit RGB raster (format by extension)."""
    Image.fromarray(img.packed(), mode="RGB").save(Path(path))


def load_dgs(path: str | Path) -> DgsImage:
    """Read a snippet raster written by :func:`save_dgs`."""
    with Image.open(path) as im:
        rgb = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return DgsImage.from_packed(rgb)


def encode_video(src: VideoSource, spec: SegmentSpec, video_id: str,
                 resize: tuple[int, int] | None = None) -> list[DgsImage]:
    """Segment a source and synthesize one snippet per segment, in order."""
    images = []
    for seg in segment_video(src, spec, video_id=video_id):
        img = synthesize_dgs(src, seg)
        if resize is not None:
            img = resize_dgs(img, resize[0], resize[1])
        images.append(img)
    return images
