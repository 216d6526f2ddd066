"""Chromatic-motion analysis of snippets.

In a snippet, a pixel untouched by motion has identical first/mean/last
grays, so its channel range is zero; moving pixels pick up color. The chroma
measure here is exact integer channel range (max - min), tied directly to
that invariant.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from dgs.errors import EmptyInput
from dgs.snippets import DgsImage

DEFAULT_THRESHOLD = 8  # absorbs +-1 rounding plus mild noise


@dataclass(frozen=True)
class MotionMask:
    """Boolean per-pixel motion map at a given chroma threshold."""

    mask: np.ndarray
    threshold: int

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def fraction(self) -> float:
        return float(self.mask.mean())


def chroma_deviation(img: DgsImage) -> np.ndarray:
    """Per-pixel channel range max(r,g,b) - min(r,g,b) as uint8; 0 iff achromatic."""
    stacked = np.stack([img.r, img.g, img.b])
    return (stacked.max(axis=0) - stacked.min(axis=0)).astype(np.uint8)


def motion_mask(img: DgsImage, threshold: int = DEFAULT_THRESHOLD) -> MotionMask:
    """Pixels whose chroma deviation reaches ``threshold`` (>= 1)."""
    if threshold < 1:
        raise ValueError(f"threshold must be >= 1, got {threshold}")
    return MotionMask(mask=chroma_deviation(img) >= threshold, threshold=threshold)


@dataclass(frozen=True)
class ImageMotionStats:
    name: str
    motion_fraction: float
    mean_deviation: float
    p95_deviation: float


@dataclass(frozen=True)
class MotionReport:
    threshold: int
    per_image: list[ImageMotionStats]
    aggregate_fraction: float
    histogram: np.ndarray  # 257 bins: deviations 0..255 plus an unused overflow guard


def motion_report(imgs: Sequence[DgsImage], threshold: int = DEFAULT_THRESHOLD,
                  names: Sequence[str] | None = None) -> MotionReport:
    """Per-image and aggregate motion statistics over a snippet set."""
    if not imgs:
        raise EmptyInput("motion report over zero images")
    if names is None:
        names = [f"image{i}" for i in range(len(imgs))]
    histogram = np.zeros(257, dtype=np.int64)
    per_image = []
    motion_px = 0
    total_px = 0
    for name, img in zip(names, imgs):
        dev = chroma_deviation(img)
        histogram[:256] += np.bincount(dev.ravel(), minlength=256)
        moving = int((dev >= threshold).sum())
        motion_px += moving
        total_px += dev.size
        per_image.append(ImageMotionStats(
            name=name,
            motion_fraction=moving / dev.size,
            mean_deviation=float(dev.mean()),
            p95_deviation=float(np.percentile(dev, 95)),
        ))
    return MotionReport(
        threshold=threshold,
        per_image=per_image,
        aggregate_fraction=motion_px / total_px,
        histogram=histogram,
    )


def report_to_csv(report: MotionReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["image_path", "motion_fraction", "mean_deviation", "p95_deviation"])
    for row in report.per_image:
        writer.writerow([row.name, repr(row.motion_fraction),
                         repr(row.mean_deviation), repr(row.p95_deviation)])
    return buf.getvalue()


def report_to_text(report: MotionReport) -> str:
    lines = [f"threshold: {report.threshold}"]
    width = max((len(s.name) for s in report.per_image), default=0)
    for s in report.per_image:
        lines.append(
            f"{s.name:<{width}}  motion={s.motion_fraction:.4f}"
            f"  mean_dev={s.mean_deviation:.2f}  p95_dev={s.p95_deviation:.2f}"
        )
    lines.append(f"aggregate motion fraction: {report.aggregate_fraction:.4f}")
    return "\n".join(lines) + "\n"
