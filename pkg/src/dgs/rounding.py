"""Toolkit-wide rounding convention: half away from zero.

Every float-to-integer conversion in the toolkit goes through this module so
that outputs stay bit-reproducible. Python's ``round`` and ``np.round`` use
banker's rounding and must not be used on pixel data.
"""

from __future__ import annotations

import numpy as np


def round_half_away(x: np.ndarray | float) -> np.ndarray:
    """Round to nearest integer, ties away from zero. Returns float dtype."""
    x = np.asarray(x)
    return np.where(x >= 0, np.floor(x + 0.5), np.ceil(x - 0.5))


def round_to_u8(x: np.ndarray) -> np.ndarray:
    """Round half away from zero, clamp to [0, 255], return uint8."""
    return np.clip(round_half_away(x), 0, 255).astype(np.uint8)
