"""Dense optical flow (Horn-Schunck), the runtime-comparison baseline.

Classical iterative scheme: intensity derivatives over the 2x2x2 cube, then
Jacobi-style sweeps u = ubar - Ix(Ix*ubar + Iy*vbar + It) / (a^2 + Ix^2 + Iy^2)
(symmetric in v), where ubar/vbar are 4-neighbor averages with replicate-edge
boundaries. Pixels are normalized to [0, 1] internally.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from dgs.errors import DecodeError, EmptyInput, GeometryMismatch, UnsupportedFormat
from dgs.rounding import round_to_u8

FLOW_MAGIC = b"DGSFLO1"
FLOW_HEADER = struct.Struct("<7sII")  # magic, width, height


@dataclass(frozen=True)
class HsParams:
    alpha: float = 1.0
    iterations: int = 100

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")


@dataclass(frozen=True)
class FlowField:
    """Per-pixel displacement estimate in pixels per frame step."""

    u: np.ndarray
    v: np.ndarray

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u, self.v)


def _derivatives(a1: np.ndarray, a2: np.ndarray,
                 dtype=np.float32) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Averaged forward differences over the 2x2x2 intensity cube.

    Differences are taken in exact integer arithmetic and scaled to the
    normalized [0, 1] intensity range afterwards, so a constant brightness
    shift of both frames cancels bit-exactly.
    """
    h, w = a1.shape
    p1 = np.pad(a1.astype(np.int32), ((0, 1), (0, 1)), mode="edge")
    p2 = np.pad(a2.astype(np.int32), ((0, 1), (0, 1)), mode="edge")

    def dx(p):
        return p[:h, 1:] - p[:h, :w] + p[1:, 1:] - p[1:, :w]

    def dy(p):
        return p[1:, :w] - p[:h, :w] + p[1:, 1:] - p[:h, 1:]

    scale = dtype(1.0 / (4 * 255))
    ex = dx(p1).astype(dtype) + dx(p2).astype(dtype)
    ex *= scale
    ey = dy(p1).astype(dtype) + dy(p2).astype(dtype)
    ey *= scale
    d = p2 - p1
    et = (d[:h, :w] + d[1:, :w] + d[:h, 1:] + d[1:, 1:]).astype(dtype)
    et *= scale
    return ex, ey, et


def _avg4(a: np.ndarray, out: np.ndarray) -> np.ndarray:
    """4-neighbor average with replicate-edge boundaries, into ``out``."""
    out[1:, :] = a[:-1, :]
    out[0, :] = a[0, :]
    out[:-1, :] += a[1:, :]
    out[-1, :] += a[-1, :]
    out[:, 1:] += a[:, :-1]
    out[:, 0] += a[:, 0]
    out[:, :-1] += a[:, 1:]
    out[:, -1] += a[:, -1]
    out *= 0.25
    return out


def horn_schunck(f1: np.ndarray, f2: np.ndarray, params: HsParams = HsParams()) -> FlowField:
    """Estimate flow from gray frame ``f1`` to ``f2``.

    Runs exactly ``params.iterations`` sweeps from zero initialization, so
    identical inputs yield exactly zero flow.
    """
    a1 = np.asarray(f1)
    a2 = np.asarray(f2)
    if a1.shape != a2.shape or a1.ndim != 2:
        raise GeometryMismatch(f"frame shapes differ: {a1.shape} vs {a2.shape}")
    ex, ey, et = _derivatives(a1, a2)
    inv = 1.0 / (np.float32(params.alpha) ** 2 + ex * ex + ey * ey)
    u = np.zeros(a1.shape, dtype=np.float32)
    v = np.zeros(a1.shape, dtype=np.float32)
    ubar = np.empty_like(u)
    vbar = np.empty_like(u)
    der = np.empty_like(u)
    tmp = np.empty_like(u)
    for _ in range(params.iterations):
        _avg4(u, ubar)
        _avg4(v, vbar)
        np.multiply(ex, ubar, out=der)
        np.multiply(ey, vbar, out=tmp)
        der += tmp
        der += et
        der *= inv
        np.multiply(ex, der, out=tmp)
        np.subtract(ubar, tmp, out=u)
        np.multiply(ey, der, out=tmp)
        np.subtract(vbar, tmp, out=v)
    return FlowField(u=u, v=v)


def hs_energy(f1: np.ndarray, f2: np.ndarray, flow: FlowField, alpha: float = 1.0) -> float:
    """Horn-Schunck objective: data residual squared plus smoothness penalty."""
    ex, ey, et = _derivatives(np.asarray(f1), np.asarray(f2), dtype=np.float64)
    u = flow.u.astype(np.float64)
    v = flow.v.astype(np.float64)
    data = (ex * u + ey * v + et) ** 2
    smooth = 0.0
    for g in (u, v):
        smooth += np.sum((g[:, 1:] - g[:, :-1]) ** 2)
        smooth += np.sum((g[1:, :] - g[:-1, :]) ** 2)
    return float(data.sum() + alpha * alpha * smooth)


def _scale_u8(channel: np.ndarray) -> np.ndarray:
    lo = float(channel.min())
    hi = float(channel.max())
    if hi <= lo:
        return np.zeros(channel.shape, dtype=np.uint8)
    return round_to_u8((channel - lo) * (255.0 / (hi - lo)))


def flow_to_snippet(flows: Sequence[FlowField]) -> np.ndarray:
    """Pack a flow sequence into a snippet-shaped (h, w, 3) uint8 raster.

    Channels: temporal-mean magnitude, temporal-mean angle, final magnitude;
    each min-max scaled to 8 bits (constant channels map to zero).
    """
    if not flows:
        raise EmptyInput("no flow fields to pack")
    shape = flows[0].u.shape
    for f in flows:
        if f.u.shape != shape or f.v.shape != shape:
            raise GeometryMismatch("flow fields of differing sizes")
    mags = np.stack([f.magnitude for f in flows])
    angles = np.stack([np.arctan2(f.v, f.u) for f in flows])
    out = np.empty(shape + (3,), dtype=np.uint8)
    out[..., 0] = _scale_u8(mags.mean(axis=0))
    out[..., 1] = _scale_u8(angles.mean(axis=0))
    out[..., 2] = _scale_u8(mags[-1])
    return out


def write_flow(path: str | Path, flow: FlowField) -> None:
    """Dump a flow field: {magic "DGSFLO1", width u32, height u32} then
    row-major little-endian float32 (u, v) pairs."""
    h, w = flow.u.shape
    pairs = np.empty((h, w, 2), dtype="<f4")
    pairs[..., 0] = flow.u
    pairs[..., 1] = flow.v
    with open(path, "wb") as fh:
        fh.write(FLOW_HEADER.pack(FLOW_MAGIC, w, h))
        fh.write(pairs.tobytes())


def read_flow(path: str | Path) -> FlowField:
    with open(path, "rb") as fh:
        header = fh.read(FLOW_HEADER.size)
        if len(header) < FLOW_HEADER.size:
            raise UnsupportedFormat(f"{path} too short for a DGSFLO1 header")
        magic, w, h = FLOW_HEADER.unpack(header)
        if magic != FLOW_MAGIC:
            raise UnsupportedFormat(f"{path} lacks the DGSFLO1 magic")
        data = fh.read(h * w * 8)
    if len(data) != h * w * 8:
        raise DecodeError(f"{path}: truncated flow data")
    pairs = np.frombuffer(data, dtype="<f4").reshape(h, w, 2)
    return FlowField(u=pairs[..., 0].astype(np.float32),
                     v=pairs[..., 1].astype(np.float32))
