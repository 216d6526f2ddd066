"""Segmentation, grayscale conversion, snippet synthesis, resize."""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest

from conftest import constant_source, random_rgb_source
from dgs.errors import EmptySegment, VideoTooShort
from dgs.snippets import (
    SegmentSpec,
    mean_gray,
    resize_dgs,
    resize_gray,
    segment_video,
    synthesize_dgs,
    to_gray,
)
from dgs.synth import ConstantBackground, MovingRect, SceneSpec, render
from dgs.video_io import ArraySource


def _gray_source(grays: list[np.ndarray]) -> ArraySource:
    """Stack single-channel rasters into RGB frames with r=g=b."""
    frames = np.stack([np.repeat(g[..., None], 3, axis=2) for g in grays])
    return ArraySource(frames.astype(np.uint8))


class TestSegmentVideo:
    def _src(self, n):
        return ArraySource(np.zeros((n, 2, 2, 3), np.uint8))

    def test_exact_division(self):
        segs = segment_video(self._src(120), SegmentSpec(40), video_id="v")
        assert [s.start for s in segs] == [0, 40, 80]
        assert all(s.len == 40 for s in segs)
        assert [s.k for s in segs] == [0, 1, 2]

    def test_trailing_dropped(self):
        segs = segment_video(self._src(130), SegmentSpec(40, "drop"), video_id="v")
        assert len(segs) == 3

    def test_trailing_kept(self):
        segs = segment_video(self._src(130), SegmentSpec(40, "keep"), video_id="v")
        assert len(segs) == 4
        assert segs[-1].len == 10 and segs[-1].start == 120

    def test_trailing_single_frame_never_kept(self):
        segs = segment_video(self._src(41), SegmentSpec(40, "keep"), video_id="v")
        assert len(segs) == 1

    def test_too_short(self):
        with pytest.raises(VideoTooShort):
            segment_video(self._src(30), SegmentSpec(40, "drop"), video_id="v")
        with pytest.raises(VideoTooShort):
            segment_video(self._src(1), SegmentSpec(40, "keep"), video_id="v")

    def test_short_video_kept_as_partial(self):
        segs = segment_video(self._src(30), SegmentSpec(40, "keep"), video_id="v")
        assert len(segs) == 1 and segs[0].len == 30

    def test_spec_bounds(self):
        with pytest.raises(ValueError):
            SegmentSpec(1)
        with pytest.raises(ValueError):
            SegmentSpec(40, "pad")


def _reference_gray(r: int, g: int, b: int) -> int:
    """Exact rational BT.601 luma with half-away-from-zero rounding."""
    y = Fraction(299 * r + 587 * g + 114 * b, 1000)
    rounded = math.floor(y + Fraction(1, 2))
    return min(255, max(0, rounded))


class TestToGray:
    @pytest.mark.parametrize("rgb,expected", [
        ((255, 255, 255), 255),
        ((0, 0, 0), 0),
        ((255, 0, 0), 76),    # round(76.245)
        ((0, 255, 0), 150),   # round(149.685)
        ((0, 0, 255), 29),    # round(29.07)
    ])
    def test_known_values(self, rgb, expected):
        frame = np.array(rgb, np.uint8).reshape(1, 1, 3)
        assert to_gray(frame)[0, 0] == expected

    def test_matches_exact_rational_reference(self):
        rng = np.random.default_rng(8)
        pixels = rng.integers(0, 256, size=(500, 3), dtype=np.int64)
        got = to_gray(pixels.reshape(1, 500, 3).astype(np.uint8))[0]
        for (r, g, b), y in zip(pixels, got):
            assert y == _reference_gray(int(r), int(g), int(b))

    def test_gray_input_fixed_point(self):
        # weights sum to 1, so (v, v, v) maps to v
        v = np.arange(256, dtype=np.uint8)
        frame = np.repeat(v[..., None], 3, axis=1).reshape(1, 256, 3)
        assert np.array_equal(to_gray(frame)[0], v)


class TestMeanGray:
    def test_identical_frames(self):
        rng = np.random.default_rng(2)
        g = rng.integers(0, 256, (5, 6), dtype=np.int64).astype(np.uint8)
        src = _gray_source([g] * 7)
        frames = [src.read_frame(i) for i in range(7)]
        assert np.array_equal(mean_gray(frames), to_gray(frames[0]))

    def test_two_frame_mean(self):
        a = np.full((2, 2), 10, np.uint8)
        b = np.full((2, 2), 20, np.uint8)
        src = _gray_source([a, b])
        assert mean_gray([src.read_frame(0), src.read_frame(1)])[0, 0] == 15

    def test_rounding_half_up(self):
        a = np.full((1, 1), 10, np.uint8)
        b = np.full((1, 1), 11, np.uint8)
        src = _gray_source([a, b])
        assert mean_gray([src.read_frame(0), src.read_frame(1)])[0, 0] == 11

    def test_empty(self):
        with pytest.raises(EmptySegment):
            mean_gray([])


class TestSynthesize:
    def test_static_segment_achromatic(self):
        rng = np.random.default_rng(3)
        src = constant_source(rng, 40, 12, 16)
        seg = segment_video(src, SegmentSpec(40), video_id="v")[0]
        img = synthesize_dgs(src, seg)
        assert np.array_equal(img.r, img.g)
        assert np.array_equal(img.g, img.b)

    def test_length_two_segment(self):
        rng = np.random.default_rng(4)
        src = random_rgb_source(rng, 2, 5, 5)
        seg = segment_video(src, SegmentSpec(2), video_id="v")[0]
        img = synthesize_dgs(src, seg)
        f0, f1 = src.read_frame(0), src.read_frame(1)
        assert np.array_equal(img.r, to_gray(f0))
        assert np.array_equal(img.b, to_gray(f1))
        assert np.array_equal(img.g, mean_gray([f0, f1]))

    def test_channel_provenance(self):
        rng = np.random.default_rng(5)
        src = random_rgb_source(rng, 80, 10, 14)
        for seg in segment_video(src, SegmentSpec(40), video_id="v"):
            img = synthesize_dgs(src, seg)
            assert np.array_equal(img.r, to_gray(src.read_frame(seg.start)))
            assert np.array_equal(img.b, to_gray(src.read_frame(seg.start + seg.len - 1)))

    def test_determinism(self):
        rng = np.random.default_rng(6)
        src = random_rgb_source(rng, 40, 8, 8)
        seg = segment_video(src, SegmentSpec(40), video_id="v")[0]
        a = synthesize_dgs(src, seg)
        b = synthesize_dgs(src, seg)
        assert np.array_equal(a.packed(), b.packed())

    def test_moving_square_channel_positions(self):
        # white square sweeping right on black: R bright at the start
        # footprint, B bright at the end footprint, G a streak between
        spec = SceneSpec(width=24, height=12, n_frames=8,
                         background=ConstantBackground(0),
                         objects=(MovingRect.gray(2, 4, 4, 4, 255, vx=Fraction(2)),))
        src = render(spec)
        seg = segment_video(src, SegmentSpec(8), video_id="v")[0]
        img = synthesize_dgs(src, seg)
        start_cols = slice(2, 6)
        end_cols = slice(16, 20)
        rows = slice(4, 8)
        assert np.all(img.r[rows, start_cols] == 255)
        assert np.all(img.r[rows, end_cols] == 0)
        assert np.all(img.b[rows, end_cols] == 255)
        assert np.all(img.b[rows, start_cols] == 0)
        # the mean channel carries the streak across the whole sweep
        assert np.all(img.g[rows, 2:20] > 0)
        assert np.all(img.g[rows, 2:20] < 255)

    def test_gray_then_mean_vs_mean_then_gray_within_one(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            n = int(rng.integers(2, 12))
            h = int(rng.integers(2, 10))
            w = int(rng.integers(2, 10))
            src = random_rgb_source(rng, n, h, w)
            frames = [src.read_frame(i) for i in range(n)]
            got = mean_gray(frames)
            # independent order: average RGB exactly, then gray, all rational
            total = np.zeros((h, w, 3), dtype=np.int64)
            for f in frames:
                total += f.pixels
            # luma of the exact mean, scaled to avoid any float arithmetic:
            # y = (299 R + 587 G + 114 B) / (1000 n), rounded half away
            num = (total[..., 0] * 299 + total[..., 1] * 587 + total[..., 2] * 114)
            other = (2 * num + 1000 * n) // (2000 * n)
            assert np.abs(got.astype(np.int64) - other).max() <= 1


def _reference_bilinear(channel: np.ndarray, out_w: int, out_h: int,
                        x: int, y: int) -> int:
    """Independent scalar bilinear sample with half-pixel centers."""
    h, w = channel.shape
    sx = min(max((x + 0.5) * w / out_w - 0.5, 0.0), w - 1.0)
    sy = min(max((y + 0.5) * h / out_h - 0.5, 0.0), h - 1.0)
    x0, y0 = int(math.floor(sx)), int(math.floor(sy))
    x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
    fx, fy = sx - x0, sy - y0
    val = (channel[y0, x0] * (1 - fx) * (1 - fy)
           + channel[y0, x1] * fx * (1 - fy)
           + channel[y1, x0] * (1 - fx) * fy
           + channel[y1, x1] * fx * fy)
    return min(255, max(0, math.floor(val + 0.5)))


class TestResize:
    def test_identity_is_bit_exact(self):
        rng = np.random.default_rng(9)
        src = random_rgb_source(rng, 2, 13, 17)
        img = synthesize_dgs(src, segment_video(src, SegmentSpec(2), video_id="v")[0])
        out = resize_dgs(img, 17, 13)
        assert np.array_equal(out.packed(), img.packed())

    def test_constant_stays_constant(self):
        channel = np.full((7, 5), 143, np.uint8)
        for w, h in [(1, 1), (3, 11), (224, 224), (10, 2)]:
            out = resize_gray(channel, w, h)
            assert out.shape == (h, w)
            assert np.all(out == 143)

    def test_checkerboard_against_reference_sampler(self):
        board = np.array([[0, 255], [255, 0]], dtype=np.uint8)
        out = resize_gray(board, 224, 224)
        probes = [(0, 0), (223, 223), (112, 112), (50, 180), (7, 99)]
        for x, y in probes:
            assert out[y, x] == _reference_bilinear(board, 224, 224, x, y)

    def test_random_images_against_reference_sampler(self):
        rng = np.random.default_rng(10)
        channel = rng.integers(0, 256, (9, 7), dtype=np.int64).astype(np.uint8)
        out = resize_gray(channel, 31, 17)
        for x, y in [(0, 0), (30, 16), (15, 8), (3, 12), (29, 1)]:
            assert out[y, x] == _reference_bilinear(channel, 31, 17, x, y)

    def test_bad_target(self):
        rng = np.random.default_rng(11)
        src = random_rgb_source(rng, 2, 4, 4)
        img = synthesize_dgs(src, segment_video(src, SegmentSpec(2), video_id="v")[0])
        with pytest.raises(ValueError):
            resize_dgs(img, 0, 10)
