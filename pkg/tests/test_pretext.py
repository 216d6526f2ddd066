"""Dataset generation, manifest format, and validation."""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from conftest import random_rgb_source
from dgs.errors import UnbalancedDataset, UnsupportedFormat, UsageError, VideoTooShort
from dgs.pretext import (
    LengthClassSet,
    generate_downstream,
    generate_pretext,
    read_manifest,
    validate_manifest,
    write_manifest,
)
from dgs.snippets import SegmentSpec, Segment, load_dgs, resize_dgs, synthesize_dgs
from dgs.synth import ConstantBackground, MovingRect, SceneSpec, render


def _videos(rng, specs):
    """specs: list of (video_id, n_frames)."""
    return [(vid, random_rgb_source(rng, n, 12, 16)) for vid, n in specs]


def _tree_hash(root: Path) -> str:
    digest = hashlib.sha256()
    for path in sorted(root.rglob("*")):
        if path.is_file():
            digest.update(path.name.encode())
            digest.update(path.read_bytes())
    return digest.hexdigest()


class TestGeneratePretext:
    def test_record_count_law(self, tmp_path):
        rng = np.random.default_rng(0)
        videos = _videos(rng, [("a", 600)])
        res = generate_pretext(videos, LengthClassSet((30, 40, 50)),
                               resize=(16, 12), out_dir=tmp_path)
        assert len(res.manifest.records) == 20 + 15 + 12
        assert res.manifest.class_counts() == [20, 15, 12]

    def test_minimal_video(self, tmp_path):
        rng = np.random.default_rng(1)
        videos = _videos(rng, [("a", 50)])
        res = generate_pretext(videos, LengthClassSet((30, 40, 50)),
                               resize=(16, 12), out_dir=tmp_path)
        assert len(res.manifest.records) == 3

    def test_random_count_law(self, tmp_path):
        rng = np.random.default_rng(2)
        lengths = (5, 8, 13)
        videos = _videos(rng, [(f"v{i}", int(rng.integers(13, 80))) for i in range(6)])
        res = generate_pretext(videos, LengthClassSet(lengths), resize=(16, 12),
                               out_dir=tmp_path, split_ratio=0.5)
        expected = sum(n // l for _, n in [("", s.frame_count) for _, s in videos]
                       for l in lengths)
        assert len(res.manifest.records) == expected

    def test_short_video_skipped_generation_continues(self, tmp_path):
        rng = np.random.default_rng(3)
        videos = _videos(rng, [("ok", 60), ("short", 20)])
        res = generate_pretext(videos, LengthClassSet((30, 40, 50)),
                               resize=(16, 12), out_dir=tmp_path)
        assert [vid for vid, _ in res.skipped] == ["short"]
        assert {r.video_id for r in res.manifest.records} == {"ok"}

    def test_all_videos_too_short(self, tmp_path):
        rng = np.random.default_rng(4)
        with pytest.raises(VideoTooShort):
            generate_pretext(_videos(rng, [("a", 10)]), LengthClassSet((30, 40, 50)),
                             out_dir=tmp_path)

    def test_byte_identical_given_seed(self, tmp_path):
        for run in ("one", "two"):
            rng = np.random.default_rng(5)
            videos = _videos(rng, [(f"v{i}", 100) for i in range(4)])
            generate_pretext(videos, LengthClassSet((30, 40)), resize=(8, 8),
                             split_ratio=0.5, seed=9, out_dir=tmp_path / run)
        assert _tree_hash(tmp_path / "one") == _tree_hash(tmp_path / "two")

    def test_split_is_video_level(self, tmp_path):
        rng = np.random.default_rng(6)
        videos = _videos(rng, [(f"v{i}", 80) for i in range(4)])
        res = generate_pretext(videos, LengthClassSet((30, 40)), resize=(8, 8),
                               split_ratio=0.5, seed=1, out_dir=tmp_path)
        by_video = {}
        for r in res.manifest.records:
            by_video.setdefault(r.video_id, set()).add(r.split)
        assert all(len(s) == 1 for s in by_video.values())
        splits = [next(iter(s)) for s in by_video.values()]
        assert sorted(splits) == ["train", "train", "val", "val"]

    def test_label_soundness_bit_exact_recompute(self, tmp_path):
        spec = SceneSpec(width=32, height=20, n_frames=120,
                         background=ConstantBackground(30),
                         objects=(MovingRect.gray(2, 4, 6, 6, 220, vx=Fraction(1, 5)),))
        src = render(spec)
        res = generate_pretext([("vid", src)], LengthClassSet((30, 40, 50)),
                               resize=(24, 24), out_dir=tmp_path)
        for r in res.manifest.records[:6]:
            stored = load_dgs(tmp_path / r.path)
            seg = Segment(video_id=r.video_id, k=r.ordinal,
                          start=r.ordinal * r.length, len=r.length)
            recomputed = resize_dgs(synthesize_dgs(src, seg), 24, 24)
            assert np.array_equal(stored.packed(), recomputed.packed())

    def test_class_cap_equalizes(self, tmp_path):
        rng = np.random.default_rng(7)
        videos = _videos(rng, [("a", 600), ("b", 600)])
        res = generate_pretext(videos, LengthClassSet((30, 40, 50)), resize=(8, 8),
                               out_dir=tmp_path, class_cap=24)
        assert res.manifest.class_counts() == [24, 24, 24]
        # every referenced file exists, no orphan snippets beyond the manifest
        issues = validate_manifest(res.manifest, tmp_path)
        assert issues == []

    def test_duplicate_ids_rejected(self, tmp_path):
        rng = np.random.default_rng(8)
        videos = _videos(rng, [("a", 60), ("a", 60)])
        with pytest.raises(UsageError):
            generate_pretext(videos, LengthClassSet((30, 40)), out_dir=tmp_path)

    def test_threaded_matches_serial(self, tmp_path):
        for run, threads in (("serial", 1), ("pool", 4)):
            rng = np.random.default_rng(9)
            videos = _videos(rng, [(f"v{i}", 90) for i in range(4)])
            generate_pretext(videos, LengthClassSet((30, 40)), resize=(10, 10),
                             seed=3, out_dir=tmp_path / run, threads=threads)
        assert _tree_hash(tmp_path / "serial") == _tree_hash(tmp_path / "pool")

    def test_split_ratio_bounds(self, tmp_path):
        rng = np.random.default_rng(10)
        with pytest.raises(UsageError):
            generate_pretext(_videos(rng, [("a", 60)]), LengthClassSet((30, 40)),
                             split_ratio=1.0, out_dir=tmp_path)


class TestLengthClassSet:
    def test_validation(self):
        with pytest.raises(ValueError):
            LengthClassSet((30,))
        with pytest.raises(ValueError):
            LengthClassSet((30, 30))
        with pytest.raises(ValueError):
            LengthClassSet((50, 40))
        with pytest.raises(ValueError):
            LengthClassSet((1, 40))

    def test_class_index(self):
        classes = LengthClassSet((30, 40, 50))
        assert classes.class_index(40) == 1


class TestGenerateDownstream:
    def test_binary_labels(self, tmp_path):
        rng = np.random.default_rng(11)
        live = _videos(rng, [("l0", 120), ("l1", 120)])
        attack = _videos(rng, [("a0", 120), ("a1", 120)])
        res = generate_downstream(live, attack, length=40, resize=(8, 8),
                                  split_ratio=0.5, out_dir=tmp_path)
        m = res.manifest
        assert len(m.records) == 12
        assert m.class_counts() == [6, 6]
        assert m.classes == ("live", "attack")
        for r in m.records:
            expected = 0 if r.video_id.startswith("l") else 1
            assert r.class_index == expected

    def test_empty_attack_warns_but_emits(self, tmp_path):
        rng = np.random.default_rng(12)
        live = _videos(rng, [("l0", 80), ("l1", 80)])
        with pytest.warns(UnbalancedDataset):
            res = generate_downstream(live, [], length=40, resize=(8, 8),
                                      split_ratio=0.5, out_dir=tmp_path)
        assert res.manifest_path.is_file()
        assert res.manifest.class_counts() == [4, 0]


class TestManifestFormat:
    def _make(self, tmp_path):
        rng = np.random.default_rng(13)
        videos = _videos(rng, [("a", 70), ("b", 70)])
        return generate_pretext(videos, LengthClassSet((30, 35)), resize=(8, 8),
                                split_ratio=0.5, seed=2, out_dir=tmp_path)

    def test_round_trip(self, tmp_path):
        res = self._make(tmp_path)
        again = read_manifest(res.manifest_path)
        assert again == res.manifest

    def test_schema_version_first_line(self, tmp_path):
        res = self._make(tmp_path)
        first = res.manifest_path.read_text().splitlines()[0]
        assert first == "dgs-manifest 1"

    def test_malformed_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("not a manifest\n")
        with pytest.raises(UnsupportedFormat):
            read_manifest(path)
        res = self._make(tmp_path)
        text = res.manifest_path.read_text().replace("count ", "count x")
        path.write_text(text)
        with pytest.raises(UnsupportedFormat):
            read_manifest(path)

    def test_records_sorted_canonically(self, tmp_path):
        res = self._make(tmp_path)
        keys = [(r.video_id, r.length, r.ordinal) for r in res.manifest.records]
        assert keys == sorted(keys)


class TestValidateManifest:
    def _make(self, tmp_path):
        rng = np.random.default_rng(14)
        videos = _videos(rng, [("a", 70), ("b", 70)])
        return generate_pretext(videos, LengthClassSet((30, 35)), resize=(8, 8),
                                split_ratio=0.5, seed=2, out_dir=tmp_path)

    def test_fresh_manifest_clean(self, tmp_path):
        res = self._make(tmp_path)
        assert validate_manifest(res.manifest, tmp_path) == []

    def test_missing_file_reported(self, tmp_path):
        res = self._make(tmp_path)
        victim = tmp_path / res.manifest.records[0].path
        victim.unlink()
        issues = validate_manifest(res.manifest, tmp_path)
        assert len(issues) == 1
        assert issues[0].kind == "missing-file"

    def test_label_range_violation(self, tmp_path):
        res = self._make(tmp_path)
        bad = replace(res.manifest.records[0], class_index=2)
        manifest = replace(res.manifest,
                           records=(bad,) + res.manifest.records[1:])
        issues = validate_manifest(manifest, tmp_path)
        assert [i.kind for i in issues] == ["label-range"]

    def test_geometry_mismatch_reported(self, tmp_path):
        res = self._make(tmp_path)
        manifest = replace(res.manifest, resize=(9, 9))
        issues = validate_manifest(manifest, tmp_path)
        assert all(i.kind == "geometry" for i in issues)
        assert len(issues) == len(manifest.records)

    def test_split_overlap_reported(self, tmp_path):
        res = self._make(tmp_path)
        records = list(res.manifest.records)
        flipped = replace(records[0], split="val" if records[0].split == "train" else "train")
        manifest = replace(res.manifest, records=(flipped,) + tuple(records[1:]))
        issues = validate_manifest(manifest, tmp_path)
        assert "split-overlap" in {i.kind for i in issues}

    def test_write_read_validate_consistency(self, tmp_path):
        res = self._make(tmp_path)
        copy_path = tmp_path / "copy.txt"
        write_manifest(res.manifest, copy_path)
        assert copy_path.read_text() == res.manifest_path.read_text()
