"""Self-supervised pretext datasets and their manifests.

A pretext dataset encodes each video at several segment lengths; the class
label of a snippet is the position of its generating length in the class set.
The downstream variant encodes at one length and labels records live/attack.

Manifests are line-delimited text with a fixed field order, paths relative to
the manifest's directory, and are byte-identical across runs for equal inputs
and seed. Splits are assigned per video, never within one.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from dgs.errors import UnbalancedDataset, UnsupportedFormat, UsageError, VideoTooShort
from dgs.snippets import (
    Segment,
    SegmentSpec,
    DgsImage,
    load_dgs,
    resize_gray,
    save_dgs,
    snippet_filename,
    to_gray,
)
from dgs.video_io import VideoSource

SCHEMA_VERSION = 1
DEFAULT_LENGTH_CLASSES = (30, 40, 50)
MANIFEST_NAME = "manifest.txt"
_FIELDS = ("path", "video_id", "ordinal", "length", "class_index", "split")


@dataclass(frozen=True)
class LengthClassSet:
    """Ordered distinct segment lengths; class index == position in the list."""

    lengths: tuple[int, ...] = DEFAULT_LENGTH_CLASSES

    def __post_init__(self):
        if len(self.lengths) < 2:
            raise ValueError("need at least 2 length classes")
        if any(l < 2 for l in self.lengths):
            raise ValueError(f"all lengths must be >= 2: {self.lengths}")
        if any(b <= a for a, b in zip(self.lengths, self.lengths[1:])):
            raise ValueError(f"lengths must be strictly increasing: {self.lengths}")

    def class_index(self, length: int) -> int:
        return self.lengths.index(length)


@dataclass(frozen=True)
class PretextRecord:
    """One snippet file with its class label and split assignment."""

    path: str
    video_id: str
    ordinal: int
    length: int
    class_index: int
    split: str  # "train" | "val"


@dataclass(frozen=True)
class DatasetManifest:
    kind: str  # "pretext" | "downstream"
    classes: tuple[str, ...]
    lengths: tuple[int, ...]
    resize: tuple[int, int]
    split_seed: int
    split_ratio: float
    records: tuple[PretextRecord, ...]
    schema_version: int = SCHEMA_VERSION

    def split_records(self, split: str) -> list[PretextRecord]:
        return [r for r in self.records if r.split == split]

    def class_counts(self) -> list[int]:
        counts = [0] * len(self.classes)
        for r in self.records:
            counts[r.class_index] += 1
        return counts


@dataclass(frozen=True)
class GenerationResult:
    manifest: DatasetManifest
    manifest_path: Path
    skipped: tuple[tuple[str, str], ...]  # (video_id, reason)


def _assign_splits(video_ids: Sequence[str], split_ratio: float, seed: int) -> dict[str, str]:
    """Video-level train/val assignment by seeded shuffle."""
    if not 0.0 < split_ratio < 1.0:
        raise UsageError(f"split ratio must be in (0, 1), got {split_ratio}")
    n = len(video_ids)
    order = np.random.default_rng(seed).permutation(n)
    if n >= 2:
        n_train = min(max(int(math.floor(split_ratio * n + 0.5)), 1), n - 1)
    else:
        n_train = n
    train = {video_ids[i] for i in order[:n_train]}
    return {vid: ("train" if vid in train else "val") for vid in video_ids}


def _encode_one_video(video_id: str, src: VideoSource, lengths: Sequence[int],
                      resize: tuple[int, int], split: str, out_dir: Path,
                      wanted: set[tuple[str, int, int]] | None,
                      ext: str) -> list[PretextRecord]:
    """Encode one video at every length, writing snippet rasters.

    ``wanted`` restricts which (video_id, length, ordinal) snippets are
    materialized (used by the per-class cap); None means all.
    """
    grays = [to_gray(src.read_frame(i)) for i in range(src.frame_count)]
    records = []
    for ci, length in enumerate(lengths):
        for k in range(src.frame_count // length):
            if wanted is not None and (video_id, length, k) not in wanted:
                continue
            start = k * length
            chunk = grays[start:start + length]
            total = np.zeros(chunk[0].shape, dtype=np.int64)
            for g in chunk:
                total += g
            mean = ((2 * total + length) // (2 * length)).astype(np.uint8)
            img = DgsImage(
                r=resize_gray(chunk[0], *resize),
                g=resize_gray(mean, *resize),
                b=resize_gray(chunk[-1], *resize),
                segment=Segment(video_id=video_id, k=k, start=start, len=length),
            )
            name = snippet_filename(video_id, k, length, ext)
            save_dgs(img, out_dir / name)
            records.append(PretextRecord(
                path=name, video_id=video_id, ordinal=k, length=length,
                class_index=ci, split=split,
            ))
    return records


def _plan_records(video_id: str, frame_count: int, lengths: Sequence[int],
                  split: str, ext: str) -> list[PretextRecord]:
    records = []
    for ci, length in enumerate(lengths):
        for k in range(frame_count // length):
            records.append(PretextRecord(
                path=snippet_filename(video_id, k, length, ext),
                video_id=video_id, ordinal=k, length=length,
                class_index=ci, split=split,
            ))
    return records


def _apply_class_cap(records: list[PretextRecord], n_classes: int,
                     cap: int, seed: int) -> list[PretextRecord]:
    """Equalize class counts by seeded subsampling down to ``cap`` per class."""
    rng = np.random.default_rng([seed, 17])
    keep: set[int] = set()
    for ci in range(n_classes):
        idx = [i for i, r in enumerate(records) if r.class_index == ci]
        if len(idx) > cap:
            chosen = rng.choice(len(idx), size=cap, replace=False)
            keep.update(idx[j] for j in sorted(chosen))
        else:
            keep.update(idx)
    return [r for i, r in enumerate(records) if i in keep]


def _record_sort_key(r: PretextRecord):
    return (r.video_id, r.length, r.ordinal)


def _generate(videos: Sequence[tuple[str, VideoSource]], kind: str,
              classes: tuple[str, ...], lengths: tuple[int, ...],
              labels_by_video: dict[str, int] | None,
              resize: tuple[int, int], split_ratio: float, seed: int,
              out_dir: str | Path, class_cap: int | None, threads: int,
              ext: str) -> GenerationResult:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ids = [vid for vid, _ in videos]
    if len(set(ids)) != len(ids):
        raise UsageError("duplicate video ids in input list")

    min_frames = max(lengths)
    eligible: list[tuple[str, VideoSource]] = []
    skipped: list[tuple[str, str]] = []
    for vid, src in videos:
        if src.frame_count < min_frames:
            skipped.append((vid, f"{src.frame_count} frames < required {min_frames}"))
        else:
            eligible.append((vid, src))
    if not eligible:
        raise VideoTooShort("no input video is long enough for the requested lengths")

    splits = _assign_splits([vid for vid, _ in eligible], split_ratio, seed)

    # Plan records first so the per-class cap can pick survivors before
    # any pixel work happens.
    planned: list[PretextRecord] = []
    for vid, src in eligible:
        per_video_lengths = lengths
        rec = _plan_records(vid, src.frame_count, per_video_lengths, splits[vid], ext)
        if labels_by_video is not None:
            rec = [replace(r, class_index=labels_by_video[vid]) for r in rec]
        planned.extend(rec)
    if class_cap is not None:
        planned = _apply_class_cap(planned, len(classes), class_cap, seed)
    wanted = {(r.video_id, r.length, r.ordinal) for r in planned}
    by_key = {(r.video_id, r.length, r.ordinal): r for r in planned}

    def work(item):
        vid, src = item
        return _encode_one_video(vid, src, lengths, resize, splits[vid],
                                 out_dir, wanted, ext)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(work, eligible))
    else:
        chunks = [work(item) for item in eligible]

    records = []
    for chunk in chunks:
        for r in chunk:
            records.append(by_key[(r.video_id, r.length, r.ordinal)])
    records.sort(key=_record_sort_key)

    manifest = DatasetManifest(
        kind=kind, classes=classes, lengths=lengths, resize=resize,
        split_seed=seed, split_ratio=split_ratio, records=tuple(records),
    )
    manifest_path = out_dir / MANIFEST_NAME
    write_manifest(manifest, manifest_path)
    return GenerationResult(manifest=manifest, manifest_path=manifest_path,
                            skipped=tuple(skipped))


def generate_pretext(videos: Sequence[tuple[str, VideoSource]],
                     classes: LengthClassSet = LengthClassSet(),
                     resize: tuple[int, int] = (224, 224),
                     split_ratio: float = 0.8, seed: int = 0,
                     out_dir: str | Path = "pretext_out",
                     class_cap: int | None = None, threads: int = 1,
                     ext: str = "png") -> GenerationResult:
    """Encode every video at every class length; labels are length classes.

    Videos shorter than max(lengths) are skipped and reported in
    ``result.skipped``; generation continues for the rest.
    """
    return _generate(
        videos, kind="pretext",
        classes=tuple(str(l) for l in classes.lengths),
        lengths=classes.lengths, labels_by_video=None,
        resize=resize, split_ratio=split_ratio, seed=seed, out_dir=out_dir,
        class_cap=class_cap, threads=threads, ext=ext,
    )


def generate_downstream(live: Sequence[tuple[str, VideoSource]],
                        attack: Sequence[tuple[str, VideoSource]],
                        length: int = 40,
                        resize: tuple[int, int] = (224, 224),
                        split_ratio: float = 0.8, seed: int = 0,
                        out_dir: str | Path = "downstream_out",
                        class_cap: int | None = None, threads: int = 1,
                        ext: str = "png") -> GenerationResult:
    """Single-length encoding with binary labels {live=0, attack=1}."""
    SegmentSpec(length_x=length)  # bounds check
    labels = {vid: 0 for vid, _ in live}
    labels.update({vid: 1 for vid, _ in attack})
    if len(labels) != len(live) + len(attack):
        raise UsageError("a video id appears in both live and attack lists")
    videos = list(live) + list(attack)
    result = _generate(
        videos, kind="downstream", classes=("live", "attack"),
        lengths=(length,), labels_by_video=labels,
        resize=resize, split_ratio=split_ratio, seed=seed, out_dir=out_dir,
        class_cap=class_cap, threads=threads, ext=ext,
    )
    counts = result.manifest.class_counts()
    if 0 in counts:
        empty = result.manifest.classes[counts.index(0)]
        warnings.warn(f"class {empty!r} has no records", UnbalancedDataset)
    return result


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    lines = [
        f"dgs-manifest {manifest.schema_version}",
        f"kind {manifest.kind}",
        "classes " + ",".join(manifest.classes),
        "lengths " + ",".join(str(l) for l in manifest.lengths),
        f"resize {manifest.resize[0]}x{manifest.resize[1]}",
        f"split_seed {manifest.split_seed}",
        f"split_ratio {manifest.split_ratio!r}",
        f"count {len(manifest.records)}",
        "fields " + " ".join(_FIELDS),
    ]
    for r in manifest.records:
        lines.append("\t".join([r.path, r.video_id, str(r.ordinal),
                                str(r.length), str(r.class_index), r.split]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith("dgs-manifest "):
        raise UnsupportedFormat(f"{path} is not a dgs manifest")
    header: dict[str, str] = {}
    body_start = None
    for i, line in enumerate(lines[1:], start=1):
        key, _, value = line.partition(" ")
        header[key] = value
        if key == "fields":
            body_start = i + 1
            break
    try:
        version = int(lines[0].split()[1])
        kind = header["kind"]
        classes = tuple(header["classes"].split(","))
        lengths = tuple(int(v) for v in header["lengths"].split(","))
        w, h = header["resize"].split("x")
        resize = (int(w), int(h))
        seed = int(header["split_seed"])
        ratio = float(header["split_ratio"])
        count = int(header["count"])
    except (KeyError, ValueError) as exc:
        raise UnsupportedFormat(f"{path}: malformed manifest header: {exc}") from exc
    if body_start is None or header.get("fields") != " ".join(_FIELDS):
        raise UnsupportedFormat(f"{path}: missing or unexpected fields line")
    records = []
    for line in lines[body_start:]:
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != len(_FIELDS):
            raise UnsupportedFormat(f"{path}: malformed record line {line!r}")
        records.append(PretextRecord(
            path=parts[0], video_id=parts[1], ordinal=int(parts[2]),
            length=int(parts[3]), class_index=int(parts[4]), split=parts[5],
        ))
    if len(records) != count:
        raise UnsupportedFormat(f"{path}: header says {count} records, found {len(records)}")
    return DatasetManifest(kind=kind, classes=classes, lengths=lengths,
                           resize=resize, split_seed=seed, split_ratio=ratio,
                           records=tuple(records), schema_version=version)


@dataclass(frozen=True)
class ValidationIssue:
    kind: str  # missing-file | unreadable | geometry | label-range | split-value | split-overlap
    detail: str


def validate_manifest(manifest: DatasetManifest, base_dir: str | Path) -> list[ValidationIssue]:
    """Check every manifest invariant; an empty list means all hold."""
    base = Path(base_dir)
    issues: list[ValidationIssue] = []
    split_by_video: dict[str, set[str]] = {}
    for r in manifest.records:
        if r.split not in ("train", "val"):
            issues.append(ValidationIssue("split-value", f"{r.path}: split {r.split!r}"))
        split_by_video.setdefault(r.video_id, set()).add(r.split)
        if not 0 <= r.class_index < len(manifest.classes):
            issues.append(ValidationIssue(
                "label-range",
                f"{r.path}: class_index {r.class_index} outside [0, {len(manifest.classes)})",
            ))
        elif manifest.kind == "pretext" and r.length != manifest.lengths[r.class_index]:
            issues.append(ValidationIssue(
                "label-range",
                f"{r.path}: length {r.length} != class length "
                f"{manifest.lengths[r.class_index]}",
            ))
        full = base / r.path
        if not full.is_file():
            issues.append(ValidationIssue("missing-file", r.path))
            continue
        try:
            img = load_dgs(full)
        except Exception as exc:
            issues.append(ValidationIssue("unreadable", f"{r.path}: {exc}"))
            continue
        if (img.width, img.height) != manifest.resize:
            issues.append(ValidationIssue(
                "geometry",
                f"{r.path}: {img.width}x{img.height} != declared "
                f"{manifest.resize[0]}x{manifest.resize[1]}",
            ))
    for vid, splits in sorted(split_by_video.items()):
        if len(splits) > 1:
            issues.append(ValidationIssue("split-overlap", f"video {vid} in both splits"))
    return issues
