"""Command-line entry point: encode, pretext, downstream, analyze, bench,
probe, validate, synth, provenance.

Exit codes: 0 full success, 1 failure or partial failure (skipped inputs are
listed on stderr), 2 usage error. Errors print as ``ERROR:<code>: reason``,
never as stack traces. All outputs land under --output.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from dgs import __version__
from dgs.bench import bench_method, bench_report
from dgs.errors import DgsError, UsageError
from dgs.flow import HsParams
from dgs.motion import DEFAULT_THRESHOLD, motion_report, report_to_csv, report_to_text
from dgs.pretext import (
    LengthClassSet,
    generate_downstream,
    generate_pretext,
    read_manifest,
    validate_manifest,
)
from dgs.probe import curve_to_csv, evaluate, load_model, save_model, train_probe
from dgs.snippets import (
    DEFAULT_SEGMENT_LENGTH,
    SegmentSpec,
    encode_video,
    load_dgs,
    sanitize_video_id,
    save_dgs,
    snippet_filename,
)
from dgs.synth import load_scene, render
from dgs.video_io import IMAGE_EXTENSIONS, open_source, write_image_dir, write_raw_rgb


def version_and_provenance() -> str:
    """Tool identity plus the fixed conventions that make outputs auditable."""
    import platform

    return "\n".join([
        f"dgs {__version__}",
        f"runtime: python {platform.python_version()}, numpy {np.__version__}",
        "grayscale: BT.601 luma 0.299/0.587/0.114, exact integer arithmetic",
        "rounding: half-away-from-zero, everywhere",
        "resize: bilinear, half-pixel centers, default 224x224",
        "y4m: BT.601 full-range YCbCr, nearest-neighbor chroma upsampling",
        "flow: Horn-Schunck, 4-neighbor averages, replicate edges, defaults alpha=1.0 iterations=100",
        f"segments: X={DEFAULT_SEGMENT_LENGTH} default, trailing partial dropped",
    ])


def _default_threads() -> int:
    env = os.environ.get("DGS_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"DGS_THREADS must be an integer, got {env!r}")
    return os.cpu_count() or 1


def _parse_resize(value: str | None) -> tuple[int, int] | None:
    if value is None:
        return None
    try:
        if "x" in value:
            w, h = value.split("x")
            resize = (int(w), int(h))
        else:
            resize = (int(value), int(value))
    except ValueError:
        raise UsageError(f"--resize expects N or WxH, got {value!r}")
    if resize[0] < 1 or resize[1] < 1:
        raise UsageError(f"--resize dimensions must be >= 1, got {value!r}")
    return resize


def _parse_classes(value: str) -> LengthClassSet:
    try:
        lengths = tuple(int(v) for v in value.split(","))
        return LengthClassSet(lengths)
    except ValueError as exc:
        raise UsageError(f"--classes: {exc}")


def _check_x(x: int) -> int:
    if x < 2:
        raise UsageError(f"--x must be >= 2 (first and last frame must differ), got {x}")
    return x


def _video_inputs(paths: list[str]) -> list[tuple[str, "object"]]:
    """Open sources and derive filename-safe video ids from path stems."""
    videos = []
    seen = set()
    for p in paths:
        vid = sanitize_video_id(Path(p).stem or Path(p).name)
        if vid in seen:
            raise UsageError(f"duplicate video id {vid!r} from input {p}")
        seen.add(vid)
        videos.append((vid, p))
    return videos


def _cmd_encode(args) -> int:
    x = _check_x(args.x)
    resize = _parse_resize(args.resize)
    spec = SegmentSpec(length_x=x, partial_policy="keep" if args.keep_partial else "drop")
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    failures = 0
    for vid, path in _video_inputs(args.inputs):
        try:
            src = open_source(path)
            images = encode_video(src, spec, video_id=vid, resize=resize)
        except DgsError as exc:
            print(f"ERROR:{exc.code}: {path}: {exc}", file=sys.stderr)
            failures += 1
            continue
        for img in images:
            seg = img.segment
            save_dgs(img, out / snippet_filename(vid, seg.k, seg.len, args.ext))
        print(f"{vid}: {len(images)} snippets")
    return 1 if failures else 0


def _cmd_pretext(args) -> int:
    classes = _parse_classes(args.classes)
    resize = _parse_resize(args.resize) or (224, 224)
    videos = []
    failures = 0
    for vid, path in _video_inputs(args.inputs):
        try:
            videos.append((vid, open_source(path)))
        except DgsError as exc:
            print(f"ERROR:{exc.code}: {path}: {exc}", file=sys.stderr)
            failures += 1
    if not videos:
        raise UsageError("no readable input videos")
    result = generate_pretext(
        videos, classes=classes, resize=resize, split_ratio=args.split,
        seed=args.seed, out_dir=args.output, class_cap=args.class_cap,
        threads=args.threads or _default_threads(), ext=args.ext,
    )
    for vid, reason in result.skipped:
        print(f"ERROR:VIDEO_TOO_SHORT: {vid}: {reason}", file=sys.stderr)
    counts = result.manifest.class_counts()
    for label, count in zip(result.manifest.classes, counts):
        print(f"class {label}: {count} records")
    print(f"manifest: {result.manifest_path}")
    return 1 if (failures or result.skipped) else 0


def _cmd_downstream(args) -> int:
    resize = _parse_resize(args.resize) or (224, 224)
    x = _check_x(args.x)

    def open_all(paths):
        opened, bad = [], 0
        for vid, path in _video_inputs(paths):
            try:
                opened.append((vid, open_source(path)))
            except DgsError as exc:
                print(f"ERROR:{exc.code}: {path}: {exc}", file=sys.stderr)
                bad += 1
        return opened, bad

    live, bad_live = open_all(args.live)
    attack, bad_attack = open_all(args.attack)
    if not live and not attack:
        raise UsageError("no readable input videos")
    result = generate_downstream(
        live, attack, length=x, resize=resize, split_ratio=args.split,
        seed=args.seed, out_dir=args.output, class_cap=args.class_cap,
        threads=args.threads or _default_threads(), ext=args.ext,
    )
    for vid, reason in result.skipped:
        print(f"ERROR:VIDEO_TOO_SHORT: {vid}: {reason}", file=sys.stderr)
    for label, count in zip(result.manifest.classes, result.manifest.class_counts()):
        print(f"class {label}: {count} records")
    print(f"manifest: {result.manifest_path}")
    return 1 if (bad_live or bad_attack or result.skipped) else 0


def _collect_rasters(inputs: list[str]) -> list[Path]:
    paths: list[Path] = []
    for p in inputs:
        path = Path(p)
        if path.is_dir():
            paths.extend(sorted(
                q for q in path.iterdir()
                if q.is_file() and q.suffix.lower() in IMAGE_EXTENSIONS
            ))
        else:
            paths.append(path)
    return paths


def _cmd_analyze(args) -> int:
    if args.threshold < 1:
        raise UsageError(f"--threshold must be >= 1, got {args.threshold}")
    paths = _collect_rasters(args.inputs)
    if not paths:
        raise UsageError("no snippet rasters found in inputs")
    imgs = [load_dgs(p) for p in paths]
    report = motion_report(imgs, threshold=args.threshold,
                           names=[str(p) for p in paths])
    print(report_to_text(report), end="")
    if args.output:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        (out / "motion_report.csv").write_text(report_to_csv(report))
        print(f"report: {out / 'motion_report.csv'}")
    return 0


def _cmd_bench(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in ("dgs", "flow"):
            raise UsageError(f"--methods accepts dgs,flow; got {m!r}")
    if args.reps < 3:
        raise UsageError(f"--reps must be >= 3, got {args.reps}")
    x = _check_x(args.x)
    try:
        params = HsParams(alpha=args.alpha, iterations=args.iterations)
    except ValueError as exc:
        raise UsageError(str(exc))
    src = open_source(args.input)
    results = [
        bench_method(m, src, reps=args.reps, warmup=args.warmup, x=x,
                     params=params, threads=args.threads,
                     input_desc=Path(args.input).name)
        for m in methods
    ]
    report = bench_report(results)
    print(report.text, end="")
    if args.output:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        (out / "bench.csv").write_text(report.csv)
        print(f"csv: {out / 'bench.csv'}")
    return 0


def _cmd_probe_train(args) -> int:
    manifest = read_manifest(args.manifest)
    base = Path(args.manifest).parent
    model, curve = train_probe(manifest, base, epochs=args.epochs,
                               lr=args.lr, seed=args.seed)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    save_model(model, out / "probe_model.txt")
    (out / "loss_curve.csv").write_text(curve_to_csv(curve))
    print(f"model: {out / 'probe_model.txt'}")
    final = curve[-1]
    print(f"final train_loss={final[1]:.6f} val_loss={final[2]:.6f}")
    if manifest.split_records("val"):
        result = evaluate(model, manifest, "val", base)
        print(f"val accuracy={result.accuracy:.4f} over {result.n} records")
    return 0


def _cmd_probe_eval(args) -> int:
    manifest = read_manifest(args.manifest)
    model = load_model(args.model)
    result = evaluate(model, manifest, args.split, Path(args.manifest).parent)
    print(f"accuracy={result.accuracy:.4f} mean_loss={result.mean_loss:.6f} n={result.n}")
    print("confusion (rows true, cols predicted):")
    for label, row in zip(model.class_labels, result.confusion):
        print(f"  {label}: " + " ".join(str(int(v)) for v in row))
    return 0


def _cmd_validate(args) -> int:
    manifest = read_manifest(args.manifest)
    issues = validate_manifest(manifest, Path(args.manifest).parent)
    for issue in issues:
        print(f"{issue.kind}: {issue.detail}")
    print(f"{len(issues)} issue(s) in {len(manifest.records)} records")
    return 1 if issues else 0


def _cmd_synth(args) -> int:
    scene = load_scene(args.scene)
    src = render(scene)
    out = Path(args.output)
    if args.format == "raw" or (args.format == "auto" and out.suffix == ".dgsraw"):
        out.parent.mkdir(parents=True, exist_ok=True)
        write_raw_rgb(out, src)
    else:
        write_image_dir(out, src)
    print(f"{scene.n_frames} frames {scene.width}x{scene.height} -> {out}")
    return 0


def _cmd_provenance(args) -> int:
    print(version_and_provenance())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dgs",
        description="Dynamic grayscale snippet encoding and motion tooling",
    )
    parser.add_argument("--version", action="version", version=f"dgs {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, threads_default=None):
        p.add_argument("-o", "--output", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=threads_default,
                       help="worker threads (default: logical cores, or DGS_THREADS)")
        p.add_argument("--ext", default="png", choices=("png", "ppm", "bmp"),
                       help="snippet raster format")

    p = sub.add_parser("encode", help="write one snippet per segment")
    p.add_argument("inputs", nargs="+", help="image dirs, .y4m, or .dgsraw files")
    p.add_argument("--x", type=int, default=DEFAULT_SEGMENT_LENGTH,
                   help="frames per segment (>= 2)")
    p.add_argument("--keep-partial", action="store_true",
                   help="keep a trailing segment of >= 2 frames")
    p.add_argument("--resize", default=None, help="target size N or WxH (default: native)")
    add_common(p)
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("pretext", help="generate a length-class pretext dataset")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--classes", default="30,40,50",
                   help="comma-separated segment lengths (default 30,40,50)")
    p.add_argument("--resize", default="224", help="target size N or WxH (default 224)")
    p.add_argument("--split", type=float, default=0.8, help="train fraction (0, 1)")
    p.add_argument("--seed", type=int, default=0, help="split/subsample seed")
    p.add_argument("--class-cap", type=int, default=None,
                   help="equalize classes by seeded subsampling to this count")
    add_common(p)
    p.set_defaults(func=_cmd_pretext)

    p = sub.add_parser("downstream", help="generate a live/attack dataset at one length")
    p.add_argument("--live", nargs="*", default=[], help="live video sources")
    p.add_argument("--attack", nargs="*", default=[], help="attack video sources")
    p.add_argument("--x", type=int, default=DEFAULT_SEGMENT_LENGTH)
    p.add_argument("--resize", default="224")
    p.add_argument("--split", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--class-cap", type=int, default=None)
    add_common(p)
    p.set_defaults(func=_cmd_downstream)

    p = sub.add_parser("analyze", help="chroma-motion report over snippet rasters")
    p.add_argument("inputs", nargs="+", help="snippet files or directories")
    p.add_argument("--threshold", type=int, default=DEFAULT_THRESHOLD)
    p.add_argument("-o", "--output", default=None, help="directory for motion_report.csv")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("bench", help="throughput: snippet encoding vs optical flow")
    p.add_argument("input", help="video source")
    p.add_argument("--methods", default="dgs,flow")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--x", type=int, default=DEFAULT_SEGMENT_LENGTH)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--threads", type=int, default=1,
                   help="data-parallel width for both methods (default 1: fair)")
    p.add_argument("-o", "--output", default=None, help="directory for bench.csv")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("probe", help="linear probe over snippet statistics")
    probe_sub = p.add_subparsers(dest="probe_command", required=True)
    pt = probe_sub.add_parser("train")
    pt.add_argument("--manifest", required=True)
    pt.add_argument("--epochs", type=int, default=500)
    pt.add_argument("--lr", type=float, default=0.1)
    pt.add_argument("--seed", type=int, default=0)
    pt.add_argument("-o", "--output", required=True)
    pt.set_defaults(func=_cmd_probe_train)
    pe = probe_sub.add_parser("eval")
    pe.add_argument("--manifest", required=True)
    pe.add_argument("--model", required=True)
    pe.add_argument("--split", default="val", choices=("train", "val"))
    pe.set_defaults(func=_cmd_probe_eval)

    p = sub.add_parser("validate", help="check a dataset manifest")
    p.add_argument("manifest")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("synth", help="render a scene file to a video")
    p.add_argument("scene", help="declarative scene file")
    p.add_argument("-o", "--output", required=True,
                   help=".dgsraw file or image directory")
    p.add_argument("--format", default="auto", choices=("auto", "raw", "imgdir"))
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("provenance", help="print version and fixed conventions")
    p.set_defaults(func=_cmd_provenance)

    return parser


def run(argv: list[str] | None = None) -> int:
    """Parse and execute; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"ERROR:USAGE: {exc}", file=sys.stderr)
        return 2
    except DgsError as exc:
        print(f"ERROR:{exc.code}: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help/--version/usage errors
        return int(exc.code or 0)
    except BrokenPipeError:
        return 1
    except Exception as exc:  # never a stack trace on the console
        print(f"ERROR:INTERNAL: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
