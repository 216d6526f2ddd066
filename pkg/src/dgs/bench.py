"""Throughput harness: snippet encoding vs Horn-Schunck flow on equal inputs.

Frames are pre-decoded to memory and outputs stay in memory, so the timed
region is pure encode work. fps counts source frames consumed (both methods
consume the same stream), and headline numbers use the median over runs.
"""

from __future__ import annotations

import csv
import io
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from dgs.errors import EmptyInput, UsageError
from dgs.flow import HsParams, flow_to_snippet, horn_schunck
from dgs.snippets import SegmentSpec, segment_video, to_gray
from dgs.video_io import VideoSource


@dataclass(frozen=True)
class BenchResult:
    method: str  # "dgs" | "horn_schunck"
    input_desc: str
    frames_processed: int
    repetitions: int
    warmup: int
    per_rep_seconds: tuple[float, ...]
    params: dict = field(default_factory=dict)

    @property
    def median_seconds(self) -> float:
        return statistics.median(self.per_rep_seconds)

    @property
    def mean_seconds(self) -> float:
        return statistics.fmean(self.per_rep_seconds)

    @property
    def fps(self) -> float:
        return self.frames_processed / self.median_seconds


def _encode_dgs(frame_chunks: list[list[np.ndarray]], threads: int) -> list[np.ndarray]:
    def one(chunk: list[np.ndarray]) -> np.ndarray:
        grays = [to_gray(f) for f in chunk]
        total = grays[0].astype(np.int64)
        for g in grays[1:]:
            total += g
        n = len(grays)
        mean = ((2 * total + n) // (2 * n)).astype(np.uint8)
        return np.stack([grays[0], mean, grays[-1]], axis=-1)

    return _map(one, frame_chunks, threads)


def _encode_flow(frame_chunks: list[list[np.ndarray]], params: HsParams,
                 threads: int) -> list[np.ndarray]:
    def one(chunk: list[np.ndarray]) -> np.ndarray:
        grays = [to_gray(f) for f in chunk]
        flows = [horn_schunck(grays[i], grays[i + 1], params)
                 for i in range(len(grays) - 1)]
        return flow_to_snippet(flows)

    return _map(one, frame_chunks, threads)


def _map(fn, items, threads: int) -> list:
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def bench_method(method: str, src: VideoSource, reps: int = 5, warmup: int = 1,
                 x: int = 40, params: HsParams = HsParams(), threads: int = 1,
                 input_desc: str | None = None) -> BenchResult:
    """Time one encoder over the source, ``warmup`` discarded runs first.

    Every consecutive frame pair within a segment is solved on the flow path,
    the densest reading of a temporal-stream encoder.
    """
    if reps < 3:
        raise UsageError(f"reps must be >= 3, got {reps}")
    if warmup < 0:
        raise UsageError(f"warmup must be >= 0, got {warmup}")
    segments = segment_video(src, SegmentSpec(length_x=x, partial_policy="drop"))
    chunks = [
        [src.read_frame(seg.start + j).pixels for j in range(seg.len)]
        for seg in segments
    ]
    frames_processed = sum(len(c) for c in chunks)

    if method == "dgs":
        encode = lambda: _encode_dgs(chunks, threads)
        name = "dgs"
        echo = {"x": x, "threads": threads}
    elif method in ("flow", "horn_schunck"):
        encode = lambda: _encode_flow(chunks, params, threads)
        name = "horn_schunck"
        echo = {"x": x, "alpha": params.alpha, "iterations": params.iterations,
                "threads": threads}
    else:
        raise UsageError(f"unknown method {method!r}; expected dgs or flow")

    times = []
    for rep in range(warmup + reps):
        start = time.perf_counter()
        encode()
        elapsed = time.perf_counter() - start
        if rep >= warmup:
            times.append(elapsed)
    return BenchResult(
        method=name,
        input_desc=input_desc or src.origin,
        frames_processed=frames_processed,
        repetitions=reps,
        warmup=warmup,
        per_rep_seconds=tuple(times),
        params=echo,
    )


@dataclass(frozen=True)
class BenchReport:
    rows: list[dict]
    text: str
    csv: str


def bench_report(results: Sequence[BenchResult]) -> BenchReport:
    """Comparison table; ratio is fps relative to the slowest method per input."""
    if not results:
        raise EmptyInput("no benchmark results")
    slowest: dict[str, float] = {}
    for r in results:
        slowest[r.input_desc] = min(slowest.get(r.input_desc, float("inf")), r.fps)
    rows = []
    for r in results:
        rows.append({
            "method": r.method,
            "input": r.input_desc,
            "frames": r.frames_processed,
            "median_s": r.median_seconds,
            "mean_s": r.mean_seconds,
            "fps": r.fps,
            "ratio": r.fps / slowest[r.input_desc],
        })

    header = f"{'method':<14} {'input':<20} {'frames':>8} {'median_s':>10} {'fps':>12} {'ratio':>8}"
    lines = [header, "-" * len(header)]
    for row in rows:
        lines.append(
            f"{row['method']:<14} {row['input']:<20} {row['frames']:>8} "
            f"{row['median_s']:>10.4f} {row['fps']:>12.1f} {row['ratio']:>7.2f}x"
        )
    params = "; ".join(
        f"{r.method}: " + ", ".join(f"{k}={v}" for k, v in r.params.items())
        for r in results
    )
    lines.append(f"params: {params}")
    text = "\n".join(lines) + "\n"

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["method", "input", "frames", "median_s", "mean_s", "fps", "ratio"])
    for row in rows:
        writer.writerow([row["method"], row["input"], row["frames"],
                         repr(row["median_s"]), repr(row["mean_s"]),
                         repr(row["fps"]), repr(row["ratio"])])
    return BenchReport(rows=rows, text=text, csv=buf.getvalue())


def parse_report_csv(text: str) -> list[dict]:
    """Inverse of the CSV emitted by :func:`bench_report`."""
    reader = csv.DictReader(io.StringIO(text))
    rows = []
    for raw in reader:
        rows.append({
            "method": raw["method"],
            "input": raw["input"],
            "frames": int(raw["frames"]),
            "median_s": float(raw["median_s"]),
            "mean_s": float(raw["mean_s"]),
            "fps": float(raw["fps"]),
            "ratio": float(raw["ratio"]),
        })
    return rows
