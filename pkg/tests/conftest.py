"""Shared test helpers and acceptance-suite reporting."""

from __future__ import annotations

import numpy as np
import pytest

from dgs.video_io import ArraySource


def random_rgb_source(rng: np.random.Generator, n_frames: int, height: int,
                      width: int) -> ArraySource:
    frames = rng.integers(0, 256, size=(n_frames, height, width, 3), dtype=np.int64)
    return ArraySource(frames.astype(np.uint8))


def constant_source(rng: np.random.Generator, n_frames: int, height: int,
                    width: int) -> ArraySource:
    """A video whose frames are all identical (random static content)."""
    frame = rng.integers(0, 256, size=(height, width, 3), dtype=np.int64).astype(np.uint8)
    return ArraySource(np.broadcast_to(frame, (n_frames, height, width, 3)).copy())


# ---------------------------------------------------------------------------
# Acceptance reporting: one PASS/FAIL line per criterion at the end of the run.

_acceptance_results: list[tuple[str, str]] = []


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    if "test_acceptance" not in report.nodeid:
        return
    _acceptance_results.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, outcome in _acceptance_results:
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}: {name}")
