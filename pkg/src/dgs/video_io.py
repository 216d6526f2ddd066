"""Video ingestion: image directories, Y4M streams, and raw-RGB interchange.

Every other module consumes frames through :class:`VideoSource`, so decode
conventions are fixed here once: Y4M chroma is upsampled nearest-neighbor and
converted to RGB via BT.601 full-range with half-away-from-zero rounding.
"""

from __future__ import annotations

import os
import re
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from dgs.errors import (
    DecodeError,
    InconsistentGeometry,
    IndexOutOfRange,
    NotFound,
    UnsupportedFormat,
)
from dgs.rounding import round_to_u8

RAW_MAGIC = b"DGSRAW1"
RAW_HEADER = struct.Struct("<7sIII")  # magic, width, height, frame_count

IMAGE_EXTENSIONS = {".png", ".ppm", ".pnm", ".pgm", ".bmp", ".tif", ".tiff"}

# BT.601 full-range YCbCr -> RGB coefficients, derived from the luma weights.
_KR, _KG, _KB = 0.299, 0.587, 0.114
_CR_R = 2.0 * (1.0 - _KR)            # 1.402
_CB_B = 2.0 * (1.0 - _KB)            # 1.772
_CR_G = _CR_R * _KR / _KG            # 0.714136...
_CB_G = _CB_B * _KB / _KG            # 0.344136...


@dataclass(frozen=True)
class Frame:
    """One decoded RGB frame. ``pixels`` is a read-only (h, w, 3) uint8 array."""

    pixels: np.ndarray
    index: int

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.uint8)
    arr.setflags(write=False)
    return arr


class VideoSource:
    """A fixed-geometry stream of frames, readable by index.

    Sources are single-consumer; distinct sources may be read from different
    threads. Decoded frames are immutable.
    """

    width: int
    height: int
    frame_count: int
    fps_hint: Fraction | None
    origin: str

    def read_frame(self, i: int) -> Frame:
        if not 0 <= i < self.frame_count:
            raise IndexOutOfRange(
                f"frame index {i} outside [0, {self.frame_count})"
            )
        return Frame(pixels=_freeze(self._decode(i)), index=i)

    def _decode(self, i: int) -> np.ndarray:
        raise NotImplementedError

    def __len__(self) -> int:
        return self.frame_count

    def __iter__(self) -> Iterator[Frame]:
        for i in range(self.frame_count):
            yield self.read_frame(i)


class ArraySource(VideoSource):
    """In-memory source over a (n, h, w, 3) uint8 array."""

    def __init__(self, frames: np.ndarray, fps_hint: Fraction | None = None,
                 origin: str = "memory"):
        frames = np.ascontiguousarray(frames, dtype=np.uint8)
        if frames.ndim != 4 or frames.shape[3] != 3 or frames.shape[0] < 1:
            raise UnsupportedFormat("expected a (n, h, w, 3) frame array with n >= 1")
        self._frames = frames
        self.frame_count = frames.shape[0]
        self.height = frames.shape[1]
        self.width = frames.shape[2]
        self.fps_hint = fps_hint
        self.origin = origin

    def _decode(self, i: int) -> np.ndarray:
        return self._frames[i]


def _natural_key(stem: str) -> tuple:
    """Sort key treating digit runs numerically: frame2 < frame10."""
    parts = re.split(r"(\d+)", stem)
    return tuple((0, int(p)) if p.isdigit() else (1, p.lower()) for p in parts if p)


class ImageDirectorySource(VideoSource):
    """One lossless raster file per frame, ordered by natural filename sort."""

    def __init__(self, directory: Path):
        paths = [
            p for p in directory.iterdir()
            if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
        ]
        if not paths:
            raise NotFound(f"no image frames in directory {directory}")
        paths.sort(key=lambda p: _natural_key(p.stem))
        sizes = set()
        for p in paths:
            try:
                with Image.open(p) as img:
                    sizes.add(img.size)
            except (UnidentifiedImageError, OSError) as exc:
                raise DecodeError(f"cannot read image header {p}: {exc}") from exc
        if len(sizes) > 1:
            raise InconsistentGeometry(
                f"directory {directory} mixes frame sizes {sorted(sizes)}"
            )
        self._paths = paths
        (self.width, self.height), = sizes
        self.frame_count = len(paths)
        self.fps_hint = None
        self.origin = str(directory)

    def _decode(self, i: int) -> np.ndarray:
        path = self._paths[i]
        try:
            with Image.open(path) as img:
                return np.asarray(img.convert("RGB"), dtype=np.uint8)
        except (UnidentifiedImageError, OSError) as exc:
            raise DecodeError(f"cannot decode {path}: {exc}") from exc


class Y4mSource(VideoSource):
    """YUV4MPEG2 stream reader supporting 4:2:0 and 4:4:4 subsampling."""

    def __init__(self, path: Path):
        self._path = path
        with open(path, "rb") as fh:
            header = fh.readline()
            if not header.startswith(b"YUV4MPEG2"):
                raise UnsupportedFormat(f"{path} is not a YUV4MPEG2 stream")
            self.width, self.height, self.fps_hint, self._subsampling = (
                self._parse_header(header.decode("ascii", "replace"))
            )
            if self._subsampling == "420":
                if self.width % 2 or self.height % 2:
                    raise UnsupportedFormat(
                        "4:2:0 stream with odd dimensions "
                        f"{self.width}x{self.height}"
                    )
                self._chroma_shape = (self.height // 2, self.width // 2)
            else:
                self._chroma_shape = (self.height, self.width)
            self._frame_bytes = (
                self.width * self.height
                + 2 * self._chroma_shape[0] * self._chroma_shape[1]
            )
            self._offsets = self._scan_frames(fh, path)
        if not self._offsets:
            raise UnsupportedFormat(f"{path} contains no frames")
        self.frame_count = len(self._offsets)
        self.origin = str(path)

    @staticmethod
    def _parse_header(line: str) -> tuple[int, int, Fraction | None, str]:
        width = height = None
        fps: Fraction | None = None
        subsampling = "420"
        for token in line.split()[1:]:
            tag, value = token[0], token[1:]
            if tag == "W":
                width = int(value)
            elif tag == "H":
                height = int(value)
            elif tag == "F" and ":" in value:
                num, den = value.split(":")
                if int(den):
                    fps = Fraction(int(num), int(den))
            elif tag == "C":
                if value.startswith("420"):
                    subsampling = "420"
                elif value == "444":
                    subsampling = "444"
                else:
                    raise UnsupportedFormat(f"unsupported Y4M colorspace C{value}")
        if not width or not height or width < 1 or height < 1:
            raise UnsupportedFormat(f"Y4M header lacks geometry: {line.strip()!r}")
        return width, height, fps, subsampling

    def _scan_frames(self, fh, path: Path) -> list[int]:
        offsets = []
        while True:
            line = fh.readline()
            if not line:
                break
            if not line.startswith(b"FRAME"):
                raise DecodeError(f"{path}: expected FRAME marker, got {line[:20]!r}")
            offsets.append(fh.tell())
            fh.seek(self._frame_bytes, os.SEEK_CUR)
        return offsets

    def _decode(self, i: int) -> np.ndarray:
        with open(self._path, "rb") as fh:
            fh.seek(self._offsets[i])
            data = fh.read(self._frame_bytes)
        if len(data) != self._frame_bytes:
            raise DecodeError(f"{self._path}: truncated frame {i}")
        h, w = self.height, self.width
        ch, cw = self._chroma_shape
        y_end = h * w
        y = np.frombuffer(data, np.uint8, y_end).reshape(h, w)
        cb = np.frombuffer(data, np.uint8, ch * cw, y_end).reshape(ch, cw)
        cr = np.frombuffer(data, np.uint8, ch * cw, y_end + ch * cw).reshape(ch, cw)
        if self._subsampling == "420":
            cb = np.repeat(np.repeat(cb, 2, axis=0), 2, axis=1)[:h, :w]
            cr = np.repeat(np.repeat(cr, 2, axis=0), 2, axis=1)[:h, :w]
        return _ycbcr_to_rgb(y, cb, cr)


def _ycbcr_to_rgb(y: np.ndarray, cb: np.ndarray, cr: np.ndarray) -> np.ndarray:
    yf = y.astype(np.float64)
    cbf = cb.astype(np.float64) - 128.0
    crf = cr.astype(np.float64) - 128.0
    rgb = np.empty(y.shape + (3,), dtype=np.uint8)
    rgb[..., 0] = round_to_u8(yf + _CR_R * crf)
    rgb[..., 1] = round_to_u8(yf - _CB_G * cbf - _CR_G * crf)
    rgb[..., 2] = round_to_u8(yf + _CB_B * cbf)
    return rgb


class RawRgbSource(VideoSource):
    """Reader for the DGSRAW1 interchange format (see :func:`write_raw_rgb`)."""

    def __init__(self, path: Path):
        self._path = path
        size = path.stat().st_size
        with open(path, "rb") as fh:
            header = fh.read(RAW_HEADER.size)
        if len(header) < RAW_HEADER.size:
            raise UnsupportedFormat(f"{path} too short for a DGSRAW1 header")
        magic, width, height, count = RAW_HEADER.unpack(header)
        if magic != RAW_MAGIC:
            raise UnsupportedFormat(f"{path} lacks the DGSRAW1 magic")
        if width < 1 or height < 1 or count < 1:
            raise UnsupportedFormat(f"{path} declares empty geometry")
        expected = RAW_HEADER.size + count * width * height * 3
        if size < expected:
            raise DecodeError(
                f"{path}: {size} bytes, expected {expected} for {count} frames"
            )
        self.width, self.height, self.frame_count = width, height, count
        self.fps_hint = None
        self.origin = str(path)
        self._frame_bytes = width * height * 3

    def _decode(self, i: int) -> np.ndarray:
        with open(self._path, "rb") as fh:
            fh.seek(RAW_HEADER.size + i * self._frame_bytes)
            data = fh.read(self._frame_bytes)
        if len(data) != self._frame_bytes:
            raise DecodeError(f"{self._path}: truncated frame {i}")
        return np.frombuffer(data, np.uint8).reshape(self.height, self.width, 3)


def open_source(path: str | Path) -> VideoSource:
    """Open an image directory, Y4M file, or DGSRAW1 file as a frame source."""
    path = Path(path)
    if not path.exists():
        raise NotFound(f"no such source: {path}")
    if path.is_dir():
        return ImageDirectorySource(path)
    with open(path, "rb") as fh:
        magic = fh.read(9)
    if magic.startswith(b"YUV4MPEG2"):
        return Y4mSource(path)
    if magic.startswith(RAW_MAGIC):
        return RawRgbSource(path)
    raise UnsupportedFormat(f"{path} is neither YUV4MPEG2 nor DGSRAW1")


def read_frame(src: VideoSource, i: int) -> Frame:
    """Decode frame ``i``; repeated calls return bit-identical pixels."""
    return src.read_frame(i)


def write_raw_rgb(path: str | Path, frames: VideoSource | Sequence[np.ndarray]) -> None:
    """Write frames to the DGSRAW1 interchange format.

    Layout: little-endian header {magic "DGSRAW1", width u32, height u32,
    frame_count u32} followed by frame_count x height x width x 3 bytes.
    """
    if isinstance(frames, VideoSource):
        arrays = [frames.read_frame(i).pixels for i in range(frames.frame_count)]
    else:
        arrays = [np.ascontiguousarray(f, dtype=np.uint8) for f in frames]
    if not arrays:
        raise UnsupportedFormat("cannot write an empty DGSRAW1 stream")
    h, w = arrays[0].shape[:2]
    for f in arrays:
        if f.shape != (h, w, 3):
            raise InconsistentGeometry("frames of differing sizes in raw stream")
    with open(path, "wb") as fh:
        fh.write(RAW_HEADER.pack(RAW_MAGIC, w, h, len(arrays)))
        for f in arrays:
            fh.write(f.tobytes())


def write_image_dir(directory: str | Path, frames: VideoSource, ext: str = "png") -> None:
    """Dump a source as numbered image files (frame000000.png, ...)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i in range(frames.frame_count):
        arr = frames.read_frame(i).pixels
        Image.fromarray(arr, mode="RGB").save(directory / f"frame{i:06d}.{ext}")
