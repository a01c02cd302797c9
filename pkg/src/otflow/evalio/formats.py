"""Flow file codecs: Middlebury ``.flo`` and KITTI 16-bit PNG.

``.flo`` layout is the 20-byte-minimum classic: little-endian float32 magic
202021.25 ("PIEH"), int32 width, int32 height, then row-major interleaved
float32 ``(u, v)``. Round-trips are bit-exact for any field whose values are
float32-representable (everything read from a file is, by construction).

KITTI PNGs store ``flow * 64 + 2**15`` per component in a 16-bit 3-channel
image with the third channel as the validity bit; decoding inverts exactly
for flows on the 1/64-px grid with ``|flow| < 512``.
"""

from __future__ import annotations

import struct
from os import PathLike
from typing import BinaryIO

import cv2
import numpy as np

from otflow.core import FlowField, OcclusionMap, ValueOutOfRange

__all__ = [
    "FormatError",
    "FLO_MAGIC",
    "read_flo",
    "write_flo",
    "read_kitti_png",
    "write_kitti_png",
    "write_png8",
    "read_image",
]

FLO_MAGIC = 202021.25
KITTI_OFFSET = 2**15
KITTI_SCALE = 64.0
KITTI_MAX_ABS = 512.0


class FormatError(ValueError):
    """Malformed flow file (bad magic, truncation, out-of-range values)."""


def _open_for(source, mode: str):
    if isinstance(source, (str, PathLike)):
        return open(source, mode), True
    return source, False


def write_flo(f: FlowField, sink: str | PathLike | BinaryIO) -> None:
    """Write a full-resolution flow field in Middlebury ``.flo`` layout."""
    if f.scale != 1:
        raise ValueOutOfRange("write_flo: flow must be at scale 1")
    stream, owned = _open_for(sink, "wb")
    try:
        stream.write(struct.pack("<f", FLO_MAGIC))
        stream.write(struct.pack("<ii", f.width, f.height))
        stream.write(f.data.astype("<f4").tobytes())
    finally:
        if owned:
            stream.close()


def read_flo(source: str | PathLike | BinaryIO) -> FlowField:
    stream, owned = _open_for(source, "rb")
    try:
        header = stream.read(12)
        if len(header) < 12:
            raise FormatError("read_flo: truncated header")
        magic = struct.unpack("<f", header[:4])[0]
        if magic != FLO_MAGIC:
            raise FormatError(f"read_flo: bad magic {magic!r}")
        width, height = struct.unpack("<ii", header[4:12])
        if width <= 0 or height <= 0:
            raise FormatError(f"read_flo: bad dimensions {width}x{height}")
        payload = stream.read(width * height * 2 * 4)
        if len(payload) < width * height * 2 * 4:
            raise FormatError("read_flo: truncated payload")
        data = np.frombuffer(payload, dtype="<f4").reshape(height, width, 2)
        return FlowField(width, height, data.astype(np.float64), scale=1)
    finally:
        if owned:
            stream.close()


def write_kitti_png(f: FlowField, valid: OcclusionMap, sink: str | PathLike) -> None:
    """Encode flow + validity as a KITTI 16-bit PNG."""
    if f.scale != 1:
        raise ValueOutOfRange("write_kitti_png: flow must be at scale 1")
    if (valid.width, valid.height) != (f.width, f.height):
        raise ValueOutOfRange("write_kitti_png: validity mask size mismatch")
    if float(np.abs(f.data).max(initial=0.0)) >= KITTI_MAX_ABS:
        raise ValueOutOfRange(
            f"write_kitti_png: |flow| must stay below {KITTI_MAX_ABS} px"
        )
    stored = np.round(f.data * KITTI_SCALE + KITTI_OFFSET).astype(np.uint16)
    validity = (valid.data > 0.5).astype(np.uint16)
    rgb = np.dstack([stored[:, :, 0], stored[:, :, 1], validity])
    ok = cv2.imwrite(str(sink), rgb[:, :, ::-1])  # cv2 writes BGR
    if not ok:
        raise FormatError(f"write_kitti_png: could not write {sink}")


def read_kitti_png(source: str | PathLike) -> tuple[FlowField, OcclusionMap]:
    raw = cv2.imread(str(source), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FormatError(f"read_kitti_png: could not read {source}")
    if raw.ndim != 3 or raw.shape[2] != 3 or raw.dtype != np.uint16:
        raise FormatError("read_kitti_png: expected a 16-bit 3-channel PNG")
    rgb = raw[:, :, ::-1].astype(np.float64)
    flow = (rgb[:, :, :2] - KITTI_OFFSET) / KITTI_SCALE
    validity = (rgb[:, :, 2] > 0).astype(np.float64)
    h, w = raw.shape[:2]
    return FlowField(w, h, flow, scale=1), OcclusionMap(w, h, validity, scale=1)


def write_png8(image: np.ndarray, sink: str | PathLike) -> None:
    """Write a [0, 1] float image (gray or RGB) as an 8-bit PNG."""
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    u8 = np.round(arr * 255.0).astype(np.uint8)
    if u8.ndim == 3:
        u8 = u8[:, :, ::-1]  # cv2 writes BGR
    if not cv2.imwrite(str(sink), u8):
        raise FormatError(f"write_png8: could not write {sink}")


def read_image(source: str | PathLike) -> np.ndarray:
    """Read an image file into a [0, 1] float array (gray or RGB)."""
    raw = cv2.imread(str(source), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FormatError(f"read_image: could not read {source}")
    if raw.ndim == 3:
        raw = raw[:, :, ::-1]
    scale = 65535.0 if raw.dtype == np.uint16 else 255.0
    return raw.astype(np.float64) / scale
