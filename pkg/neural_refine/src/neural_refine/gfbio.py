"""Binary depth-map formats shared with the tracing package, re-implemented
here from their layout so this package has no dependency on it.

Both files start with a 4-byte magic and a little-endian header
``<II13d`` = width, height, origin(3), u(3), v(3), w(3), pitch, followed by
row-major float32 grids:

- ``CDM1``: one (h, w) depth grid, NaN marking missed pixels.
- ``GFB1``: (h, w) depth, (h, w, 3) normals in the frame (u, v, w) basis,
  (h, w) hit mask in [0, 1].
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_HDR = struct.Struct("<II13d")

# input value standing in for missed pixels after normalization; outside the
# [0, 1] band real depths occupy so the network can tell background apart
MISS_FILL = 1.5


class FormatError(Exception):
    pass


@dataclass(frozen=True, eq=False)
class Frame:
    """Screen placement of one view: orthonormal (u, v, w) and pixel pitch."""

    width: int
    height: int
    origin: np.ndarray
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    pitch: float

    def __post_init__(self):
        for name in ("origin", "u", "v", "w"):
            vec = np.asarray(getattr(self, name), dtype=np.float64)
            if vec.shape != (3,) or not np.all(np.isfinite(vec)):
                raise FormatError(f"frame {name} must be a finite 3-vector")
            object.__setattr__(self, name, vec)
        if self.width < 1 or self.height < 1:
            raise FormatError("frame dimensions must be positive")
        if not (np.isfinite(self.pitch) and self.pitch > 0):
            raise FormatError("frame pitch must be positive")
        for name in ("u", "v", "w"):
            if abs(np.linalg.norm(getattr(self, name)) - 1.0) > 1e-6:
                raise FormatError(f"frame {name} must be unit length")
        if (abs(self.u @ self.v) > 1e-6 or abs(self.u @ self.w) > 1e-6
                or abs(self.v @ self.w) > 1e-6):
            raise FormatError("frame axes must be orthogonal")

    @property
    def nominal_radius(self) -> float:
        """Bounding radius the screen was sized for, recovered from the
        resolution rule (two pixels of margin around the diameter)."""
        return 0.5 * (min(self.width, self.height) - 2) * self.pitch


def _frame_bytes(frame: Frame) -> bytes:
    return _HDR.pack(frame.width, frame.height, *frame.origin, *frame.u,
                     *frame.v, *frame.w, frame.pitch)


def _read_header(data: bytes, magic: bytes, path) -> tuple[Frame, int]:
    if len(data) < 4 + _HDR.size:
        raise FormatError(f"{path}: file too short")
    if data[:4] != magic:
        raise FormatError(f"{path}: bad magic {data[:4]!r}")
    vals = _HDR.unpack_from(data, 4)
    f = vals[2:]
    try:
        frame = Frame(vals[0], vals[1], np.array(f[0:3]), np.array(f[3:6]),
                      np.array(f[6:9]), np.array(f[9:12]), f[12])
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return frame, 4 + _HDR.size


def _read_grid(data, offset, shape, path):
    count = int(np.prod(shape))
    if len(data) < offset + 4 * count:
        raise FormatError(f"{path}: truncated grid data")
    arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
    return arr.reshape(shape).astype(np.float64), offset + 4 * count


def read_cdm1(path) -> tuple[Frame, np.ndarray]:
    data = Path(path).read_bytes()
    frame, off = _read_header(data, b"CDM1", path)
    depth, _ = _read_grid(data, off, (frame.height, frame.width), path)
    finite = np.isfinite(depth)
    if np.any(depth[finite] <= 0.0):
        raise FormatError(f"{path}: non-positive depth value")
    return frame, depth


def write_cdm1(path, frame: Frame, depth) -> None:
    depth = np.asarray(depth, dtype=np.float64)
    if depth.shape != (frame.height, frame.width):
        raise FormatError("depth grid does not match frame size")
    with open(path, "wb") as fh:
        fh.write(b"CDM1")
        fh.write(_frame_bytes(frame))
        fh.write(np.ascontiguousarray(depth, dtype="<f4").tobytes())


def read_gfb1(path) -> tuple[Frame, np.ndarray, np.ndarray, np.ndarray]:
    data = Path(path).read_bytes()
    frame, off = _read_header(data, b"GFB1", path)
    h, w = frame.height, frame.width
    depth, off = _read_grid(data, off, (h, w), path)
    normal, off = _read_grid(data, off, (h, w, 3), path)
    mask, _ = _read_grid(data, off, (h, w), path)
    if np.any(mask < -1e-6) or np.any(mask > 1.0 + 1e-6):
        raise FormatError(f"{path}: mask values outside [0, 1]")
    return frame, depth, normal, np.clip(mask, 0.0, 1.0)


def write_gfb1(path, frame: Frame, depth, normal, mask) -> None:
    h, w = frame.height, frame.width
    depth = np.asarray(depth, dtype=np.float64)
    normal = np.asarray(normal, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if depth.shape != (h, w) or normal.shape != (h, w, 3) or mask.shape != (h, w):
        raise FormatError("grid shapes do not match frame size")
    if np.any(mask < 0.0) or np.any(mask > 1.0):
        raise FormatError("mask values must lie in [0, 1]")
    with open(path, "wb") as fh:
        fh.write(b"GFB1")
        fh.write(_frame_bytes(frame))
        fh.write(np.ascontiguousarray(depth, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(normal, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(mask, dtype="<f4").tobytes())


def normalize_depth(depth, frame: Frame) -> np.ndarray:
    """Map metric depth into roughly [0, 1] using the frame's nominal
    bounding radius (screen standoff is twice the radius, so real surfaces
    sit between one and three radii); misses become MISS_FILL."""
    r = frame.nominal_radius
    if r <= 0:
        raise FormatError("frame too small to carry a bounding radius")
    depth = np.asarray(depth, dtype=np.float64)
    out = (depth - r) / (2.0 * r)
    out[~np.isfinite(depth)] = MISS_FILL
    return out


def denormalize_depth(norm_depth, frame: Frame) -> np.ndarray:
    r = frame.nominal_radius
    return r + 2.0 * r * np.asarray(norm_depth, dtype=np.float64)
