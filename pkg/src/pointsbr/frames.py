"""Per-view grid containers: the coarse depth map produced by ray-tube
tracing and the refined frame buffer (depth + normal + hit mask).

Grids are indexed [row j, column i] matching ScreenFrame.pixel_origins.
Missing pixels carry NaN depth ("MISS"); normals are stored in the frame's
local (u, v, w) basis with the w component positive toward the sensor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatchError, InvalidFieldError
from .geometry import ScreenFrame

MISS = np.nan


def is_miss(depth) -> np.ndarray:
    return np.isnan(depth)


@dataclass(frozen=True)
class CoarseDepthMap:
    frame: ScreenFrame
    depth: np.ndarray  # (h, w) float64, NaN = miss

    def __post_init__(self):
        d = np.ascontiguousarray(np.asarray(self.depth, dtype=np.float64))
        if d.shape != (self.frame.height, self.frame.width):
            raise GridMismatchError(
                f"depth grid {d.shape} does not match frame "
                f"{(self.frame.height, self.frame.width)}")
        finite = np.isfinite(d)
        if np.any(d[finite] <= 0.0):
            raise InvalidFieldError("coarse depth must be positive where defined")
        object.__setattr__(self, "depth", d)
        d.setflags(write=False)

    @property
    def hit_mask(self) -> np.ndarray:
        return np.isfinite(self.depth)

    @property
    def n_hits(self) -> int:
        return int(self.hit_mask.sum())


@dataclass(frozen=True)
class Gfb:
    """Refined frame buffer: depth (m), unit normal in the (u, v, w) basis,
    and a hit-probability mask in [0, 1]."""

    frame: ScreenFrame
    depth: np.ndarray   # (h, w) float64
    normal: np.ndarray  # (h, w, 3) float64, frame basis
    mask: np.ndarray    # (h, w) float64 in [0, 1]

    def __post_init__(self):
        h, w = self.frame.height, self.frame.width
        d = np.ascontiguousarray(np.asarray(self.depth, dtype=np.float64))
        n = np.ascontiguousarray(np.asarray(self.normal, dtype=np.float64))
        m = np.ascontiguousarray(np.asarray(self.mask, dtype=np.float64))
        if d.shape != (h, w) or m.shape != (h, w) or n.shape != (h, w, 3):
            raise GridMismatchError(
                f"grid shapes {d.shape}/{n.shape}/{m.shape} do not match frame {(h, w)}")
        if np.any(m < 0.0) or np.any(m > 1.0):
            raise InvalidFieldError("mask values must lie in [0, 1]")
        hit = m >= 0.5
        if np.any(hit & ~np.isfinite(d)):
            raise InvalidFieldError("masked pixels must carry finite depth")
        if np.any(hit):
            norms = np.linalg.norm(n[hit], axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-6):
                raise InvalidFieldError("masked normals must be unit length")
            if np.any(n[hit][:, 2] <= 0.0):
                raise InvalidFieldError("masked normals must face the sensor (w > 0)")
        for name, arr in (("depth", d), ("normal", n), ("mask", m)):
            object.__setattr__(self, name, arr)
            arr.setflags(write=False)

    @property
    def hit_mask(self) -> np.ndarray:
        return (self.mask >= 0.5) & np.isfinite(self.depth)

    @property
    def n_hits(self) -> int:
        return int(self.hit_mask.sum())


def world_normals(g: Gfb, rows=None, cols=None) -> np.ndarray:
    """Rotate stored (u, v, w) normal components into world coordinates."""
    f = g.frame
    if rows is None:
        comp = g.normal.reshape(-1, 3)
    else:
        comp = g.normal[rows, cols]
    return (comp[:, 0:1] * f.u[None, :]
            + comp[:, 1:2] * f.v[None, :]
            + comp[:, 2:3] * f.w[None, :])


def world_positions(g: Gfb, rows, cols) -> np.ndarray:
    """Unproject pixel depths to world hit positions along -w."""
    f = g.frame
    origins = f.pixel_origins()[rows, cols]
    return origins - g.depth[rows, cols][:, None] * f.w[None, :]
