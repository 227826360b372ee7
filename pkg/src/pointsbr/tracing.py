"""Screen-based point-ray intersection: ray-tube tracing of a point cloud
into a coarse depth map, depth-to-normal conversion, and the pluggable
refinement stage that turns coarse maps into dense frame buffers.
"""

from __future__ import annotations

import abc
import subprocess
import tempfile
import warnings
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import BackendError, FileFormatError
from .frames import MISS, CoarseDepthMap, Gfb
from .geometry import PointCloud, ScreenFrame

K_TOP_DEFAULT = 8

# radius-2 disk structuring element for mask closing
_DISK2 = (np.add.outer(np.arange(-2, 3) ** 2, np.arange(-2, 3) ** 2) <= 4)


def trace_coarse(cloud: PointCloud, frame: ScreenFrame, k_top: int = K_TOP_DEFAULT,
                 rel_radius: float = 2.0) -> CoarseDepthMap:
    """Trace one ray tube per pixel through the cloud.

    Tube radius is rel_radius * pitch.  Per pixel: of the points inside the
    tube, keep the k_top with the smallest perpendicular distance to the
    central ray (ties by smaller Euclidean distance to the tube origin, then
    input index) and select from those the one closest to the tube origin;
    depth is that Euclidean distance.  Pixels with empty tubes get NaN.

    Implemented by scattering points into the pixel windows they can touch
    rather than walking a tree per pixel; the selected sets are identical.
    """
    if k_top < 1:
        raise ValueError("k_top must be >= 1")
    if not rel_radius > 0:
        raise ValueError("rel_radius must be positive")
    f = frame
    delta = rel_radius * f.pitch
    pts = cloud.points
    rel = pts - f.origin
    coord_u = rel @ f.u
    coord_v = rel @ f.v
    advance = -(rel @ f.w)

    depth = np.full((f.height, f.width), MISS)
    ahead = advance > 0.0
    if not np.any(ahead):
        return CoarseDepthMap(f, depth)
    coord_u = coord_u[ahead]
    coord_v = coord_v[ahead]
    advance = advance[ahead]
    src_idx = np.flatnonzero(ahead)

    # fractional pixel position of every point and its candidate window
    half_w = (f.width - 1) / 2.0
    half_h = (f.height - 1) / 2.0
    ci = coord_u / f.pitch + half_w
    cj = coord_v / f.pitch + half_h
    n_win = int(np.floor(2.0 * rel_radius)) + 2
    base_i = np.floor(ci - rel_radius).astype(np.int64)
    base_j = np.floor(cj - rel_radius).astype(np.int64)

    offs = np.arange(n_win, dtype=np.int64)
    cand_i = (base_i[:, None] + offs[None, :])[:, :, None]
    cand_j = (base_j[:, None] + offs[None, :])[:, None, :]
    cand_i = np.broadcast_to(cand_i, (ci.size, n_win, n_win)).reshape(-1)
    cand_j = np.broadcast_to(cand_j, (ci.size, n_win, n_win)).reshape(-1)
    pt = np.repeat(np.arange(ci.size), n_win * n_win)

    inb = (cand_i >= 0) & (cand_i < f.width) & (cand_j >= 0) & (cand_j < f.height)
    cand_i = cand_i[inb]
    cand_j = cand_j[inb]
    pt = pt[inb]

    du = coord_u[pt] - (cand_i - half_w) * f.pitch
    dv = coord_v[pt] - (cand_j - half_h) * f.pitch
    perp2 = du * du + dv * dv
    inside = perp2 < delta * delta
    if not np.any(inside):
        return CoarseDepthMap(f, depth)
    cand_i = cand_i[inside]
    cand_j = cand_j[inside]
    pt = pt[inside]
    perp2 = perp2[inside]
    dist = np.sqrt(perp2 + advance[pt] ** 2)
    pixel = cand_j * f.width + cand_i
    orig = src_idx[pt]

    # top-k by perpendicular distance, then the closest-to-origin survivor
    order = np.lexsort((orig, dist, perp2, pixel))
    pixel = pixel[order]
    dist = dist[order]
    orig = orig[order]
    newgrp = np.empty(pixel.size, dtype=bool)
    newgrp[0] = True
    newgrp[1:] = pixel[1:] != pixel[:-1]
    grp_start = np.maximum.accumulate(np.where(newgrp, np.arange(pixel.size), 0))
    rank = np.arange(pixel.size) - grp_start
    keep = rank < k_top
    pixel = pixel[keep]
    dist = dist[keep]
    orig = orig[keep]

    order2 = np.lexsort((orig, dist, pixel))
    pixel = pixel[order2]
    dist = dist[order2]
    first = np.empty(pixel.size, dtype=bool)
    first[0] = True
    first[1:] = pixel[1:] != pixel[:-1]
    depth.reshape(-1)[pixel[first]] = dist[first]
    return CoarseDepthMap(f, depth)


def depth_to_normals(depth: np.ndarray, frame: ScreenFrame,
                     valid: np.ndarray | None = None) -> np.ndarray:
    """Unit normals (frame basis) of the surface sampled by a depth grid.

    The surface point of pixel (row, col) is o + col*pitch*u + row*pitch*v
    - depth*w, so the tangent cross product gives n ~ (dd/du, dd/dv, 1).
    Central differences where both neighbors are valid, one-sided at valid
    borders, zero gradient (normal = w) where no neighbor helps.
    """
    depth = np.asarray(depth, dtype=np.float64)
    if valid is None:
        valid = np.isfinite(depth)
    else:
        valid = np.asarray(valid, dtype=bool) & np.isfinite(depth)
    grad_u = _masked_gradient(depth, valid, axis=1) / frame.pitch
    grad_v = _masked_gradient(depth, valid, axis=0) / frame.pitch
    n = np.empty(depth.shape + (3,))
    n[..., 0] = grad_u
    n[..., 1] = grad_v
    n[..., 2] = 1.0
    n /= np.sqrt(grad_u ** 2 + grad_v ** 2 + 1.0)[..., None]
    return n


def _masked_gradient(d: np.ndarray, valid: np.ndarray, axis: int) -> np.ndarray:
    """Per-pixel derivative in grid units along one axis, ignoring invalid
    neighbors (central / one-sided / zero)."""
    d0 = np.where(valid, d, 0.0)
    prev_d = np.zeros_like(d0)
    next_d = np.zeros_like(d0)
    prev_ok = np.zeros_like(valid)
    next_ok = np.zeros_like(valid)
    sl_all = [slice(None), slice(None)]
    sl_lo, sl_hi = list(sl_all), list(sl_all)
    sl_lo[axis] = slice(None, -1)
    sl_hi[axis] = slice(1, None)
    lo, hi = tuple(sl_lo), tuple(sl_hi)
    prev_d[hi] = d0[lo]
    prev_ok[hi] = valid[lo]
    next_d[lo] = d0[hi]
    next_ok[lo] = valid[hi]

    grad = np.zeros_like(d0)
    both = prev_ok & next_ok & valid
    only_next = valid & next_ok & ~prev_ok
    only_prev = valid & prev_ok & ~next_ok
    grad[both] = 0.5 * (next_d[both] - prev_d[both])
    grad[only_next] = next_d[only_next] - d0[only_next]
    grad[only_prev] = d0[only_prev] - prev_d[only_prev]
    return grad


def _nanmedian3(d: np.ndarray) -> np.ndarray:
    """3x3 median over the finite values in each window; NaN when none."""
    padded = np.pad(d, 1, mode="constant", constant_values=np.nan)
    win = np.lib.stride_tricks.sliding_window_view(padded, (3, 3))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=RuntimeWarning)
        return np.nanmedian(win.reshape(d.shape + (9,)), axis=2)


def refine_classical(coarse: CoarseDepthMap) -> Gfb:
    """Deterministic refinement baseline.

    Mask: radius-2 morphological closing of the hit set plus filling of fully
    enclosed holes.  Depth: two 3x3 median passes over the hits, then masked
    pixels that had no depth are filled by iterative 8-neighbor averaging
    until the largest change drops below 1e-4 m.  Normals follow from the
    refined depth.
    """
    frame = coarse.frame
    hits = coarse.hit_mask
    if not np.any(hits):
        h, w = frame.height, frame.width
        normal = np.zeros((h, w, 3))
        normal[..., 2] = 1.0
        return Gfb(frame, np.full((h, w), MISS), normal, np.zeros((h, w)))

    padded = np.pad(hits, 2)
    closed = ndimage.binary_closing(padded, structure=_DISK2)[2:-2, 2:-2]
    mask = ndimage.binary_fill_holes(closed)

    depth = np.where(hits, coarse.depth, MISS)
    for _ in range(2):
        sm = _nanmedian3(depth)
        depth = np.where(hits, sm, MISS)

    fill = mask & ~np.isfinite(depth)
    if np.any(fill):
        depth = _fill_holes(depth, fill)

    normals = depth_to_normals(depth, frame, valid=mask)
    depth_out = np.where(mask, depth, MISS)
    return Gfb(frame, depth_out, normals, mask.astype(np.float64))


def _fill_holes(depth: np.ndarray, fill: np.ndarray, tol: float = 1e-4,
                max_iter: int = 10000) -> np.ndarray:
    mean_kernel = np.ones((3, 3))
    mean_kernel[1, 1] = 0.0
    known = np.isfinite(depth) & ~fill
    cur = np.where(known, depth, 0.0)
    have = known.astype(np.float64)
    # seed unknowns with the global mean so isolated holes still converge
    seed = float(depth[known].mean()) if np.any(known) else 0.0
    cur[fill] = seed
    have_f = have + fill.astype(np.float64)
    for _ in range(max_iter):
        s = ndimage.convolve(cur * have_f, mean_kernel, mode="constant")
        c = ndimage.convolve(have_f, mean_kernel, mode="constant")
        with np.errstate(invalid="ignore"):
            avg = s / c
        new = np.where(fill & (c > 0), avg, cur)
        change = np.max(np.abs(new[fill] - cur[fill])) if np.any(fill) else 0.0
        cur = new
        if change < tol:
            break
    out = depth.copy()
    out[fill] = cur[fill]
    return out


class RefinerBackend(abc.ABC):
    """Maps a coarse depth map to a dense frame buffer on the same frame."""

    kind: str = "abstract"

    @abc.abstractmethod
    def refine(self, coarse: CoarseDepthMap) -> Gfb: ...


class ClassicalBackend(RefinerBackend):
    kind = "classical"

    def refine(self, coarse: CoarseDepthMap) -> Gfb:
        return refine_classical(coarse)

    def __repr__(self):
        return "ClassicalBackend()"


class ExternalBackend(RefinerBackend):
    """Spawns `<exe> <coarse.cdm1> <out.gfb1>` per frame.  Exit code 0 plus a
    valid frame buffer on the identical frame is the success contract; any
    deviation raises BackendError with the captured process output."""

    kind = "external"

    def __init__(self, executable, workdir=None, timeout: float = 600.0):
        self.executable = str(executable)
        self.workdir = str(workdir) if workdir is not None else None
        self.timeout = timeout
        if not Path(self.executable).exists():
            raise BackendError(f"backend executable not found: {self.executable}")

    def refine(self, coarse: CoarseDepthMap) -> Gfb:
        from . import fileio

        with tempfile.TemporaryDirectory(dir=self.workdir, prefix="refine_") as tmp:
            src = Path(tmp) / "coarse.cdm1"
            dst = Path(tmp) / "refined.gfb1"
            fileio.write_cdm1(src, coarse)
            try:
                proc = subprocess.run([self.executable, str(src), str(dst)],
                                      capture_output=True, text=True,
                                      timeout=self.timeout)
            except (OSError, subprocess.TimeoutExpired) as exc:
                raise BackendError(f"backend invocation failed: {exc}") from exc
            if proc.returncode != 0:
                raise BackendError(
                    f"backend exited with {proc.returncode}\n"
                    f"stdout: {proc.stdout[-2000:]}\nstderr: {proc.stderr[-2000:]}")
            try:
                g = fileio.read_gfb1(dst)
            except (FileFormatError, FileNotFoundError) as exc:
                raise BackendError(
                    f"backend reply unreadable: {exc}\n"
                    f"stdout: {proc.stdout[-2000:]}\nstderr: {proc.stderr[-2000:]}") from exc
        _check_same_frame(coarse.frame, g.frame)
        return g

    def __repr__(self):
        return f"ExternalBackend(executable={self.executable!r})"


def _check_same_frame(expect: ScreenFrame, got: ScreenFrame) -> None:
    same = (expect.width == got.width and expect.height == got.height
            and np.allclose(expect.origin, got.origin, atol=1e-9)
            and np.allclose(expect.u, got.u, atol=1e-9)
            and np.allclose(expect.v, got.v, atol=1e-9)
            and np.allclose(expect.w, got.w, atol=1e-9)
            and abs(expect.pitch - got.pitch) < 1e-12)
    if not same:
        raise BackendError("backend returned a frame buffer on a different frame")


def refine(backend: RefinerBackend, coarse: CoarseDepthMap) -> Gfb:
    """Dispatch a coarse map through the chosen backend, enforcing the
    output contract (same frame, valid grids)."""
    g = backend.refine(coarse)
    _check_same_frame(coarse.frame, g.frame)
    return g
