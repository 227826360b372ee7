"""Multi-bounce ray tracing over splat geometry: disk intersection with an
overlap re-test sphere and weighted normal blending, specular reflection,
bounce chains with offset secondary rays, and receiver visibility.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .bvh import Bvh, splat_bvh
from .errors import InvalidGeometryError

MAX_BOUNCE_DEFAULT = 3
BLEND_FACTOR_DEFAULT = 1.0
_STACK_CAP = 128


def reflect(k_in, n) -> np.ndarray:
    """Specular reflection k - 2 (k.n) n, unit in -> unit out."""
    k_in = np.asarray(k_in, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    return k_in - 2.0 * float(np.dot(k_in, n)) * n


@dataclass(frozen=True)
class SplatScene:
    """Immutable splat set with its acceleration structure."""

    centers: np.ndarray  # (n, 3)
    normals: np.ndarray  # (n, 3) unit
    radii: np.ndarray    # (n,)
    bvh: Bvh

    @classmethod
    def build(cls, centers, normals, radii, leaf_size: int = 8) -> "SplatScene":
        centers = np.ascontiguousarray(np.asarray(centers, dtype=np.float64))
        normals = np.ascontiguousarray(np.asarray(normals, dtype=np.float64))
        radii = np.ascontiguousarray(np.asarray(radii, dtype=np.float64))
        if centers.ndim != 2 or centers.shape[1] != 3 or centers.shape[0] == 0:
            raise InvalidGeometryError("splat centers need shape (n, 3), n >= 1")
        if normals.shape != centers.shape or radii.shape != (centers.shape[0],):
            raise InvalidGeometryError("splat array shapes disagree")
        norms = np.linalg.norm(normals, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise InvalidGeometryError("splat normals must be unit length")
        if np.any(radii <= 0.0):
            raise InvalidGeometryError("splat radii must be positive")
        return cls(centers, normals, radii, splat_bvh(centers, normals, radii, leaf_size))

    @property
    def n_splats(self) -> int:
        return self.centers.shape[0]


@dataclass
class HitRecord:
    dep: float
    pos: np.ndarray
    nor: np.ndarray
    msk: bool
    vis: bool = False


@dataclass
class BounceChain:
    """One ray's bounce history.  Arrays hold n_bounce valid leading rows."""

    hit_pos: np.ndarray    # (max_bounce, 3)
    hit_nor: np.ndarray    # (max_bounce, 3) blended unit normals
    n_bounce: int
    path_len: float        # screen plane to last hit, all legs (m)
    exit_dir: np.ndarray   # direction after the last reflection
    valid: bool            # hit anything at all
    visible: bool = field(default=False)


@njit(cache=True, nogil=True, inline="always")
def _node_hits_ray(lo, hi, ox, oy, oz, dx, dy, dz):
    tmin = 0.0
    tmax = 1e300
    for ax in range(3):
        if ax == 0:
            o = ox; d = dx
        elif ax == 1:
            o = oy; d = dy
        else:
            o = oz; d = dz
        if abs(d) < 1e-300:
            if o < lo[ax] or o > hi[ax]:
                return False
        else:
            inv = 1.0 / d
            t0 = (lo[ax] - o) * inv
            t1 = (hi[ax] - o) * inv
            if t0 > t1:
                t0, t1 = t1, t0
            if t0 > tmin:
                tmin = t0
            if t1 < tmax:
                tmax = t1
            if tmin > tmax:
                return False
    return True


@njit(cache=True, nogil=True)
def _nearest_disk_hit(bounds_lo, bounds_hi, left, right, leaf_start, leaf_count,
                      order, centers, normals, radii,
                      ox, oy, oz, dx, dy, dz, min_t):
    """Nearest ray-disk intersection with t >= min_t.  Ties in t broken by
    smaller splat index.  Returns (t, splat index) with index -1 on miss."""
    best_t = 1e300
    best_i = -1
    stack = np.empty(_STACK_CAP, dtype=np.int64)
    top = 0
    stack[top] = 0
    top += 1
    while top > 0:
        top -= 1
        node = stack[top]
        if not _node_hits_ray(bounds_lo[node], bounds_hi[node], ox, oy, oz, dx, dy, dz):
            continue
        cnt = leaf_count[node]
        if cnt > 0:
            s = leaf_start[node]
            for k in range(s, s + cnt):
                i = order[k]
                nx = normals[i, 0]; ny = normals[i, 1]; nz = normals[i, 2]
                denom = dx * nx + dy * ny + dz * nz
                if abs(denom) < 1e-12:
                    continue
                t = ((centers[i, 0] - ox) * nx + (centers[i, 1] - oy) * ny
                     + (centers[i, 2] - oz) * nz) / denom
                if t < min_t:
                    continue
                if t > best_t or (t == best_t and i >= best_i and best_i >= 0):
                    continue
                hx = ox + t * dx - centers[i, 0]
                hy = oy + t * dy - centers[i, 1]
                hz = oz + t * dz - centers[i, 2]
                if hx * hx + hy * hy + hz * hz <= radii[i] * radii[i]:
                    best_t = t
                    best_i = i
        else:
            stack[top] = left[node]
            top += 1
            stack[top] = right[node]
            top += 1
    return best_t, best_i


@njit(cache=True, nogil=True)
def _retest_select(bounds_lo, bounds_hi, left, right, leaf_start, leaf_count,
                   order, centers, normals, radii,
                   ox, oy, oz, dx, dy, dz, min_t,
                   px, py, pz, retest_r):
    """Among ray-disk intersections (t >= min_t) whose hit point lies within
    retest_r of (px, py, pz): pick the one with the smallest center offset
    normalized by its splat radius, and blend all their normals with weights
    (1 - offset/R).  Returns (t_sel, i_sel, bnx, bny, bnz)."""
    best_score = 1e300
    best_t = 0.0
    best_i = -1
    acc_x = 0.0
    acc_y = 0.0
    acc_z = 0.0
    r2 = retest_r * retest_r
    stack = np.empty(_STACK_CAP, dtype=np.int64)
    top = 0
    stack[top] = 0
    top += 1
    while top > 0:
        top -= 1
        node = stack[top]
        # prune on both the ray and the re-test ball
        ddx = 0.0
        for ax in range(3):
            c = px if ax == 0 else (py if ax == 1 else pz)
            if c < bounds_lo[node, ax]:
                gap = bounds_lo[node, ax] - c
                ddx += gap * gap
            elif c > bounds_hi[node, ax]:
                gap = c - bounds_hi[node, ax]
                ddx += gap * gap
        if ddx > r2:
            continue
        if not _node_hits_ray(bounds_lo[node], bounds_hi[node], ox, oy, oz, dx, dy, dz):
            continue
        cnt = leaf_count[node]
        if cnt > 0:
            s = leaf_start[node]
            for k in range(s, s + cnt):
                i = order[k]
                nx = normals[i, 0]; ny = normals[i, 1]; nz = normals[i, 2]
                denom = dx * nx + dy * ny + dz * nz
                if abs(denom) < 1e-12:
                    continue
                t = ((centers[i, 0] - ox) * nx + (centers[i, 1] - oy) * ny
                     + (centers[i, 2] - oz) * nz) / denom
                if t < min_t:
                    continue
                hx = ox + t * dx
                hy = oy + t * dy
                hz = oz + t * dz
                cx = hx - centers[i, 0]
                cy = hy - centers[i, 1]
                cz = hz - centers[i, 2]
                off2 = cx * cx + cy * cy + cz * cz
                if off2 > radii[i] * radii[i]:
                    continue
                sx = hx - px
                sy = hy - py
                sz = hz - pz
                if sx * sx + sy * sy + sz * sz > r2:
                    continue
                offset = np.sqrt(off2) / radii[i]
                w = 1.0 - offset
                acc_x += w * nx
                acc_y += w * ny
                acc_z += w * nz
                if offset < best_score or (offset == best_score and i < best_i):
                    best_score = offset
                    best_t = t
                    best_i = i
        else:
            stack[top] = left[node]
            top += 1
            stack[top] = right[node]
            top += 1
    if best_i >= 0:
        mag = np.sqrt(acc_x * acc_x + acc_y * acc_y + acc_z * acc_z)
        if mag < 1e-12:
            acc_x = normals[best_i, 0]
            acc_y = normals[best_i, 1]
            acc_z = normals[best_i, 2]
        else:
            acc_x /= mag
            acc_y /= mag
            acc_z /= mag
    return best_t, best_i, acc_x, acc_y, acc_z


@njit(cache=True, nogil=True)
def _splat_hit_once(bounds_lo, bounds_hi, left, right, leaf_start, leaf_count,
                    order, centers, normals, radii,
                    ox, oy, oz, dx, dy, dz, min_t, blend_factor):
    """Full single-hit query: nearest disk, re-test sphere, blended flipped
    normal.  Returns (hit flag, t, px, py, pz, nx, ny, nz)."""
    t0, i0 = _nearest_disk_hit(bounds_lo, bounds_hi, left, right, leaf_start,
                               leaf_count, order, centers, normals, radii,
                               ox, oy, oz, dx, dy, dz, min_t)
    if i0 < 0:
        return False, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0
    px = ox + t0 * dx
    py = oy + t0 * dy
    pz = oz + t0 * dz
    retest_r = blend_factor * radii[i0]
    t_sel, i_sel, bnx, bny, bnz = _retest_select(
        bounds_lo, bounds_hi, left, right, leaf_start, leaf_count, order,
        centers, normals, radii, ox, oy, oz, dx, dy, dz, min_t, px, py, pz, retest_r)
    if i_sel < 0:
        # the nearest hit itself is always a candidate; keep it as fallback
        t_sel = t0
        bnx = normals[i0, 0]
        bny = normals[i0, 1]
        bnz = normals[i0, 2]
    if bnx * dx + bny * dy + bnz * dz > 0.0:
        bnx = -bnx
        bny = -bny
        bnz = -bnz
    return (True, t_sel, ox + t_sel * dx, oy + t_sel * dy, oz + t_sel * dz,
            bnx, bny, bnz)


@njit(cache=True, nogil=True)
def _chain_batch(bounds_lo, bounds_hi, left, right, leaf_start, leaf_count,
                 order, centers, normals, radii, origins, d0x, d0y, d0z,
                 max_bounce, eps, blend_factor,
                 out_pos, out_nor, out_nb, out_path, out_exit):
    n_rays = origins.shape[0]
    for r in range(n_rays):
        ox = origins[r, 0]; oy = origins[r, 1]; oz = origins[r, 2]
        dx = d0x; dy = d0y; dz = d0z
        path = 0.0
        nb = 0
        for b in range(max_bounce):
            min_t = 0.0 if b == 0 else eps
            hit, t, px, py, pz, nx, ny, nz = _splat_hit_once(
                bounds_lo, bounds_hi, left, right, leaf_start, leaf_count, order,
                centers, normals, radii, ox, oy, oz, dx, dy, dz, min_t, blend_factor)
            if not hit:
                break
            path += t if b == 0 else (eps + t)
            out_pos[r, b, 0] = px; out_pos[r, b, 1] = py; out_pos[r, b, 2] = pz
            out_nor[r, b, 0] = nx; out_nor[r, b, 1] = ny; out_nor[r, b, 2] = nz
            nb += 1
            dot = dx * nx + dy * ny + dz * nz
            dx -= 2.0 * dot * nx
            dy -= 2.0 * dot * ny
            dz -= 2.0 * dot * nz
            ox = px + eps * dx
            oy = py + eps * dy
            oz = pz + eps * dz
        out_nb[r] = nb
        out_path[r] = path
        out_exit[r, 0] = dx; out_exit[r, 1] = dy; out_exit[r, 2] = dz


@njit(cache=True, nogil=True)
def _any_disk_hit(bounds_lo, bounds_hi, left, right, leaf_start, leaf_count,
                  order, centers, normals, radii, ox, oy, oz, dx, dy, dz, min_t):
    stack = np.empty(_STACK_CAP, dtype=np.int64)
    top = 0
    stack[top] = 0
    top += 1
    while top > 0:
        top -= 1
        node = stack[top]
        if not _node_hits_ray(bounds_lo[node], bounds_hi[node], ox, oy, oz, dx, dy, dz):
            continue
        cnt = leaf_count[node]
        if cnt > 0:
            s = leaf_start[node]
            for k in range(s, s + cnt):
                i = order[k]
                nx = normals[i, 0]; ny = normals[i, 1]; nz = normals[i, 2]
                denom = dx * nx + dy * ny + dz * nz
                if abs(denom) < 1e-12:
                    continue
                t = ((centers[i, 0] - ox) * nx + (centers[i, 1] - oy) * ny
                     + (centers[i, 2] - oz) * nz) / denom
                if t < min_t:
                    continue
                hx = ox + t * dx - centers[i, 0]
                hy = oy + t * dy - centers[i, 1]
                hz = oz + t * dz - centers[i, 2]
                if hx * hx + hy * hy + hz * hz <= radii[i] * radii[i]:
                    return True
        else:
            stack[top] = left[node]
            top += 1
            stack[top] = right[node]
            top += 1
    return False


@njit(cache=True, nogil=True)
def _visibility_batch(bounds_lo, bounds_hi, left, right, leaf_start, leaf_count,
                      order, centers, normals, radii, pos, ksx, ksy, ksz, eps, out):
    for r in range(pos.shape[0]):
        ox = pos[r, 0] + eps * ksx
        oy = pos[r, 1] + eps * ksy
        oz = pos[r, 2] + eps * ksz
        blocked = _any_disk_hit(bounds_lo, bounds_hi, left, right, leaf_start,
                                leaf_count, order, centers, normals, radii,
                                ox, oy, oz, ksx, ksy, ksz, 0.0)
        out[r] = 0 if blocked else 1


def _kernel_args(scene: SplatScene):
    b = scene.bvh
    return (b.bounds_lo, b.bounds_hi, b.left, b.right, b.leaf_start,
            b.leaf_count, b.order, scene.centers, scene.normals, scene.radii)


def intersect_splats(scene: SplatScene, origin, direction,
                     blend_factor: float = BLEND_FACTOR_DEFAULT,
                     min_dep: float = 0.0) -> HitRecord:
    """Single-ray splat intersection with the re-test + blend rule."""
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    hit, t, px, py, pz, nx, ny, nz = _splat_hit_once(
        *_kernel_args(scene), o[0], o[1], o[2], d[0], d[1], d[2],
        float(min_dep), float(blend_factor))
    if not hit:
        return HitRecord(0.0, np.zeros(3), np.array([0.0, 0.0, 1.0]), False)
    return HitRecord(float(t), np.array([px, py, pz]), np.array([nx, ny, nz]), True)


def trace_chain(scene: SplatScene, origin, direction,
                max_bounce: int = MAX_BOUNCE_DEFAULT, eps: float = 1e-3,
                blend_factor: float = BLEND_FACTOR_DEFAULT) -> BounceChain:
    """Trace one ray through up to max_bounce specular reflections."""
    pos, nor, nb, path, exit_dir = trace_chains(
        scene, np.asarray(origin, dtype=np.float64)[None, :], direction,
        max_bounce, eps, blend_factor)
    return BounceChain(pos[0], nor[0], int(nb[0]), float(path[0]),
                       exit_dir[0], bool(nb[0] > 0))


def trace_chains(scene: SplatScene, origins, direction,
                 max_bounce: int = MAX_BOUNCE_DEFAULT, eps: float = 1e-3,
                 blend_factor: float = BLEND_FACTOR_DEFAULT):
    """Batch chain tracing; returns (pos (R,B,3), nor (R,B,3), n_bounce (R,),
    path_len (R,), exit_dir (R,3))."""
    if max_bounce < 1:
        raise ValueError("max_bounce must be >= 1")
    if not eps > 0:
        raise ValueError("eps must be positive")
    origins = np.ascontiguousarray(np.asarray(origins, dtype=np.float64))
    d = np.asarray(direction, dtype=np.float64)
    n_rays = origins.shape[0]
    out_pos = np.zeros((n_rays, max_bounce, 3))
    out_nor = np.zeros((n_rays, max_bounce, 3))
    out_nb = np.zeros(n_rays, dtype=np.int64)
    out_path = np.zeros(n_rays)
    out_exit = np.zeros((n_rays, 3))
    _chain_batch(*_kernel_args(scene), origins, d[0], d[1], d[2],
                 int(max_bounce), float(eps), float(blend_factor),
                 out_pos, out_nor, out_nb, out_path, out_exit)
    return out_pos, out_nor, out_nb, out_path, out_exit


def visibility(scene: SplatScene, pos, k_s, eps: float = 1e-3) -> bool:
    """Receiver visibility: no splat along pos + eps*k_s + t*k_s, t > 0."""
    out = visibility_batch(scene, np.asarray(pos, dtype=np.float64)[None, :], k_s, eps)
    return bool(out[0])


def visibility_batch(scene: SplatScene, pos, k_s, eps: float = 1e-3) -> np.ndarray:
    pos = np.ascontiguousarray(np.asarray(pos, dtype=np.float64))
    k = np.asarray(k_s, dtype=np.float64)
    out = np.zeros(pos.shape[0], dtype=np.uint8)
    _visibility_batch(*_kernel_args(scene), pos, k[0], k[1], k[2], float(eps), out)
    return out.astype(bool)
