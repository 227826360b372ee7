"""Mesh-based reference path: watertight ray-triangle tracing for ground
truth frame buffers and reference multi-bounce RCS, plus closed-form RCS
values for calibration targets.

The reference tracer mirrors the splat tracer bounce-for-bounce so the two
pipelines differ only in the geometry representation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .bvh import Bvh, triangle_bvh
from .errors import InvalidGeometryError
from .frames import MISS, Gfb
from .geometry import ScreenFrame, TriangleMesh

_STACK_CAP = 128


@dataclass(frozen=True)
class MeshScene:
    """Triangle soup with its acceleration structure, ready for tracing."""

    corners: np.ndarray   # (m, 3, 3)
    normals: np.ndarray   # (m, 3) unit, as authored
    bvh: Bvh
    diameter: float

    @classmethod
    def build(cls, mesh: TriangleMesh, leaf_size: int = 8) -> "MeshScene":
        corners = np.ascontiguousarray(mesh.triangle_corners())
        _, radius = mesh.bounding_sphere()
        if radius <= 0:
            raise InvalidGeometryError("mesh has zero spatial extent")
        return cls(corners, np.ascontiguousarray(mesh.normals),
                   triangle_bvh(corners, leaf_size), 2.0 * radius)

    @property
    def n_triangles(self) -> int:
        return self.corners.shape[0]

    @property
    def offset_eps(self) -> float:
        """Secondary-ray self-intersection offset."""
        return 1e-6 * self.diameter


@dataclass
class MeshHit:
    t: float
    position: np.ndarray
    normal: np.ndarray   # flipped toward the ray origin
    triangle: int


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
def _nearest_tri_hit(bounds_lo, bounds_hi, left, right, leaf_start, leaf_count,
                     order, corners, ox, oy, oz, dx, dy, dz, min_t):
    """Nearest watertight triangle hit with t >= min_t; ties by index.
    Returns (t, triangle index or -1)."""
    # shear constants from the dominant direction axis
    adx = abs(dx); ady = abs(dy); adz = abs(dz)
    if adz >= adx and adz >= ady:
        kz = 2
    elif ady >= adx:
        kz = 1
    else:
        kz = 0
    kx = kz + 1
    if kx == 3:
        kx = 0
    ky = kx + 1
    if ky == 3:
        ky = 0
    dkz = dz if kz == 2 else (dy if kz == 1 else dx)
    if dkz < 0.0:
        kx, ky = ky, kx
    dkx = dz if kx == 2 else (dy if kx == 1 else dx)
    dky = dz if ky == 2 else (dy if ky == 1 else dx)
    dkz = dz if kz == 2 else (dy if kz == 1 else dx)
    sx = dkx / dkz
    sy = dky / dkz
    sz = 1.0 / dkz

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
                # translate corners to the ray origin, pick sheared components
                a0 = corners[i, 0, 0] - ox; a1 = corners[i, 0, 1] - oy; a2 = corners[i, 0, 2] - oz
                b0 = corners[i, 1, 0] - ox; b1 = corners[i, 1, 1] - oy; b2 = corners[i, 1, 2] - oz
                c0 = corners[i, 2, 0] - ox; c1 = corners[i, 2, 1] - oy; c2 = corners[i, 2, 2] - oz
                akx = a2 if kx == 2 else (a1 if kx == 1 else a0)
                aky = a2 if ky == 2 else (a1 if ky == 1 else a0)
                akz = a2 if kz == 2 else (a1 if kz == 1 else a0)
                bkx = b2 if kx == 2 else (b1 if kx == 1 else b0)
                bky = b2 if ky == 2 else (b1 if ky == 1 else b0)
                bkz = b2 if kz == 2 else (b1 if kz == 1 else b0)
                ckx = c2 if kx == 2 else (c1 if kx == 1 else c0)
                cky = c2 if ky == 2 else (c1 if ky == 1 else c0)
                ckz = c2 if kz == 2 else (c1 if kz == 1 else c0)
                axs = akx - sx * akz
                ays = aky - sy * akz
                bxs = bkx - sx * bkz
                bys = bky - sy * bkz
                cxs = ckx - sx * ckz
                cys = cky - sy * ckz
                u = cxs * bys - cys * bxs
                v = axs * cys - ays * cxs
                w = bxs * ays - bys * axs
                if (u < 0.0 or v < 0.0 or w < 0.0) and (u > 0.0 or v > 0.0 or w > 0.0):
                    continue
                det = u + v + w
                if det == 0.0:
                    continue
                t = (u * sz * akz + v * sz * bkz + w * sz * ckz) / det
                if t < min_t:
                    continue
                if t > best_t or (t == best_t and best_i >= 0 and i >= best_i):
                    continue
                best_t = t
                best_i = i
        else:
            stack[top] = left[node]
            top += 1
            stack[top] = right[node]
            top += 1
    return best_t, best_i


@njit(cache=True, nogil=True)
def _mesh_chain_batch(bounds_lo, bounds_hi, left, right, leaf_start, leaf_count,
                      order, corners, normals, origins, d0x, d0y, d0z,
                      max_bounce, eps, out_pos, out_nor, out_nb, out_path, out_exit):
    n_rays = origins.shape[0]
    for r in range(n_rays):
        ox = origins[r, 0]; oy = origins[r, 1]; oz = origins[r, 2]
        dx = d0x; dy = d0y; dz = d0z
        path = 0.0
        nb = 0
        for b in range(max_bounce):
            t, i = _nearest_tri_hit(bounds_lo, bounds_hi, left, right, leaf_start,
                                    leaf_count, order, corners,
                                    ox, oy, oz, dx, dy, dz, 0.0)
            if i < 0:
                break
            path += t if b == 0 else (eps + t)
            px = ox + t * dx
            py = oy + t * dy
            pz = oz + t * dz
            nx = normals[i, 0]; ny = normals[i, 1]; nz = normals[i, 2]
            if nx * dx + ny * dy + nz * dz > 0.0:
                nx = -nx; ny = -ny; nz = -nz
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
def _mesh_visibility_batch(bounds_lo, bounds_hi, left, right, leaf_start,
                           leaf_count, order, corners, pos, ksx, ksy, ksz,
                           eps, out):
    for r in range(pos.shape[0]):
        ox = pos[r, 0] + eps * ksx
        oy = pos[r, 1] + eps * ksy
        oz = pos[r, 2] + eps * ksz
        t, i = _nearest_tri_hit(bounds_lo, bounds_hi, left, right, leaf_start,
                                leaf_count, order, corners,
                                ox, oy, oz, ksx, ksy, ksz, 0.0)
        out[r] = 0 if i >= 0 else 1


def _kernel_args(scene: MeshScene):
    b = scene.bvh
    return (b.bounds_lo, b.bounds_hi, b.left, b.right, b.leaf_start,
            b.leaf_count, b.order, scene.corners)


def intersect_mesh(scene: MeshScene, origin, direction, min_t: float = 0.0):
    """Nearest triangle hit along the ray, or None; normal is flipped toward
    the ray origin."""
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    t, i = _nearest_tri_hit(*_kernel_args(scene), o[0], o[1], o[2],
                            d[0], d[1], d[2], float(min_t))
    if i < 0:
        return None
    n = scene.normals[i].copy()
    if float(np.dot(n, d)) > 0.0:
        n = -n
    return MeshHit(float(t), o + t * d, n, int(i))


def mesh_trace_chains(scene: MeshScene, origins, direction, max_bounce: int,
                      eps: float | None = None):
    """Batch bounce chains against the mesh; mirrors the splat tracer's
    output layout (pos, nor, n_bounce, path_len, exit_dir)."""
    if max_bounce < 1:
        raise ValueError("max_bounce must be >= 1")
    origins = np.ascontiguousarray(np.asarray(origins, dtype=np.float64))
    d = np.asarray(direction, dtype=np.float64)
    eps = scene.offset_eps if eps is None else float(eps)
    n_rays = origins.shape[0]
    out_pos = np.zeros((n_rays, max_bounce, 3))
    out_nor = np.zeros((n_rays, max_bounce, 3))
    out_nb = np.zeros(n_rays, dtype=np.int64)
    out_path = np.zeros(n_rays)
    out_exit = np.zeros((n_rays, 3))
    _mesh_chain_batch(*_kernel_args(scene), scene.normals, origins,
                      d[0], d[1], d[2], int(max_bounce), eps,
                      out_pos, out_nor, out_nb, out_path, out_exit)
    return out_pos, out_nor, out_nb, out_path, out_exit


def mesh_visibility_batch(scene: MeshScene, pos, k_s, eps: float | None = None):
    pos = np.ascontiguousarray(np.asarray(pos, dtype=np.float64))
    k = np.asarray(k_s, dtype=np.float64)
    eps = scene.offset_eps if eps is None else float(eps)
    out = np.zeros(pos.shape[0], dtype=np.uint8)
    _mesh_visibility_batch(*_kernel_args(scene), pos, k[0], k[1], k[2], eps, out)
    return out.astype(bool)


def render_reference_gfb(scene: MeshScene, frame: ScreenFrame) -> Gfb:
    """Ground-truth frame buffer: one mesh intersection per pixel; normals
    come from triangle geometry rotated into the frame basis."""
    origins = frame.pixel_origins().reshape(-1, 3)
    pos, nor, nb, path, _ = mesh_trace_chains(scene, origins, frame.ray_dir, 1)
    h, w = frame.height, frame.width
    hit = nb > 0
    depth = np.full(h * w, MISS)
    depth[hit] = path[hit]
    normal = np.zeros((h * w, 3))
    normal[:, 2] = 1.0
    world_n = nor[hit, 0]
    normal[hit, 0] = world_n @ frame.u
    normal[hit, 1] = world_n @ frame.v
    normal[hit, 2] = world_n @ frame.w
    mask = hit.astype(np.float64)
    return Gfb(frame, depth.reshape(h, w), normal.reshape(h, w, 3),
               mask.reshape(h, w))


# ------------------------------------------------------- analytic formulas

def analytic_plate_rcs(side: float, wavelength: float) -> float:
    """Broadside RCS (m^2) of a square conducting plate: 4 pi a^4 / lambda^2."""
    if side <= 0 or wavelength <= 0:
        raise ValueError("plate side and wavelength must be positive")
    return 4.0 * np.pi * side ** 4 / wavelength ** 2


def analytic_sphere_rcs(radius: float) -> float:
    """Optical-limit backscatter of a conducting sphere: pi r^2."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    return np.pi * radius ** 2


def analytic_trihedral_rcs(side: float, wavelength: float) -> float:
    """Boresight peak of a square-panel corner reflector: 12 pi a^4 / lambda^2."""
    if side <= 0 or wavelength <= 0:
        raise ValueError("side and wavelength must be positive")
    return 12.0 * np.pi * side ** 4 / wavelength ** 2


def analytic_sphere_depth(frame: ScreenFrame, center, radius: float) -> np.ndarray:
    """Exact per-pixel depth of a sphere seen by the frame (NaN off-silhouette)."""
    origins = frame.pixel_origins().reshape(-1, 3)
    rel = origins - np.asarray(center, dtype=np.float64)
    # ray o + t*(-w): |rel - t w|^2 = r^2
    b = rel @ frame.w
    c = np.sum(rel * rel, axis=1) - radius * radius
    disc = b * b - c
    depth = np.full(origins.shape[0], MISS)
    ok = disc >= 0.0
    t = b[ok] - np.sqrt(disc[ok])
    good = t > 0.0
    idx = np.flatnonzero(ok)[good]
    depth[idx] = t[good]
    return depth.reshape(frame.height, frame.width)
