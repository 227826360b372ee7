"""Flat-array bounding volume hierarchy over points, splats or triangles.

Build is a deterministic median split along the largest centroid extent,
leaves hold up to ``leaf_size`` primitives.  Traversal kernels are numba
compiled and operate on the flat arrays directly so other modules can embed
them inside their own jitted loops.  Node tests are conservative; exactness
is enforced by per-primitive tests at the leaves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import InvalidGeometryError

LEAF_SIZE_DEFAULT = 8
_STACK_CAP = 128


@dataclass(frozen=True)
class Aabb:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        if lo.shape != (3,) or hi.shape != (3,):
            raise InvalidGeometryError("Aabb corners must have shape (3,)")
        if np.any(lo > hi):
            raise InvalidGeometryError("Aabb has lo > hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def contains(self, p) -> bool:
        p = np.asarray(p, dtype=np.float64)
        return bool(np.all(p >= self.lo - 1e-12) and np.all(p <= self.hi + 1e-12))


@dataclass(frozen=True)
class Bvh:
    """Nodes in preorder; node 0 is the root.  ``leaf_count > 0`` marks a
    leaf owning primitives ``order[leaf_start : leaf_start + leaf_count]``
    (indices into the caller's original primitive arrays)."""

    bounds_lo: np.ndarray   # (n_nodes, 3)
    bounds_hi: np.ndarray
    left: np.ndarray        # (n_nodes,) child id, -1 at leaves
    right: np.ndarray
    leaf_start: np.ndarray
    leaf_count: np.ndarray
    order: np.ndarray       # (n_prims,)

    @property
    def n_nodes(self) -> int:
        return self.bounds_lo.shape[0]

    @property
    def n_prims(self) -> int:
        return self.order.shape[0]

    def root_bounds(self) -> Aabb:
        return Aabb(self.bounds_lo[0], self.bounds_hi[0])


def build_bvh(prim_lo, prim_hi, leaf_size: int = LEAF_SIZE_DEFAULT) -> Bvh:
    """Build over primitive AABBs given as (n, 3) lo/hi arrays."""
    prim_lo = np.ascontiguousarray(np.asarray(prim_lo, dtype=np.float64))
    prim_hi = np.ascontiguousarray(np.asarray(prim_hi, dtype=np.float64))
    if prim_lo.ndim != 2 or prim_lo.shape[1] != 3 or prim_lo.shape != prim_hi.shape:
        raise InvalidGeometryError("primitive bounds must be matching (n, 3) arrays")
    n = prim_lo.shape[0]
    if n == 0:
        raise InvalidGeometryError("cannot build a BVH over zero primitives")
    if leaf_size < 1:
        raise ValueError("leaf_size must be >= 1")
    centroids = 0.5 * (prim_lo + prim_hi)
    order = np.arange(n, dtype=np.int64)

    bounds_lo, bounds_hi, left, right, starts, counts = [], [], [], [], [], []
    # (start, count, node_id) work list; children appended after their parent
    stack = [(0, n, 0)]
    bounds_lo.append(None); bounds_hi.append(None)
    left.append(-1); right.append(-1); starts.append(0); counts.append(0)
    while stack:
        start, count, node = stack.pop()
        seg = order[start:start + count]
        seg_lo = prim_lo[seg].min(axis=0)
        seg_hi = prim_hi[seg].max(axis=0)
        bounds_lo[node] = seg_lo
        bounds_hi[node] = seg_hi
        if count <= leaf_size:
            starts[node] = start
            counts[node] = count
            continue
        cen = centroids[seg]
        axis = int(np.argmax(cen.max(axis=0) - cen.min(axis=0)))
        local = np.argsort(cen[:, axis], kind="stable")
        order[start:start + count] = seg[local]
        mid = count // 2
        lid = len(bounds_lo)
        rid = lid + 1
        for _ in range(2):
            bounds_lo.append(None); bounds_hi.append(None)
            left.append(-1); right.append(-1); starts.append(0); counts.append(0)
        left[node] = lid
        right[node] = rid
        stack.append((start + mid, count - mid, rid))
        stack.append((start, mid, lid))

    return Bvh(np.array(bounds_lo), np.array(bounds_hi),
               np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
               np.array(starts, dtype=np.int64), np.array(counts, dtype=np.int64),
               order)


def point_bvh(points, leaf_size: int = LEAF_SIZE_DEFAULT) -> Bvh:
    pts = np.asarray(points, dtype=np.float64)
    return build_bvh(pts, pts, leaf_size)


def splat_bounds(centers, normals, radii):
    """Tight AABBs of oriented disks: half extent R*sqrt(1 - n_axis^2)."""
    centers = np.asarray(centers, dtype=np.float64)
    normals = np.asarray(normals, dtype=np.float64)
    radii = np.asarray(radii, dtype=np.float64)
    half = radii[:, None] * np.sqrt(np.clip(1.0 - normals ** 2, 0.0, 1.0))
    pad = 1e-9 * radii[:, None]
    return centers - half - pad, centers + half + pad


def splat_bvh(centers, normals, radii, leaf_size: int = LEAF_SIZE_DEFAULT) -> Bvh:
    lo, hi = splat_bounds(centers, normals, radii)
    return build_bvh(lo, hi, leaf_size)


def triangle_bvh(corners, leaf_size: int = LEAF_SIZE_DEFAULT) -> Bvh:
    """corners: (m, 3, 3) triangle corner positions."""
    corners = np.asarray(corners, dtype=np.float64)
    return build_bvh(corners.min(axis=1), corners.max(axis=1), leaf_size)


# ---------------------------------------------------------------- kernels

@njit(cache=True, nogil=True, inline="always")
def _slab_hit(lo, hi, ox, oy, oz, dx, dy, dz, inflate):
    """Ray (t >= 0) versus node box inflated by ``inflate``; conservative."""
    tmin = 0.0
    tmax = 1e300
    for ax in range(3):
        if ax == 0:
            o = ox; d = dx
        elif ax == 1:
            o = oy; d = dy
        else:
            o = oz; d = dz
        b_lo = lo[ax] - inflate
        b_hi = hi[ax] + inflate
        if abs(d) < 1e-300:
            if o < b_lo or o > b_hi:
                return False
        else:
            inv = 1.0 / d
            t0 = (b_lo - o) * inv
            t1 = (b_hi - o) * inv
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
def tube_gather_kernel(bounds_lo, bounds_hi, left, right, leaf_start, leaf_count,
                       order, points, ox, oy, oz, dx, dy, dz, radius, out):
    """Collect original indices of points with perpendicular distance to the
    tube's central ray < radius and positive advance along it.  Returns the
    number of hits written to ``out`` (caller sizes it to n_points)."""
    n_out = 0
    r2 = radius * radius
    stack = np.empty(_STACK_CAP, dtype=np.int64)
    top = 0
    stack[top] = 0
    top += 1
    while top > 0:
        top -= 1
        node = stack[top]
        if not _slab_hit(bounds_lo[node], bounds_hi[node], ox, oy, oz, dx, dy, dz, radius):
            continue
        cnt = leaf_count[node]
        if cnt > 0:
            s = leaf_start[node]
            for k in range(s, s + cnt):
                idx = order[k]
                px = points[idx, 0] - ox
                py = points[idx, 1] - oy
                pz = points[idx, 2] - oz
                along = px * dx + py * dy + pz * dz
                if along <= 0.0:
                    continue
                perp2 = px * px + py * py + pz * pz - along * along
                if perp2 < r2:
                    out[n_out] = idx
                    n_out += 1
        else:
            stack[top] = left[node]
            top += 1
            stack[top] = right[node]
            top += 1
    return n_out


@njit(cache=True, nogil=True)
def ray_box_candidates_kernel(bounds_lo, bounds_hi, left, right, leaf_start,
                              leaf_count, order, ox, oy, oz, dx, dy, dz,
                              out_idx, out_t):
    """All primitives whose (possibly padded) AABB the ray enters, with the
    node-entry parameter used for ordering.  Conservative superset."""
    n_out = 0
    stack = np.empty(_STACK_CAP, dtype=np.int64)
    top = 0
    stack[top] = 0
    top += 1
    while top > 0:
        top -= 1
        node = stack[top]
        # recompute entry t with the same slab walk, keeping it exact here
        tmin = 0.0
        tmax = 1e300
        ok = True
        for ax in range(3):
            if ax == 0:
                o = ox; d = dx
            elif ax == 1:
                o = oy; d = dy
            else:
                o = oz; d = dz
            if abs(d) < 1e-300:
                if o < bounds_lo[node, ax] or o > bounds_hi[node, ax]:
                    ok = False
                    break
            else:
                inv = 1.0 / d
                t0 = (bounds_lo[node, ax] - o) * inv
                t1 = (bounds_hi[node, ax] - o) * inv
                if t0 > t1:
                    t0, t1 = t1, t0
                if t0 > tmin:
                    tmin = t0
                if t1 < tmax:
                    tmax = t1
                if tmin > tmax:
                    ok = False
                    break
        if not ok:
            continue
        cnt = leaf_count[node]
        if cnt > 0:
            s = leaf_start[node]
            for k in range(s, s + cnt):
                out_idx[n_out] = order[k]
                out_t[n_out] = tmin
                n_out += 1
        else:
            stack[top] = left[node]
            top += 1
            stack[top] = right[node]
            top += 1
    return n_out


def traverse_tube(bvh: Bvh, points, origin, direction, radius) -> np.ndarray:
    """Original indices (ascending) of all points inside the half-infinite
    tube of the given radius around origin + t*direction, t > 0."""
    if not radius > 0:
        raise ValueError("tube radius must be positive")
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64))
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    out = np.empty(bvh.n_prims, dtype=np.int64)
    n = tube_gather_kernel(bvh.bounds_lo, bvh.bounds_hi, bvh.left, bvh.right,
                           bvh.leaf_start, bvh.leaf_count, bvh.order, pts,
                           o[0], o[1], o[2], d[0], d[1], d[2], float(radius), out)
    hits = out[:n]
    hits.sort()
    return hits


def traverse_ray(bvh: Bvh, origin, direction) -> np.ndarray:
    """Candidate primitive indices ordered by node entry distance (ties by
    index).  Superset of everything the ray can physically hit."""
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    out_idx = np.empty(bvh.n_prims, dtype=np.int64)
    out_t = np.empty(bvh.n_prims, dtype=np.float64)
    n = ray_box_candidates_kernel(bvh.bounds_lo, bvh.bounds_hi, bvh.left, bvh.right,
                                  bvh.leaf_start, bvh.leaf_count, bvh.order,
                                  o[0], o[1], o[2], d[0], d[1], d[2], out_idx, out_t)
    sel = np.lexsort((out_idx[:n], out_t[:n]))
    return out_idx[:n][sel]


def audit_containment(bvh: Bvh, prim_lo, prim_hi) -> bool:
    """Every primitive inside its leaf bounds and every child box inside its
    parent's; used by tests, cheap enough to keep here."""
    prim_lo = np.asarray(prim_lo, dtype=np.float64)
    prim_hi = np.asarray(prim_hi, dtype=np.float64)
    seen = np.zeros(bvh.n_prims, dtype=np.int64)
    stack = [0]
    while stack:
        node = stack.pop()
        lo = bvh.bounds_lo[node]
        hi = bvh.bounds_hi[node]
        if bvh.leaf_count[node] > 0:
            s = bvh.leaf_start[node]
            c = bvh.leaf_count[node]
            for idx in bvh.order[s:s + c]:
                seen[idx] += 1
                if np.any(prim_lo[idx] < lo - 1e-12) or np.any(prim_hi[idx] > hi + 1e-12):
                    return False
        else:
            for child in (bvh.left[node], bvh.right[node]):
                if np.any(bvh.bounds_lo[child] < lo - 1e-12) or \
                   np.any(bvh.bounds_hi[child] > hi + 1e-12):
                    return False
                stack.append(child)
    return bool(np.all(seen == 1))
