"""Frame-buffer post-processing for multi-bounce tracing: depth-edge
removal, multi-view fusion on a sparse voxel grid, and conversion of fused
surface records into oriented disk splats.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import InvalidGeometryError
from .frames import Gfb, world_normals, world_positions

FUSION_RESOLUTION_DEFAULT = 256
SPLAT_RATIO_KNEE = 2.5
SPLAT_RADIUS_CAP = 3.535  # in units of source pitch

_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]) / 8.0
_SOBEL_Y = _SOBEL_X.T


@dataclass(frozen=True)
class Splat:
    center: np.ndarray
    normal: np.ndarray
    radius: float


def default_edge_thresholds(pitch: float) -> tuple[float, float]:
    """Depth-gradient hysteresis thresholds in meters per pixel step."""
    high = 3.0 * pitch
    return high / 2.0, high


def canny_edges(img: np.ndarray, low: float, high: float,
                sigma: float = 1.0) -> np.ndarray:
    """Boolean edge map: Gaussian blur, Sobel gradients (per pixel-step
    units), 4-direction non-maximum suppression, hysteresis linking.
    Non-finite pixels become a background plane far behind the deepest
    finite value, so the silhouette boundary registers as an edge even
    on convex bodies whose limb is the deepest visible part."""
    if not low < high:
        raise ValueError("need low < high thresholds")
    img = np.asarray(img, dtype=np.float64)
    finite = np.isfinite(img)
    if not np.any(finite):
        return np.zeros(img.shape, dtype=bool)
    back = float(img[finite].max()) + 10.0 * high
    work = np.where(finite, img, back)

    sm = ndimage.gaussian_filter(work, sigma, mode="nearest")
    gx = ndimage.correlate(sm, _SOBEL_X, mode="nearest")
    gy = ndimage.correlate(sm, _SOBEL_Y, mode="nearest")
    mag = np.hypot(gx, gy)

    # quantize orientation to 0/45/90/135 degrees and thin the ridges
    ang = np.mod(np.degrees(np.arctan2(gy, gx)), 180.0)
    h, w = img.shape
    padded = np.pad(mag, 1, mode="constant")
    cen = padded[1:-1, 1:-1]

    def shifted(dj, di):
        return padded[1 + dj:1 + dj + h, 1 + di:1 + di + w]

    sector = np.zeros(img.shape, dtype=np.int8)
    sector[(ang >= 22.5) & (ang < 67.5)] = 1
    sector[(ang >= 67.5) & (ang < 112.5)] = 2
    sector[(ang >= 112.5) & (ang < 157.5)] = 3

    nmax = np.zeros(img.shape, dtype=bool)
    pairs = {
        0: ((0, 1), (0, -1)),       # horizontal gradient -> compare left/right
        1: ((-1, 1), (1, -1)),      # 45 degrees
        2: ((1, 0), (-1, 0)),       # vertical gradient -> compare up/down
        3: ((-1, -1), (1, 1)),      # 135 degrees
    }
    for s, ((aj, ai), (bj, bi)) in pairs.items():
        m = sector == s
        nmax |= m & (cen >= shifted(aj, ai)) & (cen >= shifted(bj, bi))

    strong = nmax & (mag >= high)
    weak = nmax & (mag >= low)
    if not np.any(strong):
        return np.zeros(img.shape, dtype=bool)
    labels, n_lab = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    keep = np.zeros(n_lab + 1, dtype=bool)
    keep[np.unique(labels[strong])] = True
    keep[0] = False
    return keep[labels]


def edge_filter(g: Gfb, low: float | None = None, high: float | None = None) -> Gfb:
    """Zero the hit mask on depth edges and their 1-pixel dilation; depth and
    normals pass through untouched."""
    if low is None or high is None:
        d_low, d_high = default_edge_thresholds(g.frame.pitch)
        low = d_low if low is None else low
        high = d_high if high is None else high
    edges = canny_edges(g.depth, low, high)
    grown = ndimage.binary_dilation(edges, structure=np.ones((3, 3), dtype=bool))
    mask = np.where(grown, 0.0, g.mask)
    return Gfb(g.frame, g.depth, g.normal, mask)


def unproject(g: Gfb):
    """World-space surface samples of every masked pixel.

    Returns (positions (n, 3), normals (n, 3), pitches (n,)); order is
    row-major over the grid."""
    rows, cols = np.nonzero(g.hit_mask)
    pos = world_positions(g, rows, cols)
    nor = world_normals(g, rows, cols)
    pitch = np.full(rows.size, g.frame.pitch)
    return pos, nor, pitch


@dataclass(frozen=True)
class FusedRecords:
    """One oriented surface sample per (voxel cell, normal cluster)."""

    positions: np.ndarray   # (n, 3)
    normals: np.ndarray     # (n, 3) unit
    pitches: np.ndarray     # (n,) source pixel pitch (min over members)
    proj_dirs: np.ndarray   # (n, 3) launch direction of the dominant view

    def __len__(self) -> int:
        return self.positions.shape[0]


def fuse(gfbs, resolution: int = FUSION_RESOLUTION_DEFAULT) -> FusedRecords:
    """Merge the unprojected pixels of several views on a voxel grid.

    Per occupied cell the member samples are averaged; cells whose normals
    disagree (some member against the cell mean) are split into two
    hemisphere clusters around the principal normal axis so thin sheets seen
    from both sides keep both orientations.  The result is independent of
    the ordering of the input views.
    """
    gfbs = list(gfbs)
    if not gfbs:
        raise InvalidGeometryError("fuse needs at least one frame buffer")
    if resolution < 1:
        raise ValueError("fusion resolution must be >= 1")
    pos_parts, nor_parts, pit_parts, dir_parts = [], [], [], []
    for g in gfbs:
        p, n, t = unproject(g)
        pos_parts.append(p)
        nor_parts.append(n)
        pit_parts.append(t)
        dir_parts.append(np.broadcast_to(-g.frame.w, p.shape))
    pos = np.concatenate(pos_parts)
    nor = np.concatenate(nor_parts)
    pit = np.concatenate(pit_parts)
    vdir = np.concatenate(dir_parts)
    if pos.shape[0] == 0:
        z = np.zeros((0, 3))
        return FusedRecords(z, z.copy(), np.zeros(0), z.copy())

    lo = pos.min(axis=0)
    hi = pos.max(axis=0)
    span = hi - lo
    slack = 0.005 * np.where(span > 0, span, 1.0)
    lo = lo - slack
    cell = (span + 2 * slack) / resolution
    cell[cell <= 0] = 1.0
    ijk = np.clip(((pos - lo) / cell).astype(np.int64), 0, resolution - 1)
    cell_id = (ijk[:, 0] * resolution + ijk[:, 1]) * resolution + ijk[:, 2]

    # canonical member order makes the result permutation invariant
    order = np.lexsort((vdir[:, 2], vdir[:, 1], vdir[:, 0], pit,
                        nor[:, 2], nor[:, 1], nor[:, 0],
                        pos[:, 2], pos[:, 1], pos[:, 0], cell_id))
    pos, nor, pit, vdir, cell_id = (pos[order], nor[order], pit[order],
                                    vdir[order], cell_id[order])

    uniq, starts = np.unique(cell_id, return_index=True)
    ends = np.append(starts[1:], cell_id.size)
    out_pos, out_nor, out_pit, out_dir = [], [], [], []
    for s, e in zip(starts, ends):
        members = slice(s, e)
        _emit_cell(pos[members], nor[members], pit[members], vdir[members],
                   out_pos, out_nor, out_pit, out_dir)
    return FusedRecords(np.array(out_pos).reshape(-1, 3),
                        np.array(out_nor).reshape(-1, 3),
                        np.array(out_pit),
                        np.array(out_dir).reshape(-1, 3))


def _emit_cell(p, n, t, vd, out_pos, out_nor, out_pit, out_dir):
    mean_n = n.sum(axis=0)
    mag = np.linalg.norm(mean_n)
    if mag > 1e-12:
        mean_u = mean_n / mag
        if np.all(n @ mean_u > 0.0):
            _emit_record(p, n, t, vd, out_pos, out_nor, out_pit, out_dir)
            return
    # disagreeing normals: split around the principal normal direction
    axis = np.linalg.eigh(n.T @ n)[1][:, -1]
    side = n @ axis >= 0.0
    if np.all(side) or not np.any(side):
        _emit_record(p, n, t, vd, out_pos, out_nor, out_pit, out_dir)
        return
    for sel in (side, ~side):
        _emit_record(p[sel], n[sel], t[sel], vd[sel],
                     out_pos, out_nor, out_pit, out_dir)


def _emit_record(p, n, t, vd, out_pos, out_nor, out_pit, out_dir):
    mean_n = n.mean(axis=0)
    mag = np.linalg.norm(mean_n)
    if mag < 1e-12:
        mean_n = n[0]
        mag = 1.0
    out_pos.append(p.mean(axis=0))
    out_nor.append(mean_n / mag)
    k = int(np.argmin(t))  # members are presorted, so this is deterministic
    out_pit.append(t[k])
    out_dir.append(vd[k])


def splat_radius(normals, proj_dirs, pitches) -> np.ndarray:
    """Disk radius from surface slant: sqrt(2)*L*ratio with
    ratio = sqrt(1/|n.p|), saturating at 3.535*L for grazing records."""
    normals = np.asarray(normals, dtype=np.float64)
    proj_dirs = np.asarray(proj_dirs, dtype=np.float64)
    pitches = np.asarray(pitches, dtype=np.float64)
    align = np.abs(np.sum(normals * proj_dirs, axis=1))
    radii = np.empty(align.shape)
    grazing = align < 1e-9
    radii[grazing] = SPLAT_RADIUS_CAP * pitches[grazing]
    ok = ~grazing
    ratio = np.sqrt(1.0 / align[ok])
    base = np.where(ratio < SPLAT_RATIO_KNEE,
                    np.sqrt(2.0) * ratio,
                    SPLAT_RADIUS_CAP)
    # the first branch can overshoot the cap by 5e-4 L just under the knee
    radii[ok] = np.minimum(base, SPLAT_RADIUS_CAP) * pitches[ok]
    return radii


def make_splats(records: FusedRecords):
    """Fused records -> splat arrays (centers, normals, radii)."""
    radii = splat_radius(records.normals, records.proj_dirs, records.pitches)
    return records.positions.copy(), records.normals.copy(), radii


def splat_list(records: FusedRecords) -> list[Splat]:
    centers, normals, radii = make_splats(records)
    return [Splat(c, n, float(r)) for c, n, r in zip(centers, normals, radii)]
