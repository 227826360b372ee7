"""Core geometric types: point clouds, triangle meshes and the orthographic
launch screen that every tracing stage shares.

Conventions
-----------
* positions are float64 ndarrays in meters, shape (3,) or (n, 3)
* screen grids are indexed [j, i] = [row along v, column along u],
  stored as (height, width) arrays
* the screen's w axis points from the target center toward the
  transmitter; rays launch along -w
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidGeometryError
from .validation import normalized

ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class PointCloud:
    """Immutable set of surface sample positions."""

    points: np.ndarray  # (n, 3) float64

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] == 0:
            raise InvalidGeometryError(f"point cloud needs shape (n, 3), n >= 1, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise InvalidGeometryError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", pts)
        pts.setflags(write=False)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.points.min(axis=0), self.points.max(axis=0)

    def bounding_sphere(self) -> tuple[np.ndarray, float]:
        """Center = bbox center; radius = max point distance to it."""
        mn, mx = self.bbox
        center = 0.5 * (mn + mx)
        radius = float(np.sqrt(((self.points - center) ** 2).sum(axis=1).max()))
        return center, radius


@dataclass(frozen=True)
class TriangleMesh:
    """Triangle soup with per-face unit normals; degenerate faces dropped on load."""

    vertices: np.ndarray  # (n, 3) float64
    faces: np.ndarray     # (m, 3) int64
    normals: np.ndarray   # (m, 3) float64, unit
    areas: np.ndarray     # (m,) float64

    @classmethod
    def from_arrays(cls, vertices, faces, *, area_eps: float = 1e-12) -> "TriangleMesh":
        verts = np.ascontiguousarray(np.asarray(vertices, dtype=np.float64))
        tris = np.ascontiguousarray(np.asarray(faces, dtype=np.int64))
        if verts.ndim != 2 or verts.shape[1] != 3 or verts.shape[0] == 0:
            raise InvalidGeometryError(f"mesh vertices need shape (n, 3), got {verts.shape}")
        if tris.ndim != 2 or tris.shape[1] != 3 or tris.shape[0] == 0:
            raise InvalidGeometryError(f"mesh faces need shape (m, 3), got {tris.shape}")
        if tris.min() < 0 or tris.max() >= verts.shape[0]:
            raise InvalidGeometryError("mesh face index out of range")
        e1 = verts[tris[:, 1]] - verts[tris[:, 0]]
        e2 = verts[tris[:, 2]] - verts[tris[:, 0]]
        cross = np.cross(e1, e2)
        dbl_area = np.linalg.norm(cross, axis=1)
        keep = dbl_area > area_eps
        if not np.any(keep):
            raise InvalidGeometryError("mesh has no non-degenerate triangle")
        tris = tris[keep]
        cross = cross[keep]
        dbl_area = dbl_area[keep]
        normals = cross / dbl_area[:, None]
        return cls(verts, tris, np.ascontiguousarray(normals), 0.5 * dbl_area)

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        used = self.vertices[np.unique(self.faces)]
        return used.min(axis=0), used.max(axis=0)

    def bounding_sphere(self) -> tuple[np.ndarray, float]:
        mn, mx = self.bbox
        center = 0.5 * (mn + mx)
        used = self.vertices[np.unique(self.faces)]
        radius = float(np.sqrt(((used - center) ** 2).sum(axis=1).max()))
        return center, radius

    def triangle_corners(self) -> np.ndarray:
        """(m, 3, 3) corner positions."""
        return self.vertices[self.faces]


@dataclass(frozen=True)
class ScreenFrame:
    """Transmitter-aligned orthographic ray screen.

    The local frame (u, v, w) is orthonormal with (u x v) . w = +1; the
    screen center ``origin`` sits ``standoff`` meters from the target
    center along +w and rays launch along -w with spacing ``pitch``.
    """

    origin: np.ndarray
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    pitch: float
    width: int
    height: int
    standoff: float = float("nan")

    def __post_init__(self):
        for name in ("origin", "u", "v", "w"):
            vec = np.ascontiguousarray(np.asarray(getattr(self, name), dtype=np.float64))
            if vec.shape != (3,):
                raise InvalidGeometryError(f"frame.{name} must have shape (3,)")
            object.__setattr__(self, name, vec)
            vec.setflags(write=False)
        if not (self.pitch > 0.0):
            raise InvalidGeometryError("frame.pitch must be positive")
        if self.width < 1 or self.height < 1:
            raise InvalidGeometryError("frame resolution must be at least 1x1")
        for a, b in (("u", "v"), ("u", "w"), ("v", "w")):
            d = float(np.dot(getattr(self, a), getattr(self, b)))
            if abs(d) > ORTHO_TOL:
                raise InvalidGeometryError(f"frame axes {a},{b} not orthogonal (dot={d:.3e})")
        for name in ("u", "v", "w"):
            n = float(np.linalg.norm(getattr(self, name)))
            if abs(n - 1.0) > ORTHO_TOL:
                raise InvalidGeometryError(f"frame.{name} not unit length (|{name}|={n:.12f})")
        hand = float(np.dot(np.cross(self.u, self.v), self.w))
        if abs(hand - 1.0) > ORTHO_TOL:
            raise InvalidGeometryError(f"frame is not right-handed ((u x v).w = {hand:.3e})")

    @property
    def ray_dir(self) -> np.ndarray:
        return -self.w

    def pixel_ray(self, i: int, j: int) -> tuple[np.ndarray, np.ndarray]:
        """Origin and direction of the ray launched from pixel column i, row j."""
        if not (0 <= i < self.width) or not (0 <= j < self.height):
            raise IndexError(f"pixel ({i}, {j}) outside {self.width}x{self.height} screen")
        origin = (self.origin
                  + (i - (self.width - 1) / 2.0) * self.pitch * self.u
                  + (j - (self.height - 1) / 2.0) * self.pitch * self.v)
        return origin, -self.w

    def pixel_origins(self) -> np.ndarray:
        """(height, width, 3) launch positions for the whole screen."""
        ii = (np.arange(self.width) - (self.width - 1) / 2.0) * self.pitch
        jj = (np.arange(self.height) - (self.height - 1) / 2.0) * self.pitch
        return (self.origin[None, None, :]
                + jj[:, None, None] * self.v[None, None, :]
                + ii[None, :, None] * self.u[None, None, :])


def direction_from_angles(theta_deg: float, phi_deg: float) -> np.ndarray:
    """Radial unit vector for spherical angles (degrees): theta from +z, phi from +x."""
    th = np.deg2rad(theta_deg)
    ph = np.deg2rad(phi_deg)
    return np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])


def frame_axes(w: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """u = normalized(z x w) with x-hat fallback near the poles; v = w x u."""
    w = normalized(np.asarray(w, dtype=np.float64))
    zxw = np.cross(np.array([0.0, 0.0, 1.0]), w)
    n = np.linalg.norm(zxw)
    if n < 1e-12:
        u = np.array([1.0, 0.0, 0.0])
    else:
        u = zxw / n
    v = np.cross(w, u)
    return u, v, w


def make_frame(theta_deg: float, phi_deg: float, *, center: np.ndarray, radius: float,
               pitch: float, standoff_factor: float = 2.0) -> ScreenFrame:
    """Screen for an observation direction, sized to cover the bounding sphere.

    Resolution per side is ceil((2*radius + 2*pitch) / pitch) so the screen
    extent exceeds the bounding-sphere diameter by at least one pitch of
    margin on each side; standoff defaults to twice the sphere radius.
    """
    if not pitch > 0:
        raise InvalidGeometryError("pitch must be positive")
    if radius < 0:
        raise InvalidGeometryError("bounding radius must be non-negative")
    u, v, w = frame_axes(direction_from_angles(theta_deg, phi_deg))
    standoff = standoff_factor * max(radius, pitch)
    res = int(np.ceil((2.0 * radius + 2.0 * pitch) / pitch))
    res = max(res, 3)
    origin = np.asarray(center, dtype=np.float64) + standoff * w
    return ScreenFrame(origin, u, v, w, float(pitch), res, res, float(standoff))


def sample_mesh(mesh: TriangleMesh, n: int, seed: int) -> PointCloud:
    """Area-weighted uniform surface sampling, deterministic per seed."""
    if n < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")
    total = float(mesh.areas.sum())
    if total <= 0.0:
        raise InvalidGeometryError("mesh has zero total area")
    rng = np.random.default_rng(seed)
    tri_idx = rng.choice(mesh.n_faces, size=n, p=mesh.areas / total)
    corners = mesh.vertices[mesh.faces[tri_idx]]  # (n, 3, 3)
    # uniform barycentric via the sqrt trick
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    a = 1.0 - r1
    b = r1 * (1.0 - r2)
    c = r1 * r2
    pts = (a[:, None] * corners[:, 0]
           + b[:, None] * corners[:, 1]
           + c[:, None] * corners[:, 2])
    return PointCloud(pts)


def normalize_to_box(obj, target_extent: float):
    """Uniformly scale + translate so the longest bbox edge equals
    target_extent and the bbox center sits at the origin."""
    if not target_extent > 0:
        raise ValueError("target extent must be positive")
    mn, mx = obj.bbox
    extent = float((mx - mn).max())
    if extent <= 0.0:
        raise InvalidGeometryError("degenerate input: zero bounding-box extent")
    scale = target_extent / extent
    center = 0.5 * (mn + mx)
    if isinstance(obj, PointCloud):
        return PointCloud((obj.points - center) * scale)
    if isinstance(obj, TriangleMesh):
        verts = (obj.vertices - center) * scale
        return replace(obj, vertices=np.ascontiguousarray(verts),
                       areas=obj.areas * scale * scale)
    raise TypeError(f"cannot normalize object of type {type(obj).__name__}")
