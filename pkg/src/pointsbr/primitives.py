"""Procedural triangle meshes used for tests, calibration targets and
dataset generation: plate, box, icosphere, cylinder and a corner reflector.
"""

from __future__ import annotations

import numpy as np

from .geometry import TriangleMesh


def square_plate(side: float, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Square plate in the z=0 plane, normals +z, edge length ``side``."""
    h = 0.5 * side
    c = np.asarray(center, dtype=np.float64)
    verts = np.array([[-h, -h, 0.0], [h, -h, 0.0], [h, h, 0.0], [-h, h, 0.0]]) + c
    faces = np.array([[0, 1, 2], [0, 2, 3]])
    return TriangleMesh.from_arrays(verts, faces)


def box_mesh(extents=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Axis-aligned box with outward normals, 12 triangles."""
    e = 0.5 * np.asarray(extents, dtype=np.float64)
    c = np.asarray(center, dtype=np.float64)
    signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
                     dtype=np.float64)
    verts = signs * e + c
    # corner ids: bit 2 = +x, bit 1 = +y, bit 0 = +z
    quads = [
        (0, 1, 3, 2),  # -x
        (4, 6, 7, 5),  # +x
        (0, 4, 5, 1),  # -y
        (2, 3, 7, 6),  # +y
        (0, 2, 6, 4),  # -z
        (1, 5, 7, 3),  # +z
    ]
    faces = []
    for a, b, cc, d in quads:
        faces.append((a, b, cc))
        faces.append((a, cc, d))
    return TriangleMesh.from_arrays(verts, np.array(faces))


def icosphere(radius: float, subdivisions: int = 3, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Geodesic sphere from a subdivided icosahedron, outward normals."""
    if subdivisions < 0:
        raise ValueError("subdivisions must be >= 0")
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)

    for _ in range(subdivisions):
        edge_mid: dict[tuple[int, int], int] = {}
        new_verts = [v for v in verts]
        new_faces = []

        def midpoint(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in edge_mid:
                m = new_verts[a] + new_verts[b]
                m = m / np.linalg.norm(m)
                edge_mid[key] = len(new_verts)
                new_verts.append(m)
            return edge_mid[key]

        for a, b, c in faces:
            ab = midpoint(a, b)
            bc = midpoint(b, c)
            ca = midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        verts = np.array(new_verts)
        faces = np.array(new_faces, dtype=np.int64)

    verts = verts * radius + np.asarray(center, dtype=np.float64)
    return TriangleMesh.from_arrays(verts, faces)


def cylinder_mesh(radius: float, height: float, segments: int = 48,
                  center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Closed cylinder along z with fan-triangulated caps."""
    if segments < 3:
        raise ValueError("segments must be >= 3")
    ang = 2.0 * np.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    lo = np.column_stack([ring, np.full(segments, -0.5 * height)])
    hi = np.column_stack([ring, np.full(segments, 0.5 * height)])
    verts = np.vstack([lo, hi,
                       [[0.0, 0.0, -0.5 * height]],
                       [[0.0, 0.0, 0.5 * height]]])
    c_lo = 2 * segments
    c_hi = 2 * segments + 1
    faces = []
    for k in range(segments):
        k2 = (k + 1) % segments
        # outward side wall
        faces.append((k, k2, segments + k2))
        faces.append((k, segments + k2, segments + k))
        faces.append((c_lo, k2, k))               # bottom cap, -z
        faces.append((c_hi, segments + k, segments + k2))  # top cap, +z
    verts = verts + np.asarray(center, dtype=np.float64)
    return TriangleMesh.from_arrays(verts, np.array(faces, dtype=np.int64))


def trihedral_mesh(side: float) -> TriangleMesh:
    """Corner reflector: three mutually perpendicular square plates meeting
    at the origin, spanning [0, side]^2 each, normals facing the interior
    (+x, +y, +z octant).  Boresight is (1,1,1)/sqrt(3)."""
    a = float(side)
    verts = np.array([
        [0, 0, 0],
        # x=0 panel corners (y, z)
        [0, a, 0], [0, a, a], [0, 0, a],
        # y=0 panel corners (x, z)
        [a, 0, 0], [a, 0, a],
        # z=0 panel corners (x, y)
        [a, a, 0],
    ], dtype=np.float64)
    faces = np.array([
        # x=0 panel, normal +x
        [0, 1, 2], [0, 2, 3],
        # y=0 panel, normal +y
        [0, 3, 5], [0, 5, 4],
        # z=0 panel, normal +z
        [0, 4, 6], [0, 6, 1],
    ], dtype=np.int64)
    return TriangleMesh.from_arrays(verts, faces)


_SHAPES = {
    "plate": lambda rng: square_plate(1.0),
    "box": lambda rng: box_mesh(rng.uniform(0.4, 1.0, size=3)),
    "sphere": lambda rng: icosphere(0.5, 3),
    "cylinder": lambda rng: cylinder_mesh(rng.uniform(0.2, 0.5), rng.uniform(0.5, 1.0)),
    "trihedral": lambda rng: trihedral_mesh(1.0),
}


def random_shape(name: str, rng: np.random.Generator) -> TriangleMesh:
    """Procedural shape by family name with randomized proportions."""
    if name not in _SHAPES:
        raise ValueError(f"unknown shape family '{name}', have {sorted(_SHAPES)}")
    return _SHAPES[name](rng)


def shape_families() -> list[str]:
    return sorted(_SHAPES)
