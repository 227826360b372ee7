"""Readers and writers for the on-disk formats: OBJ meshes, XYZ/PLY point
clouds, binary depth-map and frame-buffer files (CDM1/GFB1), splat files
(SPL1) and sweep CSVs.  All binary formats are little-endian.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FileFormatError, GridMismatchError, InvalidGeometryError
from .frames import CoarseDepthMap, Gfb
from .geometry import PointCloud, ScreenFrame, TriangleMesh

_HDR = struct.Struct("<II13d")  # width, height, frame (o, u, v, w, pitch)


# ----------------------------------------------------------------- meshes

def read_obj(path) -> TriangleMesh:
    """ASCII OBJ; polygon faces are fan-triangulated, v/vt/vn references and
    negative indices handled, materials ignored."""
    verts: list[list[float]] = []
    faces: list[tuple[int, int, int]] = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for ln, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise FileFormatError(f"{path}:{ln}: vertex needs 3 coordinates")
                verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif tag == "f":
                if len(parts) < 4:
                    raise FileFormatError(f"{path}:{ln}: face needs at least 3 vertices")
                idx = []
                for tok in parts[1:]:
                    raw = tok.split("/")[0]
                    k = int(raw)
                    idx.append(k - 1 if k > 0 else len(verts) + k)
                for a, b in zip(idx[1:-1], idx[2:]):
                    faces.append((idx[0], a, b))
    if not verts or not faces:
        raise FileFormatError(f"{path}: no usable geometry (v/f records)")
    try:
        return TriangleMesh.from_arrays(np.array(verts), np.array(faces, dtype=np.int64))
    except Exception as exc:
        raise FileFormatError(f"{path}: {exc}") from exc


def write_obj(path, mesh: TriangleMesh) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for x, y, z in mesh.vertices:
            fh.write(f"v {x:.9g} {y:.9g} {z:.9g}\n")
        for a, b, c in mesh.faces:
            fh.write(f"f {a + 1} {b + 1} {c + 1}\n")


# ----------------------------------------------------------- point clouds

def read_xyz(path) -> PointCloud:
    pts = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for ln, line in enumerate(fh, 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            if len(parts) < 3:
                raise FileFormatError(f"{path}:{ln}: expected 'x y z'")
            pts.append([float(parts[0]), float(parts[1]), float(parts[2])])
    if not pts:
        raise FileFormatError(f"{path}: empty point cloud")
    return PointCloud(np.array(pts))


def write_xyz(path, cloud: PointCloud, comment: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        for x, y, z in cloud.points:
            # repr of the python float is the shortest exact representation
            fh.write(f"{float(x)!r} {float(y)!r} {float(z)!r}\n")


def read_ply(path) -> PointCloud:
    """Binary little-endian PLY with float32 x, y, z vertex properties."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"ply"):
        raise FileFormatError(f"{path}: not a PLY file")
    end = data.find(b"end_header\n")
    if end < 0:
        raise FileFormatError(f"{path}: unterminated PLY header")
    header = data[:end].decode("ascii", errors="replace").splitlines()
    body = data[end + len(b"end_header\n"):]

    n_verts = None
    props: list[str] = []
    in_vertex = False
    fmt_ok = False
    for line in header[1:]:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            fmt_ok = parts[1] == "binary_little_endian"
        elif parts[0] == "element":
            in_vertex = parts[1] == "vertex"
            if in_vertex:
                n_verts = int(parts[2])
        elif parts[0] == "property" and in_vertex:
            if parts[1] not in ("float", "float32"):
                raise FileFormatError(f"{path}: only float32 vertex properties supported")
            props.append(parts[2])
    if not fmt_ok:
        raise FileFormatError(f"{path}: PLY must be binary_little_endian")
    if n_verts is None or n_verts < 1:
        raise FileFormatError(f"{path}: missing vertex element")
    for name in ("x", "y", "z"):
        if name not in props:
            raise FileFormatError(f"{path}: vertex property '{name}' missing")
    stride = 4 * len(props)
    if len(body) < n_verts * stride:
        raise FileFormatError(f"{path}: truncated vertex data")
    raw = np.frombuffer(body[:n_verts * stride], dtype="<f4").reshape(n_verts, len(props))
    cols = [props.index(n) for n in ("x", "y", "z")]
    return PointCloud(raw[:, cols].astype(np.float64))


def write_ply(path, cloud: PointCloud) -> None:
    n = len(cloud)
    header = ("ply\nformat binary_little_endian 1.0\n"
              f"element vertex {n}\n"
              "property float x\nproperty float y\nproperty float z\n"
              "end_header\n")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(cloud.points, dtype="<f4").tobytes())


# --------------------------------------------------- depth / frame buffers

def _frame_bytes(frame: ScreenFrame) -> bytes:
    return _HDR.pack(frame.width, frame.height,
                     *frame.origin, *frame.u, *frame.v, *frame.w, frame.pitch)


def _read_header(data: bytes, magic: bytes, path) -> tuple[ScreenFrame, int]:
    if len(data) < 4 + _HDR.size:
        raise FileFormatError(f"{path}: file too short")
    if data[:4] != magic:
        raise FileFormatError(f"{path}: bad magic {data[:4]!r}, expected {magic!r}")
    vals = _HDR.unpack_from(data, 4)
    width, height = vals[0], vals[1]
    f = vals[2:]
    try:
        frame = ScreenFrame(np.array(f[0:3]), np.array(f[3:6]), np.array(f[6:9]),
                            np.array(f[9:12]), f[12], width, height)
    except Exception as exc:
        raise FileFormatError(f"{path}: invalid frame header: {exc}") from exc
    return frame, 4 + _HDR.size


def _read_grid(data: bytes, offset: int, shape, path) -> tuple[np.ndarray, int]:
    count = int(np.prod(shape))
    nbytes = 4 * count
    if len(data) < offset + nbytes:
        raise FileFormatError(f"{path}: truncated grid data")
    arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
    return arr.reshape(shape).astype(np.float64), offset + nbytes


def write_cdm1(path, cdm: CoarseDepthMap) -> None:
    with open(path, "wb") as fh:
        fh.write(b"CDM1")
        fh.write(_frame_bytes(cdm.frame))
        fh.write(np.ascontiguousarray(cdm.depth, dtype="<f4").tobytes())


def read_cdm1(path) -> CoarseDepthMap:
    data = Path(path).read_bytes()
    frame, off = _read_header(data, b"CDM1", path)
    depth, off = _read_grid(data, off, (frame.height, frame.width), path)
    try:
        return CoarseDepthMap(frame, depth)
    except Exception as exc:
        raise FileFormatError(f"{path}: {exc}") from exc


def write_gfb1(path, g: Gfb) -> None:
    with open(path, "wb") as fh:
        fh.write(b"GFB1")
        fh.write(_frame_bytes(g.frame))
        fh.write(np.ascontiguousarray(g.depth, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(g.normal, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(g.mask, dtype="<f4").tobytes())


def read_gfb1(path) -> Gfb:
    data = Path(path).read_bytes()
    frame, off = _read_header(data, b"GFB1", path)
    h, w = frame.height, frame.width
    depth, off = _read_grid(data, off, (h, w), path)
    normal, off = _read_grid(data, off, (h, w, 3), path)
    mask, off = _read_grid(data, off, (h, w), path)
    # float32 round trip denormalizes unit vectors slightly; restore them
    hit = mask >= 0.5
    norms = np.linalg.norm(normal[hit], axis=1)
    bad = norms < 1e-12
    norms[bad] = 1.0
    normal[hit] = normal[hit] / norms[:, None]
    mask = np.clip(mask, 0.0, 1.0)
    try:
        return Gfb(frame, depth, normal, mask)
    except Exception as exc:
        raise FileFormatError(f"{path}: {exc}") from exc


# ----------------------------------------------------------------- splats

def write_spl1(path, centers, normals, radii) -> None:
    centers = np.asarray(centers, dtype=np.float64)
    normals = np.asarray(normals, dtype=np.float64)
    radii = np.asarray(radii, dtype=np.float64)
    n = centers.shape[0]
    if centers.shape != (n, 3) or normals.shape != (n, 3) or radii.shape != (n,):
        raise InvalidGeometryError("splat arrays must be (n,3),(n,3),(n,)")
    if n and np.any(np.abs(np.linalg.norm(normals, axis=1) - 1.0) > 1e-6):
        raise InvalidGeometryError("splat normals must be unit length")
    if n and not np.all(radii > 0.0):
        raise InvalidGeometryError("splat radii must be positive")
    rec = np.empty((n, 7), dtype="<f4")
    rec[:, 0:3] = centers
    rec[:, 3:6] = normals
    rec[:, 6] = radii
    with open(path, "wb") as fh:
        fh.write(b"SPL1")
        fh.write(struct.pack("<I", n))
        fh.write(rec.tobytes())


def read_spl1(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    data = Path(path).read_bytes()
    if len(data) < 8 or data[:4] != b"SPL1":
        raise FileFormatError(f"{path}: not an SPL1 file")
    (n,) = struct.unpack_from("<I", data, 4)
    need = 8 + 28 * n
    if len(data) < need:
        raise FileFormatError(f"{path}: truncated splat data")
    rec = np.frombuffer(data, dtype="<f4", count=7 * n, offset=8).reshape(n, 7)
    centers = rec[:, 0:3].astype(np.float64)
    normals = rec[:, 3:6].astype(np.float64)
    norms = np.linalg.norm(normals, axis=1)
    if np.any(norms < 1e-12):
        raise FileFormatError(f"{path}: zero-length splat normal")
    normals = normals / norms[:, None]
    radii = rec[:, 6].astype(np.float64)
    if np.any(radii <= 0.0):
        raise FileFormatError(f"{path}: non-positive splat radius")
    return centers, normals, radii


# ------------------------------------------------------------- sweep CSVs

def write_sweep_csv(path, rows) -> None:
    """rows: iterable of (theta_deg, phi_deg, rcs_dbsm); stored sorted with a
    fixed 6-decimal format so identical runs are byte-identical."""
    arr = np.asarray(list(rows), dtype=np.float64).reshape(-1, 3)
    order = np.lexsort((arr[:, 1], arr[:, 0]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("theta_deg,phi_deg,rcs_dbsm\n")
        for th, ph, db in arr[order]:
            fh.write(f"{th:.6f},{ph:.6f},{db:.6f}\n")


def read_sweep_csv(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "theta_deg,phi_deg,rcs_dbsm":
            raise FileFormatError(f"{path}: unexpected header {header!r}")
        rows = []
        for ln, line in enumerate(fh, 2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise FileFormatError(f"{path}:{ln}: expected 3 columns")
            rows.append([float(p) for p in parts])
    if not rows:
        raise FileFormatError(f"{path}: no data rows")
    return np.array(rows)


def sweep_rmse(a: np.ndarray, b: np.ndarray) -> float:
    """RMSE in dB between two sweeps on the identical angle grid."""
    if a.shape != b.shape:
        raise GridMismatchError(f"sweep shapes differ: {a.shape} vs {b.shape}")
    if not np.allclose(a[:, 0:2], b[:, 0:2], atol=1e-9):
        raise GridMismatchError("sweep angle grids differ")
    return float(np.sqrt(np.mean((a[:, 2] - b[:, 2]) ** 2)))
