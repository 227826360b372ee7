"""End-to-end monostatic sweeps: the point-cloud pipeline (tube tracing,
refinement, single-bounce field or fused-splat multi-bounce) and the
mesh reference, sharing one field-assembly path.

Angles are processed independently; set POINTSBR_WORKERS=N to spread them
over N threads (the tracing kernels drop the GIL).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import bounce, em, fusion, oracle, tracing
from .config import SweepConfig
from .frames import Gfb
from .geometry import PointCloud, make_frame
from .validation import as_angles


def worker_count() -> int:
    try:
        n = int(os.environ.get("POINTSBR_WORKERS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def _map_angles(fn, angles):
    n = worker_count()
    if n <= 1 or len(angles) <= 1:
        return [fn(a) for a in angles]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, angles))


def incident_wave(theta_deg: float, phi_deg: float, frequency: float,
                  pol: str = "theta") -> em.PlaneWave:
    """Plane wave arriving from the (theta, phi) direction.  Polarization
    'theta' puts E along the polar unit vector, 'phi' along the azimuthal."""
    from .geometry import direction_from_angles, frame_axes

    u, v, w = frame_axes(direction_from_angles(theta_deg, phi_deg))
    if pol == "theta":
        e_pol = -v
    elif pol == "phi":
        e_pol = u
    else:
        raise ValueError("pol must be 'theta' or 'phi'")
    return em.PlaneWave(frequency, -w, e_pol)


def field_from_gfb(g: Gfb, wave: em.PlaneWave, k_s) -> np.ndarray:
    """Single-interaction scattered field of every masked pixel of a frame
    buffer (the swift no-fusion path)."""
    rows, cols = np.nonzero(g.hit_mask)
    if rows.size == 0:
        return np.zeros(3, dtype=np.complex128)
    from .frames import world_normals, world_positions

    pos = world_positions(g, rows, cols)[:, None, :]
    nor = world_normals(g, rows, cols)[:, None, :]
    depth = g.depth[rows, cols]
    ones = np.ones(rows.size, dtype=bool)
    contribs = em.chain_fields(
        wave, k_s, pos, nor, np.ones(rows.size, dtype=np.int64), depth,
        ones, ones, g.frame.pitch * g.frame.u, g.frame.pitch * g.frame.v)
    return em.total_field(contribs)


def make_backend(cfg: SweepConfig) -> tracing.RefinerBackend:
    if cfg.backend == "classical":
        return tracing.ClassicalBackend()
    if cfg.backend == "external":
        if not cfg.backend_exe:
            raise ValueError("backend=external requires backend_exe")
        return tracing.ExternalBackend(cfg.backend_exe)
    raise ValueError(f"unknown backend '{cfg.backend}'")


def trace_view(cloud: PointCloud, theta_deg: float, phi_deg: float,
               cfg: SweepConfig, backend: tracing.RefinerBackend) -> Gfb:
    """Point cloud -> refined frame buffer for one view."""
    center, radius = cloud.bounding_sphere()
    frame = make_frame(theta_deg, phi_deg, center=center, radius=radius,
                       pitch=cfg.pitch)
    coarse = tracing.trace_coarse(cloud, frame, cfg.k_top, cfg.rel_radius)
    return tracing.refine(backend, coarse)


def point_po_sweep(cloud: PointCloud, angles, cfg: SweepConfig,
                   backend: tracing.RefinerBackend | None = None):
    """Monostatic single-bounce sweep straight from per-view frame buffers."""
    angles = as_angles(angles)
    backend = make_backend(cfg) if backend is None else backend

    def one(angle):
        theta, phi = angle
        # trim the unreliable silhouette band the ray tubes inflate; on a
        # curved body those pixels sit at a common range and would
        # otherwise add up like a bright ring
        g = fusion.edge_filter(trace_view(cloud, theta, phi, cfg, backend))
        wave = incident_wave(theta, phi, cfg.frequency, cfg.pol)
        e_s = field_from_gfb(g, wave, -wave.propagation)
        return (theta, phi, em.rcs_dbsm(e_s, wave.amplitude))

    return _map_angles(one, list(angles))


def build_splat_scene(cloud: PointCloud, cfg: SweepConfig,
                      backend: tracing.RefinerBackend | None = None,
                      edge_low: float | None = None,
                      edge_high: float | None = None):
    """Fusion-view tracing + edge filter + grid fusion -> splat scene."""
    backend = make_backend(cfg) if backend is None else backend

    def one(angle):
        theta, phi = angle
        g = trace_view(cloud, theta, phi, cfg, backend)
        return fusion.edge_filter(g, edge_low, edge_high)

    gfbs = _map_angles(one, list(cfg.fusion_views))
    records = fusion.fuse(gfbs, cfg.fusion_resolution)
    centers, normals, radii = fusion.make_splats(records)
    return bounce.SplatScene.build(centers, normals, radii), records


def splat_mbc_sweep(scene: bounce.SplatScene, angles, cfg: SweepConfig):
    """Monostatic multi-bounce sweep over a fused splat scene."""
    angles = as_angles(angles)
    lo = scene.centers.min(axis=0)
    hi = scene.centers.max(axis=0)
    center = 0.5 * (lo + hi)
    radius = float(np.sqrt(((scene.centers - center) ** 2).sum(axis=1).max()))
    radius += float(scene.radii.max())
    eps = cfg.secondary_ray_offset

    def one(angle):
        theta, phi = angle
        frame = make_frame(theta, phi, center=center, radius=radius, pitch=cfg.pitch)
        wave = incident_wave(theta, phi, cfg.frequency, cfg.pol)
        k_s = -wave.propagation
        origins = frame.pixel_origins().reshape(-1, 3)
        pos, nor, nb, path, _ = bounce.trace_chains(
            scene, origins, frame.ray_dir, cfg.max_bounce, eps, cfg.blend_factor)
        valid = nb > 0
        vis = np.zeros(origins.shape[0], dtype=bool)
        if np.any(valid):
            last = nb[valid] - 1
            last_pos = pos[np.flatnonzero(valid), last]
            vis[valid] = bounce.visibility_batch(scene, last_pos, k_s, eps)
        contribs = em.chain_fields(wave, k_s, pos, nor, nb, path, valid, vis,
                                   frame.pitch * frame.u, frame.pitch * frame.v)
        e_s = em.total_field(contribs)
        return (theta, phi, em.rcs_dbsm(e_s, wave.amplitude))

    return _map_angles(one, list(angles))


def point_mbc_sweep(cloud: PointCloud, angles, cfg: SweepConfig,
                    backend: tracing.RefinerBackend | None = None):
    scene, _ = build_splat_scene(cloud, cfg, backend)
    return splat_mbc_sweep(scene, angles, cfg)


def mesh_reference_sweep(scene: oracle.MeshScene, angles, cfg: SweepConfig,
                         max_bounce: int | None = None):
    """Ground-truth monostatic sweep tracing the mesh directly."""
    angles = as_angles(angles)
    max_bounce = cfg.max_bounce if max_bounce is None else max_bounce
    lo = scene.corners.reshape(-1, 3).min(axis=0)
    hi = scene.corners.reshape(-1, 3).max(axis=0)
    center = 0.5 * (lo + hi)
    radius = float(np.sqrt(((scene.corners.reshape(-1, 3) - center) ** 2)
                           .sum(axis=1).max()))

    def one(angle):
        theta, phi = angle
        frame = make_frame(theta, phi, center=center, radius=radius, pitch=cfg.pitch)
        wave = incident_wave(theta, phi, cfg.frequency, cfg.pol)
        k_s = -wave.propagation
        origins = frame.pixel_origins().reshape(-1, 3)
        pos, nor, nb, path, _ = oracle.mesh_trace_chains(
            scene, origins, frame.ray_dir, max_bounce)
        valid = nb > 0
        vis = np.zeros(origins.shape[0], dtype=bool)
        if np.any(valid):
            last = nb[valid] - 1
            last_pos = pos[np.flatnonzero(valid), last]
            vis[valid] = oracle.mesh_visibility_batch(scene, last_pos, k_s)
        contribs = em.chain_fields(wave, k_s, pos, nor, nb, path, valid, vis,
                                   frame.pitch * frame.u, frame.pitch * frame.v)
        e_s = em.total_field(contribs)
        return (theta, phi, em.rcs_dbsm(e_s, wave.amplitude))

    return _map_angles(one, list(angles))
