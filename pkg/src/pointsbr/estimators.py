"""Estimator-style front end: fit on geometry, predict monostatic radar
cross sections at requested angles.  Follows the scikit-learn parameter
conventions so instances clone, pickle and grid-search cleanly.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import bounce, oracle, sweep, tracing
from .config import FUSION_VIEWS_DEFAULT, SweepConfig
from .frames import CoarseDepthMap
from .geometry import PointCloud, TriangleMesh
from .validation import as_angles, as_points


class ClassicalRefiner(BaseEstimator, TransformerMixin):
    """Stateless depth-map refiner (morphology + median + hole fill)."""

    def fit(self, X, y=None):
        self.n_features_in_ = 0
        return self

    def transform(self, X):
        backend = tracing.ClassicalBackend()
        if isinstance(X, CoarseDepthMap):
            return tracing.refine(backend, X)
        return [tracing.refine(backend, c) for c in X]


class ExternalRefiner(BaseEstimator, TransformerMixin):
    """Depth-map refiner that shells out to an external executable speaking
    the coarse-in, refined-out file protocol."""

    def __init__(self, executable: str = ""):
        self.executable = executable

    def fit(self, X, y=None):
        if not self.executable:
            raise ValueError("executable must be a non-empty path")
        self.n_features_in_ = 0
        return self

    def transform(self, X):
        backend = tracing.ExternalBackend(self.executable)
        if isinstance(X, CoarseDepthMap):
            return tracing.refine(backend, X)
        return [tracing.refine(backend, c) for c in X]


class PointSbrSimulator(BaseEstimator):
    """Point-cloud scattering simulator.

    mode='po' renders one refined depth map per requested angle and sums the
    single-interaction field.  mode='mbc' fuses a fixed set of views into a
    splat scene once during fit, then bounces rays through it per angle.
    """

    def __init__(self, frequency: float = 5e8, pol: str = "theta",
                 mode: str = "po", pitch_factor: float = 0.1,
                 k_top: int = 8, rel_radius: float = 2.0,
                 max_bounce: int = 3, blend_factor: float = 1.0,
                 fusion_resolution: int = 256, fusion_views=None,
                 backend: str = "classical", backend_exe: str = ""):
        self.frequency = frequency
        self.pol = pol
        self.mode = mode
        self.pitch_factor = pitch_factor
        self.k_top = k_top
        self.rel_radius = rel_radius
        self.max_bounce = max_bounce
        self.blend_factor = blend_factor
        self.fusion_resolution = fusion_resolution
        self.fusion_views = fusion_views
        self.backend = backend
        self.backend_exe = backend_exe

    def _config(self) -> SweepConfig:
        views = FUSION_VIEWS_DEFAULT if self.fusion_views is None else tuple(
            (float(t), float(p)) for t, p in self.fusion_views)
        cfg = SweepConfig(
            frequency=self.frequency, pol=self.pol,
            pitch_factor=self.pitch_factor, k_top=self.k_top,
            rel_radius=self.rel_radius, max_bounce=self.max_bounce,
            blend_factor=self.blend_factor,
            fusion_resolution=self.fusion_resolution, fusion_views=views,
            backend=self.backend, backend_exe=self.backend_exe)
        cfg.validate()
        return cfg

    def fit(self, X, y=None):
        if self.mode not in ("po", "mbc"):
            raise ValueError("mode must be 'po' or 'mbc'")
        pts = X.points if isinstance(X, PointCloud) else as_points(X)
        self.cloud_ = PointCloud(pts)
        self.center_, self.radius_ = self.cloud_.bounding_sphere()
        self.n_features_in_ = 3
        cfg = self._config()
        if self.mode == "mbc":
            scene, records = sweep.build_splat_scene(self.cloud_, cfg)
            self.scene_ = scene
            self.n_splats_ = scene.centers.shape[0]
        return self

    def predict(self, angles) -> np.ndarray:
        check_is_fitted(self, "cloud_")
        ang = as_angles(angles)
        cfg = self._config()
        if self.mode == "po":
            rows = sweep.point_po_sweep(self.cloud_, ang, cfg)
        else:
            rows = sweep.splat_mbc_sweep(self.scene_, ang, cfg)
        return np.array([r[2] for r in rows], dtype=np.float64)


class MeshSbrSimulator(BaseEstimator):
    """Reference simulator that bounces rays on triangle meshes directly."""

    def __init__(self, frequency: float = 5e8, pol: str = "theta",
                 pitch_factor: float = 0.1, max_bounce: int = 3):
        self.frequency = frequency
        self.pol = pol
        self.pitch_factor = pitch_factor
        self.max_bounce = max_bounce

    def fit(self, X, y=None):
        if isinstance(X, TriangleMesh):
            mesh = X
        else:
            arr = np.asarray(X, dtype=np.float64)
            if arr.ndim != 3 or arr.shape[1:] != (3, 3):
                raise ValueError("expected a TriangleMesh or (m, 3, 3) corners")
            faces = np.arange(arr.shape[0] * 3, dtype=np.int64).reshape(-1, 3)
            mesh = TriangleMesh.from_arrays(arr.reshape(-1, 3), faces)
        self.scene_ = oracle.MeshScene.build(mesh)
        self.n_features_in_ = 3
        return self

    def predict(self, angles) -> np.ndarray:
        check_is_fitted(self, "scene_")
        ang = as_angles(angles)
        cfg = SweepConfig(frequency=self.frequency, pol=self.pol,
                          pitch_factor=self.pitch_factor,
                          max_bounce=self.max_bounce)
        cfg.validate()
        rows = sweep.mesh_reference_sweep(self.scene_, ang, cfg)
        return np.array([r[2] for r in rows], dtype=np.float64)
