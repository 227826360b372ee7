"""Input validation helpers used at API boundaries.

Internal code works on raw ndarrays and trusts its own invariants; these
checks run where user data enters (estimators, file loaders, CLI).
"""

from __future__ import annotations

import numpy as np

UNIT_TOL = 1e-9


def as_vec3(v, name: str = "vector") -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (3,):
        raise ValueError(f"{name} must have shape (3,), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite values")
    return v


def as_unit3(v, name: str = "direction", tol: float = UNIT_TOL) -> np.ndarray:
    v = as_vec3(v, name)
    n = float(np.linalg.norm(v))
    if abs(n - 1.0) > tol:
        raise ValueError(f"{name} must be unit length (|v| = {n:.12g})")
    return v


def as_points(points, name: str = "points") -> np.ndarray:
    """Validate an (n, 3) float array of positions."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"{name} must have shape (n, 3), got {pts.shape}")
    if pts.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(pts)):
        raise ValueError(f"{name} contains non-finite values")
    return pts


def as_angles(angles, name: str = "angles") -> np.ndarray:
    """Validate an (m, 2) array of (theta_deg, phi_deg) pairs."""
    ang = np.atleast_2d(np.asarray(angles, dtype=np.float64))
    if ang.ndim != 2 or ang.shape[1] != 2:
        raise ValueError(f"{name} must have shape (m, 2), got {ang.shape}")
    if not np.all(np.isfinite(ang)):
        raise ValueError(f"{name} contains non-finite values")
    return ang


def check_positive(value: float, name: str) -> float:
    value = float(value)
    if not value > 0.0:
        raise ValueError(f"{name} must be positive, got {value}")
    return value


def normalized(v: np.ndarray) -> np.ndarray:
    """Unit vector along v; raises on zero length."""
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / n
