import numpy as np
import pytest

from pointsbr import bounce


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_unit(rng, n=None):
    v = rng.normal(size=3 if n is None else (n, 3))
    if n is None:
        return v / np.linalg.norm(v)
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def tiled_corner_scene(side: float, n: int) -> bounce.SplatScene:
    """Three mutually perpendicular [0,side]^2 panels tiled with an n x n
    grid of small splats each, exact axis-aligned normals."""
    h = side / n
    g = (np.arange(n) + 0.5) * h
    yy, zz = np.meshgrid(g, g, indexing="ij")
    panel = np.stack([np.zeros(n * n), yy.ravel(), zz.ravel()], axis=1)
    centers, normals = [], []
    for axis, nrm in ((0, (1.0, 0, 0)), (1, (0, 1.0, 0)), (2, (0, 0, 1.0))):
        centers.append(np.roll(panel, axis, axis=1))
        normals.append(np.tile(nrm, (n * n, 1)))
    centers = np.vstack(centers)
    normals = np.vstack(normals).astype(np.float64)
    radii = np.full(centers.shape[0], 0.75 * h)
    return bounce.SplatScene.build(centers, normals, radii)
