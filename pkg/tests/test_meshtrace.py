import numpy as np
import pytest

from pointsbr import geometry, oracle, primitives
from conftest import random_unit


# ---------------------------------------------------------------------------
# classical Moller-Trumbore reference, cross-product form, for checking the
# watertight traversal on generic (non-degenerate) geometry.
# ---------------------------------------------------------------------------

def brute_nearest_tri(corners, o, d, min_t=0.0):
    a = corners[:, 0]
    e1 = corners[:, 1] - a
    e2 = corners[:, 2] - a
    p = np.cross(np.broadcast_to(d, e2.shape), e2)
    det = np.einsum("ij,ij->i", e1, p)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / det
        s = o - a
        u = np.einsum("ij,ij->i", s, p) * inv
        q = np.cross(s, e1)
        v = (q @ d) * inv
        t = np.einsum("ij,ij->i", e2, q) * inv
    hit = (np.abs(det) > 0) & (u >= 0) & (v >= 0) & (u + v <= 1) & (t >= min_t)
    if not hit.any():
        return None
    idx = np.flatnonzero(hit)
    best = idx[np.lexsort((idx, t[idx]))[0]]
    return float(t[best]), int(best)


def random_soup(rng, n_tri):
    base = rng.uniform(-1, 1, (n_tri, 3))
    c = base[:, None, :] + rng.uniform(-0.4, 0.4, (n_tri, 3, 3))
    verts = c.reshape(-1, 3)
    faces = np.arange(3 * n_tri).reshape(-1, 3)
    return geometry.TriangleMesh.from_arrays(verts, faces)


class TestNearestTriangle:
    def test_matches_classical_reference(self, rng):
        total = 0
        for _ in range(20):
            mesh = random_soup(rng, int(rng.integers(20, 80)))
            scene = oracle.MeshScene.build(mesh)
            for _ in range(500):
                o = random_unit(rng) * 3.0
                target = rng.uniform(-0.8, 0.8, 3)
                d = target - o
                d /= np.linalg.norm(d)
                got = oracle.intersect_mesh(scene, o, d)
                ref = brute_nearest_tri(scene.corners, o, d)
                if ref is None:
                    assert got is None
                    continue
                t, i = ref
                assert got is not None
                assert got.triangle == i
                np.testing.assert_allclose(got.t, t, rtol=1e-9, atol=1e-12)
                np.testing.assert_allclose(got.position, o + t * d, atol=1e-9)
                total += 1
        assert total >= 3000

    def test_normal_flipped_toward_origin(self):
        mesh = primitives.square_plate(2.0)
        scene = oracle.MeshScene.build(mesh)
        above = oracle.intersect_mesh(scene, [0.1, 0.2, 3.0], [0.0, 0.0, -1.0])
        np.testing.assert_allclose(above.normal, [0.0, 0.0, 1.0], atol=0)
        below = oracle.intersect_mesh(scene, [0.1, 0.2, -3.0], [0.0, 0.0, 1.0])
        np.testing.assert_allclose(below.normal, [0.0, 0.0, -1.0], atol=0)

    def test_min_t_skips_near_hits(self):
        mesh = primitives.box_mesh((1.0, 1.0, 1.0))
        scene = oracle.MeshScene.build(mesh)
        hit = oracle.intersect_mesh(scene, [0.0, 0.0, 2.0], [0.0, 0.0, -1.0])
        np.testing.assert_allclose(hit.t, 1.5, rtol=1e-12)
        far = oracle.intersect_mesh(scene, [0.0, 0.0, 2.0], [0.0, 0.0, -1.0],
                                    min_t=1.6)
        np.testing.assert_allclose(far.t, 2.5, rtol=1e-12)

    def test_shared_edges_never_leak(self, rng):
        # two triangles sharing a diagonal: every ray through the square must
        # hit, including rays aimed exactly at the shared edge and vertices
        verts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0],
                          [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]])
        faces = np.array([[0, 1, 2], [0, 2, 3]])
        mesh = geometry.TriangleMesh.from_arrays(verts, faces)
        scene = oracle.MeshScene.build(mesh)
        xy = rng.uniform(0.0, 1.0, (5000, 2))
        diag = rng.uniform(0.0, 1.0, 200)
        xy = np.vstack([xy, np.stack([diag, diag], axis=1),
                        [[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0],
                         [0.5, 0.5]]])
        origins = np.column_stack([xy, np.full(xy.shape[0], 2.0)])
        _, _, nb, path, _ = oracle.mesh_trace_chains(scene, origins,
                                                     [0.0, 0.0, -1.0], 1)
        assert np.all(nb == 1)
        np.testing.assert_allclose(path, 2.0, rtol=1e-12)

    def test_watertight_box_edges(self, rng):
        # rays aimed exactly at box edges and corners, approaching against
        # the outward normals of every adjacent face so the crossing is
        # transversal (a silhouette graze may legally miss): no leaks allowed
        mesh = primitives.box_mesh((1.0, 1.0, 1.0))
        scene = oracle.MeshScene.build(mesh)
        cases = []
        for e in rng.uniform(-0.5, 0.5, 400):
            cases.append(([e, 0.5, 0.5], [0.0, 1.0, 1.0], 0))
            cases.append(([0.5, e, -0.5], [1.0, 0.0, -1.0], 1))
            cases.append(([-0.5, 0.5, e], [-1.0, 1.0, 0.0], 2))
        cases.append(([0.5, 0.5, 0.5], [1.0, 1.0, 1.0], -1))
        cases.append(([-0.5, -0.5, -0.5], [-1.0, -1.0, -1.0], -1))
        for tgt, outward, free_axis in cases:
            out = np.asarray(outward, dtype=np.float64)
            jitter = rng.uniform(0.2, 0.8, 3) * np.sign(out)
            if free_axis >= 0:
                jitter[free_axis] = rng.uniform(-0.5, 0.5)
            approach = out + jitter
            o = np.asarray(tgt) + 4.0 * approach / np.linalg.norm(approach)
            d = np.asarray(tgt) - o
            d /= np.linalg.norm(d)
            assert oracle.intersect_mesh(scene, o, d) is not None


class TestAnalyticSphereDepth:
    def test_points_lie_on_front_of_sphere(self, rng):
        center = rng.normal(size=3)
        frame = geometry.make_frame(37.0, 210.0, center=center, radius=1.5,
                                    pitch=0.05)
        depth = oracle.analytic_sphere_depth(frame, center, 1.5)
        hit = np.isfinite(depth)
        assert hit.any()
        rows, cols = np.nonzero(hit)
        pos = (frame.pixel_origins()[rows, cols]
               - depth[rows, cols][:, None] * frame.w)
        r = np.linalg.norm(pos - center, axis=1)
        np.testing.assert_allclose(r, 1.5, atol=1e-9)
        # near intersection: surface point on the sensor-facing hemisphere
        assert np.all((pos - center) @ frame.w > 0)

    def test_silhouette_radius(self):
        frame = geometry.make_frame(0.0, 0.0, center=np.zeros(3), radius=1.0,
                                    pitch=0.02)
        depth = oracle.analytic_sphere_depth(frame, np.zeros(3), 1.0)
        grid = frame.pixel_origins()
        lateral = np.hypot(grid[..., 0], grid[..., 1])
        assert np.all(np.isfinite(depth[lateral < 0.999]))
        assert not np.any(np.isfinite(depth[lateral > 1.001]))

    def test_matches_icosphere_render(self):
        frame = geometry.make_frame(60.0, 45.0, center=np.zeros(3), radius=2.0,
                                    pitch=0.06)
        ana = oracle.analytic_sphere_depth(frame, np.zeros(3), 2.0)
        mesh = primitives.icosphere(2.0, subdivisions=4)
        g = oracle.render_reference_gfb(oracle.MeshScene.build(mesh), frame)
        both = np.isfinite(ana) & g.hit_mask
        assert both.sum() > 2000
        # faceting error stays below one percent of the radius off the limb
        err = np.abs(g.depth[both] - ana[both])
        interior = ana[both] < np.nanmax(ana) - 0.1
        assert np.quantile(err[interior], 0.99) < 0.02


class TestRenderReferenceGfb:
    def test_face_on_plate_exact(self):
        mesh = primitives.square_plate(2.0)
        scene = oracle.MeshScene.build(mesh)
        frame = geometry.make_frame(0.0, 0.0, center=np.zeros(3), radius=1.4,
                                    pitch=0.07)
        g = oracle.render_reference_gfb(scene, frame)
        grid = frame.pixel_origins()
        inside = np.maximum(np.abs(grid[..., 0]), np.abs(grid[..., 1])) < 1.0
        np.testing.assert_array_equal(g.hit_mask, inside)
        np.testing.assert_allclose(g.depth[inside], frame.standoff, rtol=1e-14)
        np.testing.assert_allclose(g.normal[inside],
                                   np.tile([0.0, 0.0, 1.0], (inside.sum(), 1)),
                                   atol=0)
        np.testing.assert_array_equal(g.mask, inside.astype(float))

    def test_oblique_plate_depth_analytic(self):
        mesh = primitives.square_plate(2.0)
        scene = oracle.MeshScene.build(mesh)
        frame = geometry.make_frame(55.0, 30.0, center=np.zeros(3), radius=1.5,
                                    pitch=0.05)
        g = oracle.render_reference_gfb(scene, frame)
        assert g.n_hits > 500
        rows, cols = np.nonzero(g.hit_mask)
        origins = frame.pixel_origins()[rows, cols]
        # ray o - t*w crosses z=0 at t = o_z / w_z
        t_true = origins[:, 2] / frame.w[2]
        np.testing.assert_allclose(g.depth[rows, cols], t_true, rtol=1e-9)
        landing = origins - t_true[:, None] * frame.w
        assert np.all(np.max(np.abs(landing[:, :2]), axis=1) <= 1.0 + 1e-9)
        # every clearly interior landing is reported as a hit
        miss_rows, miss_cols = np.nonzero(~g.hit_mask)
        m_orig = frame.pixel_origins()[miss_rows, miss_cols]
        m_t = m_orig[:, 2] / frame.w[2]
        m_land = m_orig - m_t[:, None] * frame.w
        assert not np.any(np.max(np.abs(m_land[:, :2]), axis=1) < 1.0 - 1e-9)


class TestMeshChains:
    def test_trihedral_three_bounce_retroreflection(self):
        mesh = primitives.trihedral_mesh(3.0)
        scene = oracle.MeshScene.build(mesh)
        boresight = np.degrees(np.arccos(1.0 / np.sqrt(3.0)))
        frame = geometry.make_frame(boresight, 45.0, center=np.full(3, 0.75),
                                    radius=2.0, pitch=0.03)
        origins = frame.pixel_origins().reshape(-1, 3)
        d = frame.ray_dir
        pos, nor, nb, path, exit_dir = oracle.mesh_trace_chains(
            scene, origins, d, 3)
        three = nb == 3
        hit = nb > 0
        assert three.sum() > 0.5 * hit.sum()
        # perpendicular axis-aligned panels reverse the ray exactly
        np.testing.assert_allclose(exit_dir[three],
                                   np.tile(-d, (three.sum(), 1)), atol=1e-12)
        # equal round-trip optical path for every retro ray: the total of
        # forward path and return projection must be constant across rays
        k_s = frame.w
        closure = path[three] - pos[three, 2] @ k_s
        assert np.ptp(closure) < 1e-9

    def test_chain_layout_matches_singles(self, rng):
        mesh = random_soup(rng, 60)
        scene = oracle.MeshScene.build(mesh)
        origins = random_unit(rng, 20) * 3.0
        d = np.array([0.1, -0.2, -0.6])
        d /= np.linalg.norm(d)
        pos, nor, nb, path, exit_dir = oracle.mesh_trace_chains(
            scene, origins, d, 2)
        for r in range(20):
            first = oracle.intersect_mesh(scene, origins[r], d)
            if first is None:
                assert nb[r] == 0
                np.testing.assert_array_equal(exit_dir[r], d)
                continue
            assert nb[r] >= 1
            np.testing.assert_allclose(pos[r, 0], first.position, atol=1e-12)
            np.testing.assert_allclose(nor[r, 0], first.normal, atol=1e-12)

    def test_rejects_bad_bounce_count(self, rng):
        scene = oracle.MeshScene.build(random_soup(rng, 10))
        with pytest.raises(ValueError):
            oracle.mesh_trace_chains(scene, np.zeros((1, 3)), [0, 0, -1.0], 0)


class TestMeshVisibility:
    def test_plate_blocking_geometry(self):
        mesh = primitives.square_plate(2.0)
        scene = oracle.MeshScene.build(mesh)
        up = np.array([0.0, 0.0, 1.0])
        pts = np.array([[0.0, 0.0, 1.0],    # above, looking up: clear
                        [0.3, -0.2, -1.0],  # below, looking up: blocked
                        [5.0, 0.0, -1.0]])  # below but beyond the rim: clear
        vis = oracle.mesh_visibility_batch(scene, pts, up)
        np.testing.assert_array_equal(vis, [True, False, True])
        vis_down = oracle.mesh_visibility_batch(scene, pts, -up)
        np.testing.assert_array_equal(vis_down, [False, True, True])

    def test_offset_clears_own_surface(self):
        mesh = primitives.square_plate(2.0)
        scene = oracle.MeshScene.build(mesh)
        on_plate = np.array([[0.1, 0.1, 0.0]])
        assert oracle.mesh_visibility_batch(scene, on_plate,
                                            np.array([0.0, 0.0, 1.0]))[0]


class TestAnalyticFormulas:
    def test_plate_value(self):
        np.testing.assert_allclose(oracle.analytic_plate_rcs(6.0, 0.6),
                                   14400.0 * np.pi, rtol=1e-12)

    def test_sphere_value(self):
        np.testing.assert_allclose(oracle.analytic_sphere_rcs(2.0),
                                   4.0 * np.pi, rtol=1e-15)

    def test_trihedral_value(self):
        np.testing.assert_allclose(oracle.analytic_trihedral_rcs(3.0, 0.6),
                                   2700.0 * np.pi, rtol=1e-12)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            oracle.analytic_plate_rcs(0.0, 0.6)
        with pytest.raises(ValueError):
            oracle.analytic_sphere_rcs(-1.0)
        with pytest.raises(ValueError):
            oracle.analytic_trihedral_rcs(1.0, 0.0)


class TestMeshScene:
    def test_build_properties(self):
        mesh = primitives.box_mesh((2.0, 2.0, 2.0))
        scene = oracle.MeshScene.build(mesh)
        assert scene.n_triangles == 12
        np.testing.assert_allclose(scene.diameter, 2.0 * np.sqrt(3.0),
                                   rtol=1e-12)
        np.testing.assert_allclose(scene.offset_eps,
                                   2e-6 * np.sqrt(3.0), rtol=1e-12)
