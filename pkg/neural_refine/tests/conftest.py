"""Shared fixtures: datasets come from the tracing package's CLI so these
tests exercise the real file boundary instead of in-process shortcuts."""

import os
import subprocess

import numpy as np
import pytest


def run_pointsbr(*args, env_extra=None, check=True):
    env = os.environ.copy()
    if env_extra:
        env.update(env_extra)
    proc = subprocess.run(["pointsbr", *map(str, args)],
                          capture_output=True, text=True, env=env)
    if check and proc.returncode != 0:
        raise AssertionError(
            f"pointsbr {' '.join(map(str, args))} exited "
            f"{proc.returncode}\nstdout: {proc.stdout}\nstderr: {proc.stderr}")
    return proc


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Three coarse/reference pairs at a coarse pitch; cheap enough for
    format and training unit tests."""
    out = tmp_path_factory.mktemp("tiny_pairs") / "set"
    run_pointsbr("gen-dataset", "--pairs", 3, "--set", "seed=7",
                 "--set", "pitch_factor=0.25", out)
    return out


def write_icosphere_obj(path, radius: float, subdivisions: int) -> None:
    """Icosahedron subdivided toward a sphere; plain OBJ output."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
    ], dtype=np.float64)
    faces = np.array([
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ], dtype=np.int64)
    for _ in range(subdivisions):
        edges = {}
        verts = list(verts)

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in edges:
                edges[key] = len(verts)
                verts.append(0.5 * (np.asarray(verts[a]) + np.asarray(verts[b])))
            return edges[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        verts = np.asarray(verts)
        faces = np.asarray(new_faces, dtype=np.int64)
    verts = radius * verts / np.linalg.norm(verts, axis=1, keepdims=True)
    lines = [f"v {x:.12g} {y:.12g} {z:.12g}" for x, y, z in verts]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in faces]
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
