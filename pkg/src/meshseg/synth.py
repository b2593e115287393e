"""Synthetic triangle meshes for tests, demos, and the toy dataset.

All generators are deterministic given their arguments; the ones that take
a seed draw through numpy Generators only.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from meshseg.mesh import Mesh, save_off


def tetrahedron(scale: float = 1.0) -> Mesh:
    """Regular tetrahedron centered at the origin, outward orientation."""
    v = scale * np.array([
        [1.0, 1.0, 1.0],
        [1.0, -1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
    ])
    f = [[0, 1, 2], [0, 2, 3], [0, 3, 1], [1, 3, 2]]
    return Mesh(v, f)


def cube(scale: float = 1.0) -> Mesh:
    """Axis-aligned cube [-s, s]^3, 12 outward-oriented triangles."""
    s = scale
    v = np.array([
        [-s, -s, -s], [s, -s, -s], [s, s, -s], [-s, s, -s],
        [-s, -s, s], [s, -s, s], [s, s, s], [-s, s, s],
    ])
    f = [
        [0, 2, 1], [0, 3, 2],  # z = -s
        [4, 5, 6], [4, 6, 7],  # z = +s
        [0, 1, 5], [0, 5, 4],  # y = -s
        [2, 3, 7], [2, 7, 6],  # y = +s
        [1, 2, 6], [1, 6, 5],  # x = +s
        [3, 0, 4], [3, 4, 7],  # x = -s
    ]
    return Mesh(v, f)


def icosphere(subdivisions: int = 2, radius: float = 1.0) -> Mesh:
    """Icosahedron subdivided by edge midpoints and projected to a sphere."""
    if subdivisions < 0:
        raise ValueError("subdivisions must be nonnegative")
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(v, dtype=np.float64) for v in verts]

    for _ in range(subdivisions):
        midpoint: dict[tuple[int, int], int] = {}

        def mid(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in midpoint:
                verts.append(0.5 * (verts[a] + verts[b]))
                midpoint[key] = len(verts) - 1
            return midpoint[key]

        nxt = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nxt += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = nxt

    v = np.array(verts)
    v *= radius / np.linalg.norm(v, axis=1)[:, None]
    return Mesh(v, np.array(faces))


def plane_grid(nx: int = 4, ny: int = 4, size: float = 1.0) -> Mesh:
    """Open rectangular grid on z=0 with nx*ny cells, 2 triangles each."""
    xs = np.linspace(0.0, size, nx + 1)
    ys = np.linspace(0.0, size, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    v = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)])
    f = []
    for i in range(nx):
        for j in range(ny):
            a = i * (ny + 1) + j
            b = a + (ny + 1)
            f += [[a, b, b + 1], [a, b + 1, a + 1]]
    return Mesh(v, f)


def bumpy_patch(nx: int, ny: int, seed: int, amplitude: float = 0.15) -> Mesh:
    """Plane grid with seeded vertical noise; breaks all coplanarity ties."""
    base = plane_grid(nx, ny)
    rng = np.random.default_rng(seed)
    v = np.array(base.vertices)
    v[:, 2] += amplitude * rng.standard_normal(len(v))
    return Mesh(v, base.faces)


def cylinder(n_segments: int = 24, radius: float = 0.5, height: float = 2.0) -> Mesh:
    """Closed cylinder along z, capped with triangle fans about axis points."""
    if n_segments < 3:
        raise ValueError("need at least 3 segments")
    ang = 2.0 * math.pi * np.arange(n_segments) / n_segments
    ring = np.column_stack([radius * np.cos(ang), radius * np.sin(ang)])
    lo = np.column_stack([ring, np.full(n_segments, -height / 2.0)])
    hi = np.column_stack([ring, np.full(n_segments, height / 2.0)])
    v = np.vstack([lo, hi, [[0.0, 0.0, -height / 2.0]], [[0.0, 0.0, height / 2.0]]])
    cb, ct = 2 * n_segments, 2 * n_segments + 1
    f = []
    for i in range(n_segments):
        j = (i + 1) % n_segments
        f += [[i, j, n_segments + i], [j, n_segments + j, n_segments + i]]
        f += [[cb, j, i], [ct, n_segments + i, n_segments + j]]
    return Mesh(v, f)


def concave_corner() -> Mesh:
    """Floor plate plus a perpendicular wall sharing one edge.

    The dual edge between faces 1 and 2 crosses the 90-degree inside corner;
    its exterior dihedral is exactly pi/2.
    """
    v = np.array([
        [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0],
        [1.0, 1.0, 1.0], [0.0, 1.0, 1.0],
    ])
    f = [[0, 1, 2], [0, 2, 3], [3, 2, 4], [3, 4, 5]]
    return Mesh(v, f)


def spiked_sphere(subdivisions: int = 2, spike: float = 1.0, vertex: int = 0) -> Mesh:
    """Icosphere with one vertex pushed radially outward by the given factor.

    spike = 0 leaves the sphere untouched; spike = s moves the vertex to
    radius (1 + s).
    """
    base = icosphere(subdivisions)
    v = np.array(base.vertices)
    v[vertex] *= 1.0 + spike
    return Mesh(v, base.faces)


def dumbbell(subdivisions: int = 2, neck: float = 0.35, top: float = 1.0,
             bottom: float = 0.7, sharpness: float = 6.0) -> Mesh:
    """Two unequal lobes joined by a thin neck, built by radially scaling
    an icosphere's xy-distance as a function of height.

    The top lobe (z > 0) and bottom lobe get different amplitudes, so
    thickness-sensitive features separate them.
    """
    base = icosphere(subdivisions)
    v = np.array(base.vertices)
    z = v[:, 2]
    blend = 0.5 * (1.0 + np.tanh(sharpness * z))  # 0 at bottom, 1 at top
    amp = bottom + (top - bottom) * blend
    g = neck + amp * z * z
    v[:, 0] *= g
    v[:, 1] *= g
    return Mesh(v, base.faces)


def dumbbell_labels(mesh: Mesh) -> np.ndarray:
    """Ground truth for a dumbbell: 1 for faces with centroid above z=0."""
    return (mesh.face_centroids[:, 2] > 0.0).astype(np.int64)


def make_toy_dataset(out_dir, n_meshes: int = 10, subdivisions: int = 2,
                     seed: int = 0, name: str = "toy-dumbbell") -> Path:
    """Write a labeled two-class mesh set and its manifest; returns the
    manifest path.

    Each mesh is a dumbbell with seeded lobe amplitudes and neck width, so
    the set has within-class variation. Labels mark the two lobes.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    entries = []
    for k in range(n_meshes):
        top = float(rng.uniform(0.9, 1.2))
        bottom = float(rng.uniform(0.55, 0.8))
        neck = float(rng.uniform(0.3, 0.42))
        mesh = dumbbell(subdivisions, neck=neck, top=top, bottom=bottom)
        labels = dumbbell_labels(mesh)
        mesh_id = f"dumbbell-{k:02d}"
        save_off(mesh, out / f"{mesh_id}.off")
        (out / f"{mesh_id}.seg").write_text(
            "".join(f"{v}\n" for v in labels))
        entries.append({
            "id": mesh_id,
            "mesh": f"{mesh_id}.off",
            "labels": f"{mesh_id}.seg",
        })
    manifest = {
        "name": name,
        "classes": ["bottom-lobe", "top-lobe"],
        "meshes": entries,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
