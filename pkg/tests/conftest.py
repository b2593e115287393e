import math

import numpy as np
import pytest

from meshseg.graphcut import GraphCutProblem
from meshseg.mesh import DualGraph, Mesh, build_dual_graph
from meshseg.synth import cube, icosphere, tetrahedron


@pytest.fixture
def tet():
    return tetrahedron()


@pytest.fixture
def tet_graph(tet):
    return build_dual_graph(tet)


@pytest.fixture
def box():
    return cube()


@pytest.fixture(scope="session")
def ico2():
    return icosphere(2)


@pytest.fixture
def strip5():
    """Five-face triangle strip whose dual graph is a path 0-1-2-3-4."""
    verts = np.array([[x, y, 0.0] for x in range(4) for y in (0.0, 1.0)])
    faces = np.array([[0, 2, 1], [1, 2, 3], [2, 4, 3], [3, 4, 5], [4, 6, 5]])
    return Mesh(verts, faces)


def random_small_mesh(rng, max_faces=50):
    """Jittered icosahedron patches for oracle comparisons."""
    base = icosphere(rng.integers(0, 2))
    verts = np.array(base.vertices) * (1.0 + 0.2 * rng.standard_normal(
        (base.n_vertices, 1)))
    if base.n_faces > max_faces:
        keep = np.sort(rng.choice(base.n_faces, size=max_faces, replace=False))
        faces = np.array(base.faces)[keep]
        used = np.unique(faces)
        remap = {int(v): i for i, v in enumerate(used)}
        verts = verts[used]
        faces = np.vectorize(remap.get)(faces)
    else:
        faces = np.array(base.faces)
    return Mesh(verts, faces)


def synthetic_graph(n_faces, edges, dihedrals):
    """Face-adjacency graph with unit edge lengths, built directly."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    neighbors = [[] for _ in range(n_faces)]
    for u, v in edges:
        neighbors[u].append(v)
        neighbors[v].append(u)
    return DualGraph(
        n_faces=n_faces,
        edges=edges,
        edge_dihedral=np.asarray(dihedrals, dtype=np.float64),
        edge_length=np.ones(len(edges)),
        neighbors=tuple(np.array(sorted(a), dtype=np.int64) for a in neighbors),
    )


def random_problem(rng, max_faces=6, max_classes=3):
    """Small connected labeling instance for exhaustive-oracle comparison."""
    n = int(rng.integers(2, max_faces + 1))
    c = int(rng.integers(2, max_classes + 1))
    edges = {(u, u + 1) for u in range(n - 1)}  # spanning path keeps it connected
    for _ in range(n):
        u, v = rng.integers(0, n, 2)
        if u != v:
            edges.add((min(u, v), max(u, v)))
    edges = sorted(edges)
    dihedrals = rng.uniform(0.3 * math.pi, 1.7 * math.pi, len(edges))
    probs = rng.dirichlet(np.ones(c), size=n)
    feature = rng.uniform(0.0, 1.0, n)
    graph = synthetic_graph(n, edges, dihedrals)
    return GraphCutProblem(graph, probs, feature,
                           lam=float(rng.uniform(0.0, 2.0)),
                           omega=float(rng.uniform(0.0, 2.0)))
