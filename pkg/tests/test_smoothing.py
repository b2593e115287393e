import numpy as np
import pytest

from meshseg.mesh import Mesh
from meshseg.smoothing import SmoothedMeshSequence, taubin_smooth, umbrella_operator
from meshseg.synth import icosphere, plane_grid, spiked_sphere


def laplacian_smooth(mesh, iterations, step=0.5):
    """Shrinking control: repeated plain umbrella steps, no inflate pass."""
    op = umbrella_operator(mesh)
    v = np.array(mesh.vertices)
    for _ in range(iterations):
        v = v + step * (op @ v)
    return Mesh(v, mesh.faces)


def vertex_rings_from_boundary(mesh):
    """Graph distance of every vertex from the boundary ring."""
    neigh = [set() for _ in range(mesh.n_vertices)]
    for a, b, c in mesh.faces:
        neigh[a] |= {b, c}
        neigh[b] |= {a, c}
        neigh[c] |= {a, b}
    dist = np.full(mesh.n_vertices, -1)
    frontier = list(np.nonzero(mesh.boundary_vertices())[0])
    dist[frontier] = 0
    d = 0
    while frontier:
        nxt = []
        for v in frontier:
            for u in neigh[v]:
                if dist[u] < 0:
                    dist[u] = d + 1
                    nxt.append(u)
        frontier, d = nxt, d + 1
    return dist


def test_planar_interior_is_fixed_point():
    # one iteration = two umbrella passes, so boundary motion reaches two
    # rings in; vertices deeper than that sit in flat symmetric stencils
    mesh = plane_grid(8, 8)
    seq = taubin_smooth(mesh, iterations=1)
    deep = vertex_rings_from_boundary(mesh) > 2
    assert deep.any()
    moved = np.abs(seq.levels[-1].vertices - mesh.vertices)[deep]
    assert moved.max() < 1e-12


def test_volume_preserved_vs_laplacian_shrinkage():
    mesh = icosphere(3)
    vol0 = mesh.enclosed_volume()
    taubin = taubin_smooth(mesh, iterations=5).levels[-1]
    assert abs(taubin.enclosed_volume() - vol0) / vol0 <= 0.02
    shrunk = laplacian_smooth(mesh, 5)
    assert (vol0 - shrunk.enclosed_volume()) / vol0 > 0.05


def test_spike_height_decreases():
    mesh = spiked_sphere(2, spike=3.0)
    radial = np.linalg.norm(mesh.vertices, axis=1)
    before = radial.max() - 1.0
    one = taubin_smooth(mesh, iterations=1).levels[0]
    after = np.linalg.norm(one.vertices, axis=1).max() - 1.0
    assert after < before


def test_levels_are_cumulative():
    mesh = icosphere(1)
    seq = taubin_smooth(mesh, iterations=5)
    assert len(seq.levels) == 5
    # level i equals one more iteration applied to level i-1
    again = taubin_smooth(seq.levels[1], iterations=1).levels[0]
    assert seq.levels[2].vertices == pytest.approx(again.vertices, abs=1e-12)
    for lvl in seq.levels:
        assert np.array_equal(lvl.faces, mesh.faces)


def test_parameter_precondition():
    mesh = icosphere(0)
    with pytest.raises(ValueError, match="0 < lambda < -mu"):
        taubin_smooth(mesh, lambda_shrink=0.6, mu_inflate=-0.5)
    with pytest.raises(ValueError, match="0 < lambda < -mu"):
        taubin_smooth(mesh, lambda_shrink=0.5, mu_inflate=0.0)
    with pytest.raises(ValueError):
        taubin_smooth(mesh, iterations=0)


def test_sequence_rejects_connectivity_change():
    mesh = icosphere(0)
    other = Mesh(mesh.vertices, mesh.faces[::-1])
    with pytest.raises(ValueError, match="connectivity"):
        SmoothedMeshSequence(base=mesh, levels=(other,),
                             iteration_params=(0.5, -0.53))


def test_umbrella_row_semantics():
    mesh = plane_grid(3, 3)
    op = umbrella_operator(mesh)
    x = np.array(mesh.vertices[:, 0])
    out = op @ x
    # rows compute mean-of-neighbors minus self
    edges = mesh.edge_face_map()
    neigh = {v: set() for v in range(mesh.n_vertices)}
    for (i, j) in edges:
        neigh[i].add(j)
        neigh[j].add(i)
    for v in range(mesh.n_vertices):
        expected = np.mean([x[u] for u in sorted(neigh[v])]) - x[v]
        assert out[v] == pytest.approx(expected, abs=1e-12)
