import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meshseg.mesh import build_dual_graph
from meshseg.graphcut import (
    ExpansionResult,
    FlowNetwork,
    GraphCutProblem,
    alpha_expansion,
    labeling_energy,
    smoothness_cost,
)
from meshseg import synth
from conftest import random_problem, synthetic_graph
from oracles import (
    exhaustive_best_labeling,
    exhaustive_min_cut,
    labeling_energy_reference,
)


# ---------------------------------------------------------- smoothness cost

def test_smoothness_flat_edge_is_free():
    assert smoothness_cost(math.pi, 0.0, 5.0, 1.0) == 0.0


def test_smoothness_concave_edge_costs_log():
    assert smoothness_cost(math.pi / 2, 0.3, 0.3, 1.0) == pytest.approx(math.log(2.0))


def test_smoothness_feature_distance_discounts_to_zero():
    # ln 2 - omega * |df| goes negative and clamps
    assert smoothness_cost(math.pi / 2, 0.0, 2.0, 1.0) == 0.0


def test_smoothness_convex_edge_is_free():
    assert smoothness_cost(1.5 * math.pi, 0.0, 0.0, 1.0) == 0.0


def test_smoothness_rejects_nonpositive_angle():
    with pytest.raises(ValueError):
        smoothness_cost(0.0, 0.0, 0.0, 1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 2 * math.pi), st.floats(-5, 5), st.floats(-5, 5),
       st.floats(0, 3))
def test_smoothness_symmetric_and_nonnegative(theta, fu, fv, omega):
    cost = smoothness_cost(theta, fu, fv, omega)
    assert cost >= 0.0
    assert cost == smoothness_cost(theta, fv, fu, omega)


# ----------------------------------------------------------------- max flow

def test_flow_single_arc():
    net = FlowNetwork(2)
    net.add_edge(0, 1, 3.0)
    assert net.max_flow(0, 1) == pytest.approx(3.0)


def test_flow_diamond():
    # s=0, a=1, b=2, t=3
    net = FlowNetwork(4)
    net.add_edge(0, 1, 2.0)
    net.add_edge(0, 2, 2.0)
    net.add_edge(1, 3, 2.0)
    net.add_edge(2, 3, 1.0)
    net.add_edge(1, 2, 1.0)
    assert net.max_flow(0, 3) == pytest.approx(3.0)


def test_flow_matches_exhaustive_cut_on_random_graphs():
    rng = np.random.default_rng(23)
    for _ in range(25):
        n = int(rng.integers(3, 9))
        arcs = []
        net = FlowNetwork(n)
        for u in range(n):
            for v in range(n):
                if u != v and rng.random() < 0.45:
                    cap = float(rng.uniform(0.0, 4.0))
                    net.add_edge(u, v, cap)
                    arcs.append((u, v, cap))
        want = exhaustive_min_cut(n, arcs, 0, n - 1)
        assert net.max_flow(0, n - 1) == pytest.approx(want, abs=1e-9)


def test_flow_source_side_is_a_minimum_cut():
    rng = np.random.default_rng(5)
    n = 7
    arcs = []
    net = FlowNetwork(n)
    for u in range(n):
        for v in range(n):
            if u != v and rng.random() < 0.5:
                cap = float(rng.uniform(0.1, 3.0))
                net.add_edge(u, v, cap)
                arcs.append((u, v, cap))
    flow = net.max_flow(0, n - 1)
    seen = net.source_side(0)
    assert seen[0] and not seen[n - 1]
    cut = sum(c for u, v, c in arcs if seen[u] and not seen[v])
    assert cut == pytest.approx(flow, abs=1e-9)


def test_flow_validation():
    with pytest.raises(ValueError):
        FlowNetwork(1)
    net = FlowNetwork(3)
    with pytest.raises(ValueError):
        net.add_edge(0, 1, -1.0)
    with pytest.raises(ValueError):
        net.add_edge(0, 1, math.inf)
    with pytest.raises(ValueError):
        net.max_flow(1, 1)


# ------------------------------------------------------------------ problem

def test_problem_validation(tet, tet_graph):
    good = np.full((4, 2), 0.5)
    feat = np.zeros(4)
    GraphCutProblem(tet_graph, good, feat)
    with pytest.raises(ValueError, match="faces, classes"):
        GraphCutProblem(tet_graph, np.full((3, 2), 0.5), np.zeros(3))
    with pytest.raises(ValueError, match="feature length"):
        GraphCutProblem(tet_graph, good, np.zeros(5))
    with pytest.raises(ValueError, match="sum to 1"):
        GraphCutProblem(tet_graph, np.full((4, 2), 0.3), feat)
    with pytest.raises(ValueError, match="nonnegative"):
        bad = good.copy()
        bad[0] = [1.5, -0.5]
        GraphCutProblem(tet_graph, bad, feat)
    with pytest.raises(ValueError, match="lambda"):
        GraphCutProblem(tet_graph, good, feat, lam=-1.0)


def test_data_costs_clamp_zero_probabilities(tet_graph):
    probs = np.zeros((4, 2))
    probs[:, 0] = 1.0
    problem = GraphCutProblem(tet_graph, probs, np.zeros(4))
    costs = problem.data_costs()
    assert costs[:, 0] == pytest.approx(np.zeros(4), abs=1e-12)
    assert costs[:, 1] == pytest.approx(np.full(4, -math.log(1e-10)))


def test_convex_solid_has_free_edges(tet_graph):
    # every edge of a regular tetrahedron is convex: no smoothness cost
    probs = np.full((4, 2), 0.5)
    problem = GraphCutProblem(tet_graph, probs, np.zeros(4), lam=2.0)
    assert np.all(problem.edge_costs() == 0.0)


def test_labeling_energy_matches_reference():
    rng = np.random.default_rng(31)
    for _ in range(30):
        problem = random_problem(rng)
        labels = rng.integers(0, problem.n_classes, problem.graph.n_faces)
        got = labeling_energy(problem, labels)
        want = labeling_energy_reference(problem, labels)
        assert got == pytest.approx(want, rel=1e-12, abs=1e-12)
    with pytest.raises(ValueError, match="label count"):
        labeling_energy(problem, np.zeros(99, dtype=int))


# --------------------------------------------------------- alpha expansion

def test_expansion_with_zero_lambda_returns_argmax():
    rng = np.random.default_rng(7)
    problem = random_problem(rng)
    problem = GraphCutProblem(problem.graph, problem.probabilities,
                              problem.feature, lam=0.0, omega=1.0)
    result = alpha_expansion(problem)
    assert np.array_equal(result.labels, problem.probabilities.argmax(axis=1))
    assert len(result.energy_trace) == 1  # argmax is already optimal


def test_expansion_flips_weak_face_to_match_neighbor():
    # concave shared edge; the right face weakly prefers label 1 but pays
    # ln 2 to disagree, so it joins the confident left face
    graph = synthetic_graph(2, [(0, 1)], [math.pi / 2])
    probs = np.array([[0.9, 0.1], [0.45, 0.55]])
    problem = GraphCutProblem(graph, probs, np.zeros(2), lam=1.0, omega=0.0)
    result = alpha_expansion(problem)
    assert result.labels.tolist() == [0, 0]
    assert result.final_energy < result.initial_energy
    assert result.final_energy == pytest.approx(-math.log(0.9) - math.log(0.45))


def test_expansion_reaches_exhaustive_optimum_on_tiny_problems():
    rng = np.random.default_rng(13)
    optimal = 0
    for _ in range(20):
        problem = random_problem(rng)
        result = alpha_expansion(problem)
        best_labels, best = exhaustive_best_labeling(problem, problem.n_classes)
        assert result.final_energy <= 2.0 * best + 1e-9
        if result.final_energy <= best + 1e-9:
            optimal += 1
    assert optimal >= 16  # expansions that stop short of the optimum are rare


def test_expansion_trace_strictly_decreasing():
    rng = np.random.default_rng(41)
    for _ in range(10):
        problem = random_problem(rng)
        trace = alpha_expansion(problem).energy_trace
        assert all(b < a for a, b in zip(trace, trace[1:]))


def test_expansion_on_edgeless_graph():
    graph = synthetic_graph(3, np.zeros((0, 2)), np.zeros(0))
    probs = np.array([[0.8, 0.2], [0.3, 0.7], [0.6, 0.4]])
    result = alpha_expansion(GraphCutProblem(graph, probs, np.zeros(3)))
    assert result.labels.tolist() == [0, 1, 0]
    assert result.initial_energy == pytest.approx(
        -np.log([0.8, 0.7, 0.6]).sum())


def test_expansion_result_properties():
    res = ExpansionResult(labels=np.array([0, 1]), energy_trace=(5.0, 3.0, 1.0))
    assert res.initial_energy == 5.0
    assert res.final_energy == 1.0


def test_expansion_improves_noisy_labels_on_mesh():
    mesh = synth.dumbbell(1)
    graph = build_dual_graph(mesh)
    labels = synth.dumbbell_labels(mesh)
    rng = np.random.default_rng(3)
    probs = np.where(labels[:, None] == np.arange(2), 0.7, 0.3).astype(float)
    flip = rng.random(mesh.n_faces) < 0.15
    probs[flip] = probs[flip][:, ::-1]
    feature = np.zeros(mesh.n_faces)
    problem = GraphCutProblem(graph, probs, feature, lam=1.0, omega=0.0)
    result = alpha_expansion(problem)
    before = (probs.argmax(axis=1) == labels).mean()
    after = (result.labels == labels).mean()
    assert after >= before
    assert result.final_energy <= result.initial_energy
