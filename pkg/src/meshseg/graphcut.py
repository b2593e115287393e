"""Label refinement by alpha-expansion over the face dual graph.

The energy combines a per-face data term (negative log probability) with
a pairwise term that is cheap across concave, feature-dissimilar edges
and expensive across flat or convex ones. Each expansion move reduces to
a binary s-t min cut, solved exactly with Dinic's algorithm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from meshseg.mesh import DualGraph

P_MIN = 1e-10
RESIDUAL_EPS = 1e-12


class FlowNetwork:
    """Directed flow network with residual bookkeeping.

    add_edge inserts an arc and its reverse (default reverse capacity 0);
    max_flow runs Dinic's algorithm. Phases are bounded by the node count,
    so termination does not depend on capacities being integral.
    """

    def __init__(self, n_nodes: int):
        if n_nodes < 2:
            raise ValueError("need at least two nodes")
        self.n_nodes = n_nodes
        # arc storage: to[i], cap[i]; arc i^1 is the reverse of arc i
        self.to: list[int] = []
        self.cap: list[float] = []
        self.adj: list[list[int]] = [[] for _ in range(n_nodes)]

    def add_edge(self, u: int, v: int, cap: float, rev_cap: float = 0.0) -> None:
        if cap < 0.0 or rev_cap < 0.0:
            raise ValueError("capacities must be nonnegative")
        if not (math.isfinite(cap) and math.isfinite(rev_cap)):
            raise ValueError("capacities must be finite")
        self.adj[u].append(len(self.to))
        self.to.append(v)
        self.cap.append(float(cap))
        self.adj[v].append(len(self.to))
        self.to.append(u)
        self.cap.append(float(rev_cap))

    def _levels(self, source: int, sink: int):
        level = [-1] * self.n_nodes
        level[source] = 0
        frontier = [source]
        while frontier:
            nxt = []
            for u in frontier:
                for a in self.adj[u]:
                    v = self.to[a]
                    if level[v] < 0 and self.cap[a] > RESIDUAL_EPS:
                        level[v] = level[u] + 1
                        nxt.append(v)
            frontier = nxt
        return level if level[sink] >= 0 else None

    def max_flow(self, source: int, sink: int) -> float:
        if source == sink:
            raise ValueError("source and sink must differ")
        total = 0.0
        while True:
            level = self._levels(source, sink)
            if level is None:
                return total
            it = [0] * self.n_nodes
            path: list[int] = []  # arcs of the current partial path
            u = source
            while True:
                if u == sink:
                    bottleneck = min(self.cap[a] for a in path)
                    total += bottleneck
                    for a in path:
                        self.cap[a] -= bottleneck
                        self.cap[a ^ 1] += bottleneck
                    # retreat to just before the first saturated arc (the
                    # bottleneck arc zeroes exactly, so one always exists)
                    first_sat = next(i for i, a in enumerate(path)
                                     if self.cap[a] <= RESIDUAL_EPS)
                    del path[first_sat:]
                    u = source if not path else self.to[path[-1]]
                    continue
                advanced = False
                while it[u] < len(self.adj[u]):
                    a = self.adj[u][it[u]]
                    v = self.to[a]
                    if self.cap[a] > RESIDUAL_EPS and level[v] == level[u] + 1:
                        path.append(a)
                        u = v
                        advanced = True
                        break
                    it[u] += 1
                if not advanced:
                    if u == source:
                        break  # blocking flow complete for this phase
                    level[u] = -1  # dead end, prune from the level graph
                    u = self.to[path.pop() ^ 1]

    def source_side(self, source: int) -> np.ndarray:
        """Nodes reachable from the source in the residual graph; with the
        flow maximal, this is a minimum cut's source component."""
        seen = np.zeros(self.n_nodes, dtype=bool)
        seen[source] = True
        frontier = [source]
        while frontier:
            nxt = []
            for u in frontier:
                for a in self.adj[u]:
                    v = self.to[a]
                    if not seen[v] and self.cap[a] > RESIDUAL_EPS:
                        seen[v] = True
                        nxt.append(v)
            frontier = nxt
        return seen


def smoothness_cost(theta: float, f_u: float, f_v: float, omega: float) -> float:
    """Cost of letting the two faces across an edge keep different labels.

    Concave edges (theta < pi) are natural segment boundaries, yet under
    this term they are the expensive ones to disagree across unless the
    feature distance discounts them; flat and convex edges cost nothing.
    The result is clamped at zero so min-cut capacities stay valid.
    """
    angle = min(theta, math.pi)
    if angle <= 0.0:
        raise ValueError("dihedral angle must be positive")
    return max(0.0, -math.log(angle / math.pi) - omega * abs(f_u - f_v))


@dataclass(frozen=True)
class GraphCutProblem:
    """Everything an expansion needs: topology, probabilities, the per-face
    scalar feature entering the smoothness term, and the two balances."""

    graph: DualGraph
    probabilities: np.ndarray  # (faces, classes)
    feature: np.ndarray        # (faces,)
    lam: float = 1.0
    omega: float = 1.0

    def __post_init__(self):
        p = self.probabilities
        if p.ndim != 2 or len(p) != self.graph.n_faces:
            raise ValueError("probabilities must be (faces, classes)")
        if len(self.feature) != self.graph.n_faces:
            raise ValueError("feature length must match face count")
        if (p < 0).any() or not np.allclose(p.sum(axis=1), 1.0, atol=1e-6):
            raise ValueError("probability rows must be nonnegative and sum to 1")
        if self.lam < 0.0:
            raise ValueError("lambda must be nonnegative")

    @property
    def n_classes(self) -> int:
        return self.probabilities.shape[1]

    def data_costs(self) -> np.ndarray:
        return -np.log(np.maximum(self.probabilities, P_MIN))

    def edge_costs(self) -> np.ndarray:
        """lambda-scaled pairwise cost per dual edge."""
        g = self.graph
        out = np.zeros(len(g.edges))
        for e, (u, v) in enumerate(g.edges):
            out[e] = self.lam * smoothness_cost(
                float(g.edge_dihedral[e]), float(self.feature[u]),
                float(self.feature[v]), self.omega)
        return out


def labeling_energy(problem: GraphCutProblem, labels: np.ndarray,
                    data=None, pair=None) -> float:
    """Total energy of an assignment: data term plus pairwise cost on every
    dual edge whose endpoints disagree."""
    labels = np.asarray(labels)
    if len(labels) != problem.graph.n_faces:
        raise ValueError("label count must match face count")
    if data is None:
        data = problem.data_costs()
    if pair is None:
        pair = problem.edge_costs()
    total = float(data[np.arange(len(labels)), labels].sum())
    e = problem.graph.edges
    if len(e):
        disagree = labels[e[:, 0]] != labels[e[:, 1]]
        total += float(pair[disagree].sum())
    return total


def _expansion_move(problem: GraphCutProblem, labels: np.ndarray, alpha: int,
                    data: np.ndarray, pair: np.ndarray) -> np.ndarray:
    """One binary min-cut: each face not already labeled alpha chooses
    between keeping its label (source side) and switching (sink side)."""
    free = np.nonzero(labels != alpha)[0]
    if len(free) == 0:
        return labels
    node_of = -np.ones(problem.graph.n_faces, dtype=np.int64)
    node_of[free] = np.arange(len(free))
    source = len(free)
    sink = source + 1
    net = FlowNetwork(len(free) + 2)

    t_link = np.zeros(len(free))  # extra cost of keeping the old label
    for i, u in enumerate(free):
        net.add_edge(source, int(i), float(data[u, alpha]))
        t_link[i] += float(data[u, labels[u]])

    for e, (u, v) in enumerate(problem.graph.edges):
        w = float(pair[e])
        if w == 0.0:
            continue
        u_free, v_free = labels[u] != alpha, labels[v] != alpha
        if u_free and v_free:
            if labels[u] == labels[v]:
                net.add_edge(int(node_of[u]), int(node_of[v]), w, w)
            else:
                # cost w unless both switch: w*[u keeps] + w*[u switches, v keeps]
                t_link[node_of[u]] += w
                net.add_edge(int(node_of[v]), int(node_of[u]), w)
        elif u_free:
            t_link[node_of[u]] += w  # v is already alpha
        elif v_free:
            t_link[node_of[v]] += w

    for i in range(len(free)):
        net.add_edge(int(i), sink, float(t_link[i]))

    net.max_flow(source, sink)
    keep = net.source_side(source)
    out = labels.copy()
    out[free[~keep[:len(free)]]] = alpha
    return out


@dataclass(frozen=True)
class ExpansionResult:
    labels: np.ndarray
    energy_trace: tuple = field(default_factory=tuple)

    @property
    def initial_energy(self) -> float:
        return self.energy_trace[0]

    @property
    def final_energy(self) -> float:
        return self.energy_trace[-1]


def alpha_expansion(problem: GraphCutProblem) -> ExpansionResult:
    """Cycle over labels, accepting each expansion only on strict energy
    decrease, until a full cycle makes no progress.

    Starts from the per-face argmax labeling. The returned trace holds the
    initial energy followed by the energy after each accepted move, so it
    is strictly decreasing.
    """
    data = problem.data_costs()
    pair = problem.edge_costs()
    labels = np.asarray(problem.probabilities.argmax(axis=1), dtype=np.int64)
    trace = [labeling_energy(problem, labels, data, pair)]
    improved = True
    while improved:
        improved = False
        for alpha in range(problem.n_classes):
            cand = _expansion_move(problem, labels, alpha, data, pair)
            energy = labeling_energy(problem, cand, data, pair)
            if energy < trace[-1]:
                labels = cand
                trace.append(energy)
                improved = True
    return ExpansionResult(labels=labels, energy_trace=tuple(trace))
