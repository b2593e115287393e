"""Non-shrinking (Taubin) Laplacian smoothing.

Each iteration applies a shrink pass followed by an inflate pass with the
uniform-weight (umbrella) vertex Laplacian; the inflate factor slightly
exceeds the shrink factor in magnitude, which cancels the low-frequency
volume loss that plain Laplacian smoothing causes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from meshseg.mesh import Mesh


@dataclass(frozen=True)
class SmoothedMeshSequence:
    """Cumulatively smoothed copies of a base mesh.

    levels[i] is the result of i+1 smoothing iterations; all levels share
    the base mesh's face list, only vertex positions differ.
    """

    base: Mesh
    levels: tuple
    iteration_params: tuple  # (lambda_shrink, mu_inflate)

    def __post_init__(self):
        for lvl in self.levels:
            if lvl.faces.shape != self.base.faces.shape or (lvl.faces != self.base.faces).any():
                raise ValueError("smoothed level changed mesh connectivity")


def umbrella_operator(mesh: Mesh) -> sp.csr_matrix:
    """Sparse operator U with (U x)_i = mean of neighbors of i minus x_i.

    Isolated vertices (none in a valid mesh, but kept safe) map to 0.
    """
    n = mesh.n_vertices
    pairs = set()
    for a, b, c in mesh.faces:
        for i, j in ((a, b), (b, c), (c, a)):
            pairs.add((int(i), int(j)))
            pairs.add((int(j), int(i)))
    rows = np.fromiter((p[0] for p in pairs), dtype=np.int64, count=len(pairs))
    cols = np.fromiter((p[1] for p in pairs), dtype=np.int64, count=len(pairs))
    deg = np.bincount(rows, minlength=n).astype(np.float64)
    inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    adj = sp.csr_matrix((inv[rows], (rows, cols)), shape=(n, n))
    return adj - sp.diags((deg > 0).astype(np.float64))


def taubin_smooth(mesh: Mesh, iterations: int = 5, lambda_shrink: float = 0.5,
                  mu_inflate: float = -0.53) -> SmoothedMeshSequence:
    """Run shrink/inflate smoothing passes, keeping every intermediate level.

    Stability requires 0 < lambda_shrink < -mu_inflate. Raises if a pass
    produces non-finite coordinates (diverging parameters).
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if not (0.0 < lambda_shrink < -mu_inflate):
        raise ValueError(
            f"need 0 < lambda < -mu for stability, got ({lambda_shrink}, {mu_inflate})")
    op = umbrella_operator(mesh)
    v = np.array(mesh.vertices)
    levels = []
    for it in range(iterations):
        v = v + lambda_shrink * (op @ v)
        v = v + mu_inflate * (op @ v)
        if not np.isfinite(v).all():
            raise FloatingPointError(
                f"smoothing diverged at iteration {it + 1}: non-finite coordinates")
        levels.append(Mesh(v, mesh.faces))
    return SmoothedMeshSequence(base=mesh, levels=tuple(levels),
                                iteration_params=(lambda_shrink, mu_inflate))
