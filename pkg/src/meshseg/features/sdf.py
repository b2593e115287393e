"""Shape diameter: local thickness from rays cast into the mesh.

Each face shoots a deterministic fan of rays from its centroid into a
cone around the inward normal; the nearest intersection along each ray
gives a thickness sample. A median-filtered mean makes the estimate
robust to rays escaping through holes or grazing long tunnels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from meshseg.mesh import Mesh


@dataclass(frozen=True)
class SdfResult:
    raw: np.ndarray          # per-face thickness before normalization
    normalized: np.ndarray   # log-scaled to [0, 1] per mesh
    fallback_faces: np.ndarray  # faces with no ray hits, filled with the median
    hit_counts: np.ndarray


def cone_directions(n_rays: int, half_angle: float) -> np.ndarray:
    """Evenly spread unit vectors inside the cone of the given half-angle
    around +z: a golden-angle spiral over the spherical cap."""
    if n_rays < 1:
        raise ValueError("need at least one ray")
    if not 0.0 < half_angle <= math.pi / 2:
        raise ValueError("half-angle must be in (0, pi/2]")
    i = np.arange(n_rays)
    z = 1.0 - (1.0 - math.cos(half_angle)) * (i + 0.5) / n_rays
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = i * math.pi * (3.0 - math.sqrt(5.0))
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def tangent_frames(axis: np.ndarray):
    """Orthonormal tangent pairs completing each unit axis vector."""
    helper = np.where(np.abs(axis[:, :1]) > 0.9,
                      np.tile([0.0, 1.0, 0.0], (len(axis), 1)),
                      np.tile([1.0, 0.0, 0.0], (len(axis), 1)))
    t1 = np.cross(axis, helper)
    t1 /= np.linalg.norm(t1, axis=1)[:, None]
    return t1, np.cross(axis, t1)


def shape_diameter(mesh: Mesh, n_rays: int = 30,
                   cone_half_angle: float = math.radians(60.0),
                   alpha: float = 4.0, eps_factor: float = 1e-6,
                   chunk_elems: int = 2_000_000) -> SdfResult:
    """Robust per-face thickness plus its per-mesh log normalization.

    Rays ignore the source face and hits closer than eps_factor times the
    bounding-box diagonal. Faces whose rays all miss get the mesh median
    and are listed in fallback_faces.
    """
    nf = mesh.n_faces
    v0 = mesh.vertices[mesh.faces[:, 0]]
    e1 = mesh.vertices[mesh.faces[:, 1]] - v0
    e2 = mesh.vertices[mesh.faces[:, 2]] - v0
    eps = eps_factor * mesh.bbox_diagonal()

    local = cone_directions(n_rays, cone_half_angle)
    axis = -mesh.face_normals
    t1, t2 = tangent_frames(axis)
    # world-space ray directions, (faces, rays, 3)
    dirs = (local[None, :, 0, None] * t1[:, None, :]
            + local[None, :, 1, None] * t2[:, None, :]
            + local[None, :, 2, None] * axis[:, None, :])

    raw = np.zeros(nf)
    hits = np.zeros(nf, dtype=np.int64)
    step = max(1, chunk_elems // max(n_rays * nf, 1))
    for lo in range(0, nf, step):
        hi = min(lo + step, nf)
        d = dirs[lo:hi]                                   # (S, R, 3)
        o = mesh.face_centroids[lo:hi]                    # (S, 3)
        h = np.cross(d[:, :, None, :], e2[None, None])    # (S, R, F, 3)
        a = np.einsum("fk,srfk->srf", e1, h)
        s = o[:, None, :] - v0[None, :, :]                # (S, F, 3)
        q = np.cross(s, e1[None])                         # (S, F, 3)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / a
            u = inv * np.einsum("sfk,srfk->srf", s, h)
            w = inv * np.einsum("srk,sfk->srf", d, q)
            t = inv * np.einsum("fk,sfk->sf", e2, q)[:, None, :]
            ok = ((np.abs(a) > 1e-300) & (u >= 0.0) & (w >= 0.0)
                  & (u + w <= 1.0) & (t >= eps))
        ok &= np.arange(nf)[None, None, :] != np.arange(lo, hi)[:, None, None]
        t = np.where(ok, t, np.inf)
        ray_dist = t.min(axis=2)                          # (S, R)
        for si in range(hi - lo):
            dlist = ray_dist[si][np.isfinite(ray_dist[si])]
            hits[lo + si] = len(dlist)
            if len(dlist) == 0:
                continue
            med = np.median(dlist)
            sd = dlist.std()
            keep = np.abs(dlist - med) <= sd
            raw[lo + si] = dlist[keep].mean() if keep.any() else med

    fallback = np.nonzero(hits == 0)[0]
    if fallback.size and fallback.size < nf:
        raw[fallback] = np.median(raw[hits > 0])

    span = float(raw.max() - raw.min())
    if span > 0.0:
        normalized = np.log1p(alpha * (raw - raw.min()) / span) / math.log1p(alpha)
    else:
        normalized = np.zeros(nf)
    return SdfResult(raw=raw, normalized=normalized,
                     fallback_faces=fallback, hit_counts=hits)
