"""Discrete Gaussian curvature and the redistributed target curvature.

Angle deficits (2*pi minus the incident-angle sum, pi on boundary
vertices) give the integrated curvature; dividing by the barycentric
vertex area gives the pointwise value. The target curvature spreads the
total integrated curvature over vertices proportionally to area, so its
sum is conserved exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from meshseg.mesh import Mesh


@dataclass(frozen=True)
class CurvatureField:
    """Per-vertex curvature data for a mesh (and optionally its smoothed levels).

    gaussian_curvature is pointwise (radians per unit area); the
    integrated and target fields are in plain radians so their totals are
    directly comparable.
    """

    gaussian_curvature: np.ndarray
    integrated_curvature: np.ndarray
    target_curvature: np.ndarray
    barycentric_area: np.ndarray
    smoothed_target_curvature: tuple = field(default_factory=tuple)


def corner_angles(mesh: Mesh) -> np.ndarray:
    """(F, 3) interior angles; column k is the angle at faces[:, k]."""
    p = mesh.vertices[mesh.faces]  # (F, 3, 3)
    out = np.zeros((mesh.n_faces, 3))
    for k in range(3):
        u = p[:, (k + 1) % 3] - p[:, k]
        v = p[:, (k + 2) % 3] - p[:, k]
        cross = np.linalg.norm(np.cross(u, v), axis=1)
        dot = np.einsum("ij,ij->i", u, v)
        out[:, k] = np.arctan2(cross, dot)
    return out


def barycentric_areas(mesh: Mesh) -> np.ndarray:
    """Per-vertex area: one third of each incident face's area."""
    areas = np.zeros(mesh.n_vertices)
    share = mesh.face_areas / 3.0
    for k in range(3):
        np.add.at(areas, mesh.faces[:, k], share)
    return areas


def angle_deficits(mesh: Mesh) -> np.ndarray:
    """Integrated Gaussian curvature: 2*pi (interior) or pi (boundary)
    minus the sum of incident face angles at each vertex."""
    sums = np.zeros(mesh.n_vertices)
    ang = corner_angles(mesh)
    for k in range(3):
        np.add.at(sums, mesh.faces[:, k], ang[:, k])
    full = np.where(mesh.boundary_vertices(), math.pi, 2.0 * math.pi)
    return full - sums


def gaussian_curvature(mesh: Mesh) -> np.ndarray:
    """Pointwise Gaussian curvature, angle deficit over barycentric area."""
    areas = barycentric_areas(mesh)
    dead = np.nonzero(areas <= 0.0)[0]
    if dead.size:
        raise ValueError(f"vertex {int(dead[0])} has an empty one-ring (zero area)")
    return angle_deficits(mesh) / areas


def target_curvature(mesh: Mesh, integrated: np.ndarray) -> np.ndarray:
    """Redistribute the total integrated curvature proportionally to
    barycentric vertex area.

    k_v = (sum of all integrated curvatures) * A_v / total mesh area.
    Because the A_v sum to the total area, the output total equals the
    input total.
    """
    if len(integrated) != mesh.n_vertices:
        raise ValueError("curvature length does not match vertex count")
    total_area = float(mesh.face_areas.sum())
    if total_area <= 0.0:
        raise ValueError("mesh has zero total area")
    return float(np.sum(integrated)) * barycentric_areas(mesh) / total_area


def curvature_field(mesh: Mesh, seq=None) -> CurvatureField:
    """Assemble all curvature data for a mesh; if a smoothed sequence is
    given, also the per-level target curvatures K^sT_i."""
    deficits = angle_deficits(mesh)
    smoothed_targets = []
    if seq is not None:
        for level in seq.levels:
            smoothed_targets.append(target_curvature(level, angle_deficits(level)))
    return CurvatureField(
        gaussian_curvature=gaussian_curvature(mesh),
        integrated_curvature=deficits,
        target_curvature=target_curvature(mesh, deficits),
        barycentric_area=barycentric_areas(mesh),
        smoothed_target_curvature=tuple(smoothed_targets),
    )
