"""
Isotropic metric, metric duality and the isotropic congruence group.

The polarity with respect to the unit isotropic sphere z = (x^2 + y^2)/2
maps the point (x*, y*, z*) to the plane z + z* = x x* + y y*, i.e. the
plane (A, B, C) = (x*, y*, -z*).
"""

import math
from typing import Tuple

import numpy as np

from src.core.errors import NoDualPoint
from src.models.net import IsotropicPlane, Net, Plane

ISOTROPIC_NZ_TOL = 1e-12


def top_view(p: np.ndarray) -> np.ndarray:
    return np.asarray(p, dtype=float)[..., :2]


def iso_inner(p: np.ndarray, q: np.ndarray, eps: float) -> float:
    """x-y dot product plus eps times the z product (eps=0 isotropic, eps=1 Euclidean)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return float(p[0] * q[0] + p[1] * q[1] + eps * p[2] * q[2])


def iso_distance(p: np.ndarray, q: np.ndarray) -> float:
    d = top_view(p) - top_view(q)
    return float(math.hypot(d[0], d[1]))


def dual_of_point(p: np.ndarray) -> Plane:
    return Plane(float(p[0]), float(p[1]), -float(p[2]))


def dual_of_plane(pl) -> np.ndarray:
    if isinstance(pl, IsotropicPlane):
        raise NoDualPoint(f"Isotropic plane {pl.a}x + {pl.b}y = {pl.c} has no finite dual point")
    return np.array([pl.A, pl.B, -pl.C])


def plane_from_normal(normal: np.ndarray, point: np.ndarray):
    """Plane through ``point`` with Euclidean ``normal``; isotropic when n_z vanishes."""
    n = np.asarray(normal, dtype=float)
    c = np.asarray(point, dtype=float)
    scale = float(np.linalg.norm(n))
    if abs(n[2]) <= ISOTROPIC_NZ_TOL * max(scale, 1.0):
        return IsotropicPlane(float(n[0]), float(n[1]), float(n[0] * c[0] + n[1] * c[1]))
    A = -n[0] / n[2]
    B = -n[1] / n[2]
    return Plane(float(A), float(B), float(c[2] - A * c[0] - B * c[1]))


def plane_angle(p1: Plane, p2: Plane) -> float:
    """Isotropic angle between two planes: top-view distance of their duals."""
    return float(math.hypot(p1.A - p2.A, p1.B - p2.B))


# =========================================================
# Isotropic congruences
# =========================================================

def isotropic_congruence(
    phi: float,
    c1: float = 0.0,
    c2: float = 0.0,
    translation: Tuple[float, float, float] = (0.0, 0.0, 0.0),
) -> Tuple[np.ndarray, np.ndarray]:
    """Return (matrix, offset) of x' = M x + b: top-view rotation plus vertical shear."""
    c, s = math.cos(phi), math.sin(phi)
    matrix = np.array(
        [
            [c, -s, 0.0],
            [s, c, 0.0],
            [c1, c2, 1.0],
        ]
    )
    return matrix, np.asarray(translation, dtype=float)


def apply_affine(net: Net, matrix: np.ndarray, offset: np.ndarray) -> Net:
    v = net.vertices @ np.asarray(matrix, dtype=float).T + np.asarray(offset, dtype=float)
    return net.with_vertices(v)
