import math
from typing import List, Optional

import numpy as np

from src.core.errors import (
    CollinearPoints,
    DegenerateFace,
    DegenerateTangents,
    DegenerateVertex,
    IsotropicFace,
    NonPlanarFace,
    ZeroDenominator,
)
from src.models.net import IsotropicPlane, Net, OppositeRatio, Plane, Polyline
from src.services.isotropic import dual_of_plane, iso_inner, plane_from_normal

PLANARITY_TOL = 1e-8
COLLINEAR_TOL = 1e-12

# Index of the first dual in the counterclockwise list [(i-1,j-1), (i,j-1), (i,j), (i-1,j)]
# whose face pair shares the named edge at f_ij
EDGE_START = {"-j": 0, "+i": 1, "+j": 2, "-i": 3}


# =========================================================
# Helpers
# =========================================================

def face_corners(net: Net, i: int, j: int) -> np.ndarray:
    """Corners of face (i, j) in cyclic order f_ij, f_i+1,j, f_i+1,j+1, f_i,j+1."""
    v = net.vertices
    return np.array([v[i, j], v[i + 1, j], v[i + 1, j + 1], v[i, j + 1]])


def mean_edge_length(points: np.ndarray, closed: bool = True) -> float:
    p = np.asarray(points, dtype=float)
    nxt = np.roll(p, -1, axis=0) if closed else p[1:]
    cur = p if closed else p[:-1]
    return float(np.mean(np.linalg.norm(nxt - cur, axis=1)))


def net_mean_edge_length(net: Net) -> float:
    v = net.vertices
    di = np.linalg.norm(v[1:, :] - v[:-1, :], axis=2)
    dj = np.linalg.norm(v[:, 1:] - v[:, :-1], axis=2)
    return float((di.sum() + dj.sum()) / (di.size + dj.size))


def fit_plane(points: np.ndarray):
    """Total least squares plane: returns (centroid, unit normal, max distance)."""
    p = np.asarray(points, dtype=float)
    c = p.mean(axis=0)
    _, _, vt = np.linalg.svd(p - c)
    n = vt[-1]
    return c, n, float(np.max(np.abs((p - c) @ n)))


def signed_area(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> float:
    return 0.5 * float((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))


def shoelace(points: np.ndarray) -> float:
    p = np.asarray(points, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


# =========================================================
# Faces and curvature
# =========================================================

def face_plane(net: Net, i: int, j: int) -> Plane:
    corners = face_corners(net, i, j)
    scale = mean_edge_length(corners)
    if scale == 0.0:
        raise DegenerateFace(f"Face {(i, j)} has coincident corners", face=(i, j))
    centroid, normal, deviation = fit_plane(corners)
    if deviation > PLANARITY_TOL * scale:
        raise NonPlanarFace((i, j), deviation)
    plane = plane_from_normal(normal, centroid)
    if isinstance(plane, IsotropicPlane):
        raise IsotropicFace((i, j))
    return plane


def vertex_dual_topviews(net: Net, i: int, j: int) -> np.ndarray:
    """Top views of the duals of the four faces around interior f_ij, counterclockwise."""
    faces = [(i - 1, j - 1), (i, j - 1), (i, j), (i - 1, j)]
    return np.array([dual_of_plane(face_plane(net, a, b))[:2] for a, b in faces])


def curvature_omega(net: Net, i: int, j: int) -> float:
    return shoelace(vertex_dual_topviews(net, i, j))


def opposite_ratio(net: Net, i: int, j: int, edge: str) -> OppositeRatio:
    """
    Area ratio of the two dual triangles cut out by the pencils of the edge
    ``edge`` ("+i", "-i", "+j", "-j") at f_ij and of its opposite edge.
    """
    q = vertex_dual_topviews(net, i, j)
    k = EDGE_START[edge]
    p1, p2, p3, p4 = (q[(k + s) % 4] for s in range(4))

    spread = float(np.max(np.linalg.norm(q - q.mean(axis=0), axis=1)))
    if spread == 0.0:
        raise ZeroDenominator(f"All face duals at {(i, j)} coincide", vertex=(i, j))

    d1 = p2 - p1
    d2 = p3 - p4
    n1, n2 = np.linalg.norm(d1), np.linalg.norm(d2)
    if n1 <= COLLINEAR_TOL * spread or n2 <= COLLINEAR_TOL * spread:
        raise ZeroDenominator(f"Dual pencil at {(i, j)} collapses for edge {edge}", vertex=(i, j))

    cross = d1[0] * d2[1] - d1[1] * d2[0]
    if abs(cross) <= COLLINEAR_TOL * n1 * n2:
        den = float(np.linalg.norm(p3 - p2))
        if den <= COLLINEAR_TOL * spread:
            raise ZeroDenominator(f"Opposite dual segment at {(i, j)} vanishes", vertex=(i, j))
        return OppositeRatio(float(np.linalg.norm(p4 - p1)) / den, parallel=True)

    # p* = p1 + t d1 = p4 + s d2
    rhs = p4 - p1
    t = (rhs[0] * d2[1] - rhs[1] * d2[0]) / cross
    star = p1 + t * d1
    num = signed_area(star, p1, p4)
    den = signed_area(star, p2, p3)
    if abs(den) <= COLLINEAR_TOL * spread * spread:
        raise ZeroDenominator(f"Second dual triangle at {(i, j)} is degenerate", vertex=(i, j))
    return OppositeRatio(num / den, parallel=False)


# =========================================================
# Normals and binormals
# =========================================================

def discrete_binormal(prev: np.ndarray, cur: np.ndarray, nxt: np.ndarray) -> np.ndarray:
    a = np.asarray(cur, dtype=float) - np.asarray(prev, dtype=float)
    b = np.asarray(cur, dtype=float) - np.asarray(nxt, dtype=float)
    c = np.cross(a, b)
    norm = np.linalg.norm(c)
    if norm <= COLLINEAR_TOL * np.linalg.norm(a) * np.linalg.norm(b) or norm == 0.0:
        raise CollinearPoints("Binormal of collinear points is undefined")
    return c / norm


def _tangent(net: Net, i: int, j: int, di: int, dj: int) -> np.ndarray:
    v = net.vertices
    a, b = i + di, j + dj
    if 0 <= a < net.rows and 0 <= b < net.cols:
        return v[a, b] - v[i, j]
    a, b = i - di, j - dj
    if 0 <= a < net.rows and 0 <= b < net.cols:
        return v[i, j] - v[a, b]
    raise DegenerateTangents(f"No tangent at {(i, j)} along {(di, dj)}", vertex=(i, j))


def _unit_cross(t1: np.ndarray, t2: np.ndarray, i: int, j: int) -> np.ndarray:
    n = np.cross(t1, t2)
    norm = np.linalg.norm(n)
    if norm <= COLLINEAR_TOL * np.linalg.norm(t1) * np.linalg.norm(t2) or norm == 0.0:
        raise DegenerateTangents(f"Tangents at {(i, j)} do not span a plane", vertex=(i, j))
    return n / norm


def discrete_normal(net: Net, i: int, j: int) -> np.ndarray:
    return _unit_cross(_tangent(net, i, j, 1, 0), _tangent(net, i, j, 0, 1), i, j)


def diagonal_normal(net: Net, i: int, j: int) -> np.ndarray:
    """Normal of the diagonal net through f_ij, from its two diagonal tangents."""
    return _unit_cross(_tangent(net, i, j, 1, 1), _tangent(net, i, j, 1, -1), i, j)


# =========================================================
# Residuals
# =========================================================

GRID_STENCIL = ((1, 0), (-1, 0), (0, 1), (0, -1))
DIAGONAL_STENCIL = ((1, 1), (-1, -1), (1, -1), (-1, 1))


def star(net: Net, i: int, j: int, stencil=GRID_STENCIL) -> np.ndarray:
    v = net.vertices
    return np.array([v[i, j]] + [v[i + a, j + b] for a, b in stencil])


def _star_scale(points: np.ndarray) -> float:
    return float(np.mean(np.linalg.norm(points[1:] - points[0], axis=1)))


def star_plane_residual(net: Net, i: int, j: int, stencil=GRID_STENCIL) -> float:
    pts = star(net, i, j, stencil)
    _, _, deviation = fit_plane(pts)
    return deviation / _star_scale(pts)


def star_rank_residual(net: Net, i: int, j: int, stencil=GRID_STENCIL) -> float:
    """Smallest singular value of the 4x3 neighbor-difference matrix, scale free."""
    pts = star(net, i, j, stencil)
    diffs = (pts[1:] - pts[0]) / _star_scale(pts)
    return float(np.linalg.svd(diffs, compute_uv=False)[-1])


def anet_residual(net: Net, stencil=GRID_STENCIL, parity: Optional[int] = None) -> float:
    worst = 0.0
    reach = 1
    for i in range(reach, net.rows - reach):
        for j in range(reach, net.cols - reach):
            if parity is not None and (i + j) % 2 != parity:
                continue
            worst = max(worst, star_plane_residual(net, i, j, stencil))
    return worst


def _turning_angle(a: np.ndarray, b: np.ndarray) -> float:
    cross = a[0] * b[1] - a[1] * b[0]
    return abs(math.atan2(cross, a[0] * b[0] + a[1] * b[1]))


def geodesic_residual(net: Net, poly: Polyline, eps: float) -> float:
    v = net.vertices
    worst = 0.0
    for k in range(1, len(poly) - 1):
        prev, cur, nxt = (v[idx] for idx in poly.indices[k - 1:k + 2])
        if eps == 0.0:
            a, b = (cur - prev)[:2], (nxt - cur)[:2]
            if np.linalg.norm(a) == 0.0 or np.linalg.norm(b) == 0.0:
                raise DegenerateVertex(
                    f"Vertical edge at {poly.indices[k]} has no top-view direction",
                    vertex=poly.indices[k],
                )
            worst = max(worst, _turning_angle(a, b))
            continue
        try:
            bn = discrete_binormal(prev, cur, nxt)
        except CollinearPoints:
            continue
        n = discrete_normal(net, *poly.indices[k])
        if eps == 1.0:
            worst = max(worst, abs(float(bn @ n)))
            continue
        norm = math.sqrt(iso_inner(bn, bn, eps) * iso_inner(n, n, eps))
        if norm > 0.0:
            worst = max(worst, abs(iso_inner(bn, n, eps)) / norm)
    return worst


def face_central_angle(net: Net, i: int, j: int) -> float:
    c = face_corners(net, i, j)
    mids = 0.5 * (c + np.roll(c, -1, axis=0))
    u = mids[2] - mids[0]
    w = mids[3] - mids[1]
    nu, nw = np.linalg.norm(u), np.linalg.norm(w)
    if nu == 0.0 or nw == 0.0:
        raise DegenerateFace(f"Central lines of face {(i, j)} degenerate", face=(i, j))
    return float(math.acos(np.clip((u @ w) / (nu * nw), -1.0, 1.0)))


def planarity_residual(net: Net) -> float:
    worst = 0.0
    for i, j in net.faces():
        corners = face_corners(net, i, j)
        scale = mean_edge_length(corners)
        if scale > 0.0:
            worst = max(worst, fit_plane(corners)[2] / scale)
    return worst


def family_polylines(net: Net, family: str, min_length: int = 3) -> List[Polyline]:
    return [p for p in net.polylines(family) if len(p) >= min_length]
