"""
Quadratic constraint blocks for the guided-projection solver.

A block stores its residuals in the form r = sum coef x_i x_j + sum coef x_i + c,
one row per scalar equation, so residuals and the sparse Jacobian are both
computed with a handful of vectorized numpy operations. Quantities that
would make a constraint non-quadratic (edge lengths in denominators, the
previous surface normal, foot points) are frozen from the net the block is
built from and refreshed by rebuilding the block every iteration.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix, vstack

from src.core.errors import DegenerateFace, NoFootPoint, ZeroEdge
from src.models.crpc import eps_of
from src.models.net import Net
from src.services.net_core import GRID_STENCIL, family_polylines
from src.services.variables import VariableLayout

logger = logging.getLogger("isoweb")

EUCLIDEAN = (1.0, 1.0, 1.0)


# =========================================================
# Block storage
# =========================================================

@dataclass
class QuadraticBlock:
    name: str
    hard: bool
    weight: float
    n_rows: int
    q_row: np.ndarray
    q_i: np.ndarray
    q_j: np.ndarray
    q_coef: np.ndarray
    l_row: np.ndarray
    l_i: np.ndarray
    l_coef: np.ndarray
    const: np.ndarray

    def residuals(self, x: np.ndarray) -> np.ndarray:
        r = self.const.copy()
        np.add.at(r, self.q_row, self.q_coef * x[self.q_i] * x[self.q_j])
        np.add.at(r, self.l_row, self.l_coef * x[self.l_i])
        return r

    def jacobian(self, x: np.ndarray, n_vars: int) -> coo_matrix:
        rows = np.concatenate([self.q_row, self.q_row, self.l_row])
        cols = np.concatenate([self.q_i, self.q_j, self.l_i])
        data = np.concatenate([self.q_coef * x[self.q_j], self.q_coef * x[self.q_i], self.l_coef])
        # duplicate entries are summed, which also covers the x_i^2 case
        return coo_matrix((data, (rows, cols)), shape=(self.n_rows, n_vars))

    def energy(self, x: np.ndarray) -> float:
        r = self.residuals(x)
        return float(r @ r)


class BlockBuilder:
    def __init__(self):
        self.rows = 0
        self._q: Tuple[list, list, list, list] = ([], [], [], [])
        self._l: Tuple[list, list, list] = ([], [], [])
        self._c: Dict[int, float] = {}

    def row(self) -> int:
        self.rows += 1
        return self.rows - 1

    def quad(self, row: int, i: int, j: int, coef: float = 1.0) -> None:
        if coef == 0.0:
            return
        for target, value in zip(self._q, (row, int(i), int(j), float(coef))):
            target.append(value)

    def lin(self, row: int, i: int, coef: float = 1.0) -> None:
        if coef == 0.0:
            return
        for target, value in zip(self._l, (row, int(i), float(coef))):
            target.append(value)

    def const(self, row: int, value: float) -> None:
        self._c[row] = self._c.get(row, 0.0) + float(value)

    def inner(self, row: int, a: Sequence[int], b: Sequence[int], weights=EUCLIDEAN, scale: float = 1.0) -> None:
        for k in range(3):
            self.quad(row, a[k], b[k], scale * weights[k])

    def inner_diff(self, row: int, a: Sequence[int], p: Sequence[int], q: Sequence[int], weights=EUCLIDEAN) -> None:
        """<a, p - q> under the diagonal metric ``weights``."""
        for k in range(3):
            self.quad(row, a[k], p[k], weights[k])
            self.quad(row, a[k], q[k], -weights[k])

    def unit_norm(self, row: int, a: Sequence[int]) -> None:
        self.inner(row, a, a)
        self.const(row, -1.0)

    def linear_form(self, row: int, ids: Sequence[int], coefs: np.ndarray, offset: float = 0.0) -> None:
        for i, c in zip(ids, coefs):
            self.lin(row, i, c)
        self.const(row, offset)

    def build(self, name: str, hard: bool = True, weight: float = 1.0) -> QuadraticBlock:
        const = np.zeros(self.rows)
        for row, value in self._c.items():
            const[row] = value
        q_row, q_i, q_j, q_coef = (np.asarray(v) for v in self._q)
        l_row, l_i, l_coef = (np.asarray(v) for v in self._l)
        return QuadraticBlock(
            name=name,
            hard=hard,
            weight=weight,
            n_rows=self.rows,
            q_row=q_row.astype(int),
            q_i=q_i.astype(int),
            q_j=q_j.astype(int),
            q_coef=q_coef.astype(float),
            l_row=l_row.astype(int),
            l_i=l_i.astype(int),
            l_coef=l_coef.astype(float),
            const=const,
        )


class ConstraintProblem:
    """Weighted stack of blocks; ``residuals`` and ``jacobian`` carry sqrt(weight)."""

    def __init__(self, layout: VariableLayout, blocks: List[QuadraticBlock]):
        self.layout = layout
        self.blocks = blocks

    @property
    def n_vars(self) -> int:
        return self.layout.size

    def active(self) -> List[QuadraticBlock]:
        return [b for b in self.blocks if b.weight > 0.0 and b.n_rows > 0]

    def block(self, name: str) -> QuadraticBlock:
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(name)

    def residuals(self, x: np.ndarray) -> np.ndarray:
        parts = [math.sqrt(b.weight) * b.residuals(x) for b in self.active()]
        return np.concatenate(parts) if parts else np.zeros(0)

    def jacobian(self, x: np.ndarray) -> csr_matrix:
        parts = [math.sqrt(b.weight) * b.jacobian(x, self.n_vars) for b in self.active()]
        if not parts:
            return csr_matrix((0, self.n_vars))
        return vstack(parts, format="csr")

    def energies(self, x: np.ndarray) -> Tuple[float, float]:
        """(E_hard, weighted soft energy)."""
        e_hard = sum(b.energy(x) for b in self.blocks if b.hard)
        e_soft = sum(b.weight * b.energy(x) for b in self.blocks if not b.hard and b.weight > 0.0)
        return float(e_hard), float(e_soft)

    def block_energies(self, x: np.ndarray) -> Dict[str, float]:
        return {b.name: b.energy(x) for b in self.blocks}


# =========================================================
# Index helpers
# =========================================================

def anet_vertices(shape: Tuple[int, int], parity: Optional[int] = None) -> List[tuple]:
    rows, cols = shape
    return [
        (i, j)
        for i in range(1, rows - 1)
        for j in range(1, cols - 1)
        if parity is None or (i + j) % 2 == parity
    ]


def geodesic_triples(net: Net, family: str) -> List[Tuple[tuple, tuple, tuple]]:
    """(prev, cur, next) index triples along the non-boundary lines of ``family``."""
    triples = []
    for poly in family_polylines(net, family):
        if poly.touches_boundary:
            continue
        idx = poly.indices
        triples.extend((idx[k - 1], idx[k], idx[k + 1]) for k in range(1, len(idx) - 1))
    return triples


def eps_weights(eps: float) -> Tuple[float, float, float]:
    return (1.0, 1.0, float(eps))


# =========================================================
# Hard constraints
# =========================================================

def build_anet_constraints(
    layout: VariableLayout,
    net: Net,
    normal: str = "n_anet",
    stencil=GRID_STENCIL,
    parity: Optional[int] = None,
    name: str = "anet",
) -> QuadraticBlock:
    """Star planarity <n, f - f_nb> = 0 for the four stencil neighbors, plus |n|^2 = 1."""
    bb = BlockBuilder()
    for i, j in anet_vertices(net.shape, parity):
        n = layout.ids(normal, (i, j))
        f = layout.ids("f", (i, j))
        for di, dj in stencil:
            bb.inner_diff(bb.row(), n, f, layout.ids("f", (i + di, j + dj)))
        bb.unit_norm(bb.row(), n)
    return bb.build(name)


def build_geodesic_constraints(
    layout: VariableLayout,
    net: Net,
    family: str,
    eps: float,
    normal: str = "n_geo",
) -> QuadraticBlock:
    """
    Per interior vertex of each non-boundary ``family`` line:

        <b, f - f_prev>_eps = 0, <b, f - f_next>_eps = 0, <b, n>_eps = 0, |b|^2 = 1

    with b stored in block ``b_<family>`` and n shared per vertex.
    """
    w = eps_weights(eps)
    bb = BlockBuilder()
    for prev, cur, nxt in geodesic_triples(net, family):
        b = layout.ids(f"b_{family}", cur)
        f = layout.ids("f", cur)
        bb.inner_diff(bb.row(), b, f, layout.ids("f", prev), w)
        bb.inner_diff(bb.row(), b, f, layout.ids("f", nxt), w)
        bb.inner(bb.row(), b, layout.ids(normal, cur), w)
        bb.unit_norm(bb.row(), b)
    return bb.build(f"geodesic_{family}")


def build_unit_norms(layout: VariableLayout, block: str = "n_geo") -> QuadraticBlock:
    """|n|^2 = 1 for every vector stored in ``block``."""
    bb = BlockBuilder()
    for key in layout.keys(block):
        bb.unit_norm(bb.row(), layout.ids(block, key))
    return bb.build(f"unit_{block}")


def build_normal_coupling(layout: VariableLayout, eps: float, normal: str = "n_geo") -> QuadraticBlock:
    """|n|^2 = 1 and <n, f_i+1,j - f_ij>_eps = <n, f_i,j+1 - f_ij>_eps = 0 for every geodesic normal."""
    w = eps_weights(eps)
    bb = BlockBuilder()
    for i, j in layout.keys(normal):
        n = layout.ids(normal, (i, j))
        f = layout.ids("f", (i, j))
        bb.inner_diff(bb.row(), n, layout.ids("f", (i + 1, j)), f, w)
        bb.inner_diff(bb.row(), n, layout.ids("f", (i, j + 1)), f, w)
        bb.unit_norm(bb.row(), n)
    return bb.build(f"coupling_{normal}")


def face_midlines(v: np.ndarray, i: int, j: int) -> Tuple[np.ndarray, np.ndarray]:
    a, b, c, d = v[i, j], v[i + 1, j], v[i + 1, j + 1], v[i, j + 1]
    return 0.5 * (c + d - a - b), 0.5 * (d + a - b - c)


# Midline coefficients over the corners (i,j), (i+1,j), (i+1,j+1), (i,j+1)
_MID_U = (-0.5, -0.5, 0.5, 0.5)
_MID_W = (0.5, -0.5, -0.5, 0.5)


def build_angle_constraints(
    layout: VariableLayout,
    net: Net,
    gamma: float,
    faces: Iterable[tuple],
    name: str = "angle",
) -> QuadraticBlock:
    """
    <u / |u_pr|, w / |w_pr|> - cos(gamma) = 0 per face, u and w the two
    midlines joining opposite edge midpoints. ``gamma`` is in degrees.
    """
    cos_g = eps_of(gamma)
    v = net.vertices
    bb = BlockBuilder()
    for i, j in faces:
        u, w = face_midlines(v, i, j)
        lu, lw = float(np.linalg.norm(u)), float(np.linalg.norm(w))
        if lu == 0.0 or lw == 0.0:
            raise DegenerateFace(f"Midlines of face {(i, j)} vanish", face=(i, j))
        corners = [layout.ids("f", key) for key in ((i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1))]
        r = bb.row()
        for ca, alpha in zip(corners, _MID_U):
            for cb, beta in zip(corners, _MID_W):
                bb.inner(r, ca, cb, scale=alpha * beta / (lu * lw))
        bb.const(r, -cos_g)
    return bb.build(name)


def _in_quad(quad: np.ndarray, p: np.ndarray) -> bool:
    d = np.roll(quad, -1, axis=0) - quad
    rel = p - quad
    cross = d[:, 0] * rel[:, 1] - d[:, 1] * rel[:, 0]
    return bool(np.all(cross >= 0.0) or np.all(cross <= 0.0))


def angle_faces(net: Net, flat_points: Sequence[Tuple[float, float]] = (), radius: float = 0.0) -> List[tuple]:
    """Faces free of boundary vertices and of flat points (top view inside the face or within ``radius`` of a corner)."""
    flats = np.asarray(flat_points, dtype=float).reshape(-1, 2)
    v = net.vertices
    faces = []
    for i in range(1, net.rows - 2):
        for j in range(1, net.cols - 2):
            quad = np.array([v[i, j], v[i + 1, j], v[i + 1, j + 1], v[i, j + 1]])[:, :2]
            near = any(
                _in_quad(quad, p) or np.min(np.linalg.norm(quad - p, axis=1)) <= radius for p in flats
            )
            if not near:
                faces.append((i, j))
    return faces


# =========================================================
# Soft terms
# =========================================================

def build_fairness(
    layout: VariableLayout,
    net: Net,
    families: Iterable[str],
    weight: float,
    form: str = "auto",
    name: str = "fairness",
) -> QuadraticBlock:
    """
    Midpoint form 2 f_k - f_k-1 - f_k+1 on vertices away from line ends;
    next to an end point (or with ``form="tangent"``) the unit-tangent
    difference with edge lengths frozen from ``net``.
    """
    v = net.vertices
    bb = BlockBuilder()
    for family in families:
        for poly in family_polylines(net, family):
            idx = poly.indices
            for k in range(1, len(idx) - 1):
                prev, cur, nxt = (layout.ids("f", key) for key in idx[k - 1:k + 2])
                near_end = k == 1 or k == len(idx) - 2
                if form == "midpoint" or (form == "auto" and not near_end):
                    coefs = (2.0, -1.0, -1.0)
                else:
                    l1 = float(np.linalg.norm(v[idx[k]] - v[idx[k - 1]]))
                    l2 = float(np.linalg.norm(v[idx[k + 1]] - v[idx[k]]))
                    if l1 == 0.0 or l2 == 0.0:
                        raise ZeroEdge(f"Coincident vertices next to {idx[k]} on {family}-line", vertex=idx[k])
                    coefs = (1.0 / l1 + 1.0 / l2, -1.0 / l1, -1.0 / l2)
                for c in range(3):
                    r = bb.row()
                    bb.lin(r, cur[c], coefs[0])
                    bb.lin(r, prev[c], coefs[1])
                    bb.lin(r, nxt[c], coefs[2])
    return bb.build(name, hard=False, weight=weight)


def build_vertex_closeness(
    layout: VariableLayout,
    reference: np.ndarray,
    weight: float,
    keys: Optional[Iterable[tuple]] = None,
    hard: bool = False,
    name: str = "vert_close",
) -> QuadraticBlock:
    ref = np.asarray(reference, dtype=float)
    keys = layout.keys("f") if keys is None else keys
    bb = BlockBuilder()
    for key in keys:
        f = layout.ids("f", key)
        for c in range(3):
            r = bb.row()
            bb.lin(r, f[c])
            bb.const(r, -ref[key][c])
    return bb.build(name, hard=hard, weight=weight)


def build_surface_closeness(
    layout: VariableLayout,
    net: Net,
    normals: Dict[tuple, np.ndarray],
    weight: float,
    name: str = "surf_close",
) -> QuadraticBlock:
    """<f - f_pr, n_pr> on every vertex with a previous normal."""
    v = net.vertices
    bb = BlockBuilder()
    for key, n in normals.items():
        bb.linear_form(bb.row(), layout.ids("f", key), n, -float(n @ v[key]))
    return bb.build(name, hard=False, weight=weight)


def _complement(e1: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    axis = np.eye(3)[int(np.argmin(np.abs(e1)))]
    e2 = np.cross(e1, axis)
    e2 /= np.linalg.norm(e2)
    return e2, np.cross(e1, e2)


def foot_point(curve: np.ndarray, p: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Closest point on the polyline ``curve`` and the unit tangent of its segment."""
    c = np.asarray(curve, dtype=float)
    if c.ndim != 2 or len(c) < 2 or not np.all(np.isfinite(p)):
        raise NoFootPoint("Reference curve needs two points and a finite query")
    a, d = c[:-1], c[1:] - c[:-1]
    sq = np.einsum("ij,ij->i", d, d)
    valid = sq > 0.0
    if not np.any(valid):
        raise NoFootPoint("Reference curve has no segment of positive length")
    a, d, sq = a[valid], d[valid], sq[valid]
    t = np.clip(np.einsum("ij,ij->i", p - a, d) / sq, 0.0, 1.0)
    q = a + t[:, None] * d
    k = int(np.argmin(np.linalg.norm(q - p, axis=1)))
    return q[k], d[k] / math.sqrt(sq[k])


def build_curve_closeness(
    layout: VariableLayout,
    net: Net,
    keys: Iterable[tuple],
    curve: np.ndarray,
    weight: float = 1.0,
    hard: bool = False,
    name: str = "curve_close",
) -> QuadraticBlock:
    """<f - f_cl, e2> and <f - f_cl, e3>: vertices may slide along the curve tangent e1."""
    v = net.vertices
    bb = BlockBuilder()
    for key in keys:
        foot, e1 = foot_point(curve, v[key])
        f = layout.ids("f", key)
        for e in _complement(e1):
            bb.linear_form(bb.row(), f, e, -float(e @ foot))
    return bb.build(name, hard=hard, weight=weight)
