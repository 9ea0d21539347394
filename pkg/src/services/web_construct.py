"""
Constructors for exact isotropic webs.

- planar line webs (three pencils, tangents of the cuspidal cubic) lifted to graphs: GGG
- propagation of AAG webs from tangent planes and of planar Koenigs nets
- A-net lifts over fixed top views, and AGAG webs over tangents of a conic
"""

import itertools
import logging
import math
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import lsqr

from src.core.errors import (
    ConfigError,
    DegenerateParameters,
    FoldedNet,
    InconsistentLift,
    ParallelTangents,
    SeedOffLine,
    SingularStep,
    ZeroMultiplier,
    ZeroPivot,
)
from src.models.net import KIND_ROLES, Net, WebRoles
from src.models.web import (
    AagSeed,
    AgagResult,
    KoenigsData,
    KoenigsSeed,
    Line2D,
    LineFamily,
    LineWeb,
)
from src.services.net_core import DIAGONAL_STENCIL, GRID_STENCIL

logger = logging.getLogger("isoweb")

SINGULAR_TOL = 1e-10
SEED_LINE_TOL = 1e-12
PIVOT_TOL = 1e-12
NULL_TOL = 1e-9
LIFT_TOL = 1e-6

STENCILS = {"grid": GRID_STENCIL, "diagonal": DIAGONAL_STENCIL}


# =========================================================
# Planar line webs
# =========================================================

def pencil_line_web(n: int, h: float = 1.0) -> LineWeb:
    """Three pencils x = ih, y = jh, x + y = kh; vertex (i, j) lies on diagonal k = i + j."""
    if n < 0 or h <= 0.0:
        raise DegenerateParameters(f"Pencil web needs n >= 0 and h > 0, got n={n}, h={h}")
    fam_i = LineFamily("i", [Line2D.vertical(i * h) for i in range(n + 1)])
    fam_j = LineFamily("j", [Line2D(0.0, 1.0, j * h) for j in range(n + 1)])
    fam_d = LineFamily(
        "diag_plus", [Line2D.from_coefficients(1.0, 1.0, k * h) for k in range(2 * n + 1)]
    )
    i, j = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    vertices = np.stack([i * h, j * h], axis=-1).astype(float)
    return LineWeb({"i": fam_i, "j": fam_j, "diag_plus": fam_d}, vertices, "diag_plus")


def cubic_tangent(s: float) -> Line2D:
    """Tangent 3 s x - s^3 y = 2 of the cuspidal cubic."""
    return Line2D.from_coefficients(3.0 * s, -(s ** 3), 2.0)


def cubic_tangent_web(u: Sequence[float], v: Sequence[float]) -> LineWeb:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    den = uu * vv * (uu + vv)
    if np.any(np.abs(den) < 1e-14):
        i, j = np.argwhere(np.abs(den) < 1e-14)[0]
        raise DegenerateParameters(
            f"Tangents u={u[i]:g}, v={v[j]:g} do not meet in a finite vertex", index=(int(i), int(j))
        )
    x = 2.0 * (uu * uu + uu * vv + vv * vv) / (3.0 * den)
    y = 2.0 / den
    vertices = np.stack([x, y], axis=-1)

    # Concurrency: the third tangent through vertex (i, j) has s = -(u_i + v_j)
    s = -(uu + vv)
    n = len(v) - 1
    families = {
        "i": LineFamily("i", [cubic_tangent(a) for a in u]),
        "j": LineFamily("j", [cubic_tangent(b) for b in v]),
    }
    params = _diagonal_parameters(s, lambda i, j: i - j + n)
    if params is not None:
        families["diag_minus"] = LineFamily("diag_minus", [cubic_tangent(p) for p in params])
        return LineWeb(families, vertices, "diag_minus", diagonal_offset=n)
    params = _diagonal_parameters(s, lambda i, j: i + j)
    if params is not None:
        families["diag_plus"] = LineFamily("diag_plus", [cubic_tangent(p) for p in params])
        return LineWeb(families, vertices, "diag_plus")
    raise DegenerateParameters("Diagonal tangent parameter is not constant along either diagonal")


def _diagonal_parameters(s: np.ndarray, key: Callable) -> Optional[List[float]]:
    found = {}
    for (i, j), value in np.ndenumerate(s):
        k = key(i, j)
        if k in found and not math.isclose(found[k], value, rel_tol=1e-12, abs_tol=1e-12):
            return None
        found.setdefault(k, float(value))
    return [found[k] for k in sorted(found)]


def cubic_tangent_web_arithmetic(
    alpha: float, beta: float, h: float, m: int, n: int, diagonal: str = "diag_minus"
) -> LineWeb:
    """u_i = alpha + i h and v_j = beta -/+ j h, so s = -(u_i + v_j) is constant on one diagonal."""
    u = alpha + h * np.arange(m + 1)
    sign = -1.0 if diagonal == "diag_minus" else 1.0
    v = beta + sign * h * np.arange(n + 1)
    return cubic_tangent_web(u, v)


def lift_to_graph(web: LineWeb, phi: Callable) -> Net:
    x, y = web.vertices[..., 0], web.vertices[..., 1]
    z = np.broadcast_to(np.asarray(phi(x, y), dtype=float), x.shape)
    roles = {"i_lines": "geodesic", "j_lines": "geodesic"}
    if web.diagonal is not None:
        roles[web.diagonal] = "geodesic"
    return Net(np.stack([x, y, z], axis=-1), WebRoles(**roles))


# =========================================================
# Propagation of AAG webs
# =========================================================

def _solve3(rows: List[np.ndarray], rhs: List[float], index: Tuple[int, int]) -> np.ndarray:
    a = np.array(rows, dtype=float)
    b = np.array(rhs, dtype=float)
    norms = np.linalg.norm(a, axis=1)
    if np.any(norms == 0.0):
        raise SingularStep(index, 0.0)
    a /= norms[:, None]
    b /= norms
    sigma = np.linalg.svd(a, compute_uv=False)
    if sigma[-1] < SINGULAR_TOL:
        raise SingularStep(index, float(sigma[-1]))
    return np.linalg.solve(a, b)


def _check_on_line(line: Line2D, p: np.ndarray, index: Tuple[int, int]) -> None:
    d = abs(line.signed_distance(p))
    if d > SEED_LINE_TOL * max(1.0, float(np.linalg.norm(p[:2]))):
        raise SeedOffLine(index, d)


def _tangent_plane_point(
    planes: List[Tuple[np.ndarray, np.ndarray]], line: Line2D, index: Tuple[int, int]
) -> np.ndarray:
    rows = [n for n, _ in planes] + [np.array([line.a, line.b, 0.0])]
    rhs = [float(n @ p) for n, p in planes] + [line.c]
    return _solve3(rows, rhs, index)


def _cross_normal(f: np.ndarray, p: np.ndarray, q: np.ndarray, index: Tuple[int, int]) -> np.ndarray:
    n = np.cross(f - p, f - q)
    if not np.any(n):
        raise SingularStep(index, 0.0)
    return n


def aag_propagate(seed: AagSeed) -> Net:
    """
    Propagate an isotropic AAG web from its middle diagonals.

    f_ij has its top view on D_{n+i-j}. Each new vertex is the intersection
    of the tangent planes at its two already known A-net neighbors with the
    vertical plane over its diagonal line.
    """
    n = seed.n
    lines = seed.lines
    if len(lines) != 2 * n + 1:
        raise DegenerateParameters(f"Expected {2 * n + 1} diagonal lines, got {len(lines)}")
    if n < 1 or len(seed.aux) != n + 2:
        raise DegenerateParameters(f"Expected {n + 2} auxiliary points, got {len(seed.aux)}")

    def D(i: int, j: int) -> Line2D:
        return lines[n + i - j]

    F = np.full((n + 1, n + 1, 3), np.nan)
    N = np.full((n + 1, n + 1, 3), np.nan)
    aux = np.asarray(seed.aux, dtype=float)
    for i in range(n + 1):
        F[i, i] = seed.diagonal[i]
        _check_on_line(D(i, i), F[i, i], (i, i))
    for i in range(n + 2):
        _check_on_line(lines[n + 1], aux[i], (i, i - 1))
    for i in range(1, n + 1):
        F[i, i - 1] = aux[i]

    for i in range(n + 1):
        N[i, i] = _cross_normal(F[i, i], aux[i], aux[i + 1], (i, i))
    for i in range(1, n + 1):
        N[i, i - 1] = _cross_normal(F[i, i - 1], F[i, i], F[i - 1, i - 1], (i, i - 1))

    for l in range(1, n + 1):
        for i in range(n - l + 1):
            j = i + l
            f = _tangent_plane_point(
                [(N[i, j - 1], F[i, j - 1]), (N[i + 1, j], F[i + 1, j])], D(i, j), (i, l)
            )
            F[i, j] = f
            N[i, j] = _cross_normal(f, F[i, j - 1], F[i + 1, j], (i, j))
        logger.debug("AAG propagation: diagonal +%d done", l)

    for l in range(2, n + 1):
        for i in range(l, n + 1):
            j = i - l
            f = _tangent_plane_point(
                [(N[i, j + 1], F[i, j + 1]), (N[i - 1, j], F[i - 1, j])], D(i, j), (i, -l)
            )
            F[i, j] = f
            N[i, j] = _cross_normal(f, F[i, j + 1], F[i - 1, j], (i, j))
        logger.debug("AAG propagation: diagonal -%d done", l)

    return Net(F, KIND_ROLES["AAG"])


def aag_seed_from_surface(
    phi: Callable, lines: LineFamily, diagonal_t: Sequence[float], aux_t: Sequence[float]
) -> AagSeed:
    """Sample seeds on the surface z = phi(x, y) over D_n and D_{n+1} at line parameters t."""
    n = (len(lines) - 1) // 2

    def sample(line: Line2D, ts: Sequence[float]) -> np.ndarray:
        xy = np.array([line.point_at(t) for t in ts])
        z = np.asarray(phi(xy[:, 0], xy[:, 1]), dtype=float) + 0.0 * xy[:, 0]
        return np.column_stack([xy, z])

    return AagSeed(lines, sample(lines[n], diagonal_t), sample(lines[n + 1], aux_t))


# =========================================================
# Planar Koenigs nets
# =========================================================

def koenigs_propagate(seed: KoenigsSeed) -> KoenigsData:
    """
    Propagate a planar Koenigs net with straight (i-j)-lines.

    Both Koenigs relations of a face are used in signed-distance form: along
    the diagonal f_ij f_i+1,j+1 the signed distances to the other diagonal are
    proportional to the multipliers, and vice versa. Every new vertex comes
    from a 3x3 linear solve in (x, y, nu).
    """
    n = seed.n
    lines = seed.lines
    if len(lines) != 2 * n + 1:
        raise DegenerateParameters(f"Expected {2 * n + 1} diagonal lines, got {len(lines)}")
    if seed.nu00 == 0.0:
        raise ZeroMultiplier((0, 0))
    if seed.nu01 == 0.0:
        raise ZeroMultiplier((0, 1))

    def D(i: int, j: int) -> Line2D:
        return lines[n + i - j]

    F = np.full((n + 1, n + 1, 2), np.nan)
    NU = np.full((n + 1, n + 1), np.nan)
    for j in range(n + 1):
        F[0, j] = seed.row0[j][:2]
        F[j, 0] = seed.col0[j][:2]
    for k in range(1, n + 1):
        F[k, k] = seed.diagonal[k - 1][:2]
    for k in range(1, n):
        F[k, k + 1] = seed.superdiagonal[k - 1][:2]
    for (i, j) in [(0, j) for j in range(n + 1)] + [(i, 0) for i in range(n + 1)] + \
            [(k, k) for k in range(n + 1)] + [(k, k + 1) for k in range(n)]:
        _check_on_line(D(i, j), F[i, j], (i, j))
    NU[0, 0], NU[0, 1] = seed.nu00, seed.nu01

    def other_diagonal(i: int, j: int) -> Line2D:
        return Line2D.through(F[i, j + 1], F[i + 1, j])

    def ratio(num: float, den: float, index: Tuple[int, int]) -> float:
        if abs(den) < PIVOT_TOL:
            raise SingularStep(index, abs(den))
        return num / den

    def check_nu(value: float, index: Tuple[int, int]) -> float:
        if abs(value) < PIVOT_TOL:
            raise ZeroMultiplier(index)
        return value

    def nu_main(i: int, j: int) -> None:
        E = other_diagonal(i, j)
        value = NU[i, j] * ratio(E.signed_distance(F[i + 1, j + 1]), E.signed_distance(F[i, j]), (i, j))
        NU[i + 1, j + 1] = check_nu(value, (i + 1, j + 1))

    def nu_twin_down(i: int, j: int) -> None:
        # nu_{i+1,j} from nu_{i,j+1}
        d = D(i, j)
        value = NU[i, j + 1] * ratio(d.signed_distance(F[i + 1, j]), d.signed_distance(F[i, j + 1]), (i, j))
        NU[i + 1, j] = check_nu(value, (i + 1, j))

    def nu_twin_right(i: int, j: int) -> None:
        # nu_{i,j+1} from nu_{i+1,j}
        d = D(i, j)
        value = NU[i + 1, j] * ratio(d.signed_distance(F[i, j + 1]), d.signed_distance(F[i + 1, j]), (i, j))
        NU[i, j + 1] = check_nu(value, (i, j + 1))

    def relation_row(line: Line2D, nu_known: float, dist_known: float) -> Tuple[np.ndarray, float]:
        # nu_known * dist(f) - dist_known * nu = 0
        return np.array([nu_known * line.a, nu_known * line.b, -dist_known]), nu_known * line.c

    def solve_vertex(
        main: Tuple[Line2D, int, int], twin: Tuple[Line2D, int, int], target: Tuple[int, int]
    ) -> None:
        rows, rhs = [], []
        for line, a, b in (main, twin):
            row, r = relation_row(line, NU[a, b], line.signed_distance(F[a, b]))
            rows.append(row)
            rhs.append(r)
        on = D(*target)
        rows.append(np.array([on.a, on.b, 0.0]))
        rhs.append(on.c)
        x, y, nu = _solve3(rows, rhs, target)
        F[target] = (x, y)
        NU[target] = check_nu(nu, target)

    nu_twin_down(0, 0)
    nu_main(0, 0)
    for s in range(1, n):
        nu_twin_down(s, 0)
        nu_twin_right(0, s)
        for i in range(1, s):
            # f_{s+1,i}: main relation of face (s, i-1), twin relation of face (s, i)
            solve_vertex((other_diagonal(s, i - 1), s, i - 1), (D(s, i), s, i + 1), (s + 1, i))
        for i in range(1, s):
            # f_{i,s+1}: main relation of face (i-1, s), twin relation of face (i, s)
            solve_vertex((other_diagonal(i - 1, s), i - 1, s), (D(i, s), i + 1, s), (i, s + 1))
        nu_main(s - 1, s)
        solve_vertex((other_diagonal(s, s - 1), s, s - 1), (D(s, s), s, s + 1), (s + 1, s))
        nu_main(s, s)
        logger.debug("Koenigs propagation: extended to %dx%d", s + 2, s + 2)

    check_unfolded(F)
    centers = np.array(
        [[diagonal_intersection(F, i, j) for j in range(n)] for i in range(n)]
    ).reshape(n, n, 2)
    return KoenigsData(F, centers, NU, lines)


def _diagonal_meet_parameters(F: np.ndarray, i: int, j: int) -> Tuple[float, float, float]:
    """(t, u, cross): the diagonals meet at f_ij + t (f_i+1,j+1 - f_ij) = f_i,j+1 + u (f_i+1,j - f_i,j+1)."""
    p, q = F[i, j], F[i + 1, j + 1]
    r, s = F[i, j + 1], F[i + 1, j]
    d1, d2 = q - p, s - r
    cross = d1[0] * d2[1] - d1[1] * d2[0]
    if abs(cross) < PIVOT_TOL:
        raise SingularStep((i, j), abs(cross))
    w = r - p
    t = (w[0] * d2[1] - w[1] * d2[0]) / cross
    u = (w[0] * d1[1] - w[1] * d1[0]) / cross
    return t, u, cross


def diagonal_intersection(F: np.ndarray, i: int, j: int) -> np.ndarray:
    t, _, _ = _diagonal_meet_parameters(F, i, j)
    return F[i, j] + t * (F[i + 1, j + 1] - F[i, j])


def check_unfolded(F: np.ndarray) -> None:
    """Raise FoldedNet unless every top-view face is convex and turns the way face (0, 0) does."""
    orientation = 0.0
    for i in range(F.shape[0] - 1):
        for j in range(F.shape[1] - 1):
            t, u, cross = _diagonal_meet_parameters(F, i, j)
            if orientation == 0.0:
                orientation = math.copysign(1.0, cross)
            if not (0.0 < t < 1.0 and 0.0 < u < 1.0) or cross * orientation < 0.0:
                raise FoldedNet((i, j))


def koenigs_residual(data: KoenigsData) -> float:
    """Largest violation of the two multiplier relations, with centers recomputed from the diagonals."""
    F, NU = data.vertices, data.multipliers
    worst = 0.0
    for i in range(F.shape[0] - 1):
        for j in range(F.shape[1] - 1):
            m = diagonal_intersection(F, i, j)
            main = (F[i, j] - m) / NU[i, j] - (F[i + 1, j + 1] - m) / NU[i + 1, j + 1]
            twin = (F[i, j + 1] - m) / NU[i, j + 1] - (F[i + 1, j] - m) / NU[i + 1, j]
            worst = max(worst, float(np.abs(main).max()), float(np.abs(twin).max()))
    return worst


def koenigs_seed_from_net(topviews: np.ndarray, lines: LineFamily, nu00: float, nu01: float) -> KoenigsSeed:
    tv = np.asarray(topviews, dtype=float)[..., :2]
    n = tv.shape[0] - 1
    return KoenigsSeed(
        lines=lines,
        row0=tv[0, :],
        col0=tv[:, 0],
        diagonal=np.array([tv[k, k] for k in range(1, n + 1)]),
        superdiagonal=np.array([tv[k, k + 1] for k in range(1, n)]),
        nu00=nu00,
        nu01=nu01,
    )


# =========================================================
# A-net lifts over fixed top views
# =========================================================

def _topview_array(topviews) -> np.ndarray:
    if isinstance(topviews, Net):
        return topviews.vertices[..., :2]
    return np.asarray(topviews, dtype=float)[..., :2]


def _stars(shape: Tuple[int, int], stencil, parity: Optional[int], interior: bool):
    rows, cols = shape
    for i in range(rows):
        for j in range(cols):
            if parity is not None and (i + j) % 2 != parity:
                continue
            nbrs = [(i + a, j + b) for a, b in stencil if 0 <= i + a < rows and 0 <= j + b < cols]
            full = len(nbrs) == len(stencil)
            if interior and not full:
                continue
            if not interior and (full or len(nbrs) < 3):
                continue
            yield (i, j), nbrs


def _cross2(a: np.ndarray, b: np.ndarray) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def star_minor_rows(tv: np.ndarray, center, nbrs) -> Iterable[Tuple[list, np.ndarray]]:
    """Linear rows in z expressing det(d_a, d_b, d_c) = 0 for every neighbor triple."""
    c = tv[center]
    scale = max(float(np.mean([np.linalg.norm(tv[q] - c) for q in nbrs])), 1e-300)
    for a, b, d in itertools.combinations(nbrs, 3):
        ta, tb, td = tv[a] - c, tv[b] - c, tv[d] - c
        coef = np.array([_cross2(tb, td), _cross2(td, ta), _cross2(ta, tb)])
        coef = np.append(coef, -coef.sum())
        norm = float(np.linalg.norm(coef))
        if norm < PIVOT_TOL * scale * scale:
            continue
        yield [a, b, d, center], coef / norm


def _fill_from_star(tv: np.ndarray, z: np.ndarray, pts: list) -> bool:
    known = [p for p in pts if np.isfinite(z[p])]
    unknown = [p for p in pts if not np.isfinite(z[p])]
    if not unknown or len(known) < 3:
        return False
    best, best_area = None, 0.0
    for tri in itertools.combinations(known, 3):
        area = abs(_cross2(tv[tri[1]] - tv[tri[0]], tv[tri[2]] - tv[tri[0]]))
        if area > best_area:
            best, best_area = tri, area
    scale = max(float(np.ptp(tv[[p[0] for p in pts], [p[1] for p in pts]], axis=0).max()), 1e-300)
    if best is None or best_area < PIVOT_TOL * scale * scale:
        return False
    a = np.array([[tv[p][0], tv[p][1], 1.0] for p in best])
    coef = np.linalg.solve(a, np.array([z[p] for p in best]))
    for p in unknown:
        z[p] = coef[0] * tv[p][0] + coef[1] * tv[p][1] + coef[2]
    return True


def _propagate_heights(tv: np.ndarray, z: np.ndarray, stencil, parity: Optional[int] = None) -> np.ndarray:
    interior = list(_stars(z.shape, stencil, parity, interior=True))
    boundary = list(_stars(z.shape, stencil, parity, interior=False))
    while True:
        progress = True
        while progress:
            progress = False
            for center, nbrs in interior:
                progress |= _fill_from_star(tv, z, [center] + nbrs)
        # Partial boundary stars only fill what interior stars cannot reach
        if not any(_fill_from_star(tv, z, [c] + nb) for c, nb in boundary):
            break
    return z


def _lift_residual(tv: np.ndarray, z: np.ndarray, stencil, parity: Optional[int] = None) -> float:
    worst = 0.0
    for center, nbrs in _stars(z.shape, stencil, parity, interior=True):
        for ids, coef in star_minor_rows(tv, center, nbrs):
            worst = max(worst, abs(float(coef @ np.array([z[p] for p in ids]))))
    return worst


def anet_lift(topviews, boundary_z: np.ndarray, stencil: str = "grid") -> Net:
    """
    Lift fixed top views to an A-net.

    ``boundary_z`` is a (rows, cols) array with NaN where heights are unknown.
    Row 0, column 0 and the inner corner (1, 1) must be given: two sides alone
    leave the one-parameter family z + t*ij on the grid.
    """
    tv = _topview_array(topviews)
    z = np.array(boundary_z, dtype=float)
    if z.shape != tv.shape[:2]:
        raise ConfigError(f"Heights shape {z.shape} does not match top views {tv.shape[:2]}")
    if not (np.all(np.isfinite(z[0, :])) and np.all(np.isfinite(z[:, 0]))):
        raise ConfigError("Heights on row 0 and column 0 are required", field="boundaryZ")

    z = _propagate_heights(tv, z, STENCILS[stencil])
    missing = np.argwhere(~np.isfinite(z))
    if len(missing):
        raise ZeroPivot(tuple(int(k) for k in missing[0]))

    residual = _lift_residual(tv, z, STENCILS[stencil])
    scale = max(1.0, float(np.abs(z).max()))
    if residual > 1e-8 * scale:
        logger.warning("A-net lift leaves star residual %.3e; top views may not admit a lift", residual)
    roles = WebRoles(i_lines="asymptotic", j_lines="asymptotic") if stencil == "grid" else \
        WebRoles(diag_minus="asymptotic", diag_plus="asymptotic")
    return Net(np.concatenate([tv, z[..., None]], axis=-1), roles)


def lift_boundary(topviews, height: Callable, extra: Sequence[Tuple[int, int]] = ((1, 1),)) -> np.ndarray:
    """Sample ``height`` on row 0, column 0 and the ``extra`` vertices; NaN elsewhere."""
    tv = _topview_array(topviews)
    z = np.full(tv.shape[:2], np.nan)
    mask = np.zeros(tv.shape[:2], dtype=bool)
    mask[0, :] = True
    mask[:, 0] = True
    for p in extra:
        mask[p] = True
    z[mask] = (np.asarray(height(tv[..., 0], tv[..., 1]), dtype=float) + 0.0 * tv[..., 0])[mask]
    return z


def koenigs_lift(topviews, stencil: str = "grid", parity: Optional[int] = None, height: float = 1.0) -> np.ndarray:
    """
    Non-affine A-net lift of a planar net from the null space of its star rows.

    Returns heights (NaN on vertices of the other parity when ``parity`` is
    set). Raises InconsistentLift when only affine lifts exist.
    """
    tv = _topview_array(topviews)
    shape = tv.shape[:2]
    sten = STENCILS[stencil]
    rows = []
    covered = set()
    for center, nbrs in _stars(shape, sten, parity, interior=True):
        for ids, coef in star_minor_rows(tv, center, nbrs):
            rows.append((ids, coef))
            covered.update(ids)
    if not rows:
        raise InconsistentLift("Net has no interior stars to lift")

    cols = sorted(covered)
    col_of = {p: k for k, p in enumerate(cols)}
    a = np.zeros((len(rows), len(cols)))
    for r, (ids, coef) in enumerate(rows):
        for p, c in zip(ids, coef):
            a[r, col_of[p]] += c

    _, sigma, vt = np.linalg.svd(a)
    rank = int(np.sum(sigma > NULL_TOL * sigma[0]))
    null = vt[rank:].T
    if null.shape[1] == 0:
        raise InconsistentLift("Star system has no null space")

    pts = np.array([tv[p] for p in cols])
    affine = np.column_stack([np.ones(len(cols)), pts])
    u, s, _ = np.linalg.svd(null.T @ affine, full_matrices=True)
    affine_rank = int(np.sum(s > 1e-6 * s.max())) if s.size else 0
    rest = null @ u[:, affine_rank:]
    if rest.shape[1] == 0:
        raise InconsistentLift("Top views admit only affine A-net lifts (not a Koenigs net)")

    vec = rest[:, 0]
    # Remove any affine remainder and fix the sign
    vec = vec - affine @ np.linalg.lstsq(affine, vec, rcond=None)[0]
    vec *= height / float(np.abs(vec).max())
    if vec[np.argmax(np.abs(vec))] < 0:
        vec = -vec

    z = np.full(shape, np.nan)
    for p, value in zip(cols, vec):
        z[p] = value
    if parity is None:
        z = _propagate_heights(tv, z, sten)
    return z


# =========================================================
# AGAG webs over tangents of a conic
# =========================================================

def conic_tangent(t: float, axes: Tuple[float, float] = (1.0, 1.0)) -> Line2D:
    """Tangent x cos t / a + y sin t / b = 1 of the ellipse with semi-axes (a, b)."""
    a, b = axes
    return Line2D.from_coefficients(math.cos(t) / a, math.sin(t) / b, 1.0)


def conic_tangent_gnet(
    thetas: Sequence[float],
    phis: Sequence[float],
    axes_i: Tuple[float, float] = (1.0, 1.0),
    axes_j: Tuple[float, float] = (1.0, 1.0),
) -> Tuple[Net, LineWeb]:
    fam_i = LineFamily("i", [conic_tangent(t, axes_i) for t in thetas])
    fam_j = LineFamily("j", [conic_tangent(t, axes_j) for t in phis])
    vertices = np.zeros((len(thetas), len(phis), 2))
    for i, li in enumerate(fam_i.lines):
        for j, lj in enumerate(fam_j.lines):
            det = li.a * lj.b - li.b * lj.a
            if abs(det) < 1e-12:
                raise ParallelTangents(
                    f"Tangents at theta={thetas[i]:g} and phi={phis[j]:g} are parallel", index=(i, j)
                )
            vertices[i, j] = (
                (li.c * lj.b - li.b * lj.c) / det,
                (li.a * lj.c - li.c * lj.a) / det,
            )
    web = LineWeb({"i": fam_i, "j": fam_j}, vertices)
    net = Net(
        np.concatenate([vertices, np.zeros(vertices.shape[:2] + (1,))], axis=-1),
        WebRoles(i_lines="geodesic", j_lines="geodesic"),
    )
    return net, web


def affine_top_view(net: Net, matrix: np.ndarray, offset: Sequence[float] = (0.0, 0.0)) -> Net:
    """Apply a planar affine map to the top views; z is kept. Conic tangency and A-net stars survive."""
    v = np.array(net.vertices)
    v[..., :2] = v[..., :2] @ np.asarray(matrix, dtype=float).T + np.asarray(offset, dtype=float)
    return net.with_vertices(v)


def agag_heights(gnet, height: float = 1.0) -> np.ndarray:
    """
    Heights making both diagonal nets A-nets, from one non-affine lift per parity.
    The odd lift is scaled and sheared so that odd vertices sit at the mean
    height of their grid neighbors.
    """
    tv = _topview_array(gnet)
    even = koenigs_lift(tv, "diagonal", parity=0, height=height)
    odd = koenigs_lift(tv, "diagonal", parity=1, height=height)

    rows, cols = tv.shape[:2]
    lhs, rhs = [], []
    for i in range(rows):
        for j in range(cols):
            if (i + j) % 2 != 1:
                continue
            nb = [(i + a, j + b) for a, b in GRID_STENCIL if 0 <= i + a < rows and 0 <= j + b < cols]
            lhs.append([odd[i, j], 1.0, tv[i, j, 0], tv[i, j, 1]])
            rhs.append(np.mean([even[p] for p in nb]))
    coef = np.linalg.lstsq(np.array(lhs), np.array(rhs), rcond=None)[0]
    z = np.where(np.isfinite(even), even, 0.0)
    odd_mask = np.isfinite(odd)
    z[odd_mask] = coef[0] * odd[odd_mask] + coef[1] + coef[2] * tv[..., 0][odd_mask] + coef[3] * tv[..., 1][odd_mask]
    return z


def build_agag(gnet, boundary_z: np.ndarray) -> AgagResult:
    """
    Joint least-squares lift making both diagonal nets A-nets, with the
    heights given in ``boundary_z`` (NaN = unknown) held fixed.
    """
    tv = _topview_array(gnet)
    shape = tv.shape[:2]
    zb = np.array(boundary_z, dtype=float)
    if zb.shape != shape:
        raise ConfigError(f"Heights shape {zb.shape} does not match top views {shape}")
    known = np.isfinite(zb)
    unknown_ids = [tuple(p) for p in np.argwhere(~known)]
    col_of = {p: k for k, p in enumerate(unknown_ids)}

    rows, cols, vals, rhs = [], [], [], []
    all_rows = []
    for parity in (0, 1):
        for center, nbrs in _stars(shape, DIAGONAL_STENCIL, parity, interior=True):
            for ids, coef in star_minor_rows(tv, center, nbrs):
                r = len(rhs)
                b = 0.0
                for p, c in zip(ids, coef):
                    if known[p]:
                        b -= c * zb[p]
                    else:
                        rows.append(r)
                        cols.append(col_of[p])
                        vals.append(c)
                rhs.append(b)
                all_rows.append((ids, coef, parity))

    z = zb.copy()
    if unknown_ids:
        a = coo_matrix((vals, (rows, cols)), shape=(len(rhs), len(unknown_ids))).tocsr()
        sol = lsqr(a, np.array(rhs), atol=1e-15, btol=1e-15, iter_lim=20 * len(unknown_ids) + 100)[0]
        for p, k in col_of.items():
            z[p] = sol[k]

    parity_res = {"even": 0.0, "odd": 0.0}
    for ids, coef, parity in all_rows:
        key = "even" if parity == 0 else "odd"
        parity_res[key] = max(parity_res[key], abs(float(coef @ np.array([z[p] for p in ids]))))
    residual = max(parity_res.values())

    scale = max(1.0, float(np.abs(zb[known]).max())) if known.any() else 1.0
    if residual > LIFT_TOL * scale:
        raise InconsistentLift(
            f"AGAG lift residual {residual:.3e} exceeds tolerance; diagonal nets are not Koenigs",
            residual=residual,
        )

    affine = np.column_stack([np.ones(z.size), tv[..., 0].ravel(), tv[..., 1].ravel()])
    fit = affine @ np.linalg.lstsq(affine, z.ravel(), rcond=None)[0]
    trivial = bool(np.abs(fit - z.ravel()).max() <= 1e-9 * scale)
    if trivial:
        logger.warning("AGAG lift is affine: the resulting web is planar")

    net = Net(np.concatenate([tv, z[..., None]], axis=-1), KIND_ROLES["AGAG"])
    return AgagResult(net, residual, trivial, parity_res)


def planar_quad_lift(topviews, heights: np.ndarray) -> Net:
    """Q-net over fixed top views from heights on row 0 and column 0: each face plane fixes its last corner."""
    tv = _topview_array(topviews)
    z = np.array(heights, dtype=float)
    rows, cols = tv.shape[:2]
    for i in range(rows - 1):
        for j in range(cols - 1):
            tri = [(i, j), (i + 1, j), (i, j + 1)]
            a = np.array([[tv[p][0], tv[p][1], 1.0] for p in tri])
            if abs(np.linalg.det(a)) < PIVOT_TOL:
                raise ZeroPivot((i + 1, j + 1))
            coef = np.linalg.solve(a, np.array([z[p] for p in tri]))
            z[i + 1, j + 1] = coef[0] * tv[i + 1, j + 1, 0] + coef[1] * tv[i + 1, j + 1, 1] + coef[2]
    return Net(np.concatenate([tv, z[..., None]], axis=-1))
