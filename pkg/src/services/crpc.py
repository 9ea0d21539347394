"""
Approximate isotropic CRPC surfaces from complex polynomials.

A graph z = f(x, y) has constant ratio of isotropic principal curvatures iff
|f_{w wbar}| = cos(gamma) |f_{ww}| with w = x + i y. The ansatz built here
satisfies this up to O(eps^3), eps = cos(gamma).
"""

import logging
import math
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from src.core.errors import CrossedFlatPoint, DegenerateParameters, EllipticPoint, FlatPoint
from src.models.crpc import (
    BoundarySpec,
    ComplexPoly,
    CrpcAnsatz,
    Domain,
    FitResult,
    GraphSample,
    PdeResidual,
    TraceResult,
    eps_of,
)
from src.models.net import Net, WebRoles
from src.models.solver import LmSettings
from src.services.levenberg import levenberg_marquardt
from src.services.net_core import anet_residual

logger = logging.getLogger("isoweb")

FD_STEP = 1e-2
FLAT_TOL = 1e-9
FIT_TOL = 1e-6
# Relative gap below which both asymptotic families count as equally close to a reference
TIE_TOL = 1e-6
# Boundary samples per real unknown of the fit
BOUNDARY_DENSITY = 6
PARALLEL_TOL = 1e-9
X_AXIS = np.array([1.0, 0.0])


# =========================================================
# Ansatz
# =========================================================

def flat_point_polynomial(flat_points: Sequence[complex]) -> ComplexPoly:
    """(w - w_1) ... (w - w_n); the constant 1 for no flat points."""
    return ComplexPoly.from_roots(list(flat_points))


def ansatz_from_factor(gamma: float, flat_points: Sequence[complex], factor: ComplexPoly, g0: complex = 0.0, g1: complex = 0.0) -> CrpcAnsatz:
    """h' = prod(w - w_i) * factor, h = int h', g = int int (h')^2 + g0 + g1 w."""
    hp = flat_point_polynomial(flat_points) * factor
    h = hp.antiderivative()
    g = (hp * hp).antiderivative().antiderivative() + ComplexPoly([g0, g1])
    return CrpcAnsatz(gamma=float(gamma), flat_points=[complex(w) for w in flat_points], h=h, g=g)


def build_c2l(gamma: float, flat_points: Sequence[complex] = ()) -> CrpcAnsatz:
    eps_of(gamma)
    return ansatz_from_factor(gamma, flat_points, ComplexPoly([1.0]))


def eval_ansatz(a: CrpcAnsatz, w):
    """f = 2 Re g + eps |h|^2 + eps^2 Re(h^2) log(|h'| + eps); vectorized over w."""
    w = np.asarray(w, dtype=complex)
    eps = a.eps
    g, h, hp = a.g(w), a.h(w), a.h_prime(w)
    value = 2.0 * g.real
    if eps > 0.0:
        value = value + eps * np.abs(h) ** 2 + eps * eps * (h * h).real * np.log(np.abs(hp) + eps)
    return value if value.ndim else float(value)


def ansatz_height(a: CrpcAnsatz) -> Callable:
    return lambda x, y: eval_ansatz(a, np.asarray(x) + 1j * np.asarray(y))


def ansatz_sample(a: CrpcAnsatz, domain: Domain, spacing: float) -> GraphSample:
    return GraphSample(ansatz_height(a), tuple(float(v) for v in domain), float(spacing), gamma=a.gamma)


# =========================================================
# PDE residual
# =========================================================

def complex_hessian(f: Callable, x: float, y: float, step: float = FD_STEP) -> Tuple[complex, float, complex]:
    """
    (f_ww, f_{w wbar}, f_{wbar wbar}) of a real function from fourth-order
    central differences: f_ww = (f_xx - f_yy - 2i f_xy)/4, f_{w wbar} = (f_xx + f_yy)/4.
    """
    fxx, fxy, fyy = real_hessian(f, x, y, step)
    f_ww = complex(fxx - fyy, -2.0 * fxy) / 4.0
    return f_ww, (fxx + fyy) / 4.0, f_ww.conjugate()


def real_hessian(f: Callable, x: float, y: float, step: float = FD_STEP) -> Tuple[float, float, float]:
    h = step

    def F(dx, dy):
        return float(f(x + dx, y + dy))

    f0 = F(0.0, 0.0)
    fxx = (-F(2 * h, 0) + 16 * F(h, 0) - 30 * f0 + 16 * F(-h, 0) - F(-2 * h, 0)) / (12 * h * h)
    fyy = (-F(0, 2 * h) + 16 * F(0, h) - 30 * f0 + 16 * F(0, -h) - F(0, -2 * h)) / (12 * h * h)

    def mixed(s):
        return (F(s, s) - F(s, -s) - F(-s, s) + F(-s, -s)) / (4 * s * s)

    # Richardson on the mixed stencil
    fxy = (4.0 * mixed(h) - mixed(2 * h)) / 3.0
    return fxx, fxy, fyy


def crpc_pde_residual(
    a: Union[CrpcAnsatz, GraphSample], w: complex, step: float = FD_STEP, gamma: Optional[float] = None
) -> PdeResidual:
    """
    | f_{w wbar} - cos(gamma) sqrt(f_ww f_{wbar wbar}) | with the square-root
    sign chosen per point to minimize the value. For real f this is
    | |f_{w wbar}| - cos(gamma) |f_ww| |.
    """
    if isinstance(a, CrpcAnsatz):
        f, gamma = ansatz_height(a), a.gamma
        near_flat = bool(abs(a.h_prime(w)) < a.eps)
    else:
        f, gamma = a, gamma if gamma is not None else a.gamma
        near_flat = False
    if gamma is None:
        raise DegenerateParameters("PDE residual of a graph sample needs gamma", field="gamma")
    eps = eps_of(gamma)
    f_ww, f_wwbar, _ = complex_hessian(f, w.real, w.imag, step)
    root = abs(f_ww)
    value = min(abs(f_wwbar - eps * root), abs(f_wwbar + eps * root))
    return PdeResidual(float(value), near_flat)


def pde_order_slope(
    ansatz_builder: Callable[[float], CrpcAnsatz],
    points: Sequence[complex],
    eps_values: Sequence[float] = (0.05, 0.1, 0.2, 0.4),
    step: float = FD_STEP,
) -> float:
    """
    Log-log slope of the mean PDE residual over ``points`` against eps.
    ``ansatz_builder`` maps gamma in degrees to an ansatz.
    """
    means = []
    for eps in eps_values:
        a = ansatz_builder(math.degrees(math.acos(eps)))
        means.append(np.mean([crpc_pde_residual(a, complex(w), step).value for w in points]))
    slope, _ = np.polyfit(np.log(eps_values), np.log(means), 1)
    logger.debug("PDE residual means %s -> slope %.3f", means, slope)
    return float(slope)


def flat_point_hessian(a: CrpcAnsatz, w: complex, step: float = FD_STEP) -> float:
    """Determinant f_xx f_yy - f_xy^2 of the ansatz at ``w``."""
    fxx, fxy, fyy = real_hessian(ansatz_height(a), w.real, w.imag, step)
    return fxx * fyy - fxy * fxy


# =========================================================
# Boundary fit
# =========================================================

def _unpack(theta: np.ndarray, k: int) -> Tuple[ComplexPoly, complex, complex]:
    q = theta[0: 2 * k + 2: 2] + 1j * theta[1: 2 * k + 2: 2]
    g0 = complex(theta[2 * k + 2], 0.0)
    g1 = complex(theta[2 * k + 3], theta[2 * k + 4])
    return ComplexPoly(q), g0, g1


def _pack(factor: ComplexPoly, g0: complex, g1: complex, k: int) -> np.ndarray:
    q = np.zeros(k + 1, dtype=complex)
    c = factor.coefficients[: k + 1]
    q[: len(c)] = c
    theta = np.empty(2 * k + 5)
    theta[0: 2 * k + 2: 2] = q.real
    theta[1: 2 * k + 2: 2] = q.imag
    theta[2 * k + 2:] = (g0.real, g1.real, g1.imag)
    return theta


def _fit_functions(spec: BoundarySpec, gamma: float, flat_points: Sequence[complex], k: int):
    w = spec.points
    eps = eps_of(gamma)
    base = flat_point_polynomial(flat_points)
    # Per-coefficient building blocks: phi_m = base * w^m and its antiderivative
    phis = [base * ComplexPoly([0.0] * m + [1.0]) for m in range(k + 1)]
    phi_vals = [p(w) for p in phis]
    Phi_vals = [p.antiderivative()(w) for p in phis]

    def build(theta):
        factor, g0, g1 = _unpack(theta, k)
        return ansatz_from_factor(gamma, flat_points, factor, g0, g1)

    def residual(theta):
        return eval_ansatz(build(theta), w) - spec.values

    def jacobian(theta):
        a = build(theta)
        hp_poly = a.h_prime
        h, hp = a.h(w), hp_poly(w)
        mod = np.abs(hp)
        log_term = np.log(mod + eps)
        re_h2 = (h * h).real
        safe = np.where(mod > 1e-300, mod * (mod + eps), 1.0)
        J = np.zeros((len(w), 2 * k + 5))
        for m in range(k + 1):
            Gam = (2.0 * hp_poly * phis[m]).antiderivative().antiderivative()(w)
            for col, c in ((2 * m, 1.0), (2 * m + 1, 1j)):
                d = 2.0 * (c * Gam).real
                if eps > 0.0:
                    d = d + eps * 2.0 * (np.conj(h) * c * Phi_vals[m]).real
                    d = d + eps * eps * (
                        (2.0 * h * c * Phi_vals[m]).real * log_term
                        + re_h2 * np.where(mod > 1e-300, (np.conj(hp) * c * phi_vals[m]).real / safe, 0.0)
                    )
                J[:, col] = d
        J[:, 2 * k + 2] = 2.0
        J[:, 2 * k + 3] = 2.0 * w.real
        J[:, 2 * k + 4] = -2.0 * w.imag
        return J

    return build, residual, jacobian


def resample_boundary(spec: BoundarySpec, k: int) -> BoundarySpec:
    """
    Subdivide every polygon edge evenly, heights linear along the edge, so
    that there are at least BOUNDARY_DENSITY samples per real unknown of a
    degree-``k`` fit. The original vertices stay in.
    """
    m = len(spec.polygon)
    per_edge = max(1, math.ceil(BOUNDARY_DENSITY * (2 * k + 5) / m))
    if per_edge == 1:
        return spec
    t = np.arange(per_edge) / per_edge
    nxt = np.roll(np.arange(m), -1)
    pts = spec.polygon[:, None, :] + t[None, :, None] * (spec.polygon[nxt] - spec.polygon)[:, None, :]
    values = spec.values[:, None] + t[None, :] * (spec.values[nxt] - spec.values)[:, None]
    return BoundarySpec(pts.reshape(-1, 2), values.reshape(-1), k)


def fit_boundary(
    spec: BoundarySpec,
    gamma: float,
    flat_points: Sequence[complex] = (),
    k: Optional[int] = None,
    *,
    initial: Optional[CrpcAnsatz] = None,
    max_iter: int = 200,
    tol: float = FIT_TOL,
) -> FitResult:
    """
    Fit h' = prod(w - w_i)(h_0 + ... + h_k w^k) and g = int int (h')^2 + g_0 + g_1 w
    to the boundary heights by Levenberg-Marquardt over real and imaginary
    parts. Im g_0 is pinned to 0. Sparse boundaries are resampled first (see
    ``resample_boundary``); ``misfit`` is the RMS error over the samples.
    """
    k = spec.k if k is None else k
    spec = resample_boundary(spec, k)
    build, residual, jacobian = _fit_functions(spec, gamma, flat_points, k)

    if initial is not None:
        base_deg = len(flat_points)
        factor = ComplexPoly(np.polynomial.polynomial.polydiv(
            initial.h_prime.coefficients, flat_point_polynomial(flat_points).coefficients
        )[0]) if base_deg else initial.h_prime
        hp = initial.h_prime
        rest = initial.g + (-1.0) * (hp * hp).antiderivative().antiderivative()
        c = np.zeros(2, dtype=complex)
        c[: min(2, len(rest.coefficients))] = rest.coefficients[:2]
        theta0 = _pack(factor, complex(c[0].real, 0.0), c[1], k)
    else:
        theta0 = _pack(ComplexPoly([1.0]), complex(0.5 * float(np.mean(spec.values)), 0.0), 0.0, k)

    result = levenberg_marquardt(residual, jacobian, theta0, settings=LmSettings(lambda0=1e-3), max_iter=max_iter)
    misfit = float(np.sqrt(result.cost / len(spec.values)))
    converged = misfit <= tol
    if not converged:
        logger.warning("Boundary fit did not converge: misfit %.3e after %d iterations", misfit, result.iterations)
    return FitResult(build(result.x), misfit, converged, result.iterations, len(spec.values))


# =========================================================
# Asymptotic directions and tracing
# =========================================================

def _cross(a: np.ndarray, b: np.ndarray) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def _order_families(d1: np.ndarray, d2: np.ndarray, reference: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    First family: the one closer to ``reference``, pointing along it. When
    both are equally close the clockwise one comes first. The second family
    is oriented counterclockwise from the first.
    """
    d1 = d1 if d1 @ reference >= 0 else -d1
    d2 = d2 if d2 @ reference >= 0 else -d2
    a1, a2 = abs(d1 @ reference), abs(d2 @ reference)
    if abs(a1 - a2) <= TIE_TOL * max(a1, a2):
        first, second = (d1, d2) if _cross(reference, d1) <= _cross(reference, d2) else (d2, d1)
    else:
        first, second = (d1, d2) if a1 > a2 else (d2, d1)
    if _cross(first, second) < 0:
        second = -second
    return first, second


def asymptotic_directions(
    sample: Union[GraphSample, Callable],
    x: float,
    y: float,
    step: Optional[float] = None,
    reference: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Unit solutions of f_xx dx^2 + 2 f_xy dx dy + f_yy dy^2 = 0, the first
    one closest to ``reference`` (the x-axis by default).
    """
    if step is None:
        step = 0.1 * sample.spacing if isinstance(sample, GraphSample) else FD_STEP
    fxx, fxy, fyy = real_hessian(sample, x, y, step)
    H = np.array([[fxx, fxy], [fxy, fyy]])
    lam, vec = np.linalg.eigh(H)
    if max(abs(lam[0]), abs(lam[1])) < FLAT_TOL:
        raise FlatPoint(f"Hessian vanishes at ({x:g}, {y:g})", point=(x, y))
    scale = FLAT_TOL * max(1.0, abs(lam[0]), abs(lam[1]))
    if lam[0] > scale or lam[1] < -scale:
        raise EllipticPoint(f"No asymptotic directions at elliptic point ({x:g}, {y:g})", point=(x, y))
    neg, pos = max(-lam[0], 0.0), max(lam[1], 0.0)
    p, q = vec[:, 0], vec[:, 1]
    d1 = math.sqrt(pos) * p + math.sqrt(neg) * q
    d2 = math.sqrt(pos) * p - math.sqrt(neg) * q
    ref = X_AXIS if reference is None else np.asarray(reference, dtype=float)
    return _order_families(d1 / np.linalg.norm(d1), d2 / np.linalg.norm(d2), ref / np.linalg.norm(ref))


def _follow(sample, point: np.ndarray, prev: np.ndarray, step: float) -> np.ndarray:
    """Direction of the asymptotic family closest to ``prev``, sign-aligned with it."""
    return asymptotic_directions(sample, point[0], point[1], step, reference=prev)[0]


def _rk4(sample, point: np.ndarray, prev: np.ndarray, h: float, fd: float) -> Tuple[np.ndarray, np.ndarray]:
    try:
        k1 = _follow(sample, point, prev, fd)
        k2 = _follow(sample, point + 0.5 * h * k1, k1, fd)
        k3 = _follow(sample, point + 0.5 * h * k2, k2, fd)
        k4 = _follow(sample, point + h * k3, k3, fd)
    except FlatPoint as e:
        raise CrossedFlatPoint(f"Asymptotic line ran into a flat point near {tuple(point)}") from e
    return point + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4), k4


def _trace(sample, start: np.ndarray, direction: np.ndarray, count: int, h: float, fd: float):
    pts = [start]
    d = direction
    for _ in range(count):
        nxt, d = _rk4(sample, pts[-1], d, h, fd)
        if not sample.contains(*nxt):
            return pts, True
        pts.append(nxt)
    return pts, False


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _meet(a0: np.ndarray, a1: np.ndarray, b0: np.ndarray, b1: np.ndarray) -> np.ndarray:
    """Intersection of the lines a0a1 and b0b1; the midpoint of a1 and b1 when they are parallel."""
    u, v = a1 - a0, b1 - b0
    det = _cross(u, v)
    if abs(det) <= PARALLEL_TOL * np.linalg.norm(u) * np.linalg.norm(v):
        return 0.5 * (a1 + b1)
    s = _cross(b0 - a0, v) / det
    return a0 + s * u


def trace_asymptotic_quadmesh(
    sample: GraphSample, seed: Tuple[float, float], rows: int, cols: int, step: float
) -> TraceResult:
    """
    Quad net along the two asymptotic families. Column 0 (vertices (i, 0))
    follows the first family from ``seed`` and row 0 the second one. Every
    other vertex (i, j) is where the second-family line through (i, j-1)
    meets the first-family line through (i-1, j), so both families pass
    through every vertex. Vertices leaving the domain truncate the net.
    """
    if rows < 2 or cols < 2 or step <= 0.0:
        raise DegenerateParameters(f"Trace needs rows, cols >= 2 and step > 0, got {rows}x{cols}, step {step}")
    fd = min(0.1 * sample.spacing, 0.1 * step)
    start = np.array(seed, dtype=float)
    first, second = asymptotic_directions(sample, start[0], start[1], fd)

    column, left = _trace(sample, start, first, rows - 1, step, fd)
    row0, out = _trace(sample, start, second, cols - 1, step, fd)
    left |= out
    lines = [row0]
    for i in range(1, len(column)):
        above = lines[-1]
        line = [column[i]]
        for j in range(1, len(above)):
            west, north = line[j - 1], above[j]
            along = above[j] - above[j - 1]
            down = west - above[j - 1]
            a1, _ = _rk4(sample, west, _unit(along), float(np.linalg.norm(along)), fd)
            b1, _ = _rk4(sample, north, _unit(down), float(np.linalg.norm(down)), fd)
            p = _meet(west, a1, north, b1)
            if not sample.contains(*p):
                left = True
                break
            line.append(p)
        if len(line) < 2:
            left = True
            break
        lines.append(line)

    n_rows = len(lines)
    n_cols = min(len(pts) for pts in lines)
    if n_rows < 2 or n_cols < 2:
        raise DegenerateParameters("Seed is too close to the domain boundary for a 2x2 net")
    if n_rows < rows or n_cols < cols:
        logger.warning("Asymptotic trace left the domain; net truncated to %dx%d", n_rows, n_cols)

    xy = np.array([pts[:n_cols] for pts in lines])
    z = sample(xy[..., 0], xy[..., 1])
    net = Net(np.concatenate([xy, z[..., None]], axis=-1), WebRoles(i_lines="asymptotic", j_lines="asymptotic"))
    residual = anet_residual(net) if n_rows >= 3 and n_cols >= 3 else 0.0
    return TraceResult(net, left, residual)
