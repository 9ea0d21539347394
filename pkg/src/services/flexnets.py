"""
Isotropic flexible Q-nets and their flexions.

Generalized T-nets come from cone-cylinder nets by metric duality. Two
checks test the flexibility classes: (i) intersection lines of every second
face plane lie in a common isotropic plane, (ii) opposite ratios agree on
both ends of each interior edge. Flexion follows a one-parameter family by
predictor-corrector continuation: the driven dihedral angle is stepped, the
previous nets predict the next one and damped Gauss-Newton steps on the
quadratic flexion constraints correct it.

Isotropic flexion keeps every face planar with a congruent top view and the
curvature Omega of every interior vertex. Euclidean flexion keeps the six
intra-face distances of every face and its planarity.
"""

import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core.errors import (
    BadTopology,
    DegenerateFace,
    DegenerateParameters,
    IsowebError,
    LinearSolveFailure,
    NonPlanarFace,
    ParallelPlanes,
    PointAtInfinity,
    StallDetected,
    StepFailed,
    ZeroDenominator,
)
from src.models.flex import (
    ClassReport,
    ConeCylinderData,
    DriverEdge,
    FlexConfig,
    FlexionResult,
    FlexionState,
    FlexMode,
    FlexReference,
    InfinitesimalFlex,
    ZProjectiveMap,
)
from src.models.net import Net
from src.models.solver import LmSettings
from src.services.constraints import BlockBuilder, ConstraintProblem, QuadraticBlock
from src.services.levenberg import lm_step
from src.services.net_core import (
    PLANARITY_TOL,
    curvature_omega,
    face_corners,
    face_plane,
    fit_plane,
    mean_edge_length,
    opposite_ratio,
)
from src.services.variables import VariableLayout, VariableVector, vertex_keys

logger = logging.getLogger("isoweb")

DENOMINATOR_TOL = 1e-12
PARALLEL_TOL = 1e-10
CLASS_TOL = 1e-8
AT_INFINITY = 1e-10
NULL_TOL = 1e-9
RATE_TOL = 1e-9
MIN_DAMPING = 1e-12

# Residual norm a step has to reach, and the LM budget per step
STEP_TOL = 1e-10
MAX_ITER = {"isotropic": 30, "euclidean": 15}


# =========================================================
# Cone-cylinder nets and generalized T-nets
# =========================================================

def cone_cylinder_net(d: ConeCylinderData) -> Net:
    """P_ij = a_i + sigma_i b_j."""
    return Net(d.a[:, None, :] + d.sigma[:, None, None] * d.b[None, :, :])


def tnet_from_cone_cylinder(d: ConeCylinderData) -> Net:
    """
    Metric dual of a cone-cylinder net.

    Vertex f_ij is the dual point of the plane of the face (i, j) of P, which
    is spanned by b_{j+1} - b_j and a_{i+1} - a_i + (sigma_{i+1} - sigma_i) b_j.
    The result has one row and one column less than P.
    """
    rows, cols = d.shape
    f = np.zeros((rows - 1, cols - 1, 3))
    for i in range(rows - 1):
        for j in range(cols - 1):
            d1 = d.b[j + 1] - d.b[j]
            delta = d.a[i + 1] - d.a[i] + (d.sigma[i + 1] - d.sigma[i]) * d.b[j]
            c = np.cross(d1, delta)
            scale = float(np.linalg.norm(d1) * np.linalg.norm(delta))
            if abs(c[2]) <= DENOMINATOR_TOL * max(scale, DENOMINATOR_TOL):
                raise ZeroDenominator(f"Face ({i}, {j}) of the cone-cylinder net is isotropic", index=(i, j))
            p = d.a[i] + d.sigma[i] * d.b[j]
            f[i, j] = -np.array([c[0], c[1], c @ p]) / c[2]
    return Net(f)


def euclidean_tnet(profile: Sequence, sigmas: Sequence[float], heights: Sequence[float]) -> Net:
    """
    Classical T-net f_ij = (sigma_i x_j, sigma_i y_j, h_i).

    i-lines lie in the horizontal planes z = h_i, j-lines in the vertical
    planes through the z-axis, so every face is a trapezoid.
    """
    p = np.asarray(profile, dtype=float)
    s = np.asarray(sigmas, dtype=float)
    h = np.asarray(heights, dtype=float)
    if p.ndim != 2 or p.shape[1] < 2 or len(p) < 2:
        raise DegenerateParameters("Profile must be at least two 2D points")
    if s.shape != h.shape or len(s) < 2:
        raise DegenerateParameters("Need matching sigmas and heights, at least two of each")
    if np.any(np.abs(s) < 1e-12):
        raise DegenerateParameters("Scale factors must be nonzero")
    xy = s[:, None, None] * p[None, :, :2]
    z = np.broadcast_to(h[:, None], xy.shape[:2])
    return Net(np.concatenate([xy, z[..., None]], axis=-1))


# =========================================================
# Flexibility classes
# =========================================================

def _planes(net: Net) -> np.ndarray:
    rows, cols = net.shape
    out = np.zeros((rows - 1, cols - 1, 3))
    for a, b in net.faces():
        pl = face_plane(net, a, b)
        out[a, b] = (pl.A, pl.B, pl.C)
    return out


def _intersection_topview(p1: np.ndarray, p2: np.ndarray, label: str) -> np.ndarray:
    """Top view (A1-A2) x + (B1-B2) y + (C1-C2) = 0 of the line where two planes meet, unit length."""
    diff = p1 - p2
    if math.hypot(diff[0], diff[1]) <= PARALLEL_TOL * max(1.0, float(np.abs(p1[:2]).max()), float(np.abs(p2[:2]).max())):
        raise ParallelPlanes(f"Face planes {label} are parallel")
    return diff / np.linalg.norm(diff)


def _concurrency_deviation(lines: List[np.ndarray]) -> float:
    """Second singular value of the stacked line coordinates: 0 when all top views coincide."""
    if len(lines) < 2:
        return 0.0
    s = np.linalg.svd(np.array(lines), compute_uv=False)
    return float(s[1])


def class_i_check(net: Net, tol: float = CLASS_TOL) -> ClassReport:
    """
    Condition (i): for every k the lines p_{k,j} ∩ p_{k+2,j} lie in one
    isotropic plane (label "k"), or the same with the roles of i and j
    swapped (label "l"). The net passes when one direction passes.
    """
    rows, cols = net.shape
    if rows < 4 or cols < 4:
        raise BadTopology(f"Class (i) needs a net of at least 4x4 vertices, got {rows}x{cols}")
    planes = _planes(net)
    fr, fc = planes.shape[:2]

    deviations: Dict[str, float] = {}
    degenerate: List[str] = []
    worst: Dict[str, float] = {}
    testable: Dict[str, bool] = {}
    for direction, outer, inner in (("k", fr - 2, fc), ("l", fc - 2, fr)):
        worst[direction] = 0.0
        testable[direction] = False
        for k in range(outer):
            lines = []
            for j in range(inner):
                a, b = ((k, j), (k + 2, j)) if direction == "k" else ((j, k), (j, k + 2))
                try:
                    lines.append(_intersection_topview(planes[a], planes[b], f"{a} and {b}"))
                except ParallelPlanes as e:
                    logger.debug("%s", e.detail)
                    degenerate.append(f"{direction}{k}:{j}")
            dev = _concurrency_deviation(lines)
            deviations[f"{direction}{k}"] = dev
            worst[direction] = max(worst[direction], dev)
            testable[direction] = testable[direction] or len(lines) >= 2

    passing = [d for d in ("k", "l") if testable[d] and worst[d] <= tol]
    if passing:
        best = passing[0]
    else:
        candidates = [d for d in ("k", "l") if testable[d]] or ["k"]
        best = min(candidates, key=lambda d: worst[d])
    return ClassReport(
        name="i",
        passed=bool(passing),
        testable=any(testable.values()),
        max_deviation=worst[best],
        direction=best,
        deviations=deviations,
        degenerate=degenerate,
    )


def class_ii_check(net: Net, tol: float = CLASS_TOL) -> ClassReport:
    """Condition (ii): both ends of every edge between interior vertices see the same opposite ratio."""
    rows, cols = net.shape
    deviations: Dict[str, float] = {}
    degenerate: List[str] = []
    failed = False
    pairs = []
    for i in range(1, rows - 2):
        for j in range(1, cols - 1):
            pairs.append(((i, j, "+i"), (i + 1, j, "-i")))
    for i in range(1, rows - 1):
        for j in range(1, cols - 2):
            pairs.append(((i, j, "+j"), (i, j + 1, "-j")))

    for v, w in pairs:
        label = f"{v[0]},{v[1]}{v[2]}"
        try:
            r1 = opposite_ratio(net, *v)
            r2 = opposite_ratio(net, *w)
        except ZeroDenominator as e:
            logger.debug("Opposite ratio undefined at %s: %s", label, e.detail)
            degenerate.append(label)
            continue
        mismatch = abs(r1.value - r2.value)
        deviations[label] = mismatch
        failed = failed or mismatch > tol * max(1.0, abs(r1.value))

    testable = bool(deviations)
    return ClassReport(
        name="ii",
        passed=testable and not failed,
        testable=testable,
        max_deviation=max(deviations.values(), default=0.0),
        deviations=deviations,
        degenerate=degenerate,
    )


def z_projective_transform(net: Net, m: ZProjectiveMap) -> Net:
    v = net.flat()
    h = np.concatenate([v, np.ones((len(v), 1))], axis=1) @ m.matrix.T
    w = h[:, 3]
    bad = np.flatnonzero(np.abs(w) < AT_INFINITY)
    if bad.size:
        k = int(bad[0])
        raise PointAtInfinity(f"Vertex {divmod(k, net.cols)} maps to the plane at infinity", vertex=divmod(k, net.cols))
    return net.with_vertices((h[:, :3] / w[:, None]).reshape(net.rows, net.cols, 3))


# =========================================================
# Flexion state and constraints
# =========================================================

def _face_pairs(net: Net) -> List[Tuple[tuple, tuple]]:
    """Four edges and two diagonals of every face, shared edges once."""
    seen: Dict[Tuple[tuple, tuple], None] = {}
    for a, b in net.faces():
        c = [(a, b), (a + 1, b), (a + 1, b + 1), (a, b + 1)]
        for p, q in ((0, 1), (1, 2), (3, 2), (0, 3), (0, 2), (1, 3)):
            seen.setdefault(tuple(sorted((c[p], c[q]))), None)
    return list(seen)


def _face_normal(net: Net, a: int, b: int) -> np.ndarray:
    corners = face_corners(net, a, b)
    scale = mean_edge_length(corners)
    _, _, deviation = fit_plane(corners)
    if deviation > PLANARITY_TOL * max(scale, 1.0):
        raise NonPlanarFace((a, b), deviation)
    n = np.cross(corners[2] - corners[0], corners[3] - corners[1])
    norm = float(np.linalg.norm(n))
    if norm <= 1e-14 * max(scale * scale, 1e-300):
        raise DegenerateFace(f"Face {(a, b)} has parallel diagonals", face=(a, b))
    return n / norm


def flexion_state(net: Net, mode: FlexMode = "isotropic") -> FlexionState:
    """Freeze the reference quantities of ``net`` for a flexion in ``mode``."""
    v = net.vertices
    ref = FlexReference()
    for p, q in _face_pairs(net):
        if mode == "isotropic":
            ref.top_lengths[(p, q)] = float(np.linalg.norm(v[p][:2] - v[q][:2]))
        else:
            ref.distances[(p, q)] = float(np.linalg.norm(v[p] - v[q]))
    for a, b in net.faces():
        if mode == "isotropic":
            pl = face_plane(net, a, b)
            ref.planes[(a, b)] = np.array([pl.A, pl.B, pl.C])
        else:
            ref.normals[(a, b)] = _face_normal(net, a, b)
    if mode == "isotropic":
        for i, j in net.interior():
            ref.omega[(i, j)] = curvature_omega(net, i, j)
    return FlexionState(net=net, mode=mode, reference=ref)


def _aux_name(mode: FlexMode) -> str:
    return "plane" if mode == "isotropic" else "n"


def _variables(state: FlexionState) -> VariableVector:
    net = state.net
    faces = list(net.faces())
    layout = VariableLayout()
    layout.add("f", vertex_keys(net.shape), 3)
    layout.add(_aux_name(state.mode), faces, 3)
    aux = state.reference.planes if state.mode == "isotropic" else state.reference.normals
    x = np.concatenate([net.flat().ravel(), np.concatenate([aux[f] for f in faces])])
    return VariableVector(layout, x, net.shape)


def _isotropic_blocks(layout: VariableLayout, state: FlexionState) -> List[QuadraticBlock]:
    ref = state.reference
    net = state.net

    incidence = BlockBuilder()
    for a, b in net.faces():
        A, B, C = layout.ids("plane", (a, b))
        for key in ((a, b), (a + 1, b), (a + 1, b + 1), (a, b + 1)):
            x, y, z = layout.ids("f", key)
            row = incidence.row()
            incidence.lin(row, z)
            incidence.quad(row, A, x, -1.0)
            incidence.quad(row, B, y, -1.0)
            incidence.lin(row, C, -1.0)

    lengths = BlockBuilder()
    for (p, q), length in ref.top_lengths.items():
        fp, fq = layout.ids("f", p), layout.ids("f", q)
        row = lengths.row()
        for k in range(2):
            lengths.quad(row, fp[k], fp[k])
            lengths.quad(row, fq[k], fq[k])
            lengths.quad(row, fp[k], fq[k], -2.0)
        lengths.const(row, -length * length)

    omega = BlockBuilder()
    for (i, j), value in ref.omega.items():
        ring = [layout.ids("plane", f) for f in ((i - 1, j - 1), (i, j - 1), (i, j), (i - 1, j))]
        row = omega.row()
        for k in range(4):
            p, q = ring[k], ring[(k + 1) % 4]
            omega.quad(row, p[0], q[1], 0.5)
            omega.quad(row, q[0], p[1], -0.5)
        omega.const(row, -value)

    gauge = BlockBuilder()
    v = net.vertices
    f00 = layout.ids("f", (0, 0))
    for k in range(3):
        gauge.linear_form(gauge.row(), [f00[k]], [1.0], -v[0, 0, k])
    d = v[1, 0, :2] - v[0, 0, :2]
    f10 = layout.ids("f", (1, 0))
    gauge.linear_form(gauge.row(), f10[:2], [-d[1], d[0]], d[1] * v[0, 0, 0] - d[0] * v[0, 0, 1])
    p00 = layout.ids("plane", (0, 0))
    for k in range(2):
        gauge.linear_form(gauge.row(), [p00[k]], [1.0], -ref.planes[(0, 0)][k])

    return [
        incidence.build("incidence"),
        lengths.build("top_lengths"),
        omega.build("omega"),
        gauge.build("gauge"),
    ]


def _euclidean_blocks(layout: VariableLayout, state: FlexionState) -> List[QuadraticBlock]:
    ref = state.reference
    net = state.net

    distances = BlockBuilder()
    for (p, q), length in ref.distances.items():
        fp, fq = layout.ids("f", p), layout.ids("f", q)
        row = distances.row()
        for k in range(3):
            distances.quad(row, fp[k], fp[k])
            distances.quad(row, fq[k], fq[k])
            distances.quad(row, fp[k], fq[k], -2.0)
        distances.const(row, -length * length)

    planarity = BlockBuilder()
    unit = BlockBuilder()
    for a, b in net.faces():
        n = layout.ids("n", (a, b))
        f0 = layout.ids("f", (a, b))
        for key in ((a + 1, b), (a + 1, b + 1), (a, b + 1)):
            planarity.inner_diff(planarity.row(), n, layout.ids("f", key), f0)
        unit.unit_norm(unit.row(), n)

    gauge = BlockBuilder()
    v = net.vertices
    o = v[0, 0]
    e1 = v[1, 0] - o
    m = np.cross(e1, v[0, 1] - o)
    if np.linalg.norm(m) == 0.0 or np.linalg.norm(e1) == 0.0:
        raise DegenerateFace("Corner edges at f_00 are parallel", face=(0, 0))
    m /= np.linalg.norm(m)
    e2 = np.cross(m, e1 / np.linalg.norm(e1))
    f00 = layout.ids("f", (0, 0))
    for k in range(3):
        gauge.linear_form(gauge.row(), [f00[k]], [1.0], -o[k])
    f10 = layout.ids("f", (1, 0))
    for e in (m, e2):
        gauge.linear_form(gauge.row(), f10, e, -float(e @ o))
    gauge.linear_form(gauge.row(), layout.ids("f", (0, 1)), m, -float(m @ o))

    return [
        distances.build("distances"),
        planarity.build("planarity"),
        unit.build("unit_normal"),
        gauge.build("gauge"),
    ]


def _constraint_blocks(layout: VariableLayout, state: FlexionState) -> List[QuadraticBlock]:
    if state.mode == "isotropic":
        return _isotropic_blocks(layout, state)
    return _euclidean_blocks(layout, state)


def _driver_ids(layout: VariableLayout, mode: FlexMode, edge: DriverEdge) -> Tuple[np.ndarray, np.ndarray]:
    """Entries whose difference across ``edge`` measures its angle: (A, B) or the face normals."""
    f1, f2 = edge.faces
    name = _aux_name(mode)
    ids1, ids2 = layout.ids(name, f1), layout.ids(name, f2)
    if mode == "isotropic":
        return ids1[:2], ids2[:2]
    return ids1, ids2


def driver_angle(layout: VariableLayout, mode: FlexMode, edge: DriverEdge, x: np.ndarray) -> float:
    """Isotropic angle |(A1 - A2, B1 - B2)|, or the Euclidean angle between the face normals."""
    ids1, ids2 = _driver_ids(layout, mode, edge)
    if mode == "isotropic":
        return float(np.linalg.norm(x[ids1] - x[ids2]))
    n1, n2 = x[ids1], x[ids2]
    c = float(n1 @ n2) / float(np.linalg.norm(n1) * np.linalg.norm(n2))
    return math.acos(max(-1.0, min(1.0, c)))


def _driver_block(layout: VariableLayout, mode: FlexMode, edge: DriverEdge, target: float) -> QuadraticBlock:
    ids1, ids2 = _driver_ids(layout, mode, edge)
    bb = BlockBuilder()
    row = bb.row()
    if mode == "isotropic":
        for p, q in zip(ids1, ids2):
            bb.quad(row, p, p)
            bb.quad(row, q, q)
            bb.quad(row, p, q, -2.0)
        bb.const(row, -target * target)
    else:
        bb.inner(row, ids1, ids2)
        bb.const(row, -math.cos(target))
    return bb.build("driver")


def interior_edges(shape: Tuple[int, int]) -> List[DriverEdge]:
    rows, cols = shape
    edges = [DriverEdge("i", i, j) for i in range(rows - 1) for j in range(1, cols - 1)]
    edges += [DriverEdge("j", i, j) for i in range(1, rows - 1) for j in range(cols - 1)]
    return edges


# =========================================================
# Infinitesimal flexibility
# =========================================================

def _null_space(problem: ConstraintProblem, x: np.ndarray) -> np.ndarray:
    """Rows span the null space of the constraint Jacobian; the gauge rows remove trivial motions."""
    J = problem.jacobian(x).toarray()
    _, s, vt = np.linalg.svd(J, full_matrices=True)
    top = float(s[0]) if s.size else 1.0
    rank = int(np.sum(s > NULL_TOL * top))
    return vt[rank:]


def infinitesimal_flex(state: FlexionState, driver: Optional[DriverEdge] = None) -> InfinitesimalFlex:
    """
    Non-trivial first-order flexes of ``state.net`` and the driver they move.

    With ``driver`` None every interior edge is rated by how fast its angle
    can change along the null space and the fastest one is picked.
    """
    variables = _variables(state)
    layout, x = variables.layout, variables.x
    vectors = _null_space(ConstraintProblem(layout, _constraint_blocks(layout, state)), x)
    if len(vectors) == 0:
        raise StepFailed(0, 0.0, [state.net])

    edges = [driver] if driver is not None else interior_edges(state.net.shape)
    rates: Dict[DriverEdge, float] = {}
    best: Optional[Tuple[DriverEdge, np.ndarray, float]] = None
    for edge in edges:
        if not edge.is_interior(state.net.shape):
            raise BadTopology(f"Driver edge {edge.to_dict()} is not an interior edge")
        ids1, ids2 = _driver_ids(layout, state.mode, edge)
        change = (vectors[:, ids1] - vectors[:, ids2]).T
        _, s, vt = np.linalg.svd(change, full_matrices=False)
        rates[edge] = float(s[0])
        if best is None or s[0] > best[2]:
            best = (edge, vt[0] @ vectors, float(s[0]))

    edge, direction, rate = best
    if rate <= RATE_TOL:
        raise StepFailed(0, 0.0, [state.net])
    logger.info("Null space of dimension %d; driver %s rate %.3e", len(vectors), edge.to_dict(), rate)
    return InfinitesimalFlex(vectors=vectors, driver=edge, direction=direction, rate=rate, rates=rates)


# =========================================================
# Flexion
# =========================================================

def _correct(problem: ConstraintProblem, x: np.ndarray, settings: LmSettings, tol: float, max_iter: int):
    damping = settings.lambda0
    energy = problem.energies(x)[0]
    iterations = 0
    while math.sqrt(energy) > tol and iterations < max_iter:
        try:
            x, stats = lm_step(problem, x, damping, settings, iterations)
        except (StallDetected, LinearSolveFailure) as e:
            logger.warning("Flexion corrector stopped: %s", e.detail)
            break
        iterations += 1
        energy = stats.energy_after
        damping = max(stats.damping * settings.down, MIN_DAMPING)
        logger.debug("  corrector %d: E_hard=%.3e lambda=%.1e", iterations, energy, damping)
    return x, iterations, energy


def _first_prediction(layout, mode, edge, x, flex: Optional[InfinitesimalFlex], target: float) -> np.ndarray:
    if flex is None:
        return x
    alpha = abs(target - driver_angle(layout, mode, edge, x)) / flex.rate
    if alpha == 0.0:
        return x
    candidates = [x + alpha * flex.direction, x - alpha * flex.direction]
    return min(candidates, key=lambda c: abs(driver_angle(layout, mode, edge, c) - target))


def _warn_unless_flexible(net: Net) -> None:
    for check in (class_i_check, class_ii_check):
        try:
            if check(net).passed:
                return
        except IsowebError as e:
            logger.debug("%s skipped: %s", check.__name__, e.detail)
    logger.warning("Input net passes neither class (i) nor class (ii); flexion may fail")


def run_flexion(state: FlexionState, config: FlexConfig) -> FlexionResult:
    """
    Step the driven angle linearly from its initial value by ``config.amplitude``.

    Step 1 is predicted along the infinitesimal flex, later steps by secant
    extrapolation of the last two nets. A step whose residual norm does not reach the
    tolerance raises ``StepFailed`` carrying the nets computed so far.
    """
    mode = state.mode
    variables = _variables(state)
    layout, x = variables.layout, variables.x
    base = _constraint_blocks(layout, state)
    tol = config.tolerance or STEP_TOL
    max_iter = config.max_iter or MAX_ITER[mode]
    settings = LmSettings()

    driver = config.driver()
    flex = None
    if config.amplitude != 0.0 or driver is None:
        flex = infinitesimal_flex(state, driver)
        driver = flex.driver
    elif not driver.is_interior(state.net.shape):
        raise BadTopology(f"Driver edge {driver.to_dict()} is not an interior edge")

    theta0 = driver_angle(layout, mode, driver, x)
    schedule = [theta0 + config.amplitude * s / config.steps for s in range(config.steps + 1)]
    first = ConstraintProblem(layout, base + [_driver_block(layout, mode, driver, theta0)])
    nets = [state.net]
    residuals = [math.sqrt(first.energies(x)[0])]
    iterations = [0]

    previous = None
    for step in range(1, config.steps + 1):
        target = schedule[step]
        problem = ConstraintProblem(layout, base + [_driver_block(layout, mode, driver, target)])
        if previous is None:
            guess = _first_prediction(layout, mode, driver, x, flex, target)
        else:
            guess = 2.0 * x - previous
        x_new, its, energy = _correct(problem, guess, settings, tol, max_iter)
        residual = math.sqrt(energy)
        if residual > tol:
            raise StepFailed(step, residual, nets)
        previous, x = x, x_new
        nets.append(variables.to_net(state.net, x))
        residuals.append(residual)
        iterations.append(its)
        logger.info("Flexion step %d/%d: angle %.6f, %d iterations, residual %.2e", step, config.steps, target, its, residual)

    return FlexionResult(
        nets=nets,
        mode=mode,
        driver=driver,
        schedule=schedule,
        residuals=residuals,
        iterations=iterations,
    )


def isotropic_flexion(state: FlexionState, config: Optional[FlexConfig] = None) -> FlexionResult:
    if state.mode != "isotropic":
        raise DegenerateParameters("isotropic_flexion needs an isotropic flexion state")
    _warn_unless_flexible(state.net)
    return run_flexion(state, config or FlexConfig(mode="isotropic"))


def euclidean_flexion(state: FlexionState, config: Optional[FlexConfig] = None) -> FlexionResult:
    if state.mode != "euclidean":
        raise DegenerateParameters("euclidean_flexion needs a Euclidean flexion state")
    return run_flexion(state, config or FlexConfig(mode="euclidean"))


def flex_net(net: Net, config: FlexConfig) -> FlexionResult:
    state = flexion_state(net, config.mode)
    if config.mode == "isotropic":
        return isotropic_flexion(state, config)
    return euclidean_flexion(state, config)


# =========================================================
# Flexion diagnostics
# =========================================================

def omega_drift(reference: Net, net: Net) -> float:
    return max((abs(curvature_omega(net, i, j) - curvature_omega(reference, i, j)) for i, j in reference.interior()), default=0.0)


def length_drift(reference: Net, net: Net, top_view: bool) -> float:
    """Largest change of a face edge or diagonal length, measured in top view or in space."""
    dims = slice(0, 2) if top_view else slice(0, 3)
    a, b = reference.vertices, net.vertices
    drift = 0.0
    for p, q in _face_pairs(reference):
        before = np.linalg.norm(a[p][dims] - a[q][dims])
        after = np.linalg.norm(b[p][dims] - b[q][dims])
        drift = max(drift, abs(float(after - before)))
    return drift
