"""
Guided projection with epsilon continuation.

The hard constraints of a web kind are written as quadratic equations in
the vertices and auxiliary unit vectors (surface normals, curve binormals).
For each eps of the schedule the weighted energy

    E = E_hard + w_fair E_fair + w_surf E_surf_close + w_vert E_vert_close

is minimized by damped Gauss-Newton steps, starting from the result of the
previous eps. At eps = 0 the constraints are those of the isotropic web the
input was built as, at eps = 1 they are Euclidean.
"""

import logging
import time
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.core.errors import (
    CollinearPoints,
    DegenerateTangents,
    InconsistentRoles,
    LinearSolveFailure,
    StallDetected,
)
from src.models.net import KIND_ROLES, Net, check_roles
from src.models.solver import ContinuationResult, EpsStats, IterationStats, SoftWeights, SolverConfig
from src.services.constraints import (
    ConstraintProblem,
    QuadraticBlock,
    anet_vertices,
    angle_faces,
    build_anet_constraints,
    build_angle_constraints,
    build_curve_closeness,
    build_fairness,
    build_geodesic_constraints,
    build_normal_coupling,
    build_surface_closeness,
    build_unit_norms,
    build_vertex_closeness,
    geodesic_triples,
)
from src.services.levenberg import lm_step
from src.services.net_core import (
    DIAGONAL_STENCIL,
    GRID_STENCIL,
    diagonal_normal,
    discrete_binormal,
    discrete_normal,
    family_polylines,
    net_mean_edge_length,
)
from src.services.variables import VariableLayout, VariableVector, vertex_keys

logger = logging.getLogger("isoweb")

UP = np.array([0.0, 0.0, 1.0])
MIN_DAMPING = 1e-12


# =========================================================
# Constraint sets per kind
# =========================================================

def _anet_groups(net: Net) -> List[Tuple[str, tuple, Optional[int]]]:
    """(block name, stencil, parity) of every A-net the role tags ask for."""
    asym = net.roles.families("asymptotic")
    groups = []
    if "i" in asym and "j" in asym:
        groups.append(("anet", GRID_STENCIL, None))
    if "diag_minus" in asym and "diag_plus" in asym:
        groups.append(("anet_even", DIAGONAL_STENCIL, 0))
        groups.append(("anet_odd", DIAGONAL_STENCIL, 1))
    return groups


def _check_kind(net: Net, kind: str) -> None:
    if kind not in KIND_ROLES:
        raise InconsistentRoles(f"Unknown web kind {kind!r}", kind=kind)
    check_roles(kind, net.roles)


def _binormal_init(prev: np.ndarray, cur: np.ndarray, nxt: np.ndarray) -> Tuple[np.ndarray, bool]:
    try:
        return discrete_binormal(prev, cur, nxt), False
    except CollinearPoints:
        t = nxt - prev
        side = np.array([-t[1], t[0], 0.0])
        norm = np.linalg.norm(side)
        return (side / norm if norm > 0.0 else np.array([1.0, 0.0, 0.0])), True


def init_aux_variables(net: Net, kind: str) -> VariableVector:
    """
    Lay out vertices and auxiliary vectors for ``kind`` and initialize them:
    binormals from consecutive curve points, geodesic normals (0, 0, 1),
    A-net normals from the star tangents.
    """
    _check_kind(net, kind)
    layout = VariableLayout()
    layout.add("f", vertex_keys(net.shape), 3)
    values: List[np.ndarray] = [net.vertices.reshape(-1)]
    flagged: List[tuple] = []
    v = net.vertices

    groups = _anet_groups(net)
    if groups:
        keys = sorted({key for _, _, parity in groups for key in anet_vertices(net.shape, parity)})
        diagonal = groups[0][1] is DIAGONAL_STENCIL
        normals = []
        for i, j in keys:
            try:
                normals.append(diagonal_normal(net, i, j) if diagonal else discrete_normal(net, i, j))
            except DegenerateTangents:
                normals.append(UP)
                flagged.append((i, j))
        layout.add("n_anet", keys, 3)
        values.append(np.asarray(normals).reshape(-1))

    geo_keys = set()
    for family in net.roles.families("geodesic"):
        triples = geodesic_triples(net, family)
        binormals = []
        for prev, cur, nxt in triples:
            b, fallback = _binormal_init(v[prev], v[cur], v[nxt])
            binormals.append(b)
            if fallback:
                flagged.append(cur)
            geo_keys.add(cur)
        layout.add(f"b_{family}", [cur for _, cur, _ in triples], 3)
        values.append(np.asarray(binormals, dtype=float).reshape(-1))
    if geo_keys:
        keys = sorted(geo_keys)
        layout.add("n_geo", keys, 3)
        values.append(np.tile(UP, len(keys)))

    if flagged:
        logger.info("Auxiliary init fell back at %d vertices", len(flagged))
    x = np.concatenate(values)
    return VariableVector(layout, x, net.shape, flagged)


def _vertex_normals(net: Net) -> Dict[tuple, np.ndarray]:
    normals = {}
    for i, j in net.interior():
        try:
            normals[(i, j)] = discrete_normal(net, i, j)
        except DegenerateTangents:
            continue
    return normals


def _boundary_curves(net: Net) -> Dict[str, Tuple[List[tuple], np.ndarray]]:
    v = net.vertices
    m, n = net.rows - 1, net.cols - 1
    sides = {
        "i0": [(0, j) for j in range(n + 1)],
        "im": [(m, j) for j in range(n + 1)],
        "j0": [(i, 0) for i in range(m + 1)],
        "jn": [(i, n) for i in range(m + 1)],
    }
    return {name: (keys, np.array([v[k] for k in keys])) for name, keys in sides.items()}


def assemble_energy(
    net: Net,
    kind: str,
    eps: float,
    config: SolverConfig,
    variables: Optional[VariableVector] = None,
    weights: Optional[SoftWeights] = None,
    boundary: Optional[Net] = None,
) -> ConstraintProblem:
    """
    Build the constraint problem of ``kind`` at ``eps`` around the current
    state. Frozen quantities (edge lengths, previous normals, foot points)
    are read from ``variables`` when given, else from ``net``.

    ``boundary`` is the prescribed boundary of a CRPC run with
    ``fix_boundary``: boundary vertices stay on its four sides and its
    corners stay put.
    """
    _check_kind(net, kind)
    if variables is None:
        variables = init_aux_variables(net, kind)
    layout = variables.layout
    current = variables.to_net(net)
    weights = weights or config.weights

    blocks: List[QuadraticBlock] = []
    for name, stencil, parity in _anet_groups(current):
        blocks.append(build_anet_constraints(layout, current, "n_anet", stencil, parity, name=name))
    geodesic = current.roles.families("geodesic")
    for family in geodesic:
        blocks.append(build_geodesic_constraints(layout, current, family, eps))
    if layout.has("n_geo"):
        # With two or more families the shared normal is fixed by the binormals alone
        if len(geodesic) == 1:
            blocks.append(build_normal_coupling(layout, eps))
        else:
            blocks.append(build_unit_norms(layout, "n_geo"))

    if kind == "CRPC":
        faces = angle_faces(current, config.flat_points, config.flat_radius)
        blocks.append(build_angle_constraints(layout, current, config.gamma, faces))
        if config.fix_boundary and boundary is not None:
            for side, (keys, curve) in _boundary_curves(boundary).items():
                blocks.append(build_curve_closeness(layout, current, keys, curve, hard=True, name=f"boundary_{side}"))
            m, n = boundary.rows - 1, boundary.cols - 1
            blocks.append(
                build_vertex_closeness(
                    layout, boundary.vertices, 1.0, keys=[(0, 0), (m, 0), (0, n), (m, n)], hard=True, name="boundary_corners"
                )
            )

    tagged = [f for f in ("i", "j", "diag_minus", "diag_plus") if current.roles.of(f) != "none"]
    blocks.append(build_fairness(layout, current, tagged, weights.fairness))
    blocks.append(build_surface_closeness(layout, current, _vertex_normals(current), weights.surf_close))
    blocks.append(build_vertex_closeness(layout, current.vertices, weights.vert_close))
    return ConstraintProblem(layout, blocks)


# =========================================================
# Continuation
# =========================================================

def _decayed(weights: SoftWeights, reductions: int, config: SolverConfig) -> SoftWeights:
    if reductions >= config.decay_steps:
        return weights.scaled(0.0)
    return weights.scaled(config.decay_factor ** -reductions)


def run_continuation(
    net: Net,
    kind: str,
    config: SolverConfig,
    boundary: Optional[Net] = None,
) -> ContinuationResult:
    """
    Carry ``net`` (an isotropic instance of ``kind``) through the eps
    schedule. Each eps restarts the soft weights and the damping; the loop
    stops when E_hard reaches ``config.hard_target``. An eps that does not
    get there (iteration cap or stalled damping) ends the run: the result
    holds the last accepted net and ``failed_eps``.
    """
    variables = init_aux_variables(net, kind)
    if kind == "CRPC" and config.fix_boundary and boundary is None:
        boundary = net
    x = variables.x.copy()
    result = ContinuationResult(net=net, variable_count=variables.layout.size)

    for eps in config.eps_schedule:
        started = time.perf_counter()
        damping = config.lm.lambda0
        reductions = 0
        iteration = 0
        converged = False
        e_hard = float("nan")
        while True:
            state = variables.with_x(x)
            problem = assemble_energy(net, kind, eps, config, state, _decayed(config.weights, reductions, config), boundary)
            e_hard, e_soft = problem.energies(x)
            if e_hard <= config.hard_target:
                converged = True
                break
            if iteration >= config.max_iter_per_eps:
                break
            step_started = time.perf_counter()
            try:
                x, stats = lm_step(problem, x, damping, config.lm, iteration)
            except (StallDetected, LinearSolveFailure) as e:
                logger.warning("eps=%.3f: %s", eps, e.detail)
                break
            iteration += 1
            damping = max(stats.damping * config.lm.down, MIN_DAMPING)
            after_hard, after_soft = problem.energies(x)
            result.history.append(
                IterationStats(
                    eps=eps,
                    iteration=iteration,
                    e_hard=after_hard,
                    e_soft=after_soft,
                    step_norm=stats.step_norm,
                    damping=stats.damping,
                    seconds=time.perf_counter() - step_started,
                )
            )
            logger.debug("eps=%.3f it=%d E_hard=%.3e E_soft=%.3e", eps, iteration, after_hard, after_soft)
            if iteration % config.decay_every == 0 and reductions < config.decay_steps:
                reductions += 1

        at_cap = iteration >= config.max_iter_per_eps
        result.per_eps.append(EpsStats(eps, iteration, e_hard, converged, time.perf_counter() - started, at_cap))
        result.net = variables.to_net(net, x)
        logger.info("eps=%.3f: %d iterations, E_hard=%.3e", eps, iteration, e_hard)
        if converged and at_cap:
            logger.warning("eps=%.3f reached the target only on the last allowed iteration (%d)", eps, iteration)
        if not converged:
            result.failed_eps = eps
            logger.error("Continuation failed at eps=%.3f with E_hard=%.3e", eps, e_hard)
            break

    return result


def fairness_residual_max(net: Net) -> float:
    """Largest |2 f_k - f_k-1 - f_k+1| over the tagged families, in units of the mean edge length."""
    v = net.vertices
    worst = 0.0
    for family in ("i", "j", "diag_minus", "diag_plus"):
        if net.roles.of(family) == "none":
            continue
        for poly in family_polylines(net, family):
            p = np.array([v[k] for k in poly.indices])
            second = 2.0 * p[1:-1] - p[:-2] - p[2:]
            worst = max(worst, float(np.linalg.norm(second, axis=1).max()))
    scale = net_mean_edge_length(net)
    return worst / scale if scale > 0.0 else worst


def continuation_summary(result: ContinuationResult, initial: Net, config: SolverConfig) -> dict:
    """Per-run statistics: sizes, weights, time per iteration, final E_hard and displacement."""
    iterations = len(result.history)
    seconds = sum(s.seconds for s in result.per_eps)
    displacement = np.linalg.norm(result.net.vertices - initial.vertices, axis=-1)
    return {
        "kind": config.kind,
        "vertices": initial.rows * initial.cols,
        "variables": result.variable_count,
        "weights": config.weights.model_dump(by_alias=True),
        "iterations": iterations,
        "timePerIter": seconds / iterations if iterations else 0.0,
        "eHard": result.e_hard,
        "maxDisplacement": float(displacement.max()),
        "fairnessMax": fairness_residual_max(result.net),
        "failedEps": result.failed_eps,
        "perEps": [
            {"eps": s.eps, "iterations": s.iterations, "eHard": s.e_hard, "converged": s.converged, "atCap": s.at_cap}
            for s in result.per_eps
        ],
    }
