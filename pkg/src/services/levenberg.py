"""
Levenberg-Marquardt engines.

``levenberg_marquardt`` is the small dense loop used for boundary fits;
``lm_step`` is one damped Gauss-Newton step on the sparse normal equations
of a constraint problem. Both share the damping schedule in ``LmSettings``.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.sparse import csc_matrix, identity
from scipy.sparse.linalg import cg, splu

from src.core.errors import LinearSolveFailure, StallDetected
from src.models.solver import LmSettings

logger = logging.getLogger("isoweb")

SOLVE_RTOL = 1e-10


@dataclass
class LmResult:
    x: np.ndarray
    cost: float
    iterations: int
    converged: bool
    damping: float


@dataclass
class StepStats:
    energy_before: float
    energy_after: float
    step_norm: float
    retries: int
    damping: float


# =========================================================
# Dense loop
# =========================================================

def levenberg_marquardt(
    residual: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    *,
    settings: Optional[LmSettings] = None,
    max_iter: int = 200,
    cost_tol: float = 1e-28,
    step_tol: float = 1e-15,
) -> LmResult:
    """Minimize ||residual(x)||^2. Never raises on stalls; ``converged`` reports the outcome."""
    settings = settings or LmSettings(lambda0=1e-3)
    x = np.array(x0, dtype=float)
    lam = settings.lambda0
    r = residual(x)
    cost = float(r @ r)

    for it in range(1, max_iter + 1):
        if cost <= cost_tol:
            return LmResult(x, cost, it - 1, True, lam)
        J = jacobian(x)
        g = J.T @ r
        H = J.T @ J
        while True:
            try:
                delta = np.linalg.solve(H + lam * np.eye(len(x)), -g)
            except np.linalg.LinAlgError:
                delta = np.linalg.lstsq(H + lam * np.eye(len(x)), -g, rcond=None)[0]
            r_new = residual(x + delta)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new <= cost:
                lam = max(lam * settings.down, 1e-15)
                break
            lam *= settings.up
            if lam > settings.max:
                logger.debug("Dense LM stalled at iteration %d (lambda %.3e)", it, lam)
                return LmResult(x, cost, it, False, lam)

        x = x + delta
        improvement = cost - cost_new
        r, cost = r_new, cost_new
        if float(np.linalg.norm(delta)) <= step_tol * (float(np.linalg.norm(x)) + step_tol) or improvement <= 1e-16 * cost:
            return LmResult(x, cost, it, True, lam)

    return LmResult(x, cost, max_iter, False, lam)


# =========================================================
# Sparse normal equations
# =========================================================

def solve_normal_equations(J, r: np.ndarray, damping: float) -> np.ndarray:
    """Solve (J^T J + damping I) delta = -J^T r; LU first, conjugate gradients as fallback."""
    n = J.shape[1]
    A = csc_matrix(J.T @ J + damping * identity(n, format="csc"))
    b = -(J.T @ r)
    try:
        delta = splu(A).solve(b)
    except RuntimeError as e:
        logger.debug("Sparse LU failed (%s); falling back to CG", e)
        delta, info = cg(A, b, rtol=SOLVE_RTOL, maxiter=10 * n)
        if info != 0:
            raise LinearSolveFailure(f"Normal equations did not converge (cg info={info})") from e
    if not np.all(np.isfinite(delta)):
        raise LinearSolveFailure("Normal equations produced a non-finite step")
    return delta


def lm_step(problem, x: np.ndarray, damping: float, settings: LmSettings, iteration: int = 0) -> Tuple[np.ndarray, StepStats]:
    """
    One accepted damped Gauss-Newton step on ``problem`` (anything exposing
    ``residuals(x)`` and ``jacobian(x)``, weights already folded in).

    The step is accepted when the total energy does not increase; otherwise
    the damping grows by ``settings.up`` until it passes ``settings.max``.
    """
    r = problem.residuals(x)
    energy = float(r @ r)
    J = problem.jacobian(x)
    retries = 0
    while True:
        delta = solve_normal_equations(J, r, damping)
        candidate = x + delta
        r_new = problem.residuals(candidate)
        energy_new = float(r_new @ r_new)
        if np.isfinite(energy_new) and energy_new <= energy:
            stats = StepStats(energy, energy_new, float(np.linalg.norm(delta)), retries, damping)
            return candidate, stats
        damping *= settings.up
        retries += 1
        if damping > settings.max:
            raise StallDetected(iteration, damping)
