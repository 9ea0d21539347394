"""
Error hierarchy for isoweb.

Every failure carries an ``exit_code`` (2 for config/input problems, 3 for
numerical failures) and a human readable ``detail``. The CLI maps
``IsowebError`` subclasses straight to process exit codes.
"""

from typing import Any, Optional


EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class IsowebError(Exception):
    exit_code: int = EXIT_NUMERICAL

    def __init__(self, detail: str, **context: Any):
        super().__init__(detail)
        self.detail = detail
        self.context = context

    def to_dict(self) -> dict:
        return {
            "error": type(self).__name__,
            "detail": self.detail,
            "exitCode": self.exit_code,
            **{k: _plain(v) for k, v in self.context.items()},
        }


def _plain(value: Any) -> Any:
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if hasattr(value, "item"):
        return value.item()
    return value


# =========================================================
# Config / input (exit 2)
# =========================================================

class ConfigError(IsowebError):
    exit_code = EXIT_CONFIG


class MissingField(ConfigError):
    def __init__(self, field: str):
        super().__init__(f"Missing required field: {field}", field=field)


class BadTopology(ConfigError):
    pass


class EmptySelection(ConfigError):
    pass


class InconsistentRoles(ConfigError):
    pass


class SeedOffLine(ConfigError):
    def __init__(self, index: tuple, distance: float):
        super().__init__(
            f"Seed vertex {index} is {distance:.3e} off its diagonal line",
            index=index,
            distance=distance,
        )


class DegenerateParameters(ConfigError):
    pass


# =========================================================
# Geometry / numerics (exit 3)
# =========================================================

class GeometryError(IsowebError):
    exit_code = EXIT_NUMERICAL


class NoDualPoint(GeometryError):
    pass


class NonPlanarFace(GeometryError):
    def __init__(self, face: tuple, deviation: float):
        super().__init__(
            f"Face {face} is not planar (deviation {deviation:.3e})",
            face=face,
            deviation=deviation,
        )


class IsotropicFace(GeometryError):
    def __init__(self, face: tuple):
        super().__init__(f"Face {face} lies in an isotropic plane", face=face)


class ZeroDenominator(GeometryError):
    pass


class CollinearPoints(GeometryError):
    pass


class ParallelPlanes(GeometryError):
    pass


class DegenerateTangents(GeometryError):
    pass


class DegenerateFace(GeometryError):
    pass


class DegenerateVertex(GeometryError):
    pass


class ZeroEdge(GeometryError):
    pass


class NoFootPoint(GeometryError):
    pass


class SingularStep(GeometryError):
    def __init__(self, index: tuple, sigma_min: float):
        super().__init__(
            f"Singular propagation step at {index} (sigma_min {sigma_min:.3e})",
            index=index,
            sigma_min=sigma_min,
        )


class ZeroMultiplier(GeometryError):
    def __init__(self, index: tuple):
        super().__init__(f"Koenigs multiplier vanishes at {index}", index=index)


class FoldedNet(GeometryError):
    def __init__(self, face: tuple):
        super().__init__(f"Propagated net folds over at face {face}", face=face)


class ZeroPivot(GeometryError):
    def __init__(self, index: tuple):
        super().__init__(f"No usable star pivot reaches vertex {index}", index=index)


class ParallelTangents(GeometryError):
    pass


class InconsistentLift(GeometryError):
    def __init__(self, detail: str, residual: Optional[float] = None):
        super().__init__(detail, residual=residual)


class EllipticPoint(GeometryError):
    pass


class FlatPoint(GeometryError):
    pass


class CrossedFlatPoint(GeometryError):
    pass


class PointAtInfinity(GeometryError):
    pass


class NumericalFailure(GeometryError):
    pass


class LinearSolveFailure(NumericalFailure):
    pass


class StallDetected(NumericalFailure):
    def __init__(self, iteration: int, damping: float):
        super().__init__(
            f"Damping exceeded its cap at iteration {iteration} (lambda {damping:.3e})",
            iteration=iteration,
            damping=damping,
        )


class ContinuationFailed(NumericalFailure):
    def __init__(self, eps: float, e_hard: float):
        super().__init__(
            f"Continuation stalled at eps={eps:g} with E_hard={e_hard:.3e}",
            eps=eps,
            e_hard=e_hard,
        )


class StepFailed(NumericalFailure):
    """Raised by flexion; ``partial`` holds the nets computed before the failure."""

    def __init__(self, step: int, residual: float, partial: Optional[list] = None):
        super().__init__(
            f"Flexion step {step} did not converge (residual {residual:.3e})",
            step=step,
            residual=residual,
        )
        self.partial = partial or []
