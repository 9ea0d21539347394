import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import polynomial as P

from src.core.errors import BadTopology, DegenerateParameters, MissingField


class ComplexPoly:
    """Polynomial c_0 + c_1 w + ... + c_d w^d with complex coefficients."""

    def __init__(self, coefficients: Sequence[complex] = (0.0,)):
        c = P.polytrim(np.asarray(coefficients, dtype=complex).ravel(), tol=0.0)
        self.coefficients = c if c.size else np.zeros(1, dtype=complex)

    @classmethod
    def from_roots(cls, roots: Sequence[complex]) -> "ComplexPoly":
        if len(roots) == 0:
            return cls([1.0])
        return cls(P.polyfromroots(np.asarray(roots, dtype=complex)))

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def is_zero(self) -> bool:
        return bool(np.all(self.coefficients == 0))

    def derivative(self) -> "ComplexPoly":
        return ComplexPoly(P.polyder(self.coefficients))

    def antiderivative(self) -> "ComplexPoly":
        # Constant term 0
        return ComplexPoly(P.polyint(self.coefficients))

    def __mul__(self, other: Union["ComplexPoly", complex]) -> "ComplexPoly":
        if isinstance(other, ComplexPoly):
            return ComplexPoly(P.polymul(self.coefficients, other.coefficients))
        return ComplexPoly(self.coefficients * other)

    __rmul__ = __mul__

    def __add__(self, other: Union["ComplexPoly", complex]) -> "ComplexPoly":
        if not isinstance(other, ComplexPoly):
            other = ComplexPoly([other])
        return ComplexPoly(P.polyadd(self.coefficients, other.coefficients))

    __radd__ = __add__

    def __call__(self, w):
        return P.polyval(np.asarray(w, dtype=complex), self.coefficients)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ComplexPoly):
            return NotImplemented
        return self.coefficients.shape == other.coefficients.shape and bool(
            np.allclose(self.coefficients, other.coefficients, rtol=1e-12, atol=1e-14)
        )

    def __repr__(self) -> str:
        return f"ComplexPoly({self.coefficients.tolist()})"

    def to_pairs(self) -> List[List[float]]:
        return [[float(c.real), float(c.imag)] for c in self.coefficients]

    @classmethod
    def from_pairs(cls, pairs: Sequence[Sequence[float]]) -> "ComplexPoly":
        return cls([complex(re, im) for re, im in pairs])


def eps_of(gamma: float) -> float:
    """eps = cos(gamma) for gamma in degrees; exactly 0 at 90."""
    if not 0.0 < gamma <= 90.0:
        raise DegenerateParameters(f"gamma must lie in (0, 90] degrees, got {gamma}", field="gamma")
    return 0.0 if gamma == 90.0 else math.cos(math.radians(gamma))


@dataclass
class CrpcAnsatz:
    """
    Approximate isotropic CRPC surface

        f = 2 Re g + eps |h|^2 + eps^2 Re(h^2) log(|h'| + eps)

    with g'' = (h')^2 and h' vanishing at the flat points. ``gamma`` is in degrees.
    """

    gamma: float
    flat_points: List[complex]
    h: ComplexPoly
    g: ComplexPoly

    @property
    def eps(self) -> float:
        return eps_of(self.gamma)

    @property
    def h_prime(self) -> ComplexPoly:
        return self.h.derivative()

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "flatPoints": [[float(w.real), float(w.imag)] for w in self.flat_points],
            "hCoeffs": self.h.to_pairs(),
            "gCoeffs": self.g.to_pairs(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CrpcAnsatz":
        for key in ("gamma", "hCoeffs", "gCoeffs"):
            if key not in data:
                raise MissingField(key)
        return cls(
            gamma=float(data["gamma"]),
            flat_points=[complex(re, im) for re, im in data.get("flatPoints", [])],
            h=ComplexPoly.from_pairs(data["hCoeffs"]),
            g=ComplexPoly.from_pairs(data["gCoeffs"]),
        )


Domain = Tuple[float, float, float, float]


@dataclass
class GraphSample:
    """Height field z = height(x, y) over the rectangle (xmin, xmax, ymin, ymax), sampled at ``spacing``."""

    height: Callable
    domain: Domain
    spacing: float
    gamma: Optional[float] = None

    def __post_init__(self):
        xmin, xmax, ymin, ymax = self.domain
        if not (xmin < xmax and ymin < ymax):
            raise DegenerateParameters(f"Empty sample domain {self.domain}")
        if not self.spacing > 0.0:
            raise DegenerateParameters(f"Sample spacing must be positive, got {self.spacing}")

    def contains(self, x: float, y: float) -> bool:
        xmin, xmax, ymin, ymax = self.domain
        return xmin <= x <= xmax and ymin <= y <= ymax

    def __call__(self, x, y):
        return np.asarray(self.height(x, y), dtype=float) + 0.0 * np.asarray(x, dtype=float)

    def grid(self) -> np.ndarray:
        """(rows, cols, 3) array of samples; rows run along x."""
        xmin, xmax, ymin, ymax = self.domain
        xs = np.arange(xmin, xmax + 0.5 * self.spacing, self.spacing)
        ys = np.arange(ymin, ymax + 0.5 * self.spacing, self.spacing)
        x, y = np.meshgrid(xs, ys, indexing="ij")
        z = self(x, y)
        if not np.all(np.isfinite(z)):
            raise DegenerateParameters("Height field has non-finite samples")
        return np.stack([x, y, z], axis=-1)


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return d1 * d2 < 0 and d3 * d4 < 0


def check_simple_polygon(polygon: np.ndarray, what: str = "Polygon") -> None:
    """Raise BadTopology when two non-adjacent edges of the closed polygon cross."""
    m = len(polygon)
    for a in range(m):
        for b in range(a + 2, m):
            if a == 0 and b == m - 1:
                continue
            if _segments_cross(polygon[a], polygon[(a + 1) % m], polygon[b], polygon[(b + 1) % m]):
                raise BadTopology(f"{what} self-intersects at edges {a} and {b}")


@dataclass
class BoundarySpec:
    """Closed boundary polygon (implicitly closed, last vertex != first) with heights b at its vertices."""

    polygon: np.ndarray
    values: np.ndarray
    k: int = 0

    def __post_init__(self):
        self.polygon = np.asarray(self.polygon, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        m = len(self.polygon)
        if self.polygon.ndim != 2 or self.polygon.shape[1] != 2:
            raise BadTopology(f"Boundary polygon must be (m, 2), got {self.polygon.shape}")
        if self.values.shape != (m,):
            raise BadTopology(f"Expected {m} boundary heights, got {self.values.shape}")
        if self.k < 0:
            raise DegenerateParameters(f"Fit degree must be >= 0, got {self.k}")
        if m < 2 * self.k + 6:
            raise DegenerateParameters(f"Degree {self.k} needs at least {2 * self.k + 6} boundary samples, got {m}")
        check_simple_polygon(self.polygon, "Boundary polygon")

    @property
    def points(self) -> np.ndarray:
        return self.polygon[:, 0] + 1j * self.polygon[:, 1]


@dataclass
class PdeResidual:
    value: float
    near_flat: bool


@dataclass
class FitResult:
    ansatz: CrpcAnsatz
    misfit: float
    converged: bool
    iterations: int
    samples: int = 0


@dataclass
class TraceResult:
    net: "object"
    left_domain: bool
    anet_residual: float = 0.0
    notes: List[str] = field(default_factory=list)
