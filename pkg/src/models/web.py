from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.core.errors import DegenerateParameters


@dataclass(frozen=True)
class Line2D:
    """Line a x + b y = c with (a, b) of unit length."""

    a: float
    b: float
    c: float

    @classmethod
    def from_coefficients(cls, a: float, b: float, c: float) -> "Line2D":
        norm = float(np.hypot(a, b))
        if norm == 0.0:
            raise DegenerateParameters("Line needs a nonzero normal", line=(a, b, c))
        return cls(a / norm, b / norm, c / norm)

    @classmethod
    def from_slope(cls, k: float, b: float) -> "Line2D":
        # y = k x + b  <=>  -k x + y = b
        return cls.from_coefficients(-k, 1.0, b)

    @classmethod
    def vertical(cls, x: float) -> "Line2D":
        return cls(1.0, 0.0, float(x))

    @classmethod
    def through(cls, p: np.ndarray, q: np.ndarray) -> "Line2D":
        d = np.asarray(q, dtype=float)[:2] - np.asarray(p, dtype=float)[:2]
        return cls.from_coefficients(-d[1], d[0], -d[1] * p[0] + d[0] * p[1])

    def signed_distance(self, p: np.ndarray) -> float:
        return float(self.a * p[0] + self.b * p[1] - self.c)

    @property
    def direction(self) -> np.ndarray:
        return np.array([-self.b, self.a])

    @property
    def base_point(self) -> np.ndarray:
        return np.array([self.a * self.c, self.b * self.c])

    def point_at(self, t: float) -> np.ndarray:
        return self.base_point + t * self.direction

    def to_slope_form(self) -> List[float]:
        """[k, b] for y = k x + b, or ["x", c] for vertical lines."""
        if abs(self.b) < 1e-15:
            return ["x", self.c / self.a]
        return [-self.a / self.b, self.c / self.b]


@dataclass
class LineFamily:
    name: str
    lines: List[Line2D]

    def __len__(self) -> int:
        return len(self.lines)

    def __getitem__(self, k: int) -> Line2D:
        return self.lines[k]


@dataclass
class LineWeb:
    """
    Planar web of straight lines. ``vertices[i, j]`` is the intersection of
    line i of family "i" with line j of family "j"; the optional diagonal
    family ("diag_minus" or "diag_plus") is indexed by i - j + offset or i + j.
    """

    families: Dict[str, LineFamily]
    vertices: np.ndarray
    diagonal: Optional[str] = None
    diagonal_offset: int = 0

    def diagonal_line(self, i: int, j: int) -> Line2D:
        fam = self.families[self.diagonal]
        k = i - j + self.diagonal_offset if self.diagonal == "diag_minus" else i + j
        return fam[k]


@dataclass
class AagSeed:
    """
    Input of the propagation construction of AAG webs.

    ``diagonal[i]`` is f_ii (top view on D_n) for i = 0..n, ``aux[i]`` is
    f_{i,i-1} (top view on D_{n+1}) for i = 0..n+1; aux[0] and aux[n+1] only
    fix the tangent planes at f_00 and f_nn.
    """

    lines: LineFamily
    diagonal: np.ndarray
    aux: np.ndarray

    @property
    def n(self) -> int:
        return len(self.diagonal) - 1


@dataclass
class KoenigsSeed:
    """
    Input of the planar Koenigs propagation: boundary vertices f_0j, f_i0,
    diagonal vertices f_ii, super-diagonal vertices f_i,i+1 and two nonzero
    multipliers. Points are 2D top views.
    """

    lines: LineFamily
    row0: np.ndarray
    col0: np.ndarray
    diagonal: np.ndarray
    superdiagonal: np.ndarray
    nu00: float
    nu01: float

    @property
    def n(self) -> int:
        return len(self.row0) - 1


@dataclass
class KoenigsData:
    vertices: np.ndarray
    centers: np.ndarray
    multipliers: np.ndarray
    lines: Optional[LineFamily] = None


@dataclass
class AgagResult:
    net: "object"
    residual: float
    trivial: bool
    parity_residuals: Dict[str, float] = field(default_factory=dict)


def as_points(values: Sequence, dim: int) -> np.ndarray:
    pts = np.asarray(values, dtype=float)
    if pts.ndim != 2 or pts.shape[1] < dim:
        raise DegenerateParameters(f"Expected a list of {dim}D points, got shape {pts.shape}")
    return pts[:, :dim]
