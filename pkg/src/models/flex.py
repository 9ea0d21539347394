from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.core.errors import DegenerateParameters
from src.models.net import Net

FlexMode = Literal["isotropic", "euclidean"]

MIN_SIGMA = 1e-12


@dataclass
class ConeCylinderData:
    """Cone-cylinder net P_ij = a_i + sigma_i b_j; ``a`` and ``sigma`` index rows, ``b`` columns."""

    a: np.ndarray
    b: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        if self.a.ndim != 2 or self.a.shape[1] != 3 or self.b.ndim != 2 or self.b.shape[1] != 3:
            raise DegenerateParameters("Cone-cylinder vectors must be lists of 3D points")
        if self.sigma.shape != (len(self.a),):
            raise DegenerateParameters(f"Need one sigma per a_i, got {self.sigma.shape} for {len(self.a)}")
        if len(self.a) < 2 or len(self.b) < 2:
            raise DegenerateParameters("Cone-cylinder data needs at least two a_i and two b_j")
        bad = np.flatnonzero(np.abs(self.sigma) < MIN_SIGMA)
        if bad.size:
            raise DegenerateParameters(f"sigma_{int(bad[0])} vanishes", index=int(bad[0]))

    @property
    def shape(self) -> Tuple[int, int]:
        return len(self.a), len(self.b)


@dataclass
class ZProjectiveMap:
    """Homogeneous 4x4 map fixing the point at infinity of the z-axis."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (4, 4):
            raise DegenerateParameters(f"Projective map must be 4x4, got {m.shape}")
        column = m[:, 2]
        if abs(column[2]) < 1e-12 or np.max(np.abs(column[[0, 1, 3]])) > 1e-12 * abs(column[2]):
            raise DegenerateParameters("Projective map does not fix the vertical direction", column=tuple(column))
        if abs(np.linalg.det(m)) < 1e-12:
            raise DegenerateParameters("Projective map is singular")
        self.matrix = m

    @classmethod
    def from_affine(cls, matrix: np.ndarray, offset=(0.0, 0.0, 0.0)) -> "ZProjectiveMap":
        m = np.eye(4)
        m[:3, :3] = matrix
        m[:3, 3] = offset
        return cls(m)


@dataclass(frozen=True)
class DriverEdge:
    """
    Interior edge whose dihedral angle drives a flexion.

    An "i" edge joins f_ij and f_{i+1,j} and separates faces (i, j-1) and
    (i, j); a "j" edge joins f_ij and f_{i,j+1} and separates faces (i-1, j)
    and (i, j).
    """

    direction: Literal["i", "j"]
    i: int
    j: int

    @property
    def faces(self) -> Tuple[tuple, tuple]:
        if self.direction == "i":
            return (self.i, self.j - 1), (self.i, self.j)
        return (self.i - 1, self.j), (self.i, self.j)

    def is_interior(self, shape: Tuple[int, int]) -> bool:
        rows, cols = shape
        if self.direction == "i":
            return 0 <= self.i <= rows - 2 and 1 <= self.j <= cols - 2
        return 1 <= self.i <= rows - 2 and 0 <= self.j <= cols - 2

    def to_dict(self) -> dict:
        return {"direction": self.direction, "i": self.i, "j": self.j}


class FlexConfig(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    mode: FlexMode = "isotropic"
    steps: int = Field(default=20, ge=1)
    amplitude: float = 0.1
    driver_edge: Union[Literal["auto"], Tuple[Literal["i", "j"], int, int]] = Field(default="auto", alias="driverEdge")
    max_iter: Optional[int] = Field(default=None, alias="maxIter", ge=1)
    tolerance: Optional[float] = Field(default=None, gt=0)

    @field_validator("driver_edge", mode="before")
    @classmethod
    def _edge_from_dict(cls, v):
        if isinstance(v, dict):
            return (v.get("direction"), v.get("i"), v.get("j"))
        return v

    def driver(self) -> Optional[DriverEdge]:
        if self.driver_edge == "auto":
            return None
        return DriverEdge(*self.driver_edge)


@dataclass
class FlexReference:
    """Quantities frozen at t = 0. Keys are vertex pairs for lengths and face indices for the rest."""

    top_lengths: Dict[Tuple[tuple, tuple], float] = field(default_factory=dict)
    omega: Dict[tuple, float] = field(default_factory=dict)
    distances: Dict[Tuple[tuple, tuple], float] = field(default_factory=dict)
    planes: Dict[tuple, np.ndarray] = field(default_factory=dict)
    normals: Dict[tuple, np.ndarray] = field(default_factory=dict)


@dataclass
class FlexionState:
    net: Net
    mode: FlexMode
    reference: FlexReference
    t: float = 0.0


@dataclass
class InfinitesimalFlex:
    """Non-trivial null space of the flexion constraints and the driver it suggests."""

    vectors: np.ndarray
    driver: DriverEdge
    direction: np.ndarray
    rate: float
    rates: Dict[DriverEdge, float] = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return len(self.vectors)


@dataclass
class ClassReport:
    """
    Outcome of a flexibility class check.

    ``deviations`` maps a direction label and index to the measured
    mismatch; ``degenerate`` lists the places where the test quantity does
    not exist (parallel face planes, collapsed dual pencils). A report with
    nothing testable is not a pass.
    """

    name: str
    passed: bool
    testable: bool
    max_deviation: float
    direction: Optional[str] = None
    deviations: Dict[str, float] = field(default_factory=dict)
    degenerate: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "class": self.name,
            "passed": self.passed,
            "testable": self.testable,
            "maxDeviation": self.max_deviation,
            "direction": self.direction,
            "deviations": self.deviations,
            "degenerate": self.degenerate,
        }


@dataclass
class FlexionResult:
    nets: List[Net]
    mode: FlexMode
    driver: DriverEdge
    schedule: List[float]
    residuals: List[float]
    iterations: List[int]

    def manifest(self) -> dict:
        return {
            "steps": len(self.nets) - 1,
            "driverEdge": self.driver.to_dict(),
            "schedule": self.schedule,
            "residuals": self.residuals,
            "iterations": self.iterations,
            "mode": self.mode,
        }
