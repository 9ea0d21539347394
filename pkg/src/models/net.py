from dataclasses import dataclass
from typing import Dict, Iterator, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.core.errors import BadTopology, InconsistentRoles

Role = Literal["geodesic", "asymptotic", "none"]
Family = Literal["i", "j", "diag_minus", "diag_plus"]
BoundaryPolicy = Literal["exclude", "one_sided"]
WebKind = Literal["GGG", "AAG", "AGAG", "CRPC"]

FAMILIES: tuple = ("i", "j", "diag_minus", "diag_plus")


class WebRoles(BaseModel):
    model_config = ConfigDict(populate_by_name=True, frozen=True)

    i_lines: Role = Field(default="none", alias="iLines")
    j_lines: Role = Field(default="none", alias="jLines")
    diag_minus: Role = Field(default="none", alias="diagMinus")
    diag_plus: Role = Field(default="none", alias="diagPlus")

    def of(self, family: Family) -> Role:
        return {
            "i": self.i_lines,
            "j": self.j_lines,
            "diag_minus": self.diag_minus,
            "diag_plus": self.diag_plus,
        }[family]

    def families(self, role: Role) -> List[str]:
        return [f for f in FAMILIES if self.of(f) == role]


KIND_ROLES: Dict[str, WebRoles] = {
    "GGG": WebRoles(i_lines="geodesic", j_lines="geodesic", diag_minus="geodesic"),
    "AAG": WebRoles(i_lines="asymptotic", j_lines="asymptotic", diag_minus="geodesic"),
    "AGAG": WebRoles(
        i_lines="geodesic", j_lines="geodesic", diag_minus="asymptotic", diag_plus="asymptotic"
    ),
    "CRPC": WebRoles(i_lines="asymptotic", j_lines="asymptotic"),
}


def check_roles(kind: str, roles: WebRoles) -> None:
    """Raise InconsistentRoles when a net's tags do not carry the web kind."""
    expected = KIND_ROLES[kind]
    for family in FAMILIES:
        want = expected.of(family)
        # GGG accepts either diagonal as its third family
        if kind == "GGG" and family.startswith("diag"):
            continue
        if want != "none" and roles.of(family) != want:
            raise InconsistentRoles(
                f"{kind} needs {family} lines tagged {want}, got {roles.of(family)}",
                family=family,
            )
    if kind == "GGG" and "geodesic" not in (roles.diag_minus, roles.diag_plus):
        raise InconsistentRoles("GGG needs a geodesic diagonal family", family="diag")


@dataclass(frozen=True)
class Polyline:
    family: str
    key: int
    indices: List[tuple]
    touches_boundary: bool

    def __len__(self) -> int:
        return len(self.indices)


class Net:
    """
    Rectangular quad net f_ij, i in [0, rows), j in [0, cols).

    An i-line holds i fixed (j varies), a j-line holds j fixed. The
    diag_minus family is i - j = const, diag_plus is i + j = const.
    """

    def __init__(
        self,
        vertices: np.ndarray,
        roles: Optional[WebRoles] = None,
        boundary_policy: BoundaryPolicy = "exclude",
    ):
        v = np.array(vertices, dtype=float)
        if v.ndim != 3 or v.shape[2] != 3:
            raise BadTopology(f"Vertex array must have shape (rows, cols, 3), got {v.shape}")
        if v.shape[0] < 1 or v.shape[1] < 1:
            raise BadTopology(f"Net needs at least one vertex, got {v.shape[:2]}")
        if not np.all(np.isfinite(v)):
            raise BadTopology("Net vertices must be finite")
        v.flags.writeable = False
        self.vertices = v
        self.roles = roles or WebRoles()
        self.boundary_policy = boundary_policy

    @property
    def rows(self) -> int:
        return self.vertices.shape[0]

    @property
    def cols(self) -> int:
        return self.vertices.shape[1]

    @property
    def shape(self) -> tuple:
        return self.vertices.shape[:2]

    def __getitem__(self, index) -> np.ndarray:
        return self.vertices[index]

    def with_vertices(self, vertices: np.ndarray) -> "Net":
        return Net(vertices, self.roles, self.boundary_policy)

    def with_roles(self, roles: WebRoles) -> "Net":
        return Net(self.vertices, roles, self.boundary_policy)

    def flat(self) -> np.ndarray:
        return self.vertices.reshape(-1, 3)

    def vertex_id(self, i: int, j: int) -> int:
        return i * self.cols + j

    def check_distinct(self) -> "Net":
        """Raise BadTopology when two grid positions share a point."""
        _, first, counts = np.unique(self.flat(), axis=0, return_index=True, return_counts=True)
        if np.any(counts > 1):
            k = int(first[np.argmax(counts > 1)])
            raise BadTopology(f"Vertex {divmod(k, self.cols)} is repeated", vertex=divmod(k, self.cols))
        return self

    def is_boundary(self, i: int, j: int) -> bool:
        return i == 0 or j == 0 or i == self.rows - 1 or j == self.cols - 1

    def interior(self) -> Iterator[tuple]:
        for i in range(1, self.rows - 1):
            for j in range(1, self.cols - 1):
                yield i, j

    def faces(self) -> Iterator[tuple]:
        for i in range(self.rows - 1):
            for j in range(self.cols - 1):
                yield i, j

    def polylines(self, family: str) -> List[Polyline]:
        m, n = self.rows, self.cols
        lines: List[Polyline] = []
        if family == "i":
            for i in range(m):
                idx = [(i, j) for j in range(n)]
                lines.append(Polyline("i", i, idx, i in (0, m - 1)))
        elif family == "j":
            for j in range(n):
                idx = [(i, j) for i in range(m)]
                lines.append(Polyline("j", j, idx, j in (0, n - 1)))
        elif family == "diag_minus":
            for d in range(-(n - 1), m):
                idx = [(i, i - d) for i in range(m) if 0 <= i - d < n]
                lines.append(Polyline("diag_minus", d, idx, False))
        elif family == "diag_plus":
            for s in range(m + n - 1):
                idx = [(i, s - i) for i in range(m) if 0 <= s - i < n]
                lines.append(Polyline("diag_plus", s, idx, False))
        else:
            raise BadTopology(f"Unknown line family: {family}")
        return lines


@dataclass(frozen=True)
class Plane:
    """Non-isotropic plane z = A x + B y + C."""

    A: float
    B: float
    C: float

    def height(self, x: float, y: float) -> float:
        return self.A * x + self.B * y + self.C


@dataclass(frozen=True)
class IsotropicPlane:
    """Vertical plane a x + b y = c."""

    a: float
    b: float
    c: float


@dataclass(frozen=True)
class OppositeRatio:
    value: float
    parallel: bool


class NetDocument(BaseModel):
    """Serialized net: row-major flat vertex list plus role tags."""

    model_config = ConfigDict(populate_by_name=True)

    rows: int = Field(ge=1)
    cols: int = Field(ge=1)
    vertices: List[List[float]]
    roles: WebRoles = Field(default_factory=WebRoles)
    boundary_policy: BoundaryPolicy = Field(default="exclude", alias="boundaryPolicy")

    @classmethod
    def from_net(cls, net: Net) -> "NetDocument":
        return cls(
            rows=net.rows,
            cols=net.cols,
            vertices=net.flat().tolist(),
            roles=net.roles,
            boundary_policy=net.boundary_policy,
        )

    def to_net(self) -> Net:
        v = np.asarray(self.vertices, dtype=float)
        if v.shape != (self.rows * self.cols, 3):
            raise BadTopology(
                f"Expected {self.rows * self.cols} vertices of 3 coordinates, got shape {v.shape}",
                rows=self.rows,
                cols=self.cols,
            )
        return Net(v.reshape(self.rows, self.cols, 3), self.roles, self.boundary_policy).check_distinct()
