from pathlib import Path
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.models.flex import FlexConfig
from src.models.net import WebKind, WebRoles
from src.models.solver import SolverConfig

Command = Literal["construct", "optimize", "flex", "diagnose", "extract", "export"]
HeightName = Literal["paraboloid", "saddle", "plane", "monkey_saddle"]
Family = Literal["i", "j", "diag_minus", "diag_plus"]


class CamelModel(BaseModel):
    model_config = ConfigDict(populate_by_name=True, extra="forbid")


# =========================================================
# Constructor parameters
# =========================================================

class PencilParams(CamelModel):
    n: int = Field(ge=1)
    h: float = Field(default=1.0, gt=0)
    height: HeightName = "paraboloid"


class CubicParams(CamelModel):
    alpha: float
    beta: float
    h: float = Field(gt=0)
    m: int = Field(ge=1)
    n: int = Field(ge=1)
    diagonal: Literal["diag_minus", "diag_plus"] = "diag_minus"
    height: HeightName = "paraboloid"


class AagParams(CamelModel):
    """The seed itself comes from ``JobConfig.seed_file``."""


class KoenigsParams(CamelModel):
    stencil: Literal["grid", "diagonal"] = "grid"
    scale: float = Field(default=1.0, gt=0)


class AffineMap2D(CamelModel):
    matrix: Tuple[Tuple[float, float], Tuple[float, float]] = ((1.0, 0.0), (0.0, 1.0))
    offset: Tuple[float, float] = (0.0, 0.0)


class AgagParams(CamelModel):
    thetas: List[float] = Field(min_length=3)
    phis: List[float] = Field(min_length=3)
    axes_i: Tuple[float, float] = Field(default=(1.0, 1.0), alias="axesI")
    axes_j: Tuple[float, float] = Field(default=(1.0, 1.0), alias="axesJ")
    scale: float = Field(default=1.0, gt=0)
    affine: Optional[AffineMap2D] = None


class BoundaryParams(CamelModel):
    polygon: List[Tuple[float, float]]
    values: List[float]
    k: int = Field(default=0, ge=0)


class CrpcParams(CamelModel):
    """
    Ansatz from a polynomial factor of h' (or fitted to ``boundary``) and
    the asymptotic quad net traced from ``seed`` on its sampled graph.
    """

    gamma: float = Field(gt=0, le=90)
    flat_points: List[Tuple[float, float]] = Field(default_factory=list, alias="flatPoints")
    factor: List[Tuple[float, float]] = Field(default_factory=lambda: [(1.0, 0.0)])
    boundary: Optional[BoundaryParams] = None
    domain: Tuple[float, float, float, float] = (-1.0, 1.0, -1.0, 1.0)
    spacing: float = Field(default=0.05, gt=0)
    seed: Tuple[float, float] = (0.0, 0.0)
    rows: int = Field(default=11, ge=2)
    cols: int = Field(default=11, ge=2)
    step: float = Field(default=0.1, gt=0)


class TnetParams(CamelModel):
    a: List[Tuple[float, float, float]] = Field(min_length=2)
    b: List[Tuple[float, float, float]] = Field(min_length=2)
    sigma: List[float] = Field(min_length=2)


class EuclideanTnetParams(CamelModel):
    profile: List[Tuple[float, float]] = Field(min_length=2)
    sigmas: List[float] = Field(min_length=2)
    heights: List[float] = Field(min_length=2)


class QuadLiftParams(CamelModel):
    """Planar-faced net over given top views from the heights of row 0 and column 0."""

    topviews: List[List[Tuple[float, float]]] = Field(min_length=2)
    row0: List[float] = Field(min_length=2)
    col0: List[float] = Field(min_length=2)


CONSTRUCTOR_PARAMS = {
    "pencil_ggg": PencilParams,
    "cubic_ggg": CubicParams,
    "aag_propagate": AagParams,
    "koenigs_aag": KoenigsParams,
    "agag": AgagParams,
    "crpc": CrpcParams,
    "tnet": TnetParams,
    "euclidean_tnet": EuclideanTnetParams,
    "quad_lift": QuadLiftParams,
}

ConstructorName = Literal[
    "pencil_ggg", "cubic_ggg", "aag_propagate", "koenigs_aag", "agag", "crpc", "tnet", "euclidean_tnet", "quad_lift"
]


# =========================================================
# Seed files
# =========================================================

class AagSeedFile(CamelModel):
    """
    Diagonal lines a x + b y = c (2n + 1 of them) plus either the seed points
    themselves or a named surface sampled at line parameters.
    """

    lines: List[Tuple[float, float, float]] = Field(min_length=3)
    diagonal: Optional[List[Tuple[float, float, float]]] = None
    aux: Optional[List[Tuple[float, float, float]]] = None
    surface: Optional[HeightName] = None
    diagonal_t: Optional[List[float]] = Field(default=None, alias="diagonalT")
    aux_t: Optional[List[float]] = Field(default=None, alias="auxT")

    @model_validator(mode="after")
    def _points_or_surface(self) -> "AagSeedFile":
        explicit = self.diagonal is not None and self.aux is not None
        sampled = self.surface is not None and self.diagonal_t is not None and self.aux_t is not None
        if not (explicit or sampled):
            raise ValueError("seed needs diagonal and aux points, or surface with diagonalT and auxT")
        return self


class KoenigsSeedFile(CamelModel):
    lines: List[Tuple[float, float, float]] = Field(min_length=3)
    row0: List[Tuple[float, float]]
    col0: List[Tuple[float, float]]
    diagonal: List[Tuple[float, float]]
    superdiagonal: List[Tuple[float, float]]
    nu00: float
    nu01: float


# =========================================================
# Jobs
# =========================================================

class ExtractParams(CamelModel):
    stride: int = Field(default=1, ge=1)
    families: List[Family] = Field(default_factory=lambda: ["i", "j"], min_length=1)
    trim: Optional[List[Tuple[float, float]]] = None


class JobConfig(CamelModel):
    command: Command
    input: Optional[Path] = None
    output: Optional[Path] = None
    kind: Optional[WebKind] = None
    roles: Optional[WebRoles] = None

    constructor: Optional[ConstructorName] = None
    params: dict = Field(default_factory=dict)
    seed_file: Optional[Path] = Field(default=None, alias="seedFile")

    solver: Optional[SolverConfig] = None
    flex: FlexConfig = Field(default_factory=FlexConfig)
    extract: ExtractParams = Field(default_factory=ExtractParams)

    rows: Optional[int] = Field(default=None, ge=2)
    cols: Optional[int] = Field(default=None, ge=2)
    no_continuation: bool = Field(default=False, alias="noContinuation")
    fairness_ablation: bool = Field(default=False, alias="fairnessAblation")

    @model_validator(mode="after")
    def _complete_for_command(self) -> "JobConfig":
        if self.command == "construct" and self.constructor is None:
            raise ValueError("construct needs a constructor")
        if self.command == "export" and self.input is None:
            raise ValueError("export needs an input file")
        if self.command in ("optimize", "flex", "diagnose", "extract") and self.input is None and self.constructor is None:
            raise ValueError(f"{self.command} needs an input file or a constructor")
        if self.command == "optimize" and self.solver is None and self.kind is None:
            raise ValueError("optimize needs a kind or a solver config")
        if self.command == "optimize" and self.solver is None and self.kind == "CRPC":
            raise ValueError("CRPC optimization needs a solver config with gamma")
        return self

    def solver_config(self) -> SolverConfig:
        config = self.solver if self.solver is not None else SolverConfig(kind=self.kind)
        return config.without_continuation() if self.no_continuation else config


class BatchConfig(CamelModel):
    jobs: List[dict] = Field(min_length=1)
