from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.models.net import WebKind


class LmSettings(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    lambda0: float = Field(default=1e-4, gt=0)
    up: float = Field(default=4.0, gt=1)
    down: float = Field(default=0.5, gt=0, lt=1)
    max: float = Field(default=1e6, gt=0)


class SoftWeights(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    fairness: float = Field(default=1e-3, ge=0)
    surf_close: float = Field(default=1e-3, alias="surfClose", ge=0)
    vert_close: float = Field(default=1e-3, alias="vertClose", ge=0)

    def scaled(self, factor: float) -> "SoftWeights":
        return SoftWeights(
            fairness=self.fairness * factor,
            surf_close=self.surf_close * factor,
            vert_close=self.vert_close * factor,
        )


# Per-kind defaults, same order of magnitude as the published runs
DEFAULT_WEIGHTS: Dict[str, float] = {"GGG": 1e-3, "AAG": 5e-3, "AGAG": 1e-2, "CRPC": 5e-3}


def default_weights(kind: str) -> SoftWeights:
    w = DEFAULT_WEIGHTS.get(kind, 1e-3)
    return SoftWeights(fairness=w, surf_close=w, vert_close=w)


class SolverConfig(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    kind: WebKind
    gamma: Optional[float] = Field(default=None, gt=0, le=90)
    eps_schedule: List[float] = Field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75, 1.0], alias="epsSchedule")
    weights: Optional[SoftWeights] = None
    max_iter_per_eps: int = Field(default=20, alias="maxIterPerEps", ge=1)
    hard_target: float = Field(default=1e-5, alias="hardTarget", gt=0)
    lm: LmSettings = Field(default_factory=LmSettings)
    decay_every: int = Field(default=5, alias="decayEvery", ge=1)
    decay_factor: float = Field(default=10.0, alias="decayFactor", gt=1)
    decay_steps: int = Field(default=3, alias="decaySteps", ge=1)
    flat_points: List[Tuple[float, float]] = Field(default_factory=list, alias="flatPoints")
    flat_radius: float = Field(default=0.0, alias="flatRadius", ge=0)
    fix_boundary: bool = Field(default=False, alias="fixBoundary")

    @field_validator("eps_schedule")
    @classmethod
    def _schedule_is_increasing(cls, v: List[float]) -> List[float]:
        if not v or v[0] != 0.0 or v[-1] != 1.0:
            raise ValueError("epsSchedule must start at 0 and end at 1")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("epsSchedule must be strictly increasing")
        return v

    @model_validator(mode="after")
    def _crpc_needs_gamma(self) -> "SolverConfig":
        if self.kind == "CRPC" and self.gamma is None:
            raise ValueError("CRPC optimization needs gamma")
        if self.weights is None:
            self.weights = default_weights(self.kind)
        return self

    def without_continuation(self) -> "SolverConfig":
        """Copy that runs straight at eps = 1; model_copy skips the schedule validator."""
        return self.model_copy(update={"eps_schedule": [1.0]})


@dataclass
class IterationStats:
    eps: float
    iteration: int
    e_hard: float
    e_soft: float
    step_norm: float
    damping: float
    seconds: float


@dataclass
class EpsStats:
    eps: float
    iterations: int
    e_hard: float
    converged: bool
    seconds: float
    at_cap: bool = False


@dataclass
class ContinuationResult:
    net: "object"
    history: List[IterationStats] = field(default_factory=list)
    per_eps: List[EpsStats] = field(default_factory=list)
    failed_eps: Optional[float] = None
    variable_count: int = 0

    @property
    def converged(self) -> bool:
        return self.failed_eps is None

    @property
    def e_hard(self) -> float:
        return self.per_eps[-1].e_hard if self.per_eps else float("nan")
