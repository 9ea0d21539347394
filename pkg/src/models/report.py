from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field


class GeodesicResiduals(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    isotropic: float = Field(alias="eps0")
    euclidean: float = Field(alias="eps1")


class AngleStats(BaseModel):
    min: float
    max: float
    mean: float


class OmegaHistogram(BaseModel):
    counts: List[int]
    edges: List[float]


class DiagnosticsReport(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    vertex_count: int = Field(alias="vertexCount")
    rows: int
    cols: int
    geodesic: Dict[str, GeodesicResiduals] = Field(default_factory=dict)
    anet: Dict[str, float] = Field(default_factory=dict)
    planarity: float
    angles: Optional[AngleStats] = None
    omega: Optional[OmegaHistogram] = None
