from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from src.core.errors import BadTopology, DegenerateParameters
from src.models.crpc import check_simple_polygon


@dataclass
class GridshellExtract:
    """Downsampling recipe: every ``stride``-th polyline of each family, optionally cut by a top-view polygon."""

    stride: int = 1
    families: Sequence[str] = ("i", "j")
    trim: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.stride < 1:
            raise DegenerateParameters(f"Stride must be at least 1, got {self.stride}", field="stride")
        if self.trim is not None:
            self.trim = np.asarray(self.trim, dtype=float)
            if self.trim.ndim != 2 or self.trim.shape[1] != 2 or len(self.trim) < 3:
                raise BadTopology(f"Trim polygon must be at least three 2D points, got {self.trim.shape}")
            check_simple_polygon(self.trim, "Trim polygon")


@dataclass
class Lamella:
    family: str
    key: int
    points: np.ndarray
    indices: List[tuple] = field(default_factory=list)
