"""
Flat variable vector for the guided-projection solver.

Every unknown lives in one float64 vector. Named blocks (vertices "f",
auxiliary normals, binormals, face planes) reserve ``dim`` consecutive
slots per key, in registration order.
"""

from dataclasses import dataclass, field
from typing import Dict, Hashable, Iterable, List, Tuple

import numpy as np

from src.core.errors import BadTopology
from src.models.net import Net


@dataclass
class _Block:
    offset: int
    dim: int
    slots: Dict[Hashable, int]


class VariableLayout:
    def __init__(self):
        self._blocks: Dict[str, _Block] = {}
        self._size = 0

    @property
    def size(self) -> int:
        return self._size

    @property
    def names(self) -> List[str]:
        return list(self._blocks)

    def add(self, name: str, keys: Iterable[Hashable], dim: int) -> None:
        if name in self._blocks:
            raise BadTopology(f"Variable block {name!r} registered twice")
        slots: Dict[Hashable, int] = {}
        for key in keys:
            if key in slots:
                raise BadTopology(f"Duplicate key {key!r} in variable block {name!r}")
            slots[key] = len(slots)
        self._blocks[name] = _Block(self._size, dim, slots)
        self._size += dim * len(slots)

    def has(self, name: str, key: Hashable = None) -> bool:
        if name not in self._blocks:
            return False
        return key is None or key in self._blocks[name].slots

    def keys(self, name: str) -> List[Hashable]:
        return list(self._blocks[name].slots)

    def count(self, name: str) -> int:
        return len(self._blocks[name].slots)

    def ids(self, name: str, key: Hashable) -> np.ndarray:
        block = self._blocks[name]
        start = block.offset + block.dim * block.slots[key]
        return np.arange(start, start + block.dim)

    def span(self, name: str) -> slice:
        block = self._blocks[name]
        return slice(block.offset, block.offset + block.dim * len(block.slots))

    def view(self, x: np.ndarray, name: str) -> np.ndarray:
        """Rows of ``x`` belonging to block ``name``, shape (count, dim)."""
        return x[self.span(name)].reshape(-1, self._blocks[name].dim)


def vertex_keys(shape: Tuple[int, int]) -> List[tuple]:
    rows, cols = shape
    return [(i, j) for i in range(rows) for j in range(cols)]


@dataclass
class VariableVector:
    """Variable values plus their layout; ``flagged`` lists vertices whose aux init fell back."""

    layout: VariableLayout
    x: np.ndarray
    shape: Tuple[int, int]
    flagged: List[tuple] = field(default_factory=list)

    def vertices(self, x: np.ndarray = None) -> np.ndarray:
        x = self.x if x is None else x
        return self.layout.view(x, "f").reshape(self.shape[0], self.shape[1], 3)

    def values(self, name: str, key: Hashable) -> np.ndarray:
        return self.x[self.layout.ids(name, key)]

    def to_net(self, template: Net, x: np.ndarray = None) -> Net:
        return template.with_vertices(self.vertices(x))

    def with_x(self, x: np.ndarray) -> "VariableVector":
        return VariableVector(self.layout, np.array(x, dtype=float), self.shape, list(self.flagged))
