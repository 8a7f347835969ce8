"""Undirected graphs over ``range(p)``."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError


def _canon(a: int, b: int) -> tuple[int, int]:
    a, b = int(a), int(b)
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph; edges are stored as sorted pairs ``(i, j)``, ``i < j``.

    ``provenance`` is a free-form tag ("estimated", "ground truth", ...) and
    does not take part in equality.
    """

    p: int
    edges: frozenset = frozenset()
    provenance: str = field(default="", compare=False)

    def __post_init__(self):
        if self.p < 1:
            raise InvalidParameterError("graph needs p >= 1")
        canon = set()
        for a, b in self.edges:
            if a == b:
                raise InvalidParameterError(f"self-loop at node {a}")
            if not (0 <= a < self.p and 0 <= b < self.p):
                raise InvalidParameterError(f"edge ({a}, {b}) out of range for p={self.p}")
            canon.add(_canon(a, b))
        object.__setattr__(self, "edges", frozenset(canon))

    @classmethod
    def from_adjacency(cls, adj, provenance: str = "") -> "Graph":
        adj = np.asarray(adj)
        p = adj.shape[0]
        iu, ju = np.nonzero(np.triu(adj != 0, k=1) | np.triu(adj.T != 0, k=1))
        return cls(p, frozenset(zip(iu.tolist(), ju.tolist())), provenance)

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.p, self.p), dtype=bool)
        for a, b in self.edges:
            A[a, b] = A[b, a] = True
        return A

    def neighbors(self, r: int) -> set[int]:
        return {b if a == r else a for a, b in self.edges if r in (a, b)}

    def degrees(self) -> np.ndarray:
        return self.adjacency().sum(axis=1)

    @property
    def max_degree(self) -> int:
        return int(self.degrees().max()) if self.p else 0

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def relabel(self, mapping) -> "Graph":
        """Graph with node ``i`` renamed to ``mapping[i]``."""
        mapping = np.asarray(mapping)
        return Graph(self.p, frozenset((int(mapping[a]), int(mapping[b])) for a, b in self.edges), self.provenance)

    def __len__(self) -> int:
        return len(self.edges)
