"""Discrete pairwise MRF representation and graph-structural queries."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Set, Tuple

import numpy as np

Edge = Tuple[int, int]


def canonical_edge(i: int, j: int) -> Edge:
    """Return ``(min(i, j), max(i, j))``; self-loops are rejected."""
    i, j = int(i), int(j)
    if i == j:
        raise ValueError(f"self-loop ({i}, {j}) is not a valid edge")
    return (i, j) if i < j else (j, i)


def edge_key(e: Edge) -> str:
    return f"{e[0]}-{e[1]}"


def parse_edge_key(key: str) -> Edge:
    i, j = key.split("-")
    return canonical_edge(int(i), int(j))


def n_candidate_edges(n: int) -> int:
    return n * (n - 1) // 2


def index_to_edge(k: int, n: int) -> Edge:
    """Map a linear index in ``[0, n(n-1)/2)`` to the k-th canonical edge in
    lexicographic order."""
    # row i holds n-1-i edges; invert the triangular prefix sum
    i = int(n - 2 - np.floor(np.sqrt(-8 * k + 4 * n * (n - 1) - 7) / 2.0 - 0.5))
    j = int(k + i + 1 - n * (n - 1) // 2 + (n - i) * ((n - i) - 1) // 2)
    return i, j


@dataclass(frozen=True)
class VariableSpec:
    names: Tuple[str, ...]
    cardinalities: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(str(n) for n in self.names))
        object.__setattr__(self, "cardinalities", tuple(int(c) for c in self.cardinalities))
        if len(self.names) != len(self.cardinalities):
            raise ValueError("names and cardinalities must have equal length")
        if any(c < 2 for c in self.cardinalities):
            raise ValueError("every variable needs at least 2 states")

    @classmethod
    def uniform(cls, n: int, s: int) -> "VariableSpec":
        return cls(tuple(f"x{i}" for i in range(n)), (s,) * n)

    @property
    def n(self) -> int:
        return len(self.cardinalities)

    @property
    def s_max(self) -> int:
        return max(self.cardinalities) if self.cardinalities else 0

    @property
    def offsets(self) -> np.ndarray:
        """Start of each variable's block in the stacked one-hot state space."""
        return np.concatenate([[0], np.cumsum(self.cardinalities)]).astype(np.int64)

    @property
    def total_states(self) -> int:
        return int(sum(self.cardinalities))

    def to_dict(self) -> dict:
        return {"names": list(self.names), "cardinalities": list(self.cardinalities)}

    @classmethod
    def from_dict(cls, d: dict) -> "VariableSpec":
        return cls(tuple(d["names"]), tuple(d["cardinalities"]))


def parameter_count(spec: VariableSpec) -> int:
    """Number of weights in the fully connected pairwise model."""
    s = np.asarray(spec.cardinalities, dtype=np.int64)
    total = int(s.sum())
    # sum_{i<j} s_i s_j = ((sum s)^2 - sum s^2) / 2
    return total + (total * total - int((s * s).sum())) // 2


def group_dim(spec: VariableSpec, group) -> int:
    """Group dimension d_g: s_i for a node, s_i * s_j for an edge."""
    if isinstance(group, tuple):
        i, j = group
        return spec.cardinalities[i] * spec.cardinalities[j]
    return spec.cardinalities[group]


@dataclass
class MrfModel:
    """Log-linear pairwise MRF with one weight group per node and per active edge.

    ``node_weights[i]`` has length ``s_i``; ``edge_weights[(i, j)]`` has shape
    ``(s_i, s_j)`` with ``i < j``. Edges not in ``edge_weights`` have weight zero.
    """

    spec: VariableSpec
    node_weights: List[np.ndarray] = field(default_factory=list)
    edge_weights: Dict[Edge, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not self.node_weights:
            self.node_weights = [np.zeros(s) for s in self.spec.cardinalities]
        self.node_weights = [np.asarray(w, dtype=float) for w in self.node_weights]
        for i, w in enumerate(self.node_weights):
            if w.shape != (self.spec.cardinalities[i],):
                raise ValueError(f"node {i} weights have shape {w.shape}")
        checked = {}
        for e, w in self.edge_weights.items():
            ce = canonical_edge(*e)
            w = np.asarray(w, dtype=float)
            if ce != tuple(e):
                w = w.T
            if w.shape != (self.spec.cardinalities[ce[0]], self.spec.cardinalities[ce[1]]):
                raise ValueError(f"edge {ce} weights have shape {w.shape}")
            checked[ce] = w
        self.edge_weights = checked
        self._adj: Dict[int, Set[int]] = {i: set() for i in range(self.spec.n)}
        for i, j in self.edge_weights:
            self._adj[i].add(j)
            self._adj[j].add(i)

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def active_edges(self) -> Set[Edge]:
        return set(self.edge_weights)

    def is_active(self, e: Edge) -> bool:
        return canonical_edge(*e) in self.edge_weights

    def neighbors(self, i: int) -> Set[int]:
        return self._adj[i]

    def degree(self, i: int) -> int:
        return len(self._adj[i])

    def degrees(self) -> np.ndarray:
        return np.array([len(self._adj[i]) for i in range(self.n)], dtype=np.int64)

    def copy(self) -> "MrfModel":
        return MrfModel(
            self.spec,
            [w.copy() for w in self.node_weights],
            {e: w.copy() for e, w in self.edge_weights.items()},
        )

    def activate_edge(self, i: int, j: int) -> Edge:
        """Add edge ``(i, j)`` with zero weights; returns the canonical id."""
        e = canonical_edge(i, j)
        if e in self.edge_weights:
            raise ValueError(f"edge {e} is already active")
        if not (0 <= e[0] and e[1] < self.n):
            raise IndexError(f"edge {e} out of range for n={self.n}")
        s = self.spec.cardinalities
        self.edge_weights[e] = np.zeros((s[e[0]], s[e[1]]))
        self._adj[e[0]].add(e[1])
        self._adj[e[1]].add(e[0])
        return e

    def edge_weight(self, i: int, j: int) -> np.ndarray:
        """Weight table oriented as ``(s_i, s_j)``; zeros for inactive edges."""
        e = canonical_edge(i, j)
        w = self.edge_weights.get(e)
        if w is None:
            s = self.spec.cardinalities
            return np.zeros((s[i], s[j]))
        return w if e == (i, j) else w.T

    # -- dense coupling layout used by the vectorized engines ------------------

    def unary_vector(self) -> np.ndarray:
        return np.concatenate(self.node_weights)

    def coupling_matrix(self) -> np.ndarray:
        """Symmetric ``(S, S)`` matrix of edge weights over stacked one-hot states.

        Block ``(i, j)`` holds ``edge_weights[(i, j)]``; diagonal blocks are zero.
        """
        off = self.spec.offsets
        S = self.spec.total_states
        W = np.zeros((S, S))
        for (i, j), w in self.edge_weights.items():
            W[off[i]:off[i + 1], off[j]:off[j + 1]] = w
            W[off[j]:off[j + 1], off[i]:off[i + 1]] = w.T
        return W

    def total_sq_norm(self) -> float:
        return float(
            sum(np.dot(w, w) for w in self.node_weights)
            + sum(np.sum(w * w) for w in self.edge_weights.values())
        )

    # -- serialization ------------------------------------------------------------

    def to_dict(self) -> dict:
        edges = sorted(self.edge_weights)
        return {
            "spec": self.spec.to_dict(),
            "active_edges": [list(e) for e in edges],
            "node_weights": [w.tolist() for w in self.node_weights],
            "edge_weights": {edge_key(e): self.edge_weights[e].ravel().tolist() for e in edges},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MrfModel":
        spec = VariableSpec.from_dict(d["spec"])
        s = spec.cardinalities
        edges = {}
        for key, flat in d.get("edge_weights", {}).items():
            e = parse_edge_key(key)
            edges[e] = np.asarray(flat, dtype=float).reshape(s[e[0]], s[e[1]])
        for e in d.get("active_edges", []):
            ce = canonical_edge(*e)
            edges.setdefault(ce, np.zeros((s[ce[0]], s[ce[1]])))
        return cls(spec, [np.asarray(w, dtype=float) for w in d["node_weights"]], edges)


def degree_centrality(model: MrfModel, node: int) -> float:
    """Fraction of the other ``n - 1`` nodes adjacent to ``node``."""
    if model.n < 2:
        raise ValueError("degree centrality needs at least 2 variables")
    return model.degree(node) / (model.n - 1)


def hub_set(model: MrfModel, c_hat: float) -> Set[int]:
    """Nodes whose degree centrality strictly exceeds ``c_hat``."""
    if not 0.0 <= c_hat <= 1.0:
        raise ValueError("c_hat must lie in [0, 1]")
    if model.n < 2:
        return set()
    c = model.degrees() / (model.n - 1)
    return {int(i) for i in np.flatnonzero(c > c_hat)}


def activate_edge(model: MrfModel, e: Edge) -> MrfModel:
    model.activate_edge(*e)
    return model


def save_model(model: MrfModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=1, default=_json_float) + "\n")


def load_model(path) -> MrfModel:
    return MrfModel.from_dict(json.loads(Path(path).read_text()))


def _json_float(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(type(x))


def write_edge_list(edges: Iterable[Edge], path) -> None:
    lines = [f"{i} {j}\n" for i, j in sorted(canonical_edge(*e) for e in edges)]
    Path(path).write_text("".join(lines))


def read_edge_list(path) -> Set[Edge]:
    out = set()
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line:
            i, j = line.split()
            out.add(canonical_edge(int(i), int(j)))
    return out


def edges_from_pairs(pairs: Sequence[Sequence[int]]) -> Set[Edge]:
    return {canonical_edge(int(a), int(b)) for a, b in pairs}
