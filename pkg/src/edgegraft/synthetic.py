"""Ground-truth generation, Gibbs sampling, recovery metrics and the
reservoir-rank Monte Carlo."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Set

import numpy as np

from .data import DiscreteDataset
from .model import Edge, MrfModel, VariableSpec, canonical_edge, n_candidate_edges


@dataclass
class GroundTruth:
    model: MrfModel
    true_edges: Set[Edge]


def preferential_attachment(n: int, seed=None) -> Set[Edge]:
    """Scale-free graph with ``2n - 4`` edges.

    Starts from the path 0-1-2; every later node attaches two edges to distinct
    existing nodes drawn with probability proportional to their degree.
    """
    if n < 3:
        raise ValueError(f"preferential attachment needs n >= 3, got {n}")
    rng = np.random.default_rng(seed)
    edges = {(0, 1), (1, 2)}
    degree = np.zeros(n)
    degree[[0, 1, 2]] = [1, 2, 1]
    for v in range(3, n):
        w = degree[:v].copy()
        first = int(rng.choice(v, p=w / w.sum()))
        w[first] = 0.0
        second = int(rng.choice(v, p=w / w.sum()))
        for u in (first, second):
            edges.add(canonical_edge(u, v))
            degree[u] += 1
        degree[v] = 2
    return edges


def sample_parameters(edges: Iterable[Edge], spec: VariableSpec, mean: float = 0.0,
                      sigma_v: float = 0.5, sigma_e: float = 1.0, seed=None) -> MrfModel:
    """Model on ``edges`` with i.i.d. normal node and edge weights."""
    if sigma_v <= 0 or sigma_e <= 0:
        raise ValueError("standard deviations must be positive")
    rng = np.random.default_rng(seed)
    card = spec.cardinalities
    nodes = [rng.normal(mean, sigma_v, size=s) for s in card]
    weights = {}
    for e in sorted(canonical_edge(*e) for e in edges):
        weights[e] = rng.normal(mean, sigma_e, size=(card[e[0]], card[e[1]]))
    return MrfModel(spec, nodes, weights)


def generate_ground_truth(n: int, states: int = 5, mean: float = 0.0, sigma_v: float = 0.5,
                          sigma_e: float = 1.0, seed=None) -> GroundTruth:
    ss = np.random.SeedSequence(seed)
    graph_seed, param_seed = ss.spawn(2)
    edges = preferential_attachment(n, graph_seed)
    model = sample_parameters(edges, VariableSpec.uniform(n, states), mean, sigma_v, sigma_e, param_seed)
    return GroundTruth(model, edges)


def gibbs_sample(model: MrfModel, count: int, burn_in: int = 200, thinning: int = 5,
                 seed=None, chains: int = 1) -> DiscreteDataset:
    """Systematic-scan Gibbs sampling.

    ``chains`` independent chains run side by side (vectorized); each discards
    ``burn_in`` sweeps and then keeps every ``thinning``-th sweep until
    ``count`` samples are collected in total.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if thinning < 1 or burn_in < 0 or chains < 1:
        raise ValueError("invalid burn_in/thinning/chains")
    chains = min(chains, count)
    rng = np.random.default_rng(seed)
    spec = model.spec
    card = spec.cardinalities
    n = spec.n
    neighbors = [sorted(model.neighbors(i)) for i in range(n)]
    tables = {(i, j): model.edge_weight(i, j) for i in range(n) for j in neighbors[i]}
    x = np.stack([rng.integers(0, s, size=chains) for s in card], axis=1)

    def sweep():
        for i in range(n):
            logits = np.broadcast_to(model.node_weights[i], (chains, card[i])).copy()
            for j in neighbors[i]:
                logits += tables[(i, j)][:, x[:, j]].T
            logits -= logits.max(axis=1, keepdims=True)
            p = np.exp(logits)
            cdf = np.cumsum(p, axis=1)
            u = rng.random(chains) * cdf[:, -1]
            x[:, i] = np.minimum((cdf < u[:, None]).sum(axis=1), card[i] - 1)

    for _ in range(burn_in):
        sweep()
    per_chain = -(-count // chains)
    out = np.empty((per_chain, chains, n), dtype=np.int64)
    for k in range(per_chain):
        for _ in range(thinning):
            sweep()
        out[k] = x
    # interleave chains so that any prefix mixes all of them
    rows = out.reshape(per_chain * chains, n)[:count]
    return DiscreteDataset(spec, rows)


def recall(true_edges: Iterable[Edge], learned_edges: Iterable[Edge]) -> float:
    """Fraction of true edges present in the learned structure (1.0 if none are true)."""
    true = {canonical_edge(*e) for e in true_edges}
    if not true:
        return 1.0
    learned = {canonical_edge(*e) for e in learned_edges}
    return len(true & learned) / len(true)


@dataclass
class RankRow:
    reservoir_size: int
    mean_rank: float
    min_rank: int
    max_rank: int
    expected_rank: float


def reservoir_rank_simulation(n: int, reservoir_sizes: Sequence[int], trials: int,
                              seed=None) -> List[RankRow]:
    """Best (minimum) rank among ``|R|`` distinct uniform draws from ``1..C(n, 2)``."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    M = n_candidate_edges(n)
    rng = np.random.default_rng(seed)
    rows = []
    for size in reservoir_sizes:
        size = int(size)
        if not 1 <= size <= M:
            raise ValueError(f"reservoir size {size} outside [1, {M}]")
        mins = np.array([rng.choice(M, size=size, replace=False).min() + 1 for _ in range(trials)])
        rows.append(RankRow(size, float(mins.mean()), int(mins.min()), int(mins.max()), (M + 1) / (size + 1)))
    return rows
