"""Model-expectation providers: exact enumeration, loopy BP and pseudolikelihood."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from scipy.special import logsumexp

from .model import Edge, MrfModel, canonical_edge

logger = logging.getLogger(__name__)

EXACT_STATE_LIMIT = 10**7
_PAD = -1e30


class InferenceError(RuntimeError):
    pass


@dataclass
class Beliefs:
    node_beliefs: List[np.ndarray]
    edge_beliefs: Dict[Edge, np.ndarray]
    log_z: Optional[float] = None
    converged: bool = True
    iterations: int = 0
    residuals: List[float] = field(default_factory=list)


@dataclass
class InferenceEngine:
    """Engine selection plus BP convergence settings.

    ``kind`` is ``"exact"`` (enumeration; also switches the training loss to the
    exact likelihood) or ``"bp"`` (loopy BP; pseudolikelihood training loss).
    """

    kind: str = "bp"
    max_iters: int = 500
    tol: float = 1e-8
    damping: float = 0.5

    def __post_init__(self):
        if self.kind == "loopy_bp":
            self.kind = "bp"
        if self.kind not in ("exact", "bp"):
            raise ValueError(f"unknown engine kind {self.kind!r}")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must lie in [0, 1)")

    @property
    def exact(self) -> bool:
        return self.kind == "exact"

    def run(self, model: MrfModel) -> Beliefs:
        if self.exact:
            return exact_marginals(model)
        return loopy_bp(model, self)


def joint_state_count(model: MrfModel) -> int:
    return math.prod(model.spec.cardinalities)


def _enumerate_log_potentials(model: MrfModel, chunk: int = 1 << 18):
    """Yield ``(configs, log_potentials)`` blocks over the whole joint space."""
    card = model.spec.cardinalities
    K = joint_state_count(model)
    if K > EXACT_STATE_LIMIT:
        raise InferenceError(
            f"joint state space has {K} configurations (limit {EXACT_STATE_LIMIT})"
        )
    for start in range(0, K, chunk):
        idx = np.arange(start, min(K, start + chunk))
        cfg = np.stack(np.unravel_index(idx, card), axis=1)
        energy = np.zeros(len(idx))
        for i, w in enumerate(model.node_weights):
            energy += w[cfg[:, i]]
        for (i, j), w in model.edge_weights.items():
            energy += w[cfg[:, i], cfg[:, j]]
        yield cfg, energy


def exact_marginals(model: MrfModel) -> Beliefs:
    """Node and active-edge marginals plus ``log Z`` by full enumeration."""
    log_z = log_partition(model)
    card = model.spec.cardinalities
    nodes = [np.zeros(s) for s in card]
    edges = {e: np.zeros(w.shape) for e, w in model.edge_weights.items()}
    for cfg, energy in _enumerate_log_potentials(model):
        p = np.exp(energy - log_z)
        for i, s in enumerate(card):
            nodes[i] += np.bincount(cfg[:, i], weights=p, minlength=s)
        for (i, j), tab in edges.items():
            flat = np.bincount(cfg[:, i] * card[j] + cfg[:, j], weights=p, minlength=tab.size)
            tab += flat.reshape(tab.shape)
    nodes = [b / b.sum() for b in nodes]
    edges = {e: t / t.sum() for e, t in edges.items()}
    return Beliefs(nodes, edges, log_z=log_z, converged=True, iterations=0)


def log_partition(model: MrfModel) -> float:
    acc = -np.inf
    for _, energy in _enumerate_log_potentials(model):
        acc = np.logaddexp(acc, logsumexp(energy))
    return float(acc)


def loopy_bp(model: MrfModel, engine: Optional[InferenceEngine] = None) -> Beliefs:
    """Synchronous damped sum-product on the active graph, in log space.

    Messages are padded to ``s_max`` states; padded entries carry no mass.
    Returns beliefs even when the iteration cap is hit, with ``converged=False``.
    """
    engine = engine or InferenceEngine()
    spec = model.spec
    n, smax = spec.n, spec.s_max
    card = np.asarray(spec.cardinalities)
    valid = np.arange(smax)[None, :] < card[:, None]  # (n, smax)

    unary = np.full((n, smax), _PAD)
    for i, w in enumerate(model.node_weights):
        unary[i, : len(w)] = w

    edges = sorted(model.edge_weights)
    if not edges:
        nodes = [_normalize_log(unary[i, : card[i]]) for i in range(n)]
        return Beliefs(nodes, {}, converged=True, iterations=0)

    # directed edge d = 2k is i->j, d = 2k+1 is j->i for edge k = (i, j)
    E = len(edges)
    src = np.empty(2 * E, dtype=np.int64)
    dst = np.empty(2 * E, dtype=np.int64)
    pair = np.zeros((2 * E, smax, smax))  # oriented (src state, dst state)
    for k, (i, j) in enumerate(edges):
        w = model.edge_weights[(i, j)]
        src[2 * k], dst[2 * k] = i, j
        src[2 * k + 1], dst[2 * k + 1] = j, i
        pair[2 * k, : w.shape[0], : w.shape[1]] = w
        pair[2 * k + 1, : w.shape[1], : w.shape[0]] = w.T
    rev = np.arange(2 * E) ^ 1
    dst_valid = valid[dst]

    log_msg = np.where(dst_valid, -np.log(card[dst])[:, None], 0.0)
    residuals = []
    converged = False
    it = 0
    for it in range(1, engine.max_iters + 1):
        incoming = np.zeros((n, smax))
        np.add.at(incoming, dst, log_msg)
        # cavity at the source of each directed edge, excluding the reverse message
        cavity = unary[src] + incoming[src] - log_msg[rev]
        new = _lse(cavity[:, :, None] + pair, axis=1)
        new = np.where(dst_valid, new, _PAD)
        new -= _lse(new, axis=1)[:, None]
        new = np.where(dst_valid, new, 0.0)
        if engine.damping > 0:
            new = (1.0 - engine.damping) * new + engine.damping * log_msg
            new = np.where(dst_valid, new, _PAD)
            new -= _lse(new, axis=1)[:, None]
            new = np.where(dst_valid, new, 0.0)
        delta = float(np.max(np.abs(np.exp(new) - np.exp(log_msg))[dst_valid]))
        residuals.append(delta)
        log_msg = new
        if delta < engine.tol:
            converged = True
            break
    if not converged:
        logger.debug("loopy BP hit max_iters=%d (residual %.3g)", engine.max_iters, residuals[-1])

    incoming = np.zeros((n, smax))
    np.add.at(incoming, dst, log_msg)
    node_log = unary + incoming
    nodes = [_normalize_log(node_log[i, : card[i]]) for i in range(n)]
    cavity = unary[src] + incoming[src] - log_msg[rev]
    edge_beliefs = {}
    for k, (i, j) in enumerate(edges):
        si, sj = card[i], card[j]
        logb = (
            cavity[2 * k, :si, None]
            + cavity[2 * k + 1, None, :sj]
            + model.edge_weights[(i, j)]
        )
        edge_beliefs[(i, j)] = _normalize_log(logb)
    return Beliefs(nodes, edge_beliefs, converged=converged, iterations=it, residuals=residuals)


def _lse(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.log(np.sum(np.exp(a - m), axis=axis)) + np.squeeze(m, axis=axis)


def _normalize_log(a: np.ndarray) -> np.ndarray:
    p = np.exp(a - logsumexp(a))
    return p / p.sum()


def pair_marginal_estimate(beliefs: Beliefs, model: MrfModel, e: Edge) -> np.ndarray:
    """Model pair marginal; outer product of node beliefs for inactive edges."""
    e = canonical_edge(*e)
    tab = beliefs.edge_beliefs.get(e)
    if tab is not None and model.is_active(e):
        return tab
    return np.outer(beliefs.node_beliefs[e[0]], beliefs.node_beliefs[e[1]])


def conditional_distribution(model: MrfModel, x, i: int) -> np.ndarray:
    """``p(x_i | x_neighbors)`` for one full assignment ``x``."""
    logits = model.node_weights[i].copy()
    for j in model.neighbors(i):
        logits += model.edge_weight(i, j)[:, int(x[j])]
    return _normalize_log(logits)


# -- vectorized pseudolikelihood ---------------------------------------------------


class PLData:
    """Dataset in states-major one-hot layout ``(S, N)`` for pseudolikelihood work."""

    def __init__(self, dataset):
        spec = dataset.spec
        self.spec = spec
        self.N = dataset.N
        self.X1T = np.ascontiguousarray(dataset.one_hot().T)
        self.counts = self.X1T @ self.X1T.T  # (S, S) co-occurrence counts
        card = np.asarray(spec.cardinalities)
        self.uniform = len(set(spec.cardinalities)) == 1
        smax = spec.s_max
        self.valid = np.arange(smax)[None, :] < card[:, None]
        # padded entries point at a sentinel row S
        self.gather = np.where(self.valid, spec.offsets[:-1, None] + np.arange(smax)[None, :], spec.total_states)


def pl_terms(model: MrfModel, pl: PLData):
    """Per-row negative log pseudolikelihood ``(N,)`` and conditional
    probabilities in states-major layout ``(S, N)``."""
    spec = model.spec
    logits = model.coupling_matrix() @ pl.X1T
    logits += model.unary_vector()[:, None]
    if pl.uniform:
        blocks = logits.reshape(spec.n, spec.s_max, pl.N)
    else:
        ext = np.concatenate([logits, np.full((1, pl.N), -np.inf)], axis=0)
        blocks = ext[pl.gather]  # (n, smax, N)
    m = blocks.max(axis=1, keepdims=True)
    p = np.exp(blocks - m)
    z = p.sum(axis=1, keepdims=True)
    p /= z
    lse = np.log(z[:, 0, :]) + m[:, 0, :]
    observed = np.einsum("sn,sn->n", logits, pl.X1T)
    per_row = lse.sum(axis=0) - observed
    probs = p.reshape(logits.shape) if pl.uniform else p[pl.valid]
    return per_row, probs


def pl_value_and_grad(model: MrfModel, pl: PLData):
    """Mean NLPL with gradients for node weights (stacked ``(S,)``) and the
    coupling matrix blocks ``(S, S)``."""
    per_row, probs = pl_terms(model, pl)
    value = float(per_row.mean())
    g_unary = (probs.sum(axis=1) - pl.counts.diagonal()) / pl.N
    G = (probs @ pl.X1T.T - pl.counts) / pl.N if model.edge_weights else None
    return value, g_unary, G


def nlpl(model: MrfModel, dataset) -> float:
    """Mean over instances of the summed negative log conditionals."""
    if dataset.spec.cardinalities != model.spec.cardinalities:
        raise ValueError("dataset and model variable specs differ")
    per_row, _ = pl_terms(model, PLData(dataset))
    return float(per_row.mean())
