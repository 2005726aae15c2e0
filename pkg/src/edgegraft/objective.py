"""Group-l1/l2 regularized objective, gradients, activation scores and optimizer."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Union

import numpy as np

from .data import SufficientStatsStore
from .inference import Beliefs, InferenceEngine, PLData, pair_marginal_estimate, pl_terms, pl_value_and_grad
from .model import Edge, MrfModel, canonical_edge, group_dim, n_candidate_edges

logger = logging.getLogger(__name__)


@dataclass
class RegularizationParams:
    lam: float = 0.01
    lam2: float = 0.0
    alpha: float = 1.0
    penalize_nodes: bool = True

    def __post_init__(self):
        if self.lam < 0 or self.lam2 < 0:
            raise ValueError("regularization weights must be nonnegative")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")


@dataclass
class OptimizerConfig:
    tol: float = 1e-6
    max_inner: int = 250
    backtrack_beta: float = 0.5
    init_step: float = 1.0
    min_step: float = 1e-14
    max_step: float = 1e4


@dataclass
class GradientBundle:
    """Per-group gradients (model expectation minus data expectation)."""

    nodes: List[np.ndarray]
    edges: Dict[Edge, np.ndarray]

    def sq_norm(self) -> float:
        return float(sum(np.sum(g * g) for g in self.nodes) + sum(np.sum(g * g) for g in self.edges.values()))


@dataclass
class OptimizeResult:
    iterations: int = 0
    objective: float = float("nan")
    converged: bool = False
    step_underflow: bool = False
    trace: List[float] = field(default_factory=list)


BeliefSource = Union[InferenceEngine, Beliefs]


def _beliefs(model: MrfModel, source: BeliefSource) -> Beliefs:
    return source.run(model) if isinstance(source, InferenceEngine) else source


def _pl_data(stats: SufficientStatsStore) -> PLData:
    pl = getattr(stats, "_pl_data", None)
    if pl is None:
        pl = stats._pl_data = PLData(stats.dataset)
    return pl


# -- smooth loss ----------------------------------------------------------------


def _exact_nll(model: MrfModel, stats: SufficientStatsStore, beliefs: Beliefs) -> float:
    fit = sum(float(w @ p) for w, p in zip(model.node_weights, stats.node_marginals))
    fit += sum(float(np.sum(w * stats.edge_table(e))) for e, w in model.edge_weights.items())
    return beliefs.log_z - fit


def _value_and_grad(model: MrfModel, stats: SufficientStatsStore, engine: InferenceEngine, lam2: float):
    """Smooth objective and its gradient over node and active-edge groups."""
    if engine.exact:
        bel = engine.run(model)
        value = _exact_nll(model, stats, bel)
        nodes = [b - p for b, p in zip(bel.node_beliefs, stats.node_marginals)]
        edges = {e: bel.edge_beliefs[e] - stats.edge_table(e) for e in model.edge_weights}
    else:
        value, g_unary, G = pl_value_and_grad(model, _pl_data(stats))
        off = model.spec.offsets
        nodes = [g_unary[off[i]:off[i + 1]] for i in range(model.n)]
        edges = {}
        if G is not None:
            for (i, j) in model.edge_weights:
                bi, bj = slice(off[i], off[i + 1]), slice(off[j], off[j + 1])
                edges[(i, j)] = G[bi, bj] + G[bj, bi].T
    if lam2:
        value += lam2 * model.total_sq_norm()
        nodes = [g + 2 * lam2 * w for g, w in zip(nodes, model.node_weights)]
        edges = {e: g + 2 * lam2 * model.edge_weights[e] for e, g in edges.items()}
    return value, GradientBundle(nodes, edges)


def smooth_objective(model: MrfModel, stats: SufficientStatsStore, engine: InferenceEngine,
                     params: RegularizationParams) -> float:
    """``L(w) + lam2 * ||w||^2``; L is the exact NLL or, for BP engines, the NLPL."""
    if engine.exact:
        value = _exact_nll(model, stats, engine.run(model))
    else:
        per_row, _ = pl_terms(model, _pl_data(stats))
        value = float(per_row.mean())
    return value + params.lam2 * model.total_sq_norm()


def group_penalty(model: MrfModel, params: RegularizationParams) -> float:
    spec = model.spec
    total = 0.0
    if params.penalize_nodes:
        total += sum(spec.cardinalities[i] * np.linalg.norm(w) for i, w in enumerate(model.node_weights))
    total += sum(group_dim(spec, e) * np.linalg.norm(w) for e, w in model.edge_weights.items())
    return params.lam * float(total)


def full_objective(model: MrfModel, stats: SufficientStatsStore, engine: InferenceEngine,
                   params: RegularizationParams) -> float:
    return smooth_objective(model, stats, engine, params) + group_penalty(model, params)


def smooth_gradient(model: MrfModel, stats: SufficientStatsStore, engine: InferenceEngine,
                    params: RegularizationParams) -> GradientBundle:
    """Gradient of :func:`smooth_objective` over node and active-edge groups."""
    return _value_and_grad(model, stats, engine, params.lam2)[1]


# -- expectation-error gradients and activation scores ------------------------------


def group_gradient(model: MrfModel, stats: SufficientStatsStore, source: BeliefSource, g) -> np.ndarray:
    """Model minus data expectation for a node (int) or edge (pair) group.

    Edge groups come back as ``(s_i, s_j)`` tables; the ridge term is not included.
    """
    bel = _beliefs(model, source)
    if isinstance(g, tuple):
        e = canonical_edge(*g)
        return pair_marginal_estimate(bel, model, e) - stats.edge_table(e)
    return bel.node_beliefs[g] - stats.node_marginals[g]


def edge_score(model: MrfModel, stats: SufficientStatsStore, source: BeliefSource, e: Edge) -> float:
    """Activation score ``||p_model(e) - p_data(e)||_2 / d_e``."""
    e = canonical_edge(*e)
    diff = group_gradient(model, stats, source, e)
    return float(np.linalg.norm(diff)) / group_dim(model.spec, e)


def activation_test_c2(score: float, lam: float) -> bool:
    return score > lam


def all_inactive_scores(model: MrfModel, stats: SufficientStatsStore, source: BeliefSource) -> Dict[Edge, float]:
    bel = _beliefs(model, source)
    n = model.n
    return {
        (i, j): edge_score(model, stats, bel, (i, j))
        for i in range(n)
        for j in range(i + 1, n)
        if (i, j) not in model.edge_weights
    }


def kkt_inactive_residual(model: MrfModel, stats: SufficientStatsStore, source: BeliefSource, lam: float) -> float:
    """``max_e (s_e - lam)`` over inactive edges; ``<= 0`` means no edge violates C2."""
    scores = all_inactive_scores(model, stats, source)
    if not scores:
        return float("-inf")
    return max(scores.values()) - lam


# -- proximal optimizer ------------------------------------------------------------


def prox_group(w_g: np.ndarray, step: float, lam: float, d_g: int) -> np.ndarray:
    """Block soft-threshold ``w * max(0, 1 - step * lam * d_g / ||w||)``."""
    if step <= 0:
        raise ValueError("step must be positive")
    w_g = np.asarray(w_g, dtype=float)
    norm = np.linalg.norm(w_g)
    thresh = step * lam * d_g
    if norm <= thresh or norm == 0.0:
        return np.zeros_like(w_g)
    return w_g * (1.0 - thresh / norm)


def _prox_step(model: MrfModel, grad: GradientBundle, step: float, params: RegularizationParams) -> MrfModel:
    spec = model.spec
    node_lam = params.lam if params.penalize_nodes else 0.0
    nodes = [
        prox_group(w - step * g, step, node_lam, spec.cardinalities[i])
        for i, (w, g) in enumerate(zip(model.node_weights, grad.nodes))
    ]
    edges = {
        e: prox_group(w - step * grad.edges[e], step, params.lam, group_dim(spec, e))
        for e, w in model.edge_weights.items()
    }
    return MrfModel(spec, nodes, edges)


def _inner(a: MrfModel, b: MrfModel, grad: GradientBundle) -> float:
    """``<grad, b - a>`` and ``||b - a||^2``."""
    lin = sum(float(g @ (wb - wa)) for g, wa, wb in zip(grad.nodes, a.node_weights, b.node_weights))
    sq = sum(float(np.sum((wb - wa) ** 2)) for wa, wb in zip(a.node_weights, b.node_weights))
    for e, g in grad.edges.items():
        d = b.edge_weights[e] - a.edge_weights[e]
        lin += float(np.sum(g * d))
        sq += float(np.sum(d * d))
    return lin, sq


def _bb_step(a: MrfModel, b: MrfModel, ga: GradientBundle, gb: GradientBundle) -> float:
    """Short Barzilai-Borwein step ``<dw, dg> / <dg, dg>`` (<= 0 if undefined)."""
    sy = yy = 0.0
    for wa, wb, g0, g1 in zip(a.node_weights, b.node_weights, ga.nodes, gb.nodes):
        y = g1 - g0
        sy += float((wb - wa) @ y)
        yy += float(y @ y)
    for e, g0 in ga.edges.items():
        y = gb.edges[e] - g0
        sy += float(np.sum((b.edge_weights[e] - a.edge_weights[e]) * y))
        yy += float(np.sum(y * y))
    return sy / yy if sy > 0 and yy > 0 else -1.0


def optimize_active_set(model: MrfModel, stats: SufficientStatsStore, engine: InferenceEngine,
                        params: RegularizationParams, opt_cfg: Optional[OptimizerConfig] = None):
    """Proximal gradient with backtracking over the current groups.

    Returns ``(model, OptimizeResult)``; the input model is not modified.
    A trial step is accepted when the smooth part satisfies the quadratic
    upper bound, which makes the full objective nonincreasing.
    """
    cfg = opt_cfg or OptimizerConfig()
    res = OptimizeResult()
    f, grad = _value_and_grad(model, stats, engine, params.lam2)
    F = f + group_penalty(model, params)
    res.trace.append(F)
    step = cfg.init_step
    for it in range(1, cfg.max_inner + 1):
        res.iterations = it
        while True:
            cand = _prox_step(model, grad, step, params)
            lin, sq = _inner(model, cand, grad)
            if sq == 0.0:
                res.objective = F
                res.converged = True
                return model, res
            f_new, grad_new = _value_and_grad(cand, stats, engine, params.lam2)
            if f_new <= f + lin + sq / (2.0 * step) + 1e-12 * abs(f):
                break
            step *= cfg.backtrack_beta
            if step < cfg.min_step:
                logger.warning("step size underflow after %d iterations", it)
                res.step_underflow = True
                res.objective = F
                return model, res
        F_new = f_new + group_penalty(cand, params)
        if F_new > F:
            # rounding-level increase: keep the previous iterate
            res.objective = F
            res.converged = True
            return model, res
        bb = _bb_step(model, cand, grad, grad_new)
        model, f, grad = cand, f_new, grad_new
        rel = abs(F - F_new) / max(1.0, abs(F))
        F = F_new
        res.trace.append(F)
        # next trial step: Barzilai-Borwein estimate, backtracked as needed
        step = min(max(bb, cfg.min_step * 1e3), cfg.max_step) if bb > 0 else cfg.init_step
        if rel < cfg.tol:
            res.converged = True
            break
    res.objective = F
    return model, res


def minimal_subgradient_norm(model: MrfModel, stats: SufficientStatsStore, engine: InferenceEngine,
                             params: RegularizationParams) -> Dict[object, float]:
    """Stationarity residual of every nonzero group of the regularized objective."""
    grad = smooth_gradient(model, stats, engine, params)
    spec = model.spec
    out = {}
    for i, (w, g) in enumerate(zip(model.node_weights, grad.nodes)):
        nw = np.linalg.norm(w)
        lam = params.lam if params.penalize_nodes else 0.0
        if nw > 0:
            out[i] = float(np.linalg.norm(g + lam * spec.cardinalities[i] * w / nw))
        elif lam == 0.0:
            out[i] = float(np.linalg.norm(g))
    for e, w in model.edge_weights.items():
        nw = np.linalg.norm(w)
        if nw > 0:
            out[e] = float(np.linalg.norm(grad.edges[e] + params.lam * group_dim(spec, e) * w / nw))
    return out


def candidate_count(model: MrfModel) -> int:
    return n_candidate_edges(model.n) - len(model.edge_weights)
