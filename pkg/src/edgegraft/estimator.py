"""scikit-learn compatible front end for the structure learners."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .data import DiscreteDataset
from .inference import InferenceEngine, PLData, pl_terms
from .learners import LearnerConfig, learn
from .model import VariableSpec
from .objective import OptimizerConfig


class EdgeGraftingMRF(BaseEstimator):
    """Learn the structure and weights of a discrete pairwise MRF.

    Parameters
    ----------
    method : {"bceg", "first_hit", "eg"}
        Best-choice edge grafting, its first-hit variant, or exhaustive edge grafting.
    lam, lam2 : float
        Group-l1 and squared-l2 regularization weights.
    alpha : float
        Activation confidence in [0, 1]; 1 activates only the best reservoir edge.
    reservoir_size, t_max : int or None
        Reservoir capacity and edge tests per round (defaults: n and n // 10).
    edge_budget : int or None
        Maximum number of activated edges.
    cardinalities : sequence of int or None
        State counts per column; inferred from ``X`` when omitted.
    engine : {"bp", "exact"}
        Inference used for activation scores (and, for "exact", the training loss).

    Attributes
    ----------
    model_ : MrfModel
    trace_ : RunTrace
    edges_ : list of (int, int)
    """

    def __init__(self, method="bceg", lam=0.01, lam2=0.0, alpha=1.0, reservoir_size=None,
                 t_max=None, edge_budget=None, c_hat=None, structure_heuristics=True,
                 eager_pq=False, penalize_nodes=True, engine="bp", bp_damping=0.5,
                 bp_tol=1e-8, bp_max_iters=500, opt_tol=1e-6, opt_max_inner=250,
                 cardinalities=None, random_state=0):
        self.method = method
        self.lam = lam
        self.lam2 = lam2
        self.alpha = alpha
        self.reservoir_size = reservoir_size
        self.t_max = t_max
        self.edge_budget = edge_budget
        self.c_hat = c_hat
        self.structure_heuristics = structure_heuristics
        self.eager_pq = eager_pq
        self.penalize_nodes = penalize_nodes
        self.engine = engine
        self.bp_damping = bp_damping
        self.bp_tol = bp_tol
        self.bp_max_iters = bp_max_iters
        self.opt_tol = opt_tol
        self.opt_max_inner = opt_max_inner
        self.cardinalities = cardinalities
        self.random_state = random_state

    def _config(self) -> LearnerConfig:
        return LearnerConfig(
            method=self.method, lam=self.lam, lam2=self.lam2, alpha=self.alpha,
            reservoir_size=self.reservoir_size, t_max=self.t_max, edge_budget=self.edge_budget,
            c_hat=self.c_hat, structure_heuristics=self.structure_heuristics,
            eager_pq=self.eager_pq, penalize_nodes=self.penalize_nodes, seed=self.random_state,
            engine=InferenceEngine(self.engine, self.bp_max_iters, self.bp_tol, self.bp_damping),
            opt=OptimizerConfig(tol=self.opt_tol, max_inner=self.opt_max_inner),
        )

    def _validate(self, X, reset: bool) -> DiscreteDataset:
        columns = getattr(X, "columns", None)
        X = check_array(X, dtype=None, ensure_min_samples=1)
        if not np.issubdtype(X.dtype, np.integer):
            if not np.all(np.mod(X, 1) == 0):
                raise ValueError("X must contain integer state indices")
            X = X.astype(np.int64)
        if reset:
            if self.cardinalities is not None:
                card = tuple(int(c) for c in self.cardinalities)
            else:
                card = tuple(max(2, int(c) + 1) for c in X.max(axis=0))
            if columns is not None:
                names = tuple(str(c) for c in columns)
                self.feature_names_in_ = np.asarray(names, dtype=object)
            else:
                names = tuple(f"x{i}" for i in range(X.shape[1]))
            self.spec_ = VariableSpec(names, card)
            self.n_features_in_ = X.shape[1]
        elif X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return DiscreteDataset(self.spec_, X)

    def fit(self, X, y=None, **fit_params):
        """Learn structure and weights from integer-coded rows ``X``."""
        data = self._validate(X, reset=True)
        self.model_, self.trace_ = learn(data, self._config(), **fit_params)
        self.edges_ = sorted(self.model_.active_edges)
        return self

    def score_samples(self, X):
        """Log pseudolikelihood of each row."""
        check_is_fitted(self, "model_")
        data = self._validate(X, reset=False)
        per_row, _ = pl_terms(self.model_, PLData(data))
        return -per_row

    def score(self, X, y=None):
        """Mean log pseudolikelihood (higher is better)."""
        return float(np.mean(self.score_samples(X)))

    def adjacency(self):
        check_is_fitted(self, "model_")
        A = np.zeros((self.n_features_in_, self.n_features_in_), dtype=bool)
        for i, j in self.edges_:
            A[i, j] = A[j, i] = True
        return A
