"""Edge grafting, first-hit and best-choice edge grafting drivers."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Set, Tuple

import numpy as np

from .data import DiscreteDataset, SufficientStatsStore
from .inference import Beliefs, InferenceEngine, nlpl
from .model import Edge, MrfModel, hub_set, n_candidate_edges
from .objective import (
    OptimizerConfig,
    RegularizationParams,
    all_inactive_scores,
    edge_score,
    optimize_active_set,
)
from .search import (
    FrozenContainer,
    PrioritySearchSpace,
    Reservoir,
    SearchExhausted,
    activation_set,
    refill_from_frozen,
    refresh_reservoir,
    reorganize_pq,
    reservoir_offer,
)

logger = logging.getLogger(__name__)

METHODS = ("eg", "first_hit", "bceg")


@dataclass
class LearnerConfig:
    method: str = "bceg"
    lam: float = 0.01
    lam2: float = 0.0
    alpha: float = 1.0
    reservoir_size: Optional[int] = None  # None -> n
    t_max: Optional[int] = None  # None -> max(1, n // 10)
    edge_budget: Optional[int] = None  # None -> unlimited
    c_hat: Optional[float] = None  # None -> 4 / (n - 1)
    structure_heuristics: bool = True
    eager_pq: bool = False
    rho0: float = 0.0
    penalize_nodes: bool = True
    seed: Optional[int] = 0
    engine: InferenceEngine = field(default_factory=InferenceEngine)
    opt: OptimizerConfig = field(default_factory=OptimizerConfig)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        for name in ("reservoir_size", "t_max", "edge_budget"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.lam <= 0:
            raise ValueError("grafting needs lam > 0")

    def regularization(self) -> RegularizationParams:
        return RegularizationParams(self.lam, self.lam2, self.alpha, self.penalize_nodes)

    def resolved(self, n: int) -> "LearnerConfig":
        """Copy with data-dependent defaults filled in."""
        d = dict(self.__dict__)
        d["reservoir_size"] = self.reservoir_size or n
        d["t_max"] = self.t_max or max(1, n // 10)
        d["c_hat"] = self.c_hat if self.c_hat is not None else min(1.0, 4.0 / max(1, n - 1))
        if self.method == "first_hit":
            d.update(reservoir_size=1, t_max=1, alpha=1.0)
        return LearnerConfig(**d)


TRACE_FIELDS = ("round", "edges_active", "tables_computed", "edges_tested", "objective", "nlpl", "recall", "wall_ms")


@dataclass
class RoundRecord:
    round: int
    edges_active: int
    tables_computed: int
    edges_tested: int
    objective: float
    nlpl: Optional[float] = None
    recall: Optional[float] = None
    wall_ms: float = 0.0
    optimizer_iters: int = 0
    activated: List[Edge] = field(default_factory=list)
    # tables computed when this round's batch was chosen
    tables_at_activation: int = 0


@dataclass
class RunTrace:
    method: str = ""
    rounds: List[RoundRecord] = field(default_factory=list)
    fill_tests: int = 0
    stop_reason: str = ""

    @property
    def activation_sequence(self) -> List[Edge]:
        return [e for r in self.rounds for e in r.activated]


class _Run:
    """Shared state of one learner run: model, statistics, beliefs, counters."""

    def __init__(self, dataset: DiscreteDataset, config: LearnerConfig, eval_data=None,
                 true_edges: Optional[Set[Edge]] = None, on_round: Optional[Callable] = None):
        self.dataset = dataset
        self.cfg = config.resolved(dataset.spec.n)
        self.params = self.cfg.regularization()
        self.stats = SufficientStatsStore(dataset)
        self.model = MrfModel(dataset.spec)
        self.trace = RunTrace(method=self.cfg.method)
        self.eval_data = eval_data
        self.true_edges = true_edges
        self.on_round = on_round
        self.tests = 0
        self.opt_iters = 0
        self.t0 = time.perf_counter()
        self.objective = float("nan")
        self.beliefs: Optional[Beliefs] = None

    @property
    def budget(self) -> float:
        return self.cfg.edge_budget if self.cfg.edge_budget is not None else float("inf")

    def optimize(self) -> None:
        self.model, res = optimize_active_set(self.model, self.stats, self.cfg.engine, self.params, self.cfg.opt)
        self.opt_iters += res.iterations
        self.objective = res.objective
        self.beliefs = self.cfg.engine.run(self.model)

    def score(self, e: Edge) -> float:
        return edge_score(self.model, self.stats, self.beliefs, e)

    def record(self, activated: List[Edge], tables_at_activation: int) -> None:
        rec = RoundRecord(
            round=len(self.trace.rounds) + 1,
            edges_active=len(self.model.edge_weights),
            tables_computed=self.stats.tables_computed,
            edges_tested=self.tests,
            objective=self.objective,
            wall_ms=(time.perf_counter() - self.t0) * 1e3,
            optimizer_iters=self.opt_iters,
            activated=list(activated),
            tables_at_activation=tables_at_activation,
        )
        if self.eval_data is not None:
            rec.nlpl = nlpl(self.model, self.eval_data)
        if self.true_edges is not None:
            from .synthetic import recall

            rec.recall = recall(self.true_edges, self.model.active_edges)
        self.trace.rounds.append(rec)
        if self.on_round is not None:
            self.on_round(rec)


def edge_grafting(dataset: DiscreteDataset, config: LearnerConfig, *, eval_data=None,
                  true_edges=None, on_round=None) -> Tuple[MrfModel, RunTrace]:
    """Exhaustive edge grafting: precompute every pairwise table, then repeatedly
    activate the single highest-scoring edge while it passes C2."""
    run = _Run(dataset, config, eval_data, true_edges, on_round)
    run.stats.precompute_all()
    run.optimize()
    added = 0
    run.trace.stop_reason = "converged"
    while added < run.budget:
        scores = all_inactive_scores(run.model, run.stats, run.beliefs)
        if not scores:
            run.trace.stop_reason = "complete_graph"
            break
        run.tests += len(scores)
        best = max(scores.items(), key=lambda kv: (kv[1], -kv[0][0], -kv[0][1]))
        if not best[1] > run.params.lam:
            break
        tables = run.stats.tables_computed
        run.model.activate_edge(*best[0])
        added += 1
        run.optimize()
        run.record([best[0]], tables)
    else:
        run.trace.stop_reason = "budget"
    return run.model, run.trace


def best_choice_edge_grafting(dataset: DiscreteDataset, config: LearnerConfig, *, eval_data=None,
                              true_edges=None, on_round=None, observer=None) -> Tuple[MrfModel, RunTrace]:
    """Reservoir-based edge grafting with prioritized, on-demand edge testing.

    ``observer(event, model, space, reservoir, frozen)``, if given, is called
    after every edge test (``"test"``) and every activation round (``"round"``).
    """
    run = _Run(dataset, config, eval_data, true_edges, on_round)
    cfg, lam = run.cfg, run.params.lam
    n = dataset.spec.n
    space = PrioritySearchSpace(n, cfg.rho0, seed=cfg.seed, eager=cfg.eager_pq)
    res = Reservoir(cfg.reservoir_size)
    frozen = FrozenContainer()
    run.optimize()

    def test_one() -> Tuple[Edge, str]:
        if not space.heap and frozen:
            refill_from_frozen(space, frozen)
        e = space.select_next_edge()
        run.tests += 1
        outcome = reservoir_offer(res, e, run.score(e), frozen, lam)
        if observer is not None:
            observer("test", run.model, space, res, frozen)
        return e, outcome

    def search_until(stop: Callable[[], bool]) -> bool:
        """Test edges until ``stop()`` holds or every current candidate has been
        tested once in this pass. Returns ``stop()``."""
        covered: Set[Edge] = set()
        remaining = n_candidate_edges(n) - len(run.model.edge_weights) - len(res)
        while not stop():
            try:
                e, _ = test_one()
            except SearchExhausted:
                break
            covered.add(e)
            if len(covered) >= remaining:
                break
        return stop()

    search_until(lambda: res.full)
    run.trace.fill_tests = run.tests

    added = 0
    run.trace.stop_reason = "budget"
    while added < run.budget:
        if cfg.structure_heuristics:
            reorganize_pq(space, hub_set(run.model, cfg.c_hat), run.model, res)
        for _ in range(cfg.t_max):
            try:
                test_one()
            except SearchExhausted:
                break
        if not len(res) and not search_until(lambda: len(res) > 0):
            run.trace.stop_reason = "converged"
            break
        batch = activation_set(res, cfg.alpha)
        batch = batch[: int(min(len(batch), run.budget - added))]
        tables = run.stats.tables_computed
        for e in batch:
            res.remove(e)
            run.model.activate_edge(*e)
        added += len(batch)
        run.optimize()
        refresh_reservoir(res, frozen, run.score, lam)
        run.record(batch, tables)
        if observer is not None:
            observer("round", run.model, space, res, frozen)
    return run.model, run.trace


def first_hit(dataset: DiscreteDataset, config: LearnerConfig, **kw) -> Tuple[MrfModel, RunTrace]:
    """Best-choice grafting with a one-edge reservoir and one test per round."""
    d = dict(config.__dict__)
    d["method"] = "first_hit"
    return best_choice_edge_grafting(dataset, LearnerConfig(**d), **kw)


def learn(dataset: DiscreteDataset, config: LearnerConfig, **kw) -> Tuple[MrfModel, RunTrace]:
    if config.method == "eg":
        return edge_grafting(dataset, config, **kw)
    if config.method == "first_hit":
        return first_hit(dataset, config, **kw)
    return best_choice_edge_grafting(dataset, config, **kw)


# -- trace I/O ------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".12g")
    return str(v)


class TraceWriter:
    """Incremental trace writer (CSV or JSON lines), flushed after every round."""

    def __init__(self, path, fmt: str = "csv"):
        if fmt not in ("csv", "jsonl"):
            raise ValueError("trace format must be 'csv' or 'jsonl'")
        self.fmt = fmt
        self._fh = open(path, "w", newline="", encoding="utf-8")
        if fmt == "csv":
            self._csv = csv.writer(self._fh, lineterminator="\n")
            self._csv.writerow(TRACE_FIELDS)
            self._fh.flush()

    def __call__(self, rec: RoundRecord) -> None:
        if self.fmt == "csv":
            self._csv.writerow([_fmt(getattr(rec, f)) for f in TRACE_FIELDS])
        else:
            d = asdict(rec)
            d["activated"] = [list(e) for e in rec.activated]
            d = {k: (float(format(v, ".12g")) if isinstance(v, float) else v) for k, v in d.items()}
            self._fh.write(json.dumps(d, sort_keys=True) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def emit_trace(trace: RunTrace, path, fmt: str = "csv") -> None:
    with TraceWriter(path, fmt) as w:
        for rec in trace.rounds:
            w(rec)


def read_trace(path, fmt: str = "jsonl") -> RunTrace:
    trace = RunTrace()
    if fmt == "jsonl":
        for line in Path(path).read_text().splitlines():
            if line.strip():
                d = json.loads(line)
                d["activated"] = [tuple(e) for e in d["activated"]]
                trace.rounds.append(RoundRecord(**d))
        return trace
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            trace.rounds.append(
                RoundRecord(
                    round=int(row["round"]),
                    edges_active=int(row["edges_active"]),
                    tables_computed=int(row["tables_computed"]),
                    edges_tested=int(row["edges_tested"]),
                    objective=float(row["objective"]),
                    nlpl=float(row["nlpl"]) if row["nlpl"] else None,
                    recall=float(row["recall"]) if row["recall"] else None,
                    wall_ms=float(row["wall_ms"]),
                )
            )
    return trace
