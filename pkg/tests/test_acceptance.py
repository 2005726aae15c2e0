"""Acceptance criteria, one test per criterion.

Each test prints a ``criterion N PASS/FAIL`` line and the conftest summary
repeats them at the end of the run. The n=20 benchmark runs are cached and
shared between criteria 7-9; every criterion still reports (and is checked
against) the summed wall time of all the runs it relies on.
"""

import itertools
import time
from functools import lru_cache
from math import comb

import numpy as np
import pytest

import invariants
import oracles
from edgegraft.data import DiscreteDataset, SufficientStatsStore, split
from edgegraft.inference import InferenceEngine, loopy_bp, nlpl
from edgegraft.learners import LearnerConfig, best_choice_edge_grafting, edge_grafting, learn
from edgegraft.model import VariableSpec, parameter_count
from edgegraft.objective import RegularizationParams, kkt_inactive_residual, smooth_gradient
from edgegraft.synthetic import generate_ground_truth, gibbs_sample, recall, reservoir_rank_simulation

EXACT = InferenceEngine("exact")
LAMBDA_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)
SEEDS = range(10)
N_BENCH, SAMPLES, BUDGET, CHAINS = 20, 5000, 60, 10
TUNING_SEED = 100  # held out from the evaluation seeds


def _report(record_property, number, ok, detail):
    record_property("detail", detail)
    print(f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


# -- 1 ------------------------------------------------------------------------------


@pytest.mark.criterion(1, "parameter counts")
def test_criterion_01_parameter_counts(record_property):
    cases = [(200, 5, 498_500), (400, 5, 1_997_000), (600, 5, 4_495_500), (100, 5, 124_250), (489, 2, 478_242)]
    got = [parameter_count(VariableSpec.uniform(n, s)) for n, s, _ in cases]
    ok = got == [c for *_, c in cases]
    _report(record_property, 1, ok, "counts " + ", ".join(f"{g:,}" for g in got))


# -- 2 ------------------------------------------------------------------------------


@pytest.mark.criterion(2, "reservoir-rank simulation")
def test_criterion_02_reservoir_ranks(record_property):
    t0 = time.perf_counter()
    rows = reservoir_rank_simulation(400, [1, 10, 50, 100, 500], trials=100, seed=0)
    elapsed = time.perf_counter() - t0
    rel = {r.reservoir_size: abs(r.mean_rank - r.expected_rank) / r.expected_rank for r in rows}
    band = all(r.min_rank <= r.expected_rank <= r.max_rank for r in rows)
    expected_ok = all(r.expected_rank == pytest.approx(79_801 / (r.reservoir_size + 1), rel=1e-12) for r in rows)
    ok = all(v < 0.15 for v in rel.values()) and band and expected_ok and elapsed < 5
    worst = max(rel, key=rel.get)
    detail = f"max rel error {rel[worst]:.3f} at |R|={worst}, band {'ok' if band else 'violated'}, {elapsed:.2f}s"
    _report(record_property, 2, ok, detail)


# -- 3 ------------------------------------------------------------------------------


@pytest.mark.criterion(3, "complexity instrumentation")
def test_criterion_03_table_counts(record_property):
    t0 = time.perf_counter()
    gt = generate_ground_truth(60, seed=3)
    ds = gibbs_sample(gt.model, 2000, seed=3)
    j_max = 30
    # grid value picked for this instance by the same baseline protocol as the n=20 benchmark
    lam = 1e-4
    _, eg = edge_grafting(ds, LearnerConfig(method="eg", lam=lam, edge_budget=j_max, seed=0))
    cfg = LearnerConfig(method="bceg", lam=lam, alpha=1.0, reservoir_size=60, t_max=6, edge_budget=j_max, seed=0)
    _, bc = best_choice_edge_grafting(ds, cfg)
    elapsed = time.perf_counter() - t0

    eg_first = eg.rounds[0].tables_at_activation
    r = bc.fill_tests
    bound_ok = all(rec.tables_at_activation <= r + j * 6 for j, rec in enumerate(bc.rounds, start=1))
    eg_total = eg.rounds[j_max - 1].tables_computed
    bc_total = bc.rounds[j_max - 1].tables_computed
    ok = (eg_first == comb(60, 2) and bound_ok and len(bc.rounds) >= j_max
          and bc_total < 0.25 * eg_total and elapsed < 120)
    detail = (f"eg first {eg_first}, bceg at j=30 {bc_total} vs eg {eg_total} "
              f"({bc_total / eg_total:.1%}), r={r}, bound {'ok' if bound_ok else 'violated'}, {elapsed:.0f}s")
    _report(record_property, 3, ok, detail)


# -- 4 ------------------------------------------------------------------------------


def _fd_gradient(m, rows, lam2, h=1e-5):
    """Central differences of the brute-force NLL plus ridge."""

    def f():
        ridge = sum(np.sum(w * w) for w in m.node_weights) + sum(np.sum(w * w) for w in m.edge_weights.values())
        return oracles.nll(m, rows) + lam2 * ridge

    out = []
    blocks = list(m.node_weights) + [m.edge_weights[e] for e in sorted(m.edge_weights)]
    for w in blocks:
        for idx in np.ndindex(w.shape):
            old = w[idx]
            w[idx] = old + h
            fp = f()
            w[idx] = old - h
            fm = f()
            w[idx] = old
            out.append((fp - fm) / (2 * h))
    return np.array(out)


@pytest.mark.criterion(4, "gradient correctness")
def test_criterion_04_gradients(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    errors = []
    for _ in range(20):
        n = int(rng.integers(2, 9))
        pairs = list(itertools.combinations(range(n), 2))
        k = int(rng.integers(1, len(pairs) + 1))
        edges = {pairs[i] for i in rng.choice(len(pairs), size=k, replace=False)}
        m = oracles.random_model(rng, (2,) * n, edges)
        rows = rng.integers(0, 2, size=(int(rng.integers(20, 100)), n))
        lam2 = float(rng.choice([0.0, 0.05, 0.5]))
        store = SufficientStatsStore(DiscreteDataset(m.spec, rows))
        g = smooth_gradient(m, store, EXACT, RegularizationParams(0.1, lam2))
        analytic = np.concatenate([x.ravel() for x in g.nodes] + [g.edges[e].ravel() for e in sorted(m.edge_weights)])
        numeric = _fd_gradient(m, rows, lam2)
        errors.append(np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12))
    elapsed = time.perf_counter() - t0
    worst = max(errors)
    _report(record_property, 4, worst < 1e-5 and elapsed < 30, f"max relative error {worst:.2e} over 20 models, {elapsed:.1f}s")


# -- 5 ------------------------------------------------------------------------------


def _max_belief_error(m):
    bp = loopy_bp(m)
    nodes, pairs, _ = oracles.marginals(m)
    err = max(np.abs(a - b).max() for a, b in zip(bp.node_beliefs, nodes))
    for e in m.edge_weights:
        err = max(err, np.abs(bp.edge_beliefs[e] - pairs[e]).max())
    return err


@pytest.mark.criterion(5, "BP against exact enumeration")
def test_criterion_05_bp_oracle(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    tree_err = 0.0
    for k in range(20):
        n = int(rng.integers(2, 13))
        edges = oracles.random_tree(rng, n)
        if k % 4 == 3 and len(edges) > 1:  # forests count as acyclic too
            edges.discard(sorted(edges)[0])
        card = tuple(int(c) for c in rng.integers(2, 4, size=n)) if n <= 8 else (2,) * n
        tree_err = max(tree_err, _max_belief_error(oracles.random_model(rng, card, edges)))
    cycle_err = 0.0
    for _ in range(10):
        length = int(rng.integers(3, 11))
        n = length + int(rng.integers(0, 3))
        edges = {tuple(sorted((i, (i + 1) % length))) for i in range(length)}
        edges |= {(int(rng.integers(v)), v) for v in range(length, n)}
        cycle_err = max(cycle_err, _max_belief_error(oracles.random_model(rng, (2,) * n, edges)))
    elapsed = time.perf_counter() - t0
    ok = tree_err <= 1e-6 and cycle_err <= 1e-2 and elapsed < 30
    _report(record_property, 5, ok, f"acyclic max error {tree_err:.1e}, single-cycle {cycle_err:.1e}, {elapsed:.1f}s")


# -- 6 ------------------------------------------------------------------------------


@pytest.mark.criterion(6, "KKT certificate")
def test_criterion_06_kkt(record_property):
    t0 = time.perf_counter()
    gt = generate_ground_truth(15, seed=6)
    ds = gibbs_sample(gt.model, 2000, seed=6)
    ok, parts = True, []
    # a sparse and a dense solution, so the exhaustive check covers many inactive edges
    for lam in (1e-2, 1e-3):
        model, trace = edge_grafting(ds, LearnerConfig(method="eg", lam=lam, seed=0))
        residual = kkt_inactive_residual(model, SufficientStatsStore(ds), InferenceEngine(), lam)
        ok &= trace.stop_reason == "converged" and residual <= 1e-8
        parts.append(f"lambda {lam:g}: residual {residual:.1e}, {comb(15, 2) - len(model.edge_weights)} inactive checked")
    elapsed = time.perf_counter() - t0
    _report(record_property, 6, ok and elapsed < 60, "; ".join(parts) + f", {elapsed:.0f}s")


# -- 7-9: shared n=20 benchmark ------------------------------------------------------


@lru_cache(maxsize=None)
def _bench_data(seed):
    t0 = time.perf_counter()
    gt = generate_ground_truth(N_BENCH, seed=seed)
    ds = gibbs_sample(gt.model, SAMPLES, seed=seed, chains=CHAINS)
    return gt, ds, time.perf_counter() - t0


@lru_cache(maxsize=None)
def _tuned_lambda():
    """Grid search on the edge-grafting baseline: best recall, then held-out NLPL."""
    t0 = time.perf_counter()
    gt, ds, gen = _bench_data(TUNING_SEED)
    train, test = split(ds, 0.8, TUNING_SEED)
    scored = []
    for lam in LAMBDA_GRID:
        m, _ = learn(train, LearnerConfig(method="eg", lam=lam, edge_budget=BUDGET, seed=0))
        scored.append((-recall(gt.true_edges, m.active_edges), nlpl(m, test), lam))
    return min(scored)[2], time.perf_counter() - t0 + gen


@lru_cache(maxsize=None)
def _bench_run(seed, method, alpha=1.0, heuristics=True):
    """Recall of one benchmark run and the wall time of the fit."""
    gt, ds, _ = _bench_data(seed)
    lam, _ = _tuned_lambda()
    t0 = time.perf_counter()
    cfg = LearnerConfig(method=method, lam=lam, alpha=alpha, edge_budget=BUDGET,
                        structure_heuristics=heuristics, seed=seed)
    model, _ = learn(ds, cfg)
    return recall(gt.true_edges, model.active_edges), time.perf_counter() - t0


def _bench(variants):
    """Per-variant recalls over all seeds, plus the total time these runs cost."""
    recalls = {name: [] for name in variants}
    cost = _tuned_lambda()[1]
    for seed in SEEDS:
        cost += _bench_data(seed)[2]
        for name, args in variants.items():
            r, t = _bench_run(seed, *args)
            recalls[name].append(r)
            cost += t
    return {k: np.array(v) for k, v in recalls.items()}, cost


@pytest.mark.criterion(7, "structure recovery")
def test_criterion_07_recovery(record_property):
    rec, cost = _bench({"bceg": ("bceg",), "first_hit": ("first_hit",)})
    lam = _tuned_lambda()[0]
    b, f = rec["bceg"], rec["first_hit"]
    ok = b.min() >= 0.6 and b.mean() >= f.mean() and cost < 600
    detail = (f"lambda {lam:g}; bceg recall mean {b.mean():.3f} (min {b.min():.3f}), "
              f"first_hit mean {f.mean():.3f}, {cost:.0f}s")
    _report(record_property, 7, ok, detail)


@pytest.mark.criterion(8, "alpha trade-off")
def test_criterion_08_alpha(record_property):
    alphas = (0.25, 0.5, 1.0)
    rec, cost = _bench({a: ("bceg", a) for a in alphas})
    means = [rec[a].mean() for a in alphas]
    ok = all(b >= a - 0.05 for a, b in zip(means, means[1:])) and cost < 1200
    detail = "mean recall " + ", ".join(f"a={a:g}: {m:.3f}" for a, m in zip(alphas, means)) + f", {cost:.0f}s"
    _report(record_property, 8, ok, detail)


@pytest.mark.criterion(9, "structure heuristics")
def test_criterion_09_heuristics(record_property):
    rec, cost = _bench({"on": ("bceg", 1.0, True), "off": ("bceg", 1.0, False)})
    on, off = rec["on"].mean(), rec["off"].mean()
    _report(record_property, 9, on >= off and cost < 1200, f"mean recall on {on:.3f}, off {off:.3f}, {cost:.0f}s")


# -- 10 -----------------------------------------------------------------------------


@pytest.mark.criterion(10, "degenerate equivalence")
def test_criterion_10_degenerate(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(10)
    mismatches, lengths = [], []
    for k in range(20):
        n = int(rng.integers(4, 8))
        gt = generate_ground_truth(n, states=int(rng.integers(2, 4)), seed=1000 + k)
        ds = gibbs_sample(gt.model, int(rng.integers(200, 600)), seed=k, chains=4)
        lam = float(rng.choice([2e-3, 5e-3, 1e-2]))
        M = comb(n, 2)
        _, eg = edge_grafting(ds, LearnerConfig(method="eg", lam=lam, seed=k))
        _, bc = best_choice_edge_grafting(ds, LearnerConfig(method="bceg", lam=lam, alpha=1.0, reservoir_size=M,
                                                            t_max=M, eager_pq=True, seed=k))
        lengths.append(len(eg.activation_sequence))
        if eg.activation_sequence != bc.activation_sequence:
            mismatches.append(k)
    elapsed = time.perf_counter() - t0
    ok = not mismatches and elapsed < 120
    detail = f"{20 - len(mismatches)}/20 identical (sequences of {min(lengths)}-{max(lengths)} edges), {elapsed:.0f}s"
    _report(record_property, 10, ok, detail)


# -- 11 -----------------------------------------------------------------------------


@pytest.mark.criterion(11, "randomized invariants")
def test_criterion_11_invariants(record_property):
    t0 = time.perf_counter()
    invariants.CASES.clear()
    for suite in invariants.SUITES:
        suite()
    elapsed = time.perf_counter() - t0
    total = sum(invariants.CASES.values())
    ok = total >= 1000 and elapsed < 120
    detail = f"{total} cases (" + ", ".join(f"{k} {v}" for k, v in sorted(invariants.CASES.items())) + f"), {elapsed:.0f}s"
    _report(record_property, 11, ok, detail)
