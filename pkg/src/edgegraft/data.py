"""Dataset ingestion, discretization, splitting and sufficient statistics."""

from __future__ import annotations

import csv
import math
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .model import Edge, VariableSpec, canonical_edge


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


@dataclass
class DiscreteDataset:
    spec: VariableSpec
    rows: np.ndarray  # (N, n) int64 state indices

    def __post_init__(self):
        self.rows = np.ascontiguousarray(self.rows, dtype=np.int64)
        if self.rows.ndim != 2:
            raise DataError("rows must be a 2-d array")
        if self.rows.shape[0] < 1:
            raise DataError("no instances")
        if self.rows.shape[1] != self.spec.n:
            raise DataError(
                f"rows have {self.rows.shape[1]} columns but spec has {self.spec.n} variables"
            )
        card = np.asarray(self.spec.cardinalities)
        bad = (self.rows < 0) | (self.rows >= card[None, :])
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise DataError(
                f"value {self.rows[r, c]} in column {self.spec.names[c]!r} (row {r}) "
                f"outside [0, {card[c]})"
            )

    @property
    def N(self) -> int:
        return self.rows.shape[0]

    def one_hot(self) -> np.ndarray:
        """``(N, S)`` indicator matrix over the stacked per-variable states."""
        off = self.spec.offsets
        X = np.zeros((self.N, self.spec.total_states))
        cols = self.rows + off[:-1][None, :]
        X[np.arange(self.N)[:, None], cols] = 1.0
        return X

    def subset(self, idx) -> "DiscreteDataset":
        return DiscreteDataset(self.spec, self.rows[idx])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.spec.names)
            w.writerows(self.rows.tolist())


# A rule is either "identity" or a (lo, hi, k) interval binning.
Rule = Union[str, Tuple[float, float, int], Mapping]


def discretize_interval(value: float, lo: float, hi: float, k: int) -> int:
    """Equal-width binning of ``[lo, hi]`` into ``k`` states; ``hi`` maps to ``k - 1``."""
    if not lo < hi:
        raise ValueError("need lo < hi")
    if k < 2:
        raise ValueError("need at least 2 bins")
    value = float(value)
    if not math.isfinite(value):
        raise DataError(f"non-finite value {value!r}")
    value = min(max(value, lo), hi)
    return min(int(math.floor((value - lo) / (hi - lo) * k)), k - 1)


def _parse_rule(rule: Rule):
    if rule is None or rule == "identity":
        return None
    if isinstance(rule, Mapping):
        return float(rule["lo"]), float(rule["hi"]), int(rule["bins"])
    lo, hi, k = rule
    return float(lo), float(hi), int(k)


def load_csv(
    path,
    cardinalities: Optional[Union[Sequence[int], Mapping[str, int]]] = None,
    rules: Optional[Mapping[str, Rule]] = None,
) -> DiscreteDataset:
    """Read a header-first CSV into a :class:`DiscreteDataset`.

    Without ``cardinalities`` the state count of each column is inferred as
    ``max value + 1`` (at least 2). ``rules`` maps column names to a binning
    rule for continuous columns.
    """
    path = Path(path)
    rules = dict(rules or {})
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, header row required") from None
        header = [h.strip() for h in header]
        parsed_rules = [_parse_rule(rules.get(h)) for h in header]
        raw = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}:{lineno}: ragged row ({len(rec)} cells, expected {len(header)})")
            row = []
            for c, (cell, rule) in enumerate(zip(rec, parsed_rules)):
                cell = cell.strip()
                if rule is not None:
                    try:
                        row.append(discretize_interval(float(cell), *rule))
                    except ValueError as exc:
                        raise DataError(f"{path}:{lineno}: column {header[c]!r}: {exc}") from None
                    continue
                try:
                    v = int(cell)
                except ValueError:
                    raise DataError(
                        f"{path}:{lineno}: non-integer cell {cell!r} in column {header[c]!r} "
                        "without a discretization rule"
                    ) from None
                row.append(v)
            raw.append(row)
    if not raw:
        raise DataError(f"{path}: no instances")
    rows = np.asarray(raw, dtype=np.int64)
    if (rows < 0).any():
        r, c = np.argwhere(rows < 0)[0]
        raise DataError(f"{path}: negative state {rows[r, c]} in column {header[c]!r}")

    if cardinalities is None:
        card = []
        for c, rule in enumerate(parsed_rules):
            card.append(rule[2] if rule is not None else max(2, int(rows[:, c].max()) + 1))
    elif isinstance(cardinalities, Mapping):
        card = []
        for c, h in enumerate(header):
            if h in cardinalities:
                card.append(int(cardinalities[h]))
            elif parsed_rules[c] is not None:
                card.append(parsed_rules[c][2])
            else:
                card.append(max(2, int(rows[:, c].max()) + 1))
    else:
        card = [int(s) for s in cardinalities]
        if len(card) != len(header):
            raise DataError("declared cardinalities do not match the number of columns")
    return DiscreteDataset(VariableSpec(tuple(header), tuple(card)), rows)


def split(dataset: DiscreteDataset, train_fraction: float, seed) -> Tuple[DiscreteDataset, DiscreteDataset]:
    """Seeded shuffle split; the train size is rounded up but test keeps >= 1 row."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    N = dataset.N
    if N < 2:
        raise DataError("need at least 2 instances to split")
    n_train = min(int(math.ceil(round(N * train_fraction, 9))), N - 1)
    n_train = max(n_train, 1)
    perm = np.random.default_rng(seed).permutation(N)
    return dataset.subset(np.sort(perm[:n_train])), dataset.subset(np.sort(perm[n_train:]))


def node_marginals(dataset: DiscreteDataset):
    """Empirical state frequencies of each variable."""
    N = dataset.N
    return [
        np.bincount(dataset.rows[:, i], minlength=s) / N
        for i, s in enumerate(dataset.spec.cardinalities)
    ]


class SufficientStatsStore:
    """Lazily computed empirical node and pairwise tables with work counters.

    ``tables_computed`` counts edge tables built (each distinct edge at most
    once unless evicted by the optional LRU cap); ``rows_scanned`` counts
    instance evaluations spent building them.
    """

    def __init__(self, dataset: DiscreteDataset, max_cached: Optional[int] = None):
        self.dataset = dataset
        self.node_marginals = node_marginals(dataset)
        self.edge_tables: "OrderedDict[Edge, np.ndarray]" = OrderedDict()
        self.max_cached = max_cached
        self.tables_computed = 0
        self.rows_scanned = 0
        self._computed_edges = set()

    @property
    def spec(self) -> VariableSpec:
        return self.dataset.spec

    def has_table(self, e: Edge) -> bool:
        return canonical_edge(*e) in self.edge_tables

    def edge_table(self, e: Edge) -> np.ndarray:
        e = canonical_edge(*e)
        tab = self.edge_tables.get(e)
        if tab is not None:
            if self.max_cached is not None:
                self.edge_tables.move_to_end(e)
            return tab
        i, j = e
        si, sj = self.spec.cardinalities[i], self.spec.cardinalities[j]
        rows = self.dataset.rows
        counts = np.bincount(rows[:, i] * sj + rows[:, j], minlength=si * sj)
        tab = counts.reshape(si, sj) / self.dataset.N
        self.edge_tables[e] = tab
        self.tables_computed += 1
        self.rows_scanned += self.dataset.N
        self._computed_edges.add(e)
        if self.max_cached is not None and len(self.edge_tables) > self.max_cached:
            self.edge_tables.popitem(last=False)
        return tab

    @property
    def distinct_edges_computed(self) -> int:
        return len(self._computed_edges)

    def precompute_all(self) -> "SufficientStatsStore":
        n = self.spec.n
        for i in range(n):
            for j in range(i + 1, n):
                self.edge_table((i, j))
        return self


def edge_table(store: SufficientStatsStore, dataset: DiscreteDataset, e: Edge) -> np.ndarray:
    if store.dataset is not dataset:
        raise DataError("store was built for a different dataset")
    return store.edge_table(e)


def precompute_all_edge_tables(store: SufficientStatsStore, dataset: DiscreteDataset) -> SufficientStatsStore:
    if store.dataset is not dataset:
        raise DataError("store was built for a different dataset")
    return store.precompute_all()
