"""Prioritized edge search: min-heap with lazy default priorities, reservoir and
frozen container."""

from __future__ import annotations

from typing import Callable, Dict, Hashable, Iterable, List, Optional, Set, Tuple

import numpy as np

from .model import Edge, MrfModel, canonical_edge, index_to_edge, n_candidate_edges


class SearchExhausted(Exception):
    """No untested edge remains in the candidate space."""


class IndexedMinHeap:
    """Binary min-heap keyed by hashable items, supporting O(log n) decrease-key.

    Ties on priority are broken by the natural order of the items.
    """

    def __init__(self):
        self._heap: List[Tuple[float, Hashable]] = []
        self._pos: Dict[Hashable, int] = {}

    def __len__(self):
        return len(self._heap)

    def __contains__(self, item):
        return item in self._pos

    def __iter__(self):
        return iter(self._pos)

    def priority(self, item) -> float:
        return self._heap[self._pos[item]][0]

    def peek(self) -> Tuple[float, Hashable]:
        if not self._heap:
            raise IndexError("peek on empty heap")
        return self._heap[0]

    def push(self, item, priority: float) -> None:
        if item in self._pos:
            raise KeyError(f"{item!r} already in heap")
        self._heap.append((float(priority), item))
        self._pos[item] = len(self._heap) - 1
        self._sift_up(len(self._heap) - 1)

    def pop(self) -> Tuple[float, Hashable]:
        if not self._heap:
            raise IndexError("pop from empty heap")
        top = self._heap[0]
        last = self._heap.pop()
        del self._pos[top[1]]
        if self._heap:
            self._heap[0] = last
            self._pos[last[1]] = 0
            self._sift_down(0)
        return top

    def remove(self, item) -> float:
        idx = self._pos[item]
        prio = self._heap[idx][0]
        self.update(item, float("-inf"))
        self.pop()
        return prio

    def update(self, item, priority: float) -> None:
        idx = self._pos[item]
        old = self._heap[idx][0]
        self._heap[idx] = (float(priority), item)
        if priority < old:
            self._sift_up(idx)
        else:
            self._sift_down(idx)

    def decrease_key(self, item, amount: float = 1.0) -> float:
        new = self.priority(item) - amount
        self.update(item, new)
        return new

    def items(self) -> List[Tuple[float, Hashable]]:
        return list(self._heap)

    def _swap(self, a, b):
        h = self._heap
        h[a], h[b] = h[b], h[a]
        self._pos[h[a][1]] = a
        self._pos[h[b][1]] = b

    def _sift_up(self, idx):
        h = self._heap
        while idx > 0:
            parent = (idx - 1) >> 1
            if h[idx] < h[parent]:
                self._swap(idx, parent)
                idx = parent
            else:
                break

    def _sift_down(self, idx):
        h = self._heap
        n = len(h)
        while True:
            left = 2 * idx + 1
            if left >= n:
                break
            child = left
            if left + 1 < n and h[left + 1] < h[left]:
                child = left + 1
            if h[child] < h[idx]:
                self._swap(idx, child)
                idx = child
            else:
                break


class FrozenContainer(dict):
    """Edge -> violation offset ``1 - s_e / lam`` recorded at freezing time."""

    def freeze(self, e: Edge, score: float, lam: float) -> float:
        v = 1.0 - score / lam
        self[e] = v
        return v


class Reservoir:
    """Bounded set of C2-violating edges with O(log |R|) access to the minimum."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("reservoir capacity must be >= 1")
        self.capacity = int(capacity)
        self._heap = IndexedMinHeap()

    def __len__(self):
        return len(self._heap)

    def __contains__(self, e):
        return e in self._heap

    def __iter__(self):
        return iter(list(self._heap))

    @property
    def full(self) -> bool:
        return len(self._heap) >= self.capacity

    def scores(self) -> Dict[Edge, float]:
        return {e: p for p, e in self._heap.items()}

    def min(self) -> Tuple[float, Edge]:
        return self._heap.peek()

    def insert(self, e: Edge, score: float) -> None:
        if self.full:
            raise OverflowError("reservoir is full")
        self._heap.push(e, score)

    def pop_min(self) -> Tuple[float, Edge]:
        return self._heap.pop()

    def remove(self, e: Edge) -> float:
        return self._heap.remove(e)

    def set_score(self, e: Edge, score: float) -> None:
        self._heap.update(e, score)


def reservoir_offer(res: Reservoir, e: Edge, score: float, frozen: FrozenContainer, lam: float) -> str:
    """Offer a freshly tested edge. Returns ``"inserted"``, ``"replaced"`` or ``"frozen"``."""
    if score > lam:
        if not res.full:
            res.insert(e, score)
            return "inserted"
        min_score, min_edge = res.min()
        if score > min_score:
            res.pop_min()
            frozen.freeze(min_edge, min_score, lam)
            res.insert(e, score)
            return "replaced"
    frozen.freeze(e, score, lam)
    return "frozen"


def refresh_reservoir(res: Reservoir, frozen: FrozenContainer, rescore: Callable[[Edge], float],
                      lam: float) -> List[Edge]:
    """Rescore every held edge; edges no longer passing C2 move to ``frozen``."""
    dropped = []
    for e in sorted(res):
        s = rescore(e)
        if s > lam:
            res.set_score(e, s)
        else:
            res.remove(e)
            frozen.freeze(e, s, lam)
            dropped.append(e)
    return dropped


def activation_set(res: Reservoir, alpha: float) -> List[Edge]:
    """Edges scoring at least ``(1 - alpha) * mean + alpha * max``, best first,
    skipping any edge that shares an endpoint with one already chosen."""
    scores = res.scores()
    if not scores:
        return []
    vals = np.array(list(scores.values()))
    top = float(vals.max())
    # clamp: rounding in the convex combination must not exclude the maximum
    tau = min((1.0 - alpha) * float(vals.mean()) + alpha * top, top)
    if alpha >= 1.0:
        tau = top
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    chosen: List[Edge] = []
    used: Set[int] = set()
    for e, s in ranked:
        if s < tau:
            break
        if e[0] in used or e[1] in used:
            continue
        chosen.append(e)
        used.update(e)
        if alpha >= 1.0:
            break
    return chosen


class PrioritySearchSpace:
    """Candidate edges ordered by priority; lower priority values are searched first.

    Unseen edges carry the implicit default priority ``rho0`` and are drawn by
    rejection sampling. ``seen`` holds every edge that was ever prioritized or
    returned by :meth:`select_next_edge`.
    """

    def __init__(self, n: int, rho0: float = 0.0, seed=None, eager: bool = False,
                 excluded: Iterable[Edge] = ()):
        if n < 2:
            raise ValueError("need at least 2 variables")
        self.n = n
        self.rho0 = float(rho0)
        self.rng = np.random.default_rng(seed)
        self.heap = IndexedMinHeap()
        self.seen: Set[Edge] = set(canonical_edge(*e) for e in excluded)
        self.total = n_candidate_edges(n)
        self.samples_drawn = 0
        self.selections = 0
        if eager:
            for i in range(n):
                for j in range(i + 1, n):
                    if (i, j) not in self.seen:
                        self.heap.push((i, j), self.rho0)
                        self.seen.add((i, j))

    @property
    def unseen_count(self) -> int:
        return self.total - len(self.seen)

    def has_candidates(self) -> bool:
        return bool(self.heap) or self.unseen_count > 0

    def _sample_unseen(self) -> Edge:
        # dense regime: enumerate instead of rejection sampling
        if len(self.seen) > self.total // 2:
            self.samples_drawn += 1
            pool = [
                (i, j)
                for i in range(self.n)
                for j in range(i + 1, self.n)
                if (i, j) not in self.seen
            ]
            return pool[int(self.rng.integers(len(pool)))]
        while True:
            self.samples_drawn += 1
            e = index_to_edge(int(self.rng.integers(self.total)), self.n)
            if e not in self.seen:
                return e

    def select_next_edge(self) -> Edge:
        if self.heap and (self.heap.peek()[0] < self.rho0 or self.unseen_count == 0):
            _, e = self.heap.pop()
        elif self.unseen_count > 0:
            e = self._sample_unseen()
            self.seen.add(e)
        else:
            raise SearchExhausted("search space exhausted")
        self.selections += 1
        return e

    def prioritize(self, e: Edge, amount: float = 1.0) -> None:
        """Decrement the priority of ``e``, inserting it at ``rho0 - amount`` if unseen."""
        e = canonical_edge(*e)
        if e in self.heap:
            self.heap.decrease_key(e, amount)
        elif e not in self.seen:
            self.heap.push(e, self.rho0 - amount)
            self.seen.add(e)


def reorganize_pq(space: PrioritySearchSpace, hubs: Iterable[int], model: MrfModel,
                  reservoir: Optional[Reservoir] = None) -> int:
    """Prioritize every searchable edge incident to a hub; returns the number touched.

    Active and reservoir-held edges are skipped, as are frozen edges (they
    come back through :func:`refill_from_frozen`).
    """
    touched = 0
    for h in sorted(hubs):
        for v in range(space.n):
            if v == h:
                continue
            e = canonical_edge(h, v)
            if model.is_active(e) or (reservoir is not None and e in reservoir):
                continue
            if e in space.heap or e not in space.seen:
                space.prioritize(e)
                touched += 1
    return touched


def refill_from_frozen(space: PrioritySearchSpace, frozen: FrozenContainer) -> int:
    """Move every frozen edge into the heap with its violation offset as priority."""
    if space.heap:
        raise RuntimeError("refill requested while the heap is not empty")
    count = 0
    for e in sorted(frozen):
        space.heap.push(e, frozen[e])
        count += 1
    frozen.clear()
    return count
