"""Region statistics and the region adjacency graph."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .raster import LabelMap, RasterImage


class NonAdjacentMergeError(ValueError):
    pass


class DisconnectedGroupError(ValueError):
    pass


@dataclass(frozen=True)
class RegionStats:
    """Exact additive moments of a region.

    ``sumsq`` is the scalar sum of squared channel values over the pixels and
    ``perimeter`` counts unit pixel edges on the region boundary, image border
    included.
    """

    area: int
    sum: np.ndarray
    sumsq: float
    perimeter: int

    @property
    def mean(self) -> np.ndarray:
        return self.sum / self.area

    @property
    def se(self) -> float:
        """Squared error about the region mean."""
        return max(0.0, float(self.sumsq - np.dot(self.sum, self.sum) / self.area))

    def __eq__(self, other):
        if not isinstance(other, RegionStats):
            return NotImplemented
        return (self.area == other.area and np.array_equal(self.sum, other.sum)
                and self.sumsq == other.sumsq and self.perimeter == other.perimeter)


def merge_stats(a: RegionStats, b: RegionStats, shared_len: int) -> RegionStats:
    if a is b:
        raise NonAdjacentMergeError("a region cannot be merged with itself")
    if shared_len < 1:
        raise NonAdjacentMergeError("regions share no boundary")
    return RegionStats(a.area + b.area, a.sum + b.sum, a.sumsq + b.sumsq,
                       a.perimeter + b.perimeter - 2 * shared_len)


def union_stats(parts, internal_len: int) -> RegionStats:
    """Stats of the union of several regions whose mutual boundary totals ``internal_len``."""
    parts = list(parts)
    return RegionStats(sum(p.area for p in parts),
                       np.sum([p.sum for p in parts], axis=0),
                       float(sum(p.sumsq for p in parts)),
                       sum(p.perimeter for p in parts) - 2 * internal_len)


def compute_stats(lm: LabelMap, img: RasterImage) -> list[RegionStats]:
    if (lm.width, lm.height) != (img.width, img.height):
        raise ValueError("label map and image dimensions differ")
    n = lm.region_count
    lab = lm.labels
    flat = lab.ravel()
    data = img.data.reshape(-1, img.channels)
    area = np.bincount(flat, minlength=n)
    sums = np.stack([np.bincount(flat, weights=data[:, c], minlength=n)
                     for c in range(img.channels)], axis=1)
    sumsq = np.bincount(flat, weights=np.sum(data * data, axis=1), minlength=n)

    # every pixel contributes 4 sides minus the sides shared with same-label neighbours
    perim = 4 * area
    same_h = (lab[:, :-1] == lab[:, 1:])
    same_v = (lab[:-1, :] == lab[1:, :])
    perim -= 2 * np.bincount(lab[:, :-1][same_h], minlength=n)
    perim -= 2 * np.bincount(lab[:-1, :][same_v], minlength=n)
    return [RegionStats(int(area[i]), sums[i].copy(), float(sumsq[i]), int(perim[i]))
            for i in range(n)]


@dataclass
class Edge:
    shared_len: int
    grad_sum: float

    @property
    def mean_gradient(self) -> float:
        return self.grad_sum / self.shared_len


def _key(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


@dataclass
class Rag:
    """Region adjacency graph.

    Treat instances as immutable; :func:`contract` returns a new graph.
    Builders work on private copies through :meth:`merge_inplace`.
    """

    stats: dict[int, RegionStats]
    edges: dict[tuple[int, int], Edge]
    adj: dict[int, set[int]] = field(default_factory=dict)
    width: int = 0
    height: int = 0

    def __post_init__(self):
        if not self.adj:
            self.adj = {v: set() for v in self.stats}
            for u, v in self.edges:
                self.adj[u].add(v)
                self.adj[v].add(u)

    @property
    def vertices(self) -> list[int]:
        return sorted(self.stats)

    def edge(self, u: int, v: int) -> Edge | None:
        return self.edges.get(_key(u, v))

    def shared_len(self, u: int, v: int) -> int:
        e = self.edges.get(_key(u, v))
        return 0 if e is None else e.shared_len

    def copy(self) -> "Rag":
        return Rag({k: v for k, v in self.stats.items()},
                   {k: Edge(e.shared_len, e.grad_sum) for k, e in self.edges.items()},
                   {k: set(v) for k, v in self.adj.items()}, self.width, self.height)

    def is_connected_subset(self, group) -> bool:
        group = set(group)
        if not group:
            return False
        start = next(iter(group))
        seen = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for w in self.adj[u]:
                if w in group and w not in seen:
                    seen.add(w)
                    stack.append(w)
        return seen == group

    def internal_length(self, group) -> int:
        group = set(group)
        return sum(self.edges[_key(u, w)].shared_len
                   for u in group for w in self.adj[u] if w in group and u < w)

    def merge_inplace(self, group, new_id: int) -> RegionStats:
        """Replace the vertices of ``group`` by a single vertex ``new_id``."""
        group = set(group)
        if len(group) < 2:
            raise NonAdjacentMergeError("a merge needs at least two distinct regions")
        if new_id in self.stats:
            raise ValueError(f"vertex id {new_id} is already in use")
        if not self.is_connected_subset(group):
            raise DisconnectedGroupError(f"group {sorted(group)} is not connected")
        internal = 0
        outside: dict[int, Edge] = {}
        for u in group:
            for w in self.adj[u]:
                e = self.edges[_key(u, w)]
                if w in group:
                    if u < w:
                        internal += e.shared_len
                else:
                    acc = outside.setdefault(w, Edge(0, 0.0))
                    acc.shared_len += e.shared_len
                    acc.grad_sum += e.grad_sum
        merged = union_stats((self.stats[u] for u in sorted(group)), internal)
        for u in group:
            for w in self.adj[u]:
                self.edges.pop(_key(u, w), None)
                if w not in group:
                    self.adj[w].discard(u)
            del self.adj[u]
            del self.stats[u]
        self.stats[new_id] = merged
        self.adj[new_id] = set(outside)
        for w, e in outside.items():
            self.edges[_key(new_id, w)] = e
            self.adj[w].add(new_id)
        return merged


def build_rag(lm: LabelMap, img: RasterImage) -> Rag:
    stats = compute_stats(lm, img)
    lab = lm.labels
    d = img.data
    n = lm.region_count
    pairs_a, pairs_b, grads = [], [], []
    for la, lb, da, db in ((lab[:, :-1], lab[:, 1:], d[:, :-1], d[:, 1:]),
                           (lab[:-1, :], lab[1:, :], d[:-1, :], d[1:, :])):
        diff = la != lb
        pairs_a.append(la[diff])
        pairs_b.append(lb[diff])
        grads.append(np.sqrt(np.sum((da[diff] - db[diff]) ** 2, axis=-1)))
    a = np.concatenate(pairs_a)
    b = np.concatenate(pairs_b)
    g = np.concatenate(grads)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    code = lo * n + hi
    uniq, inv = np.unique(code, return_inverse=True)
    shared = np.bincount(inv)
    gsum = np.bincount(inv, weights=g)
    edges = {(int(c // n), int(c % n)): Edge(int(s), float(gs))
             for c, s, gs in zip(uniq, shared, gsum)}
    return Rag(dict(enumerate(stats)), edges, width=lm.width, height=lm.height)


def contract(rag: Rag, groups, first_new_id: int | None = None) -> tuple[Rag, dict[int, int]]:
    """Contract each group of vertices into one vertex.

    Returns the new graph and the old-id to new-id map.  Singleton groups and
    vertices in no group keep their ids; each multi-vertex group gets a fresh id
    counting up from ``first_new_id`` (default: one past the largest id).
    """
    groups = [sorted(set(g)) for g in groups]
    seen: set[int] = set()
    for g in groups:
        if seen.intersection(g):
            raise ValueError("groups are not disjoint")
        seen.update(g)
        missing = [v for v in g if v not in rag.stats]
        if missing:
            raise KeyError(f"unknown vertices {missing}")
        if not rag.is_connected_subset(g):
            raise DisconnectedGroupError(f"group {g} is not connected in the graph")
    out = rag.copy()
    next_id = max(rag.stats) + 1 if first_new_id is None else first_new_id
    mapping = {v: v for v in rag.stats}
    for g in groups:
        if len(g) < 2:
            continue
        out.merge_inplace(g, next_id)
        for v in g:
            mapping[v] = next_id
        next_id += 1
    return out, mapping

