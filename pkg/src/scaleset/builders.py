"""Hierarchy construction heuristics.

Sequential merging (``sm2``, ``smk``, ``sm``) repeatedly merges the
neighbourhood subset with the globally smallest scale of appearance; the
subset size is bounded by 2, ``k`` or not at all.  Parallel merging (``mm``,
``mm1``) contracts, level by level, a matching of locally minimal edges.
"""

from __future__ import annotations

import heapq
import re
import time
from dataclasses import dataclass, field

import numpy as np

from . import hierarchy as hmod
from .energy import (MUMFORD, ContrastState, EnergyModel, best_subset, d_term,
                     external_contrast, internal_contrast, lambda_plus_pair)
from .raster import LabelMap, RasterImage
from .regions import Rag, build_rag

HEURISTICS = ("sm2", "smk", "sm", "mm", "mm1")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BuilderConfig:
    heuristic: str = "sm2"
    k: int | None = None
    model: EnergyModel = MUMFORD

    def __post_init__(self):
        if self.heuristic not in HEURISTICS:
            raise ConfigError(f"unknown heuristic {self.heuristic!r}; choose from {HEURISTICS}")
        if self.heuristic == "smk" and (self.k is None or self.k < 2):
            raise ConfigError("smk needs k >= 2")

    @classmethod
    def parse(cls, name: str, k: int | None = None, model: EnergyModel = MUMFORD) -> "BuilderConfig":
        """Accept the plain names plus shorthands such as ``sm5``."""
        name = name.lower()
        m = re.fullmatch(r"sm(\d+)", name)
        if m and name != "sm2":
            return cls("smk", int(m.group(1)), model)
        return cls(name, k, model)

    @property
    def max_card(self) -> int | None:
        return {"sm2": 2, "smk": self.k, "sm": None}.get(self.heuristic)

    @property
    def sequential(self) -> bool:
        return self.heuristic.startswith("sm")

    @property
    def label(self) -> str:
        if self.heuristic == "smk":
            return f"SM{self.k}"
        return self.heuristic.upper()


@dataclass
class MergeRecord:
    node: int
    members: tuple[int, ...]
    lam: float
    edges_after: int = -1


# -- matching ----------------------------------------------------------------

@dataclass
class MatchState:
    p: np.ndarray
    q: np.ndarray
    first: np.ndarray
    iterations: int
    history: list[np.ndarray] = field(default_factory=list, repr=False)


def mm_round(keys, endpoints) -> MatchState:
    """Iterate the local-minimum edge selection until nothing changes.

    ``keys`` are totally ordered edge scores (ties fall back to edge order);
    ``endpoints`` is an ``(E, 2)`` array of vertex ids.  The neighbourhood of an
    edge is the edge itself plus every edge sharing an endpoint with it, so
    minima over a neighbourhood are minima over the edges at both endpoints.
    """
    endpoints = np.asarray(endpoints, dtype=np.int64).reshape(-1, 2)
    m = endpoints.shape[0]
    empty = np.zeros(m, dtype=bool)
    if m == 0:
        return MatchState(empty, empty.copy(), empty.copy(), 0)
    order = sorted(range(m), key=lambda e: (keys[e], e))
    rank = np.empty(m, dtype=np.int64)
    rank[order] = np.arange(m)
    u, v = endpoints[:, 0], endpoints[:, 1]
    nv = int(endpoints.max()) + 1
    big = np.iinfo(np.int64).max

    p = empty.copy()
    q = np.ones(m, dtype=bool)  # before the first round every edge competes
    first = None
    history = []
    k = 0
    while True:
        vmin = np.full(nv, big, dtype=np.int64)
        np.minimum.at(vmin, u[q], rank[q])
        np.minimum.at(vmin, v[q], rank[q])
        p_next = p | (q & (rank == np.minimum(vmin[u], vmin[v])))
        touched = np.zeros(nv, dtype=bool)
        touched[u[p_next]] = True
        touched[v[p_next]] = True
        q_next = ~(touched[u] | touched[v])
        if k > 0 and np.array_equal(p_next, p) and np.array_equal(q_next, q):
            break
        p, q = p_next, q_next
        k += 1
        history.append(p.copy())
        if first is None:
            first = p.copy()
    return MatchState(p, q, first, k, history)


def is_matching(endpoints, selected) -> bool:
    endpoints = np.asarray(endpoints).reshape(-1, 2)
    ends = endpoints[np.asarray(selected, dtype=bool)].ravel()
    return np.unique(ends).size == ends.size


def is_maximal_matching(endpoints, selected) -> bool:
    endpoints = np.asarray(endpoints).reshape(-1, 2)
    selected = np.asarray(selected, dtype=bool)
    if not is_matching(endpoints, selected):
        return False
    covered = set(endpoints[selected].ravel().tolist())
    return all(a in covered or b in covered for a, b in endpoints[~selected].tolist())


# -- sequential merging ----------------------------------------------------------

def _leaf_fits(rag: Rag, model: EnergyModel, state: ContrastState | None):
    n = len(rag.stats)
    if sorted(rag.stats) != list(range(n)):
        raise ValueError("initial graph vertices must be numbered 0..n-1")
    if model.kind == "contrast":
        return [state.fit[v] for v in range(n)]
    return [rag.stats[v].se for v in range(n)]


def _new_region_fit(work: Rag, nid: int, model: EnergyModel, state: ContrastState | None,
                    internal: float) -> float:
    st = work.stats[nid]
    if model.kind == "mumford":
        return st.se
    state.internal[nid] = internal
    state.fit[nid] = d_term(model, st, internal, external_contrast(work, (nid,)))
    return state.fit[nid]


def build_sequential(rag: Rag, base: LabelMap, model: EnergyModel = MUMFORD,
                     max_card: int | None = 2):
    """Greedy subset merging; returns the raw merge tree and the merge log."""
    work = rag.copy()
    state = ContrastState.initial(work, model) if model.kind == "contrast" else None
    leaf_fit = _leaf_fits(work, model, state)
    version = {v: 0 for v in work.stats}
    heap: list = []

    def push(v):
        if work.adj[v]:
            lam, members = best_subset(work, v, model, max_card, state)
            heapq.heappush(heap, (lam, len(members), members, v, version[v]))

    for v in sorted(work.stats):
        push(v)

    merges = []
    records = []
    next_id = len(work.stats)
    while len(work.stats) > 1:
        while True:
            if not heap:
                raise ValueError("region adjacency graph is not connected")
            lam, _, members, v, ver = heapq.heappop(heap)
            if v in work.stats and version[v] == ver:
                break
        internal = internal_contrast(work, members, state) if state is not None else 0.0
        merged = work.merge_inplace(members, next_id)
        d = _new_region_fit(work, next_id, model, state, internal)
        merges.append((members, merged, d))
        records.append(MergeRecord(next_id, members, lam, len(work.edges)))
        version[next_id] = 0
        touched = {next_id} | work.adj[next_id]
        if state is not None:
            # outer contrast of candidate unions reaches one ring further
            for w in list(work.adj[next_id]):
                touched |= work.adj[w]
        for w in sorted(touched):
            version[w] = version.get(w, 0) + 1
            push(w)
        next_id += 1
    h = hmod.Hierarchy.from_merges(base, [rag.stats[v] for v in range(len(rag.stats))],
                                   leaf_fit, merges, model)
    return h, records


# -- parallel merging ------------------------------------------------------------

@dataclass
class LevelStats:
    vertices_before: int
    vertices_after: int
    edges_before: int
    edges_after: int
    contracted: int
    iterations: int


def build_parallel(rag: Rag, base: LabelMap, model: EnergyModel = MUMFORD,
                   first_iteration_only: bool = False):
    """Contract locally minimal matchings level by level.

    Returns the raw merge tree, the merge log and per-level statistics.
    """
    work = rag.copy()
    state = ContrastState.initial(work, model) if model.kind == "contrast" else None
    leaf_fit = _leaf_fits(work, model, state)
    merges, records, levels = [], [], []
    next_id = len(work.stats)
    while len(work.stats) > 1:
        edges = sorted(work.edges)
        if not edges:
            raise ValueError("region adjacency graph is not connected")
        lams = [lambda_plus_pair(work, a, b, model, state) for a, b in edges]
        keys = [(lam, a, b) for lam, (a, b) in zip(lams, edges)]
        ms = mm_round(keys, edges)
        chosen = ms.first if first_iteration_only else ms.p
        v_before, e_before = len(work.stats), len(work.edges)
        created = []
        for e in np.flatnonzero(chosen):
            a, b = edges[e]
            internal = internal_contrast(work, (a, b), state) if state is not None else 0.0
            merged = work.merge_inplace((a, b), next_id)
            created.append((next_id, (a, b), merged, internal, lams[e]))
            next_id += 1
        for nid, pair, merged, internal, lam in created:
            d = _new_region_fit(work, nid, model, state, internal)
            merges.append((pair, merged, d))
            records.append(MergeRecord(nid, pair, lam))
        levels.append(LevelStats(v_before, len(work.stats), e_before, len(work.edges),
                                 len(created), ms.iterations))
    h = hmod.Hierarchy.from_merges(base, [rag.stats[v] for v in range(len(rag.stats))],
                                   leaf_fit, merges, model)
    return h, records, levels


# -- pipeline ---------------------------------------------------------------------

@dataclass
class BuildResult:
    hierarchy: hmod.Hierarchy
    raw: hmod.Hierarchy
    records: list[MergeRecord]
    metrics: dict


def _ratio(before: int, after: int):
    return before / after if after else None


def build(img: RasterImage, base: LabelMap, config: BuilderConfig = BuilderConfig()) -> BuildResult:
    """Build, score and clean a hierarchy over the initial partition ``base``."""
    t0 = time.perf_counter()
    rag = build_rag(base, img)
    if config.sequential:
        raw, records = build_sequential(rag, base, config.model, config.max_card)
        sizes = [base.region_count]
        for r in records:
            sizes.append(sizes[-1] - len(r.members) + 1)
        edge_counts = [len(rag.edges)] + [r.edges_after for r in records]
        vertex_ratio = [_ratio(a, b) for a, b in zip(sizes, sizes[1:])]
        edge_ratio = [_ratio(a, b) for a, b in zip(edge_counts, edge_counts[1:])]
        n_levels = len(records)
        first = records[0].lam if records else None
    else:
        raw, records, levels = build_parallel(rag, base, config.model,
                                              config.heuristic == "mm1")
        vertex_ratio = [_ratio(lv.vertices_before, lv.vertices_after) for lv in levels]
        edge_ratio = [_ratio(lv.edges_before, lv.edges_after) for lv in levels]
        n_levels = len(levels)
        first = min(r.lam for r in records[:levels[0].contracted]) if levels else None
    scored = hmod.assign_scales(raw)
    cleaned = hmod.clean(scored)
    wall_ms = (time.perf_counter() - t0) * 1000.0
    metrics = {
        "heuristic": config.label,
        "energy": config.model.kind,
        "initial_regions": base.region_count,
        "levels": n_levels,
        "vertex_ratio_per_level": vertex_ratio,
        "edge_ratio_per_level": edge_ratio,
        "merges": len(records),
        "first_merge_lambda": first,
        "raw_nodes": len(raw),
        "persistent_nodes": len(cleaned),
        "lambda_max": hmod.lambda_max(cleaned),
        "wall_ms": wall_ms,
    }
    return BuildResult(cleaned, scored, records, metrics)
