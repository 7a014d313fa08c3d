"""Affine separable energies and scales of appearance.

Two fit-to-data terms are supported, both paired with the region perimeter
as regulariser:

* ``mumford``: the squared error of the piecewise-constant model;
* ``contrast``: the squared error weighted by ``1 + f(Int/Ext)`` where ``f``
  is a logistic sigmoid, ``Int`` the largest mean gradient over contours
  removed while building the region and ``Ext`` the smallest mean gradient
  over its current outer contours.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .regions import NonAdjacentMergeError, Rag, RegionStats, union_stats

MAX_ENUMERATED_NEIGHBOURS = 30
_CHUNK = 1 << 15
_ENUMERATE_BUDGET = 1 << 12


class SubsetEnumerationError(RuntimeError):
    """Raised when an unbounded subset search would exceed the enumeration limit."""


@dataclass(frozen=True)
class EnergyModel:
    kind: str = "mumford"
    center: float = 0.5
    steepness: float = 8.0

    def __post_init__(self):
        if self.kind not in ("mumford", "contrast"):
            raise ValueError(f"unknown energy kind {self.kind!r}")

    def sigmoid(self, x: float) -> float:
        if math.isinf(x):
            return 1.0 if x > 0 else 0.0
        z = -self.steepness * (x - self.center)
        if z > 700:
            return 0.0
        return 1.0 / (1.0 + math.exp(z))


MUMFORD = EnergyModel()


def contrast_ratio(internal: float, external: float) -> float:
    # a region without inner contours has no inner contrast, whatever its surroundings
    if internal <= 0.0:
        return 0.0
    if external <= 0.0:
        return math.inf
    return internal / external


def d_term(model: EnergyModel, stats: RegionStats, internal: float = 0.0,
           external: float = math.inf) -> float:
    se = stats.se
    if model.kind == "mumford":
        return se
    return se * (1.0 + model.sigmoid(contrast_ratio(internal, external)))


@dataclass
class ContrastState:
    """Per-region inner contrast and frozen fit term for the contrast energy.

    A region's fit term is evaluated once, when the region is created, using
    the outer contours it has at that moment.
    """

    internal: dict[int, float] = field(default_factory=dict)
    fit: dict[int, float] = field(default_factory=dict)

    @classmethod
    def initial(cls, rag: Rag, model: EnergyModel) -> "ContrastState":
        state = cls()
        for v, st in rag.stats.items():
            state.internal[v] = 0.0
            state.fit[v] = d_term(model, st, 0.0, external_contrast(rag, (v,)))
        return state


def external_contrast(rag: Rag, members) -> float:
    """Smallest mean gradient over the contours between ``members`` and the rest."""
    members = set(members)
    acc: dict[int, list[float]] = {}
    for u in members:
        for w in rag.adj[u]:
            if w not in members:
                e = rag.edge(u, w)
                a = acc.setdefault(w, [0, 0.0])
                a[0] += e.shared_len
                a[1] += e.grad_sum
    if not acc:
        return math.inf
    return min(g / s for s, g in acc.values())


def internal_contrast(rag: Rag, members, state: ContrastState) -> float:
    """Largest mean gradient over contours that merging ``members`` would remove."""
    members = sorted(set(members))
    best = max(state.internal.get(u, 0.0) for u in members)
    for i, u in enumerate(members):
        for w in members[i + 1:]:
            e = rag.edge(u, w)
            if e is not None:
                best = max(best, e.mean_gradient)
    return best


def region_fit(rag: Rag, v: int, model: EnergyModel, state: ContrastState | None = None) -> float:
    if model.kind == "mumford":
        return rag.stats[v].se
    return state.fit[v]


def pair_gain(a: RegionStats, b: RegionStats) -> float:
    """``n_a n_b |mu_a - mu_b|^2`` computed without cancellation.

    Summed over all pairs of a group and divided by the group area, this is
    the squared-error increase caused by merging the group.
    """
    na, nb = float(a.area), float(b.area)
    diff = nb * np.asarray(a.sum, dtype=np.float64) - na * np.asarray(b.sum, dtype=np.float64)
    return float(np.sum(diff * diff)) / (na * nb)


def scale_of_appearance(d_union: float, d_parts: float, c_union: float, c_parts: float) -> float:
    """Abscissa where the merged line meets the split line, clamped at 0."""
    denom = c_parts - c_union
    if denom <= 0:
        raise NonAdjacentMergeError("merge does not decrease the regulariser")
    return max(0.0, (d_union - d_parts) / denom)


class SubsetChoice(NamedTuple):
    lam: float
    members: tuple[int, ...]


def _check_state(model: EnergyModel, state: ContrastState | None):
    if model.kind == "contrast" and state is None:
        raise ValueError("the contrast energy needs a ContrastState")


class _Neighbourhood:
    """Dense arrays describing a region and its sorted neighbours."""

    def __init__(self, rag: Rag, r: int, pairs_only: bool = False):
        self.r = r
        self.nbrs = sorted(rag.adj[r])
        ids = [r] + self.nbrs
        st = [rag.stats[v] for v in ids]
        n = np.array([s.area for s in st], dtype=np.float64)
        sums = np.array([s.sum for s in st], dtype=np.float64)
        self.area = n
        self.to_centre = np.array([0.0] + [rag.edges[(r, v) if r < v else (v, r)].shared_len
                                           for v in self.nbrs])
        if pairs_only:
            diff = n[1:, None] * sums[0] - n[0] * sums[1:]
            self.q_centre = np.concatenate([[0.0], np.sum(diff * diff, axis=-1) / (n[0] * n[1:])])
            return
        # q[i, j] = pair gain; the formula is symmetric to the last bit
        diff = n[None, :, None] * sums[:, None, :] - n[:, None, None] * sums[None, :, :]
        q = np.sum(diff * diff, axis=-1) / (n[:, None] * n[None, :])
        np.fill_diagonal(q, 0.0)
        pos = {v: i for i, v in enumerate(ids)}
        sh = np.zeros((len(ids), len(ids)))
        for i, v in enumerate(self.nbrs, start=1):
            for w in rag.adj[v]:
                j = pos.get(w)
                if j:  # boundaries with the centre live in to_centre
                    sh[i, j] = rag.edges[(v, w) if v < w else (w, v)].shared_len
        self.q = q
        self.sh = sh
        self.q_centre = q[0]
        self.means = sums / n[:, None]

    def pair_lambdas(self) -> np.ndarray:
        """Scale of appearance of the centre merged with each single neighbour."""
        gain = 0.0 + self.q_centre[1:]
        return np.maximum(0.0, gain / (self.area[0] + self.area[1:]) / (2.0 * self.to_centre[1:]))

    def evaluate(self, masks: np.ndarray) -> np.ndarray:
        """Squared-error scale of appearance for each neighbour-mask row."""
        m = masks.astype(np.float64)
        k, d = m.shape
        area = self.area[0] + np.sum(m * self.area[1:], axis=1)
        gain = np.sum(m * self.q[0, 1:], axis=1)
        internal = np.sum(m * self.to_centre[1:], axis=1)
        for j in range(1, d):
            col = m[:, j]
            if not col.any():
                continue
            gain += col * np.sum(m[:, :j] * self.q[1:j + 1, j + 1], axis=1)
            internal += col * np.sum(m[:, :j] * self.sh[1:j + 1, j + 1], axis=1)
        return np.maximum(0.0, gain / area / (2.0 * internal))

    def key(self, cols) -> tuple:
        """Tie-break key of one subset; bit-identical to ``evaluate`` on its mask."""
        m = np.zeros((1, len(self.nbrs)))
        m[0, cols] = 1.0
        area = self.area[0] + np.sum(m * self.area[1:], axis=1)
        gain = np.sum(m * self.q[0, 1:], axis=1)
        internal = np.sum(m * self.to_centre[1:], axis=1)
        for j in sorted(cols):
            if j:
                gain += np.sum(m[:, :j] * self.q[1:j + 1, j + 1], axis=1)
                internal += np.sum(m[:, :j] * self.sh[1:j + 1, j + 1], axis=1)
        lam = float(np.maximum(0.0, gain / area / (2.0 * internal))[0])
        members = tuple(sorted([self.r] + [self.nbrs[j] for j in cols]))
        return (lam, len(members), members)

    def _extension_bound(self, inc: list[int], free: np.ndarray, t: float, room: int):
        """Lower bound on ``gain(W) - 2 t internal(W)`` over ``W = {r} + inc + T``.

        ``T`` ranges over subsets of ``free`` with at most ``room`` members.  Uses ``gain(W) = min_mu sum n_i
        |mu_i - mu|^2`` and bounds the internal length of ``T`` by a separable
        sum, which leaves a one-dimensional sum of truncated quadratics.
        Returns the bound, an absolute error allowance and the free neighbours
        active at the minimiser (a good candidate extension).
        """
        a = np.array([0] + [j + 1 for j in inc])
        f = free + 1
        n_a = self.area[a].sum()
        mu_a = (self.means[a] * self.area[a, None]).sum(axis=0) / n_a
        sh_f = self.sh[f]
        gain_a = self.q[a][:, a].sum() / 2.0 / n_a
        int_a = self.to_centre[a].sum() + self.sh[a][:, a].sum() / 2.0
        u = self.to_centre[f] + sh_f[:, a].sum(axis=1) + 0.5 * sh_f[:, f].sum(axis=1)
        depth = 2.0 * t * u
        if self.means.shape[1] == 1:
            centres, base, nonneg = self.means[f, 0], float(mu_a[0]), False
        else:
            centres, base, nonneg = np.linalg.norm(self.means[f] - mu_a, axis=1), 0.0, True
        lb, x = _truncated_quadratic_min(n_a, base, gain_a, self.area[f], centres, depth, nonneg)
        if room < np.count_nonzero(depth):
            lb = max(lb, _capped_wells_bound(n_a, base, gain_a, self.area[f], centres, depth,
                                             nonneg, room))
        well = self.area[f] * (x - centres) ** 2 - depth
        act = np.argsort(well, kind="stable")
        act = act[well[act] < 0.0]
        err = 1e-9 * (gain_a + 2.0 * t * (int_a + u.sum())) + 1e-300
        return lb - 2.0 * t * int_a, err, [int(j) for j in free[act]]

    def _twin_classes(self) -> list[list[int]]:
        """Groups of interchangeable neighbours, each sorted by id.

        Neighbours touching no other neighbour and sharing area, sums and
        boundary length with the centre can be swapped without changing any
        score, so only the lowest ids of a group need to be tried first.
        """
        lone = ~self.sh[1:, 1:].any(axis=1)
        groups: dict[tuple, list[int]] = {}
        for j in np.flatnonzero(lone):
            key = (self.area[j + 1], self.to_centre[j + 1], self.means[j + 1].tobytes())
            groups.setdefault(key, []).append(int(j))
        return [g for g in groups.values() if len(g) > 1]

    def search(self, max_card: int | None) -> tuple:
        """Exact best-subset search by branch and bound.

        Agrees with exhaustive enumeration up to rounding; among subsets with
        mathematically equal scores the smaller, then lexicographically
        smaller, one is returned.
        """
        d = len(self.nbrs)
        limit = d if max_card is None else min(d, max_card - 1)
        lam_pairs = self.pair_lambdas()
        order = np.argsort(lam_pairs, kind="stable")
        later = {}
        for group in self._twin_classes():
            for i, j in enumerate(group):
                later[j] = group[i + 1:]
        banned = np.zeros(d, dtype=bool)
        best = self.key([int(order[0])])
        inc: list[int] = []

        def dfs(pos: int):
            nonlocal best
            while pos < d and banned[order[pos]]:
                pos += 1
            if pos == d or len(inc) >= limit:
                return
            free = order[pos:][~banned[order[pos:]]]
            while True:
                t = best[0]
                if len(inc) + 2 > best[1] and t == 0.0:
                    return
                lb, err, act = self._extension_bound(inc, free, t, limit - len(inc))
                if lb >= err:
                    return
                act = act[:limit - len(inc)]
                if not act:
                    break
                cand = self.key(inc + act)
                if not cand < best:
                    break
                best = cand
            j = int(order[pos])
            inc.append(j)
            cand = self.key(inc)
            if cand < best:
                best = cand
            dfs(pos + 1)
            inc.pop()
            twins = [k for k in later.get(j, ()) if not banned[k]]
            banned[twins] = True
            dfs(pos + 1)
            banned[twins] = False

        dfs(0)
        return best


def _truncated_quadratic_min(w0: float, c0: float, const: float, w: np.ndarray, c: np.ndarray,
                             depth: np.ndarray, nonneg: bool) -> float:
    """Global minimum and minimiser of
    ``w0 (x-c0)^2 + const + sum_j min(0, w_j (x-c_j)^2 - depth_j)``.

    ``x`` is real, or restricted to ``x >= 0`` when ``nonneg``.
    """
    keep = depth > 0.0
    w, c, depth = w[keep], c[keep], depth[keep]
    r = np.sqrt(depth / w)
    lo_j, hi_j = c - r, c + r
    cuts = np.concatenate([lo_j, hi_j, [0.0]] if nonneg else [lo_j, hi_j])
    cuts = np.unique(cuts)
    lo = np.concatenate([[-np.inf], cuts])
    hi = np.concatenate([cuts, [np.inf]])
    if nonneg:
        lo = np.maximum(lo, 0.0)
        ok = hi > lo
        lo, hi = lo[ok], hi[ok]
        if lo.size == 0:
            lo, hi = np.array([0.0]), np.array([0.0])
    # representative point of each interval decides which wells are active
    with np.errstate(invalid="ignore"):
        mid = np.where(np.isinf(lo), hi - 1.0, np.where(np.isinf(hi), lo + 1.0, 0.5 * (lo + hi)))
    active = (mid[:, None] > lo_j[None, :]) & (mid[:, None] < hi_j[None, :])
    aw = w0 + active @ w
    ab = w0 * c0 + active @ (w * c)
    x = np.clip(ab / aw, lo, hi)
    val = w0 * (x - c0) ** 2 + const + np.sum(
        active * (w[None, :] * (x[:, None] - c[None, :]) ** 2 - depth[None, :]), axis=1)
    i = int(np.argmin(val))
    return float(val[i]), float(x[i])


def _contrast_lambda(rag: Rag, members, model: EnergyModel, state: ContrastState) -> float:
    internal_len = rag.internal_length(members)
    union = union_stats((rag.stats[v] for v in sorted(members)), internal_len)
    d_union = d_term(model, union, internal_contrast(rag, members, state),
                     external_contrast(rag, members))
    d_parts = sum(state.fit[v] for v in members)
    c_parts = sum(rag.stats[v].perimeter for v in members)
    return scale_of_appearance(d_union, d_parts, union.perimeter, c_parts)


def lambda_plus_subset(rag: Rag, r: int, members, model: EnergyModel = MUMFORD,
                       state: ContrastState | None = None) -> float:
    """Scale of appearance of the union of ``members``, a set centred on ``r``."""
    _check_state(model, state)
    members = set(members)
    if r not in members:
        raise ValueError("the subset must contain its centre region")
    if len(members) < 2:
        raise ValueError("a subset needs at least two regions")
    others = members - {r}
    if not others <= rag.adj[r]:
        raise NonAdjacentMergeError(f"regions {sorted(others - rag.adj[r])} are not adjacent to {r}")
    if model.kind == "contrast":
        return _contrast_lambda(rag, members, model, state)
    hood = _Neighbourhood(rag, r)
    mask = np.array([[v in members for v in hood.nbrs]])
    return float(hood.evaluate(mask)[0])


def lambda_plus_pair(rag: Rag, u: int, v: int, model: EnergyModel = MUMFORD,
                     state: ContrastState | None = None) -> float:
    if u == v:
        raise NonAdjacentMergeError("a region cannot be merged with itself")
    if rag.shared_len(u, v) < 1:
        raise NonAdjacentMergeError(f"regions {u} and {v} are not adjacent")
    _check_state(model, state)
    if model.kind == "contrast":
        return _contrast_lambda(rag, (u, v), model, state)
    a, b = rag.stats[u], rag.stats[v]
    lo, hi = (a, b) if u < v else (b, a)
    gain = 0.0 + pair_gain(lo, hi)
    return max(0.0, gain / (float(a.area) + float(b.area)) / (2.0 * float(rag.shared_len(u, v))))


def _mask_chunks(d: int, max_card: int | None):
    """Yield boolean mask arrays over ``d`` neighbours of size 1..max_card-1."""
    top = d if max_card is None else min(d, max_card - 1)
    if top == d:
        total = 1 << d
        bits = np.arange(d, dtype=np.int64)
        for start in range(1, total, _CHUNK):
            idx = np.arange(start, min(total, start + _CHUNK), dtype=np.int64)
            yield ((idx[:, None] >> bits) & 1).astype(bool)
        return
    for size in range(1, top + 1):
        combos = itertools.combinations(range(d), size)
        while True:
            block = list(itertools.islice(combos, _CHUNK))
            if not block:
                break
            masks = np.zeros((len(block), d), dtype=bool)
            rows = np.repeat(np.arange(len(block)), size)
            masks[rows, np.asarray(block).ravel()] = True
            yield masks


def _subset_count(d: int, max_card: int | None) -> int:
    top = d if max_card is None else min(d, max_card - 1)
    return sum(math.comb(d, s) for s in range(1, top + 1))


def best_subset(rag: Rag, r: int, model: EnergyModel = MUMFORD, max_card: int | None = None,
                state: ContrastState | None = None, method: str = "auto") -> SubsetChoice:
    """Minimal scale of appearance over subsets of ``{r} + neighbours(r)`` containing ``r``.

    ``max_card`` bounds the subset size (``None`` means unbounded).  Ties are
    broken by subset size, then by the sorted member ids.

    ``method`` is ``"enumerate"`` (score every subset), ``"branch"`` (exact
    branch and bound, squared-error energy only) or ``"auto"``, which
    enumerates small neighbourhoods and branches on large ones.  Exhaustive
    unbounded enumeration refuses neighbourhoods above
    ``MAX_ENUMERATED_NEIGHBOURS``.
    """
    _check_state(model, state)
    if method not in ("auto", "enumerate", "branch"):
        raise ValueError(f"unknown search method {method!r}")
    if max_card is not None and max_card < 2:
        raise ValueError("max_card must be at least 2")
    nbrs = sorted(rag.adj[r])
    d = len(nbrs)
    if d == 0:
        raise ValueError(f"region {r} has no neighbour")
    if model.kind == "contrast" or max_card == 2:
        method = "enumerate"
    elif method == "auto":
        method = "enumerate" if _subset_count(d, max_card) <= _ENUMERATE_BUDGET else "branch"
    if method == "branch":
        lam, _, members = _Neighbourhood(rag, r).search(max_card)
        return SubsetChoice(lam, members)
    if d > MAX_ENUMERATED_NEIGHBOURS and (max_card is None or max_card - 1 >= d):
        raise SubsetEnumerationError(
            f"region {r} has {d} neighbours; unbounded subset search is capped at "
            f"{MAX_ENUMERATED_NEIGHBOURS}")

    best: tuple | None = None
    if model.kind == "contrast":
        top = d if max_card is None else min(d, max_card - 1)
        for size in range(1, top + 1):
            for combo in itertools.combinations(nbrs, size):
                members = tuple(sorted((r,) + combo))
                key = (_contrast_lambda(rag, members, model, state), len(members), members)
                if best is None or key < best:
                    best = key
        return SubsetChoice(best[0], best[2])

    if max_card == 2:
        hood = _Neighbourhood(rag, r, pairs_only=True)
        lam = hood.pair_lambdas()
        j = int(np.argmin(lam))  # first minimum is the smallest neighbour id
        return SubsetChoice(float(lam[j]), tuple(sorted((r, nbrs[j]))))

    hood = _Neighbourhood(rag, r)
    for masks in _mask_chunks(d, max_card):
        lam = hood.evaluate(masks)
        lo = lam.min()
        if best is not None and lo > best[0]:
            continue
        tied = np.flatnonzero(lam == lo)
        sizes = masks[tied].sum(axis=1)
        tied = tied[sizes == sizes.min()]
        for row in tied:
            members = tuple(sorted([r] + [nbrs[j] for j in np.flatnonzero(masks[row])]))
            key = (float(lo), len(members), members)
            if best is None or key < best:
                best = key
    return SubsetChoice(best[0], best[2])


def _capped_wells_bound(w0: float, c0: float, const: float, w: np.ndarray, c: np.ndarray,
                        depth: np.ndarray, nonneg: bool, room: int, split: int = 4) -> float:
    """Lower bound on the truncated-quadratic sum when at most ``room`` wells may count.

    On each cell of a partition of the line, every term is bounded by its own
    minimum over the cell and only the ``room`` most negative wells are kept.
    """
    keep = depth > 0.0
    w, c, depth = w[keep], c[keep], depth[keep]
    r = np.sqrt(depth / w)
    pts = np.unique(np.concatenate([c - r, c, c + r, [c0]]))
    if nonneg:
        pts = np.unique(np.concatenate([[0.0], pts[pts > 0.0]]))
    fine = pts[:-1, None] + (pts[1:] - pts[:-1])[:, None] * (np.arange(split + 1) / split)
    lo = np.concatenate([[-np.inf if not nonneg else 0.0], fine[:, :-1].ravel(), [pts[-1]]])
    hi = np.concatenate([[pts[0]], fine[:, 1:].ravel(), [np.inf]])
    if nonneg:
        lo, hi = lo[1:], hi[1:]

    def gap(centre):
        return np.maximum(0.0, np.maximum(lo - centre, centre - hi))

    base = w0 * gap(c0) ** 2 + const
    wells = np.minimum(0.0, w[None, :] * gap(c[:, None]).T ** 2 - depth[None, :])
    kth = min(room, wells.shape[1]) - 1
    if kth < 0:
        return float(base.min())
    lowest = np.partition(wells, kth, axis=1)[:, :kth + 1]
    return float((base + lowest.sum(axis=1)).min())
