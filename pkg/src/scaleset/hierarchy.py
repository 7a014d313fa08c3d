"""Merge trees scored by an affine separable energy.

Node ids are ordered so that every child has a smaller id than its parent;
the root is the last node.  Leaves are the regions of the initial partition
(or unions of them once cleaning has absorbed some leaves into their parent).
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .energy import MUMFORD, EnergyModel
from .plf import PlConcave
from .raster import LabelMap, RasterImage
from .regions import RegionStats

MAGIC = b"SSH1"
VERSION = 1
_NO_PARENT = 0xFFFFFFFF
_HEADER = struct.Struct("<4sIIIIIIIdd")
_KINDS = ("mumford", "contrast")


class InvalidHierarchyError(ValueError):
    pass


class CorruptPayloadError(ValueError):
    pass


class VersionMismatchError(ValueError):
    pass


@dataclass
class Hierarchy:
    parent: np.ndarray
    stats: list[RegionStats]
    fit: np.ndarray
    reg: np.ndarray
    base: LabelMap
    owner: np.ndarray
    model: EnergyModel = MUMFORD
    scale: np.ndarray | None = None
    envelopes: list[PlConcave] | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.parent = np.asarray(self.parent, dtype=np.int64)
        self.fit = np.asarray(self.fit, dtype=np.float64)
        self.reg = np.asarray(self.reg, dtype=np.float64)
        self.owner = np.asarray(self.owner, dtype=np.int64)
        if self.scale is not None:
            self.scale = np.asarray(self.scale, dtype=np.float64)
        n = self.parent.size
        if n == 0:
            raise InvalidHierarchyError("empty hierarchy")
        if not (len(self.stats) == self.fit.size == self.reg.size == n):
            raise InvalidHierarchyError("node tables have different lengths")
        if self.parent[-1] != -1 or np.count_nonzero(self.parent == -1) != 1:
            raise InvalidHierarchyError("the last node must be the only root")
        ids = np.arange(n - 1)
        if np.any(self.parent[:-1] <= ids):
            raise InvalidHierarchyError("every child id must be smaller than its parent id")
        self._children = None

    # -- structure ------------------------------------------------------------

    @classmethod
    def from_merges(cls, base: LabelMap, leaf_stats, leaf_fit, merges,
                    model: EnergyModel = MUMFORD) -> "Hierarchy":
        """Assemble a raw merge tree.

        ``merges`` lists ``(children, stats, fit)`` in creation order; node ids
        continue after the leaves.
        """
        stats = list(leaf_stats)
        fit = list(leaf_fit)
        parent = [-1] * len(stats)
        for children, st, d in merges:
            nid = len(stats)
            for ch in children:
                if parent[ch] != -1:
                    raise InvalidHierarchyError(f"node {ch} merged twice")
                parent[ch] = nid
            parent.append(-1)
            stats.append(st)
            fit.append(d)
        reg = [s.perimeter for s in stats]
        owner = np.arange(base.region_count)
        return cls(np.array(parent), stats, np.array(fit), np.array(reg, dtype=np.float64),
                   base, owner, model)

    def __len__(self) -> int:
        return self.parent.size

    @property
    def root(self) -> int:
        return self.parent.size - 1

    @property
    def children(self) -> list[list[int]]:
        if self._children is None:
            kids: list[list[int]] = [[] for _ in range(len(self))]
            for v, p in enumerate(self.parent):
                if p >= 0:
                    kids[p].append(v)
            self._children = kids
        return self._children

    def leaves(self) -> list[int]:
        return [v for v, ch in enumerate(self.children) if not ch]

    @property
    def scored(self) -> bool:
        return self.scale is not None

    def is_persistent(self) -> bool:
        if self.scale is None:
            return False
        nonroot = self.parent >= 0
        return bool(np.all(self.scale[nonroot] < self.scale[self.parent[nonroot]]))

    def lambda_minus(self, v: int) -> float:
        """Scale at which node ``v`` leaves the optimal cuts."""
        p = self.parent[v]
        return np.inf if p < 0 else float(self.scale[p])

    def node_energy(self, nodes, lam: float) -> float:
        nodes = np.asarray(list(nodes), dtype=np.int64)
        return float(np.sum(self.fit[nodes]) + lam * np.sum(self.reg[nodes]))

    def pixel_owner(self) -> np.ndarray:
        """Node owning each pixel at the finest level."""
        return self.owner[self.base.labels]


def _require_scored(h: Hierarchy):
    if h.scale is None or h.envelopes is None:
        raise InvalidHierarchyError("scales have not been assigned")


def assign_scales(h: Hierarchy) -> Hierarchy:
    """Bottom-up scale of appearance of every node.

    Each node's envelope is the optimal-cut energy of its subtree: the sum of
    its children's envelopes, replaced by the node's own line from the point
    where that line becomes lower.
    """
    n = len(h)
    scale = np.zeros(n)
    env: list[PlConcave | None] = [None] * n
    kids = h.children
    for v in range(n):
        if not kids[v]:
            env[v] = PlConcave.line(h.fit[v], h.reg[v])
            continue
        c_children = float(np.sum(h.reg[kids[v]]))
        if not h.reg[v] < c_children:
            raise InvalidHierarchyError(
                f"node {v}: regulariser {h.reg[v]} is not below its children's total {c_children}")
        total = env[kids[v][0]]
        for ch in kids[v][1:]:
            total = total + env[ch]
        env[v], scale[v] = total.min_with_line(h.fit[v], h.reg[v])
    out = replace(h, scale=scale, envelopes=env)
    return out


def clean(h: Hierarchy) -> Hierarchy:
    """Remove every node that appears no earlier than its parent.

    Children of a removed node are reattached to its nearest surviving
    ancestor.  The top-down pass below reaches the same fixpoint as repeated
    single removals.
    """
    _require_scored(h)
    n = len(h)
    survivor = np.empty(n, dtype=np.int64)
    alive = np.zeros(n, dtype=bool)
    for v in range(n - 1, -1, -1):
        p = h.parent[v]
        if p < 0:
            alive[v] = True
            survivor[v] = v
            continue
        anc = survivor[p]
        if h.scale[v] < h.scale[anc]:
            alive[v] = True
            survivor[v] = v
        else:
            survivor[v] = anc
    keep = np.flatnonzero(alive)
    new_id = np.full(n, -1, dtype=np.int64)
    new_id[keep] = np.arange(keep.size)
    parent = np.array([-1 if h.parent[v] < 0 else new_id[survivor[h.parent[v]]] for v in keep],
                      dtype=np.int64)
    return Hierarchy(parent, [h.stats[v] for v in keep], h.fit[keep], h.reg[keep], h.base,
                     new_id[survivor[h.owner]], h.model, h.scale[keep],
                     [h.envelopes[v] for v in keep])


def score(h: Hierarchy) -> Hierarchy:
    """Assign scales and clean: the persistent hierarchy."""
    return clean(assign_scales(h))


@dataclass(frozen=True)
class Cut:
    nodes: tuple[int, ...]
    labels: LabelMap


def cut_from_nodes(h: Hierarchy, nodes) -> Cut:
    """Label map induced by a set of nodes forming a cut."""
    nodes = tuple(sorted(int(v) for v in nodes))
    assign = np.full(len(h), -1, dtype=np.int64)
    assign[list(nodes)] = np.arange(len(nodes))
    for v in range(len(h) - 1, -1, -1):
        p = h.parent[v]
        if assign[v] < 0 and p >= 0:
            assign[v] = assign[p]
    per_pixel = assign[h.pixel_owner()]
    if np.any(per_pixel < 0):
        raise InvalidHierarchyError("nodes do not cover the image")
    return Cut(nodes, LabelMap(per_pixel, len(nodes)))


def optimal_cut(h: Hierarchy, lam: float) -> Cut:
    """Top-down: keep the first node on each branch that has appeared at ``lam``."""
    _require_scored(h)
    if lam < 0:
        raise ValueError("lam must be non-negative")
    n = len(h)
    kids = h.children
    below = np.zeros(n, dtype=bool)  # inside a selected subtree
    picked = []
    for v in range(n - 1, -1, -1):
        p = h.parent[v]
        if p >= 0 and below[p]:
            below[v] = True
            continue
        if h.scale[v] <= lam or not kids[v]:
            picked.append(v)
            below[v] = True
    return cut_from_nodes(h, picked)


def render_cut(h: Hierarchy, cut: Cut) -> RasterImage:
    """Paint each pixel with the mean colour of its cut region, from node statistics."""
    means = np.array([h.stats[v].mean for v in cut.nodes], dtype=np.float64)
    return RasterImage(means[cut.labels.labels])


def energy_curve(h: Hierarchy) -> PlConcave:
    _require_scored(h)
    return h.envelopes[h.root]


def lambda_max(h: Hierarchy) -> float:
    _require_scored(h)
    return float(h.scale[h.root])


# -- persistence ---------------------------------------------------------------

def serialize(h: Hierarchy, path) -> None:
    ch = h.stats[0].sum.size
    n = len(h)
    header = _HEADER.pack(MAGIC, VERSION, h.base.width, h.base.height, ch, n,
                          h.base.region_count, _KINDS.index(h.model.kind),
                          h.model.center, h.model.steepness)
    parents = np.where(h.parent < 0, _NO_PARENT, h.parent).astype("<u4")
    scale = np.full(n, np.nan) if h.scale is None else h.scale
    table = np.empty((n, ch + 6), dtype="<f8")
    for v, st in enumerate(h.stats):
        table[v, 0] = st.area
        table[v, 1:1 + ch] = st.sum
        table[v, 1 + ch] = st.sumsq
        table[v, 2 + ch] = st.perimeter
    table[:, 3 + ch] = h.fit
    table[:, 4 + ch] = h.reg
    table[:, 5 + ch] = scale
    Path(path).write_bytes(b"".join([
        header,
        h.base.labels.astype("<u4").tobytes(),
        h.owner.astype("<u4").tobytes(),
        parents.tobytes(),
        table.tobytes(),
    ]))


def deserialize(path) -> Hierarchy:
    buf = Path(path).read_bytes()
    if len(buf) < 4 or buf[:3] != MAGIC[:3]:
        raise CorruptPayloadError(f"{path}: not a hierarchy file")
    if buf[:4] != MAGIC:
        raise VersionMismatchError(f"{path}: unsupported container {buf[:4]!r}")
    if len(buf) < _HEADER.size:
        raise CorruptPayloadError(f"{path}: truncated header")
    (_, version, width, height, ch, n, n_base, kind, center,
     steepness) = _HEADER.unpack_from(buf)
    if version != VERSION:
        raise VersionMismatchError(f"{path}: version {version}, expected {VERSION}")
    if kind >= len(_KINDS) or ch not in (1, 3) or n == 0 or n_base == 0:
        raise CorruptPayloadError(f"{path}: inconsistent header")
    sizes = [4 * width * height, 4 * n_base, 4 * n, 8 * n * (ch + 6)]
    if len(buf) != _HEADER.size + sum(sizes):
        raise CorruptPayloadError(f"{path}: payload is {len(buf)} bytes, expected "
                                  f"{_HEADER.size + sum(sizes)}")
    pos = _HEADER.size
    chunks = []
    for size in sizes:
        chunks.append(buf[pos:pos + size])
        pos += size
    labels = np.frombuffer(chunks[0], "<u4").astype(np.int64).reshape(height, width)
    owner = np.frombuffer(chunks[1], "<u4").astype(np.int64)
    raw_parent = np.frombuffer(chunks[2], "<u4").astype(np.int64)
    table = np.frombuffer(chunks[3], "<f8").reshape(n, ch + 6)
    parent = np.where(raw_parent == _NO_PARENT, -1, raw_parent)
    if labels.max() >= n_base or owner.max() >= n:
        raise CorruptPayloadError(f"{path}: ids out of range")
    stats = [RegionStats(int(r[0]), r[1:1 + ch].copy(), float(r[1 + ch]), int(r[2 + ch]))
             for r in table]
    scale = table[:, 5 + ch].copy()
    model = EnergyModel(_KINDS[kind], center, steepness)
    try:
        h = Hierarchy(parent, stats, table[:, 3 + ch].copy(), table[:, 4 + ch].copy(),
                      LabelMap(labels, int(n_base)), owner, model)
    except InvalidHierarchyError as exc:
        raise CorruptPayloadError(f"{path}: {exc}") from None
    if np.all(np.isnan(scale)):
        return h
    rescored = assign_scales(h)
    # cached envelopes are rebuilt; stored scales stay authoritative
    return replace(rescored, scale=scale)


def export_csv(h: Hierarchy, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "parent", "lambda_plus", "area"])
        for v in range(len(h)):
            lam = "" if h.scale is None else repr(float(h.scale[v]))
            w.writerow([v, int(h.parent[v]), lam, h.stats[v].area])
