from __future__ import annotations

import itertools

import numpy as np
import pytest

from scaleset.raster import RasterImage, pixel_grid_partition
from scaleset.regions import build_rag


def image(rows, channels=1) -> RasterImage:
    """Grey image from nested lists (rows of values)."""
    arr = np.asarray(rows, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return RasterImage(arr)


def grid_rag(img: RasterImage):
    lm = pixel_grid_partition(img)
    return lm, build_rag(lm, img)


def cut_energies(h) -> np.ndarray:
    """(D, C) totals of every cut of ``h``, enumerated exhaustively."""
    kids = h.children
    memo = {}
    for v in range(len(h)):
        own = np.array([[h.fit[v], h.reg[v]]])
        if not kids[v]:
            memo[v] = own
            continue
        acc = memo[kids[v][0]]
        for ch in kids[v][1:]:
            acc = (acc[:, None, :] + memo[ch][None, :, :]).reshape(-1, 2)
        memo[v] = np.vstack([own, acc])
    return memo[h.root]


def all_cuts(h) -> list[tuple[int, ...]]:
    """Every cut of ``h`` as a sorted node tuple."""
    kids = h.children

    def rec(v):
        yield (v,)
        if kids[v]:
            for combo in itertools.product(*(list(rec(c)) for c in kids[v])):
                yield tuple(sorted(itertools.chain.from_iterable(combo)))

    return list(rec(h.root))


@pytest.fixture
def two_pixels():
    return image([[0, 10]])


@pytest.fixture
def three_pixels():
    return image([[5, 0, 5]])


# one verdict line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
