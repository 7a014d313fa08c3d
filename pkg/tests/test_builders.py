import numpy as np
import pytest

from scaleset import builders as B
from scaleset import energy as E
from scaleset import hierarchy as H
from scaleset import synthetic
from scaleset.raster import LabelMap, flat_zone_partition, pixel_grid_partition
from scaleset.regions import build_rag

from conftest import grid_rag, image


def naive_matching(keys, endpoints):
    """Local-minimum edge selection iterated with explicit neighbourhood sets."""
    m = len(endpoints)
    gamma = [{f for f in range(m) if set(endpoints[f]) & set(endpoints[e])} for e in range(m)]
    p, q = set(), set(range(m))
    first, it = None, 0
    while True:
        new_p = p | {e for e in q if keys[e] == min(keys[f] for f in gamma[e] & q)}
        new_q = {e for e in range(m) if not gamma[e] & new_p}
        if it > 0 and new_p == p and new_q == q:
            return p, first, it
        p, q = new_p, new_q
        it += 1
        if first is None:
            first = set(p)


def test_mm_round_path_example():
    ms = B.mm_round([1, 2, 3], [(0, 1), (1, 2), (2, 3)])
    assert np.flatnonzero(ms.p).tolist() == [0, 2]
    assert np.flatnonzero(ms.first).tolist() == [0]
    assert ms.iterations == 2


def test_mm_round_single_edge_and_star():
    one = B.mm_round([5], [(0, 1)])
    assert one.p.tolist() == [True] and one.iterations == 1
    star = B.mm_round([1, 2, 3], [(0, 1), (0, 2), (0, 3)])
    assert np.flatnonzero(star.p).tolist() == [0]


def test_mm_round_matches_naive_iteration():
    rng = np.random.default_rng(0)
    for trial in range(300):
        n = int(rng.integers(2, 20))
        pairs = sorted({tuple(sorted(rng.choice(n, 2, replace=False).tolist()))
                        for _ in range(int(rng.integers(1, 3 * n)))})
        lam = rng.integers(0, 4, size=len(pairs)).astype(float)  # many ties
        keys = [(lam[i], a, b) for i, (a, b) in enumerate(pairs)]
        ms = B.mm_round(keys, pairs)
        p, first, it = naive_matching(keys, pairs)
        assert set(np.flatnonzero(ms.p).tolist()) == p
        assert set(np.flatnonzero(ms.first).tolist()) == first
        assert ms.iterations == it
        assert B.is_maximal_matching(pairs, ms.p)
        assert B.is_matching(pairs, ms.first)


def test_parallel_levels_on_path():
    img = image([[0, 1, 3, 6]])
    lm, rag = grid_rag(img)
    lams = [E.lambda_plus_pair(rag, a, b) for a, b in sorted(rag.edges)]
    assert lams == [0.25, 1.0, 2.25]
    _, recs, levels = B.build_parallel(rag, lm)
    assert (levels[0].vertices_before, levels[0].vertices_after) == (4, 2)
    _, recs1, levels1 = B.build_parallel(rag, lm, first_iteration_only=True)
    assert (levels1[0].vertices_before, levels1[0].vertices_after) == (4, 3)


def test_two_vertices_mm_equals_mm1(two_pixels):
    lm = pixel_grid_partition(two_pixels)
    a = B.build(two_pixels, lm, B.BuilderConfig("mm")).hierarchy
    b = B.build(two_pixels, lm, B.BuilderConfig("mm1")).hierarchy
    assert np.array_equal(a.parent, b.parent) and np.array_equal(a.scale, b.scale)


def test_sm2_two_pixels(two_pixels):
    res = B.build(two_pixels, pixel_grid_partition(two_pixels), B.BuilderConfig("sm2"))
    assert len(res.records) == 1
    assert res.records[0].lam == pytest.approx(25.0, rel=1e-12)
    curve = H.energy_curve(res.hierarchy)
    assert curve.breakpoints.tolist() == [0.0, 25.0]


def test_sm_merges_three_pixels_at_once(three_pixels):
    lm = pixel_grid_partition(three_pixels)
    sm = B.build(three_pixels, lm, B.BuilderConfig("sm"))
    assert len(sm.records) == 1 and sm.records[0].members == (0, 1, 2)
    assert sm.records[0].lam == pytest.approx(150.0 / 36.0, rel=1e-12)
    sm2 = B.build(three_pixels, lm, B.BuilderConfig("sm2"))
    assert sm2.records[0].lam == pytest.approx(6.25, rel=1e-12)
    assert len(sm2.raw) > len(sm.raw)


def test_single_region_input():
    img = image([[4, 4]])
    lm = LabelMap(np.zeros((1, 2), dtype=np.int64), 1)
    for name in B.HEURISTICS:
        res = B.build(img, lm, B.BuilderConfig.parse(name, k=3))
        assert len(res.hierarchy) == 1 and res.metrics["merges"] == 0


def test_constant_image_collapses():
    img = image(np.full((3, 3), 9.0))
    for name in B.HEURISTICS:
        res = B.build(img, pixel_grid_partition(img), B.BuilderConfig.parse(name, k=3))
        assert res.raw.scale.max() == 0.0
        curve = H.energy_curve(res.hierarchy)
        assert curve.intercepts.tolist() == [0.0] and curve.slopes.tolist() == [12.0]


def test_determinism():
    img = synthetic.smooth_noisy_image(np.random.default_rng(1), 24, 24)
    lm = flat_zone_partition(img)
    for name in ("sm2", "sm5", "mm"):
        a = B.build(img, lm, B.BuilderConfig.parse(name)).hierarchy
        b = B.build(img, lm, B.BuilderConfig.parse(name)).hierarchy
        assert np.array_equal(a.parent, b.parent) and np.array_equal(a.scale, b.scale)


def test_metrics_and_decimation():
    img = synthetic.smooth_noisy_image(np.random.default_rng(2), 24, 24)
    lm = flat_zone_partition(img)
    res = B.build(img, lm, B.BuilderConfig("mm"))
    m = res.metrics
    for key in ("levels", "vertex_ratio_per_level", "edge_ratio_per_level", "merges", "wall_ms"):
        assert key in m
    assert all(1.0 < r <= 2.0 for r in m["vertex_ratio_per_level"])
    assert m["initial_regions"] == lm.region_count


def test_config_parsing():
    assert B.BuilderConfig.parse("sm5").max_card == 5
    assert B.BuilderConfig.parse("SM5").label == "SM5"
    assert B.BuilderConfig.parse("sm2").max_card == 2
    assert B.BuilderConfig.parse("sm").max_card is None
    with pytest.raises(B.ConfigError):
        B.BuilderConfig("smk", 1)
    with pytest.raises(B.ConfigError):
        B.BuilderConfig("xyz")


def test_contrast_energy_builds_valid_hierarchies():
    rng = np.random.default_rng(9)
    model = E.EnergyModel("contrast")
    for _ in range(10):
        img = synthetic.random_small_image(rng, 5, 4, levels=6)
        for name in ("sm2", "sm", "mm", "mm1"):
            res = B.build(img, pixel_grid_partition(img), B.BuilderConfig.parse(name, model=model))
            assert res.hierarchy.is_persistent()
            assert res.hierarchy.model.kind == "contrast"


def test_sequential_first_merge_is_global_minimum():
    rng = np.random.default_rng(10)
    for _ in range(30):
        img = synthetic.random_small_image(rng, 5, 4, levels=8)
        lm = pixel_grid_partition(img)
        rag = build_rag(lm, img)
        if not rag.edges:
            continue
        lowest = min(E.lambda_plus_pair(rag, a, b) for a, b in rag.edges)
        res = B.build(img, lm, B.BuilderConfig("sm2"))
        assert res.records[0].lam == lowest
