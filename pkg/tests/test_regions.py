import numpy as np
import pytest

from scaleset import regions
from scaleset.raster import LabelMap, pixel_grid_partition
from scaleset.regions import DisconnectedGroupError, RegionStats

from conftest import grid_rag, image


def test_stats_of_two_pixel_region():
    img = image([[0, 10]])
    st = regions.compute_stats(LabelMap(np.zeros((1, 2), dtype=np.int64), 1), img)[0]
    assert (st.area, float(st.sum[0]), st.sumsq, st.perimeter) == (2, 10.0, 100.0, 6)
    assert st.se == pytest.approx(50.0, abs=1e-12)


def test_stats_constant_and_single_pixel():
    img = image([[4, 4], [4, 4]])
    st = regions.compute_stats(LabelMap(np.zeros((2, 2), dtype=np.int64), 1), img)[0]
    assert st.se == 0.0 and st.perimeter == 8
    px = regions.compute_stats(pixel_grid_partition(img), img)
    assert all(s.perimeter == 4 and s.se == 0.0 for s in px)


def test_perimeter_matches_boundary_count():
    rng = np.random.default_rng(1)
    for _ in range(20):
        labels = rng.integers(0, 3, size=(5, 6))
        from scaleset.raster import split_label_map
        lm = split_label_map(labels)
        img = image(np.zeros((5, 6)))
        stats = regions.compute_stats(lm, img)
        padded = np.pad(lm.labels, 1, constant_values=-1)
        for r, st in enumerate(stats):
            mask = padded == r
            edges = 0
            for axis in (0, 1):
                for shift in (1, -1):
                    edges += np.count_nonzero(mask & (np.roll(padded, shift, axis) != r))
            assert st.perimeter == edges


def test_rag_two_pixels():
    _, rag = grid_rag(image([[0, 10]]))
    assert list(rag.edges) == [(0, 1)]
    e = rag.edge(0, 1)
    assert (e.shared_len, e.grad_sum) == (1, 10.0)


def test_rag_single_region_and_path():
    img = image([[1, 1]])
    rag = regions.build_rag(LabelMap(np.zeros((1, 2), dtype=np.int64), 1), img)
    assert not rag.edges
    _, path = grid_rag(image([[1, 2, 3]]))
    assert sorted(path.edges) == [(0, 1), (1, 2)]


def test_colour_gradient_is_euclidean():
    img = image(np.array([[[0, 0, 0], [3, 4, 0]]], dtype=float))
    _, rag = grid_rag(img)
    assert rag.edge(0, 1).grad_sum == pytest.approx(5.0)


def test_merge_stats():
    a = RegionStats(1, np.array([0.0]), 0.0, 4)
    b = RegionStats(1, np.array([10.0]), 100.0, 4)
    m = regions.merge_stats(a, b, 1)
    assert m.perimeter == 6 and m.area == 2
    same = regions.merge_stats(RegionStats(2, np.array([6.0]), 20.0, 6),
                               RegionStats(1, np.array([3.0]), 10.0, 4), 1)
    assert same.se == pytest.approx(2.0 + 1.0)


def test_contract_examples():
    _, rag = grid_rag(image([[1, 2, 3]]))
    small, mapping = regions.contract(rag, [{0, 1}])
    assert len(small.stats) == 2 and len(small.edges) == 1
    assert mapping[0] == mapping[1] != mapping[2]
    whole, _ = regions.contract(rag, [{0, 1, 2}])
    assert len(whole.edges) == 0
    assert next(iter(whole.stats.values())).perimeter == 2 * (3 + 1)
    with pytest.raises(DisconnectedGroupError):
        regions.contract(rag, [{0, 2}])


def test_merge_inplace_self_forbidden():
    _, rag = grid_rag(image([[1, 2]]))
    with pytest.raises(ValueError):
        rag.merge_inplace([0], 5)
