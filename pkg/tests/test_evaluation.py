import numpy as np
import pytest

from scaleset import builders as B
from scaleset import evaluation as ev
from scaleset import hierarchy as H
from scaleset import synthetic
from scaleset.raster import LabelMap, pixel_grid_partition

from conftest import image


def two_pixel_h(two_pixels):
    return B.build(two_pixels, pixel_grid_partition(two_pixels), B.BuilderConfig("sm2")).hierarchy


def test_two_pixel_normalisation(two_pixels):
    nc = ev.normalize(two_pixel_h(two_pixels))
    assert (nc.d_image, nc.c_image, nc.lambda_max) == (pytest.approx(50.0), 6.0, pytest.approx(25.0))
    assert nc.e_image == pytest.approx(3.0)
    assert nc.at(0.5) == pytest.approx(0.8, rel=1e-12)
    assert ev.lower_bound(0.5, 3.0) == pytest.approx(0.8, rel=1e-12)
    assert nc.value[-1] == pytest.approx(1.0, rel=1e-12)


def test_bound_identity():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 1, 500)
    e = rng.uniform(0, 50, 500)
    assert np.allclose(ev.lower_bound(x, e), x * (1 + e) / (1 + x * e), rtol=1e-12)
    assert ev.lower_bound(0.0, 7.0) == 0.0


def test_bounds_hold_and_control_is_flagged():
    rng = np.random.default_rng(1)
    for _ in range(20):
        img = synthetic.random_small_image(rng, 5, 4, levels=8)
        h = B.build(img, pixel_grid_partition(img), B.BuilderConfig("mm1")).hierarchy
        try:
            nc = ev.normalize(h)
        except ev.UndefinedNormalizationError:
            continue
        assert ev.check_bounds(nc).ok
        bad = ev.NormalizedCurve(nc.x, nc.value.copy(), nc.lower)
        bad.value[len(bad.value) // 2] = 1.1
        report = ev.check_bounds(bad)
        assert not report.ok and report.upper_violation == pytest.approx(0.1, abs=1e-9)


def test_constant_image_has_no_normalisation():
    img = image([[3, 3]])
    h = B.build(img, pixel_grid_partition(img), B.BuilderConfig("sm2")).hierarchy
    with pytest.raises(ev.UndefinedNormalizationError):
        ev.normalize(h)
    assert ev.quality_area(h) == 0.0


def test_mean_curve():
    x = np.linspace(0, 1, 3)
    a = ev.NormalizedCurve(x, np.array([0.0, 0.8, 1.0]), None)
    b = ev.NormalizedCurve(x, np.array([0.0, 0.6, 1.0]), None)
    assert ev.mean_curve([a]) is a
    assert np.array_equal(ev.mean_curve([a, a]).value, a.value)
    assert ev.mean_curve([a, b]).value[1] == pytest.approx(0.7)


def test_quality_area(two_pixels):
    h = two_pixel_h(two_pixels)
    assert ev.quality_area(h) == pytest.approx(625.0, rel=1e-12)
    single = image([[1, 1]])
    hs = B.build(single, LabelMap(np.zeros((1, 2), dtype=np.int64), 1), B.BuilderConfig("sm2"))
    assert ev.quality_area(hs.hierarchy) == 0.0


def test_quality_area_survives_round_trip(tmp_path):
    img = synthetic.random_small_image(np.random.default_rng(2), 5, 4, levels=8)
    h = B.build(img, pixel_grid_partition(img), B.BuilderConfig("sm")).hierarchy
    H.serialize(h, tmp_path / "h.ssh")
    assert ev.quality_area(H.deserialize(tmp_path / "h.ssh")) == ev.quality_area(h)


def test_quality_area_matches_dense_integral():
    rng = np.random.default_rng(3)
    for _ in range(10):
        img = synthetic.random_small_image(rng, 5, 4, levels=8)
        h = B.build(img, pixel_grid_partition(img), B.BuilderConfig("sm2")).hierarchy
        lmax = H.lambda_max(h)
        if lmax == 0:
            continue
        lam = np.linspace(0, lmax, 200001)
        gap = h.fit[h.root] + lam * h.reg[h.root] - H.energy_curve(h)(lam)
        assert ev.quality_area(h) == pytest.approx(np.trapezoid(gap, lam), rel=1e-6)
