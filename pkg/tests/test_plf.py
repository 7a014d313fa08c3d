import numpy as np
import pytest

from scaleset.plf import PlConcave, SlopeError, pl_sum

from conftest import image


def random_concave(rng, pieces=None, scale=100.0):
    """Concave function built as the minimum of random lines (the oracle keeps the lines)."""
    k = int(rng.integers(1, 7)) if pieces is None else pieces
    slopes = np.sort(rng.uniform(0.0, 20.0, size=k))[::-1]
    f = PlConcave.line(rng.uniform(0.0, scale), slopes[0])
    lines = [(f.intercepts[0], slopes[0])]
    for c in slopes[1:]:
        d = f(0.0) + rng.uniform(1.0, scale)
        if c < f.last_slope:
            f, _ = f.min_with_line(d, c)
            lines.append((d, c))
    return f, lines


def lines_min(lines, lam):
    return np.min([d + c * lam for d, c in lines], axis=0)


def test_line_examples():
    assert PlConcave.zero()(5.0) == 0.0
    assert PlConcave.line(50, 6)(25.0) == 200.0
    assert PlConcave.line(0, 8)(0.0) == 0.0
    with pytest.raises(ValueError):
        PlConcave.line(1, 2)(-1.0)


def test_sum_examples():
    rng = np.random.default_rng(0)
    f, _ = random_concave(rng)
    g = f + PlConcave.zero()
    assert np.array_equal(g.breakpoints, f.breakpoints) and np.array_equal(g.slopes, f.slopes)
    two = PlConcave.line(0, 4) + PlConcave.line(0, 4)
    assert two.breakpoints.tolist() == [0.0] and two.slopes.tolist() == [8.0]


def test_min_with_line_examples():
    out, cross = PlConcave.line(0, 8).min_with_line(50, 6)
    assert cross == 25.0
    assert out.breakpoints.tolist() == [0.0, 25.0]
    assert out(10.0) == 80.0 and out(30.0) == 230.0
    low, at_zero = PlConcave.line(5, 8).min_with_line(3, 6)
    assert at_zero == 0.0 and low(7.0) == 3 + 42
    with pytest.raises(SlopeError):
        PlConcave.line(0, 6).min_with_line(50, 6)


def test_crossing_on_existing_breakpoint_is_not_duplicated():
    f, _ = PlConcave.line(0, 10).min_with_line(20, 6)  # kink at 5, value 50
    g, cross = f.min_with_line(40, 8 - 6)  # 40 + 2*5 = 50: meets f at its kink
    assert cross == 5.0
    assert g.breakpoints.tolist() == [0.0, 5.0]
    g2, cross2 = f.min_with_line(45, 1)  # 45 + 1*5 = 50, same point, flatter
    assert cross2 == 5.0 and np.unique(g2.breakpoints).size == g2.breakpoints.size


def test_area_examples():
    assert PlConcave.line(0, 8).area_below_line(50, 6, 0, 25) == pytest.approx(625.0, rel=1e-12)
    assert PlConcave.line(3, 2).area_below_line(3, 2, 0, 9) == 0.0


def test_continuity_at_breakpoints():
    rng = np.random.default_rng(1)
    for _ in range(50):
        f, _ = random_concave(rng)
        assert f.continuity_gap() <= 1e-9 * max(1.0, np.abs(f.intercepts).max())
        assert f.is_concave()


def test_single_line_crossing_closed_form():
    rng = np.random.default_rng(2)
    for _ in range(200):
        d1, c1 = rng.uniform(0, 50), rng.uniform(1, 20)
        c2 = rng.uniform(0, c1 - 0.1)
        d2 = d1 + rng.uniform(0.1, 100)
        _, cross = PlConcave.line(d1, c1).min_with_line(d2, c2)
        assert cross == pytest.approx((d2 - d1) / (c1 - c2), rel=1e-12)


def test_dense_oracle_small():
    rng = np.random.default_rng(3)
    lam = np.linspace(0, 60, 1000)
    for _ in range(50):
        f, lf = random_concave(rng)
        g, lg = random_concave(rng)
        assert np.allclose((f + g)(lam), lines_min(lf, lam) + lines_min(lg, lam), rtol=1e-9)
        assert np.allclose(pl_sum([f, g])(lam), (f + g)(lam), rtol=1e-12)


def test_rows_for_csv():
    f, _ = PlConcave.line(0, 8).min_with_line(50, 6)
    assert f.rows() == [(0.0, 0.0, 8.0), (25.0, 200.0, 6.0)]


def test_nearly_parallel_line_never_wins():
    f = PlConcave.line(0.0, 5e-324)
    g, cross = f.min_with_line(1.0, 0.0)
    assert cross == float("inf")
    assert g(1e6) == f(1e6)
