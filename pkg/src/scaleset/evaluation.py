"""Normalised optimal-cut energies and hierarchy quality measures.

The optimal-cut energy is divided by the energy of the single-region
partition and plotted against ``x = lam / lam_max``.  Any hierarchy gives a
curve inside ``[lower(x), 1]`` with ``lower(x) = 1 + (x - 1) / (1 + x * E_I)``
and ``E_I = lam_max * C_I / D_I``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hierarchy import Hierarchy, energy_curve, lambda_max
from .plf import PlConcave

DEFAULT_SAMPLES = 256
BOUND_TOL = 1e-9


class UndefinedNormalizationError(ValueError):
    pass


@dataclass(frozen=True)
class NormalizedCurve:
    x: np.ndarray
    value: np.ndarray
    lower: np.ndarray | None
    lambda_max: float | None = None
    d_image: float | None = None
    c_image: float | None = None
    curve: PlConcave | None = None

    @property
    def e_image(self) -> float | None:
        if self.lambda_max is None:
            return None
        return self.lambda_max * self.c_image / self.d_image

    def at(self, x) -> np.ndarray:
        """Exact normalised energy at arbitrary ``x`` (needs the source curve)."""
        if self.curve is None:
            return np.interp(x, self.x, self.value)
        lam = np.asarray(x, dtype=np.float64) * self.lambda_max
        return self.curve(lam) / (self.d_image + lam * self.c_image)


def lower_bound(x, e_image: float):
    x = np.asarray(x, dtype=np.float64)
    return 1.0 + (x - 1.0) / (1.0 + x * e_image)


def uniform_grid(samples: int = DEFAULT_SAMPLES) -> np.ndarray:
    return np.linspace(0.0, 1.0, samples)


def normalize(h: Hierarchy, curve: PlConcave | None = None,
              samples: int = DEFAULT_SAMPLES) -> NormalizedCurve:
    """Sample the normalised energy on a uniform grid plus the curve's breakpoints.

    The coarsest partition's energy uses the root's own fit and regulariser
    (the image squared error and perimeter under the piecewise-constant model).
    """
    curve = energy_curve(h) if curve is None else curve
    lmax = lambda_max(h)
    d_image = float(h.fit[h.root])
    c_image = float(h.reg[h.root])
    if d_image <= 0.0:
        raise UndefinedNormalizationError("image energy is zero (constant image)")
    if lmax <= 0.0:
        raise UndefinedNormalizationError("hierarchy reduces to one region at every scale")
    x = np.union1d(uniform_grid(samples), curve.breakpoints[curve.breakpoints <= lmax] / lmax)
    x = x[(x >= 0.0) & (x <= 1.0)]
    lam = x * lmax
    lam[-1] = lmax
    value = curve(lam) / (d_image + lam * c_image)
    e_image = lmax * c_image / d_image
    return NormalizedCurve(x, value, lower_bound(x, e_image), lmax, d_image, c_image, curve)


@dataclass(frozen=True)
class BoundsReport:
    max_violation: float
    lower_violation: float
    upper_violation: float
    endpoint_error: float
    worst_x: float

    @property
    def ok(self) -> bool:
        return self.max_violation <= BOUND_TOL


def check_bounds(nc: NormalizedCurve) -> BoundsReport:
    """Measure how far samples fall outside ``[lower(x), 1]``; nothing is raised."""
    if nc.lower is None:
        raise ValueError("curve carries no per-image bound")
    below = np.maximum(0.0, nc.lower - nc.value)
    above = np.maximum(0.0, nc.value - 1.0)
    end = np.flatnonzero(nc.x == 1.0)
    endpoint = float(abs(nc.value[end[0]] - 1.0)) if end.size else float("inf")
    worst = np.maximum(below, above)
    i = int(np.argmax(worst))
    return BoundsReport(max(float(worst[i]), endpoint), float(below.max()), float(above.max()),
                        endpoint, float(nc.x[i]))


def mean_curve(curves) -> NormalizedCurve:
    """Pointwise mean; curves on different grids are compared on the uniform grid."""
    curves = list(curves)
    if not curves:
        raise ValueError("no curves to average")
    if len(curves) == 1:
        return curves[0]
    same = all(c.x.shape == curves[0].x.shape and np.array_equal(c.x, curves[0].x)
               for c in curves)
    if same:
        x = curves[0].x
        values = np.mean([c.value for c in curves], axis=0)
    else:
        x = uniform_grid()
        values = np.mean([c.at(x) for c in curves], axis=0)
    return NormalizedCurve(x, values, None)


def quality_area(h: Hierarchy) -> float:
    """Area between the coarsest partition's energy line and the optimal-cut curve."""
    lmax = lambda_max(h)
    if lmax <= 0.0:
        return 0.0
    return energy_curve(h).area_below_line(float(h.fit[h.root]), float(h.reg[h.root]), 0.0, lmax)


def summary(h: Hierarchy) -> dict:
    out = {"lambda_max": lambda_max(h), "quality_area": quality_area(h),
           "E_I": None, "bound_max_violation": None}
    try:
        nc = normalize(h)
    except UndefinedNormalizationError:
        return out
    out["E_I"] = nc.e_image
    out["bound_max_violation"] = check_bounds(nc).max_violation
    return out
