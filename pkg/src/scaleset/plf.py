"""Piecewise-linear concave functions of the scale parameter on ``[0, inf)``.

A function is stored as breakpoints ``0 = b0 < b1 < ... < bm`` and, for the
interval starting at each breakpoint, a line ``intercept + slope * lam``.
Slopes strictly decrease from one interval to the next.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

REL_TOL = 1e-12


class SlopeError(ValueError):
    """The line to intersect is not flatter than the function's last piece."""


def _tol(x: float) -> float:
    return REL_TOL * max(1.0, abs(x))


@dataclass(frozen=True)
class PlConcave:
    breakpoints: np.ndarray
    slopes: np.ndarray
    intercepts: np.ndarray

    def __post_init__(self):
        for name in ("breakpoints", "slopes", "intercepts"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        n = self.breakpoints.size
        if n == 0 or self.slopes.size != n or self.intercepts.size != n:
            raise ValueError("breakpoints, slopes and intercepts must be non-empty and aligned")
        if self.breakpoints[0] != 0.0:
            raise ValueError("the first breakpoint must be 0")

    # -- construction ---------------------------------------------------------

    @classmethod
    def line(cls, d: float, c: float) -> "PlConcave":
        if c < 0:
            raise ValueError("slope must be non-negative")
        return cls(np.zeros(1), np.array([float(c)]), np.array([float(d)]))

    @classmethod
    def zero(cls) -> "PlConcave":
        return cls.line(0.0, 0.0)

    @classmethod
    def _canonical(cls, bps, slopes, intercepts) -> "PlConcave":
        """Drop breakpoints between intervals of equal slope."""
        slopes = np.asarray(slopes, dtype=np.float64)
        keep = np.ones(slopes.size, dtype=bool)
        keep[1:] = np.abs(np.diff(slopes)) > REL_TOL * np.maximum(1.0, np.abs(slopes[1:]))
        return cls(np.asarray(bps)[keep], slopes[keep], np.asarray(intercepts)[keep])

    # -- queries --------------------------------------------------------------

    @property
    def last_slope(self) -> float:
        return float(self.slopes[-1])

    def piece_index(self, lam):
        return np.searchsorted(self.breakpoints, lam, side="right") - 1

    def __call__(self, lam):
        lam_arr = np.asarray(lam, dtype=np.float64)
        if np.any(lam_arr < 0):
            raise ValueError("functions are defined on lam >= 0")
        i = self.piece_index(lam_arr)
        out = self.intercepts[i] + self.slopes[i] * lam_arr
        return float(out) if out.ndim == 0 else out

    evaluate = __call__

    def is_concave(self) -> bool:
        return bool(np.all(np.diff(self.slopes) < 0))

    def continuity_gap(self) -> float:
        """Largest jump between adjacent pieces at the interior breakpoints."""
        if self.breakpoints.size == 1:
            return 0.0
        b = self.breakpoints[1:]
        left = self.intercepts[:-1] + self.slopes[:-1] * b
        right = self.intercepts[1:] + self.slopes[1:] * b
        return float(np.max(np.abs(left - right)))

    # -- algebra --------------------------------------------------------------

    def __add__(self, other: "PlConcave") -> "PlConcave":
        merged = np.union1d(self.breakpoints, other.breakpoints)
        keep = np.ones(merged.size, dtype=bool)
        keep[1:] = np.diff(merged) > REL_TOL * np.maximum(1.0, merged[1:])
        bps = merged[keep]
        probe = np.append((bps[:-1] + bps[1:]) / 2.0, bps[-1] + 1.0)
        i = self.piece_index(probe)
        j = other.piece_index(probe)
        return PlConcave._canonical(bps, self.slopes[i] + other.slopes[j],
                                    self.intercepts[i] + other.intercepts[j])

    def min_with_line(self, d: float, c: float) -> tuple["PlConcave", float]:
        """Pointwise minimum with ``d + c*lam`` and the smallest ``lam`` where the line wins.

        The line must be strictly flatter than the last piece, so that it ends
        up below the function and crosses it exactly once.
        """
        if not c < self.last_slope:
            raise SlopeError(f"line slope {c} is not below the last slope {self.last_slope}")
        line = PlConcave.line(d, c)
        if d <= self.intercepts[0]:
            return line, 0.0
        bps = self.breakpoints
        n = bps.size
        # the line minus the function is strictly decreasing; find its zero
        gap = d + c * bps - (self.intercepts + self.slopes * bps)
        k = int(np.argmax(gap <= 0)) - 1 if np.any(gap <= 0) else n - 1
        with np.errstate(over="ignore"):
            cross = (d - self.intercepts[k]) / (self.slopes[k] - c)
        if not np.isfinite(cross):
            # slopes differ by a denormal amount: the line never wins at finite lambda
            return self, math.inf
        if k + 1 < n and abs(cross - bps[k + 1]) <= _tol(bps[k + 1]):
            cross = float(bps[k + 1])
        elif abs(cross - bps[k]) <= _tol(bps[k]):
            cross = float(bps[k])
        if cross <= 0.0:
            return line, 0.0
        keep = bps < cross
        out_b = np.append(bps[keep], cross)
        out_s = np.append(self.slopes[keep], c)
        out_i = np.append(self.intercepts[keep], d)
        return PlConcave._canonical(out_b, out_s, out_i), float(cross)

    def area_below_line(self, d: float, c: float, lo: float, hi: float) -> float:
        """Exact integral of ``(d + c*lam) - f(lam)`` over ``[lo, hi]``."""
        if hi < lo:
            raise ValueError("empty integration range")
        if hi == lo:
            return 0.0
        cuts = self.breakpoints[(self.breakpoints > lo) & (self.breakpoints < hi)]
        edges = np.concatenate([[lo], cuts, [hi]])
        x0, x1 = edges[:-1], edges[1:]
        k = self.piece_index((x0 + x1) / 2.0)
        total = (d - self.intercepts[k]) * (x1 - x0) + (c - self.slopes[k]) * (x1 * x1 - x0 * x0) / 2.0
        return float(np.sum(total))

    def rows(self) -> list[tuple[float, float, float]]:
        """``(lam, value, slope)`` at each breakpoint, for CSV export."""
        return [(float(b), float(i + s * b), float(s))
                for b, s, i in zip(self.breakpoints, self.slopes, self.intercepts)]


def from_line(d: float, c: float) -> PlConcave:
    return PlConcave.line(d, c)


def pl_sum(functions) -> PlConcave:
    total = PlConcave.zero()
    for f in functions:
        total = total + f
    return total
