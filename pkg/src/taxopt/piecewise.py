"""Univariate piecewise-quadratic functions on an interval.

A function is a sorted breakpoint array plus one (a, b, c) coefficient row per
piece, valued a*x^2 + b*x + c on [breaks[p], breaks[p+1]]. The last breakpoint
may be +inf. Pieces tile the domain and the function is continuous at interior
breakpoints to 1e-9 (scaled); breakpoints closer than 1e-9 are merged.

These carry the per-asset trade cost, its convex envelope, and the exact and
approximate tax liability curves. Values are immutable; arithmetic returns new
objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

BREAK_MERGE_TOL = 1e-9
CONTINUITY_TOL = 1e-9


def _eval_rows(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    return (coeffs[:, 0] * x + coeffs[:, 1]) * x + coeffs[:, 2]


@dataclass(frozen=True)
class PiecewiseQuadratic:
    """Piecewise-quadratic function; see module docstring for conventions."""

    breaks: np.ndarray
    coeffs: np.ndarray  # shape (pieces, 3) rows (a, b, c)

    def __post_init__(self):
        breaks = np.asarray(self.breaks, dtype=float)
        coeffs = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        if breaks.ndim != 1 or len(breaks) < 2:
            raise ValueError("need at least one piece")
        if coeffs.shape != (len(breaks) - 1, 3):
            raise ValueError(
                f"coefficient shape {coeffs.shape} does not match {len(breaks) - 1} pieces"
            )
        if not np.all(np.diff(breaks) > 0):
            raise ValueError("breakpoints must be strictly increasing")
        if math.isinf(breaks[0]):
            raise ValueError("domain must be bounded below")
        # continuity at interior breakpoints, tolerance scaled by value size
        interior = breaks[1:-1]
        if len(interior):
            left = _eval_rows(coeffs[:-1], interior)
            right = _eval_rows(coeffs[1:], interior)
            scale = 1.0 + np.maximum(np.abs(left), np.abs(right))
            worst = np.max(np.abs(left - right) / scale)
            if worst > CONTINUITY_TOL:
                raise ValueError(f"discontinuous at a breakpoint (residual {worst:.2e})")
        object.__setattr__(self, "breaks", breaks)
        object.__setattr__(self, "coeffs", coeffs)
        self.breaks.setflags(write=False)
        self.coeffs.setflags(write=False)

    @property
    def lo(self) -> float:
        return float(self.breaks[0])

    @property
    def hi(self) -> float:
        return float(self.breaks[-1])

    @property
    def num_pieces(self) -> int:
        return len(self.coeffs)

    def _piece_index(self, x: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.breaks, x, side="right") - 1
        return np.clip(idx, 0, self.num_pieces - 1)

    def __call__(self, x):
        return self.evaluate(x)

    def evaluate(self, x):
        """Value at x; raises DomainError outside [lo, hi] beyond tolerance."""
        arr = np.asarray(x, dtype=float)
        tol = BREAK_MERGE_TOL * (1.0 + np.abs(arr))
        if np.any(arr < self.lo - tol) or np.any(arr > self.hi + tol):
            raise DomainError(f"evaluation outside domain [{self.lo}, {self.hi}]")
        clipped = np.atleast_1d(
            np.clip(arr, self.lo, None if math.isinf(self.hi) else self.hi))
        vals = _eval_rows(self.coeffs[self._piece_index(clipped)], clipped)
        return float(vals[0]) if arr.ndim == 0 else vals.reshape(arr.shape)

    def derivative(self, x: float, side: str = "right") -> float:
        """One-sided derivative at x (side in {'left', 'right'})."""
        if side not in ("left", "right"):
            raise ValueError(f"side must be left or right, got {side!r}")
        if side == "left":
            idx = int(np.searchsorted(self.breaks, x, side="left")) - 1
        else:
            idx = int(np.searchsorted(self.breaks, x, side="right")) - 1
        idx = min(max(idx, 0), self.num_pieces - 1)
        a, b, _ = self.coeffs[idx]
        return float(2.0 * a * x + b)

    def cut(self, lo: float, hi: float) -> "PiecewiseQuadratic":
        """Restriction to [lo, hi] (must lie within the current domain)."""
        tol = BREAK_MERGE_TOL * (1.0 + abs(lo) + abs(hi))
        if lo < self.lo - tol or hi > self.hi + tol or lo >= hi:
            raise DomainError(f"cannot cut [{self.lo}, {self.hi}] to [{lo}, {hi}]")
        lo, hi = max(lo, self.lo), min(hi, self.hi)
        keep = (self.breaks > lo + BREAK_MERGE_TOL) & (self.breaks < hi - BREAK_MERGE_TOL)
        breaks = np.concatenate([[lo], self.breaks[keep], [hi]])
        first = int(np.clip(np.searchsorted(self.breaks, lo, side="right") - 1, 0,
                            self.num_pieces - 1))
        idx = np.concatenate([[first],
                              np.flatnonzero(keep)]) if keep.any() else np.array([first])
        return PiecewiseQuadratic(breaks, self.coeffs[idx])

    def _merged_breaks(self, other: "PiecewiseQuadratic") -> np.ndarray:
        merged = np.union1d(self.breaks, other.breaks)
        scale = 1.0 + np.abs(merged[:-1])
        keep = np.concatenate([[True], np.diff(merged) > BREAK_MERGE_TOL * scale])
        return merged[keep]

    def _binary(self, other, sign: float) -> "PiecewiseQuadratic":
        tol = BREAK_MERGE_TOL * (1.0 + abs(self.lo) + abs(self.hi))
        if abs(self.lo - other.lo) > tol or (self.hi != other.hi
                                             and abs(self.hi - other.hi) > tol):
            raise DomainError(
                f"domain mismatch: [{self.lo}, {self.hi}] vs [{other.lo}, {other.hi}]"
            )
        breaks = self._merged_breaks(other)
        mids = breaks[:-1] + 0.5 * np.minimum(np.diff(breaks), 1.0)
        coeffs = self.coeffs[self._piece_index(mids)] + sign * other.coeffs[
            other._piece_index(mids)]
        return PiecewiseQuadratic(breaks, coeffs)

    def __add__(self, other):
        if not isinstance(other, PiecewiseQuadratic):
            return NotImplemented
        return self._binary(other, 1.0)

    def __sub__(self, other):
        if not isinstance(other, PiecewiseQuadratic):
            return NotImplemented
        return self._binary(other, -1.0)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return PiecewiseQuadratic(self.breaks, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def shift(self, offset: float) -> "PiecewiseQuadratic":
        """Add a constant."""
        coeffs = self.coeffs.copy()
        coeffs[:, 2] += offset
        return PiecewiseQuadratic(self.breaks, coeffs)

    def equals(self, other: "PiecewiseQuadratic", tol: float = 1e-9) -> bool:
        """Piecewise equality to tolerance (same domain, same values)."""
        dtol = BREAK_MERGE_TOL * (1.0 + abs(self.lo) + abs(self.hi))
        if abs(self.lo - other.lo) > dtol:
            return False
        if self.hi != other.hi and abs(self.hi - other.hi) > dtol:
            return False
        breaks = self._merged_breaks(other)
        finite_hi = breaks[-1] if math.isfinite(breaks[-1]) else breaks[-2] + 1.0
        probes = np.concatenate([breaks[:-1], 0.5 * (breaks[:-1] + np.minimum(breaks[1:],
                                                                              finite_hi)),
                                 [finite_hi]])
        va, vb = self.evaluate(probes), other.evaluate(probes)
        return bool(np.all(np.abs(va - vb) <= tol * (1.0 + np.abs(va))))

    def is_convex(self, tol: float = 1e-9) -> bool:
        """Convex iff curvature is nonnegative and slopes never decrease."""
        if np.any(self.coeffs[:, 0] < -tol):
            return False
        interior = self.breaks[1:-1]
        if not len(interior):
            return True
        left = 2.0 * self.coeffs[:-1, 0] * interior + self.coeffs[:-1, 1]
        right = 2.0 * self.coeffs[1:, 0] * interior + self.coeffs[1:, 1]
        scale = 1.0 + np.maximum(np.abs(left), np.abs(right))
        return bool(np.all(right >= left - tol * scale))


def constant(value: float, lo: float, hi: float) -> PiecewiseQuadratic:
    return PiecewiseQuadratic([lo, hi], [(0.0, 0.0, value)])


def quadratic(a: float, b: float, c: float, lo: float, hi: float) -> PiecewiseQuadratic:
    return PiecewiseQuadratic([lo, hi], [(a, b, c)])


def scaled_abs(scale: float, lo: float, hi: float) -> PiecewiseQuadratic:
    """scale * |x| on [lo, hi], keeping 0 as a breakpoint when interior."""
    if lo < 0.0 < hi:
        return PiecewiseQuadratic([lo, 0.0, hi],
                                  [(0.0, -scale, 0.0), (0.0, scale, 0.0)])
    sign = 1.0 if lo >= 0 else -1.0
    return PiecewiseQuadratic([lo, hi], [(0.0, sign * scale, 0.0)])
