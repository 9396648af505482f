"""PiecewiseQuadratic representation and arithmetic."""

import math

import numpy as np
import pytest

from taxopt import DomainError, PiecewiseQuadratic
from taxopt.piecewise import constant, quadratic, scaled_abs


class TestConstruction:
    def test_rejects_gap_mismatch(self):
        with pytest.raises(ValueError):
            PiecewiseQuadratic([0.0, 1.0], [(0, 0, 0), (0, 0, 1)])

    def test_rejects_discontinuity(self):
        with pytest.raises(ValueError):
            PiecewiseQuadratic([0.0, 1.0, 2.0], [(0, 0, 0), (0, 0, 0.5)])

    def test_rejects_unsorted_breaks(self):
        with pytest.raises(ValueError):
            PiecewiseQuadratic([1.0, 0.0], [(0, 0, 0)])

    def test_allows_infinite_upper_end(self):
        f = PiecewiseQuadratic([0.0, math.inf], [(0, 1, 0)])
        assert f.evaluate(1e9) == 1e9


class TestEvaluate:
    def test_zero_function(self):
        f = constant(0.0, -1.0, 1.0)
        assert f.evaluate(0.5) == 0.0

    def test_square(self):
        f = quadratic(1.0, 0.0, 0.0, -2.0, 2.0)
        assert f.evaluate(-1.5) == pytest.approx(2.25)

    def test_outside_domain_raises(self):
        f = constant(0.0, -1.0, 1.0)
        with pytest.raises(DomainError):
            f.evaluate(1.5)

    def test_vectorized(self):
        f = scaled_abs(2.0, -1.0, 1.0)
        x = np.array([-0.5, 0.0, 0.25])
        assert np.allclose(f.evaluate(x), [1.0, 0.0, 0.5])

    def test_breakpoint_continuity_either_side(self):
        f = PiecewiseQuadratic([-1.0, 0.0, 1.0], [(1, 0, 0), (0, 0, 0)])
        assert f.evaluate(0.0) == pytest.approx(0.0)


class TestArithmetic:
    def test_add_merges_breakpoints(self):
        f = scaled_abs(1.0, -2.0, 2.0)
        g = PiecewiseQuadratic([-2.0, 1.0, 2.0], [(0, 0, 1), (0, 0, 1)])
        s = f + g
        assert s.evaluate(-1.0) == pytest.approx(2.0)
        assert s.evaluate(1.5) == pytest.approx(2.5)
        assert set(np.round(s.breaks, 9)) == {-2.0, 0.0, 1.0, 2.0}

    def test_scale_and_subtract(self):
        f = quadratic(1.0, 0.0, 0.0, -1.0, 1.0)
        g = 2.0 * f - f
        assert g.equals(f)

    def test_domain_mismatch_raises(self):
        with pytest.raises(DomainError):
            constant(0.0, -1.0, 1.0) + constant(0.0, -1.0, 2.0)

    def test_nearby_breakpoints_merge(self):
        f = PiecewiseQuadratic([0.0, 1.0, 2.0], [(0, 0, 0), (0, 0, 0)])
        g = PiecewiseQuadratic([0.0, 1.0 + 1e-12, 2.0], [(0, 1, 0), (0, 2, -1.0 - 1e-12)])
        s = f + g
        assert s.num_pieces == 2


class TestCut:
    def test_restriction_values(self):
        f = scaled_abs(1.0, -2.0, 2.0)
        g = f.cut(-1.0, 0.5)
        assert g.lo == -1.0 and g.hi == 0.5
        assert g.evaluate(-0.5) == pytest.approx(0.5)

    def test_cut_outside_raises(self):
        with pytest.raises(DomainError):
            constant(0.0, 0.0, 1.0).cut(-1.0, 1.0)


class TestShape:
    def test_is_convex(self):
        assert scaled_abs(1.0, -1.0, 1.0).is_convex()
        assert not scaled_abs(-1.0, -1.0, 1.0).is_convex()
        assert not PiecewiseQuadratic([-1.0, 1.0], [(-1, 0, 0)]).is_convex()

    def test_derivative_sides(self):
        f = scaled_abs(3.0, -1.0, 1.0)
        assert f.derivative(0.0, "left") == pytest.approx(-3.0)
        assert f.derivative(0.0, "right") == pytest.approx(3.0)
