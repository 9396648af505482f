"""Convex envelope: bridge geometry, underestimation, decomposition."""

from datetime import date

import numpy as np
import pytest

from taxopt import (
    AssetPosition,
    TaxLot,
    TaxParameters,
    UnsupportedShapeError,
    approximate_tax,
    build_separable_cost,
    convex_envelope,
    envelope_bridge,
    envelope_decompose,
    liability_curve,
)
from taxopt.piecewise import PiecewiseQuadratic, quadratic

PARAMS = TaxParameters()
ASOF = date(2019, 6, 3)


def kinked_example():
    """f(x) = x^2 + x for x < 0, x^2 for x >= 0 on [-2, 2].

    Common tangent has slope 1/2, bridge [-1/4, 1/4], line x/2 - 1/16.
    """
    return PiecewiseQuadratic([-2.0, 0.0, 2.0], [(1, 1, 0), (1, 0, 0)])


def two_lot_position():
    return AssetPosition(
        "XYZ",
        price=100.0,
        lots=(
            TaxLot("A", 100.0, 90.0, date(2016, 5, 1)),
            TaxLot("B", 50.0, 120.0, date(2017, 2, 1)),
        ),
    )


def random_halfline_convex(rng, scale=10.0):
    """Random piecewise quadratic, convex on each side of zero."""

    def branch(lo, hi):
        n_pieces = int(rng.integers(1, 4))
        breaks = np.sort(rng.uniform(lo, hi, n_pieces - 1))
        breaks = np.concatenate([[lo], breaks, [hi]])
        slopes = np.sort(rng.uniform(-3, 3, n_pieces * 2))  # nondecreasing derivative
        return breaks, slopes.reshape(n_pieces, 2)

    lo, hi = -scale * rng.uniform(0.5, 1.5), scale * rng.uniform(0.5, 1.5)
    value0 = rng.uniform(-5, 5)
    pieces = []
    all_breaks = []
    sb, ss = branch(lo, 0.0)
    bb, bs = branch(0.0, hi)
    # integrate derivative, sell side built rightward then shifted to hit value0
    for side_breaks, side_slopes in ((sb, ss), (bb, bs)):
        for p in range(len(side_slopes)):
            x0, x1 = side_breaks[p], side_breaks[p + 1]
            d0, d1 = side_slopes[p]
            a = (d1 - d0) / (2.0 * (x1 - x0))
            b = d0 - 2.0 * a * x0
            pieces.append([a, b, 0.0])
        all_breaks.append(side_breaks)
    breaks = np.concatenate([all_breaks[0], all_breaks[1][1:]])
    coeffs = np.array(pieces)
    # stitch constants for continuity, anchored at f(0) = value0
    zero_idx = len(ss)
    coeffs[zero_idx, 2] = value0
    for p in range(zero_idx + 1, len(coeffs)):
        x = breaks[p]
        prev = (coeffs[p - 1, 0] * x + coeffs[p - 1, 1]) * x + coeffs[p - 1, 2]
        coeffs[p, 2] = prev - (coeffs[p, 0] * x + coeffs[p, 1]) * x
    coeffs[zero_idx - 1, 2] = value0
    for p in range(zero_idx - 2, -1, -1):
        x = breaks[p + 1]
        nxt = (coeffs[p + 1, 0] * x + coeffs[p + 1, 1]) * x + coeffs[p + 1, 2]
        coeffs[p, 2] = nxt - (coeffs[p, 0] * x + coeffs[p, 1]) * x
    return PiecewiseQuadratic(breaks, coeffs)


class TestBridgeExample:
    def test_bridge_endpoints_and_line(self):
        bridge = envelope_bridge(kinked_example())
        assert bridge.sell_point == pytest.approx(-0.25, abs=1e-12)
        assert bridge.buy_point == pytest.approx(0.25, abs=1e-12)
        assert bridge.slope == pytest.approx(0.5, abs=1e-12)
        assert bridge.intercept == pytest.approx(-1.0 / 16.0, abs=1e-12)

    def test_envelope_value_at_zero(self):
        env = convex_envelope(kinked_example())
        assert env.evaluate(0.0) == pytest.approx(-0.0625, abs=1e-9)

    def test_envelope_matches_function_outside_bridge(self):
        f = kinked_example()
        env = convex_envelope(f)
        for x in (-2.0, -1.0, -0.3, 0.3, 1.0, 2.0):
            assert env.evaluate(x) == pytest.approx(f.evaluate(x), abs=1e-12)

    def test_convex_function_is_its_own_envelope(self):
        f = quadratic(1.0, 0.0, 0.0, -2.0, 2.0)
        assert convex_envelope(f) is f

    def test_nonconvex_branch_rejected(self):
        f = PiecewiseQuadratic([-1.0, 1.0], [(-1.0, 0.0, 0.0)])
        with pytest.raises(UnsupportedShapeError):
            convex_envelope(f)

    def test_unbounded_domain_rejected(self):
        # raw liability curves extend to +inf; envelopes need a finite window
        curve = liability_curve(two_lot_position(), ASOF, PARAMS)
        with pytest.raises(UnsupportedShapeError):
            convex_envelope(curve)
        assert convex_envelope(curve.cut(curve.lo, 20000.0)) is not None


class TestDecompose:
    def test_midpoint_of_bridge(self):
        f = kinked_example()
        dec = envelope_decompose(f, convex_envelope(f), 0.0)
        assert dec.theta == pytest.approx(0.5, abs=1e-12)
        assert dec.buy_point == pytest.approx(0.25, abs=1e-12)
        assert dec.sell_point == pytest.approx(-0.25, abs=1e-12)

    def test_outside_bridge_buy_side(self):
        f = kinked_example()
        dec = envelope_decompose(f, convex_envelope(f), 1.0)
        assert dec.theta == 1.0
        assert dec.buy_point == 1.0

    def test_outside_bridge_sell_side(self):
        f = kinked_example()
        dec = envelope_decompose(f, convex_envelope(f), -2.0)
        assert dec.theta == 0.0
        assert dec.sell_point == -2.0

    def test_recomposition_identity(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            f = random_halfline_convex(rng)
            env = convex_envelope(f)
            for x in rng.uniform(f.lo, f.hi, 6):
                dec = envelope_decompose(f, env, float(x))
                mix = dec.theta * f.evaluate(dec.buy_point) + (
                    1.0 - dec.theta) * f.evaluate(dec.sell_point)
                assert mix == pytest.approx(env.evaluate(float(x)), abs=1e-9)
                recon = dec.theta * dec.buy_point + (1.0 - dec.theta) * dec.sell_point
                assert recon == pytest.approx(float(x), abs=1e-9)


class TestEnvelopeProperties:
    def test_random_functions(self):
        rng = np.random.default_rng(42)
        for _ in range(60):
            f = random_halfline_convex(rng)
            env = convex_envelope(f)
            grid = np.linspace(f.lo, f.hi, 2001)
            fv, ev = f.evaluate(grid), env.evaluate(grid)
            assert np.all(ev <= fv + 1e-9)
            # discrete convexity on the uniform grid
            assert np.all(ev[:-2] + ev[2:] >= 2.0 * ev[1:-1] - 1e-9)
            bridge = envelope_bridge(f)
            if bridge is not None:
                for p in (bridge.sell_point, bridge.buy_point):
                    assert env.evaluate(p) == pytest.approx(f.evaluate(p), abs=1e-9)

    def test_idempotence(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            f = random_halfline_convex(rng)
            env = convex_envelope(f)
            again = convex_envelope(env)
            assert again.equals(env, tol=1e-9)


class TestSeparableCost:
    def test_term_by_term_example(self):
        liab = liability_curve(two_lot_position(), ASOF, PARAMS)
        cost = build_separable_cost(
            alpha=0.0, gamma_risk=1.0, specific_var=1e-7, holding=15000.0,
            benchmark_holding=15000.0, gamma_tc=1.0, spread=0.0005, gamma_tax=1.0,
            liability=liab, buy_cap=1_000_000.0,
        )
        assert cost.evaluate(-5000.0) == pytest.approx(2.5 + 2.5 - 238.0)

    def test_zero_weights_zero_cost(self):
        liab = liability_curve(two_lot_position(), ASOF, PARAMS)
        cost = build_separable_cost(
            alpha=0.0, gamma_risk=0.0, specific_var=1.0, holding=15000.0,
            benchmark_holding=0.0, gamma_tc=0.0, spread=0.0005, gamma_tax=0.0,
            liability=liab, buy_cap=1000.0,
        )
        grid = np.linspace(-15000.0, 1000.0, 101)
        assert np.allclose(cost.evaluate(grid), 0.0, atol=1e-12)

    def test_gain_only_cost_is_convex(self):
        pos = AssetPosition("G", 100.0, (TaxLot("a", 100, 80.0, date(2017, 1, 1)),))
        liab = liability_curve(pos, ASOF, PARAMS)
        cost = build_separable_cost(
            alpha=0.001, gamma_risk=2e-4, specific_var=1e-3, holding=pos.holding,
            benchmark_holding=9000.0, gamma_tc=1.0, spread=0.0005, gamma_tax=1.0,
            liability=liab, buy_cap=50000.0,
        )
        assert cost.is_convex()
        assert convex_envelope(cost) is cost

    def test_loss_lot_gives_negative_envelope_at_zero(self):
        liab = liability_curve(two_lot_position(), ASOF, PARAMS)
        cost = build_separable_cost(
            alpha=0.0, gamma_risk=2e-7, specific_var=1.0, holding=15000.0,
            benchmark_holding=15000.0, gamma_tc=1.0, spread=0.0005, gamma_tax=1.0,
            liability=liab, buy_cap=1_000_000.0,
        )
        env = convex_envelope(cost)
        assert cost.evaluate(0.0) == 0.0
        assert env.evaluate(0.0) < -1e-3
        # brute-force lower hull on a fine grid agrees
        grid = np.linspace(cost.lo, 40000.0, 10_001)
        vals = cost.evaluate(grid)
        from taxopt.oracle import lower_convex_hull
        hull = lower_convex_hull(grid, vals)
        sub = (grid >= cost.lo) & (grid <= 40000.0)
        assert np.all(np.abs(env.evaluate(grid[sub]) - hull[sub]) < 1.0)


class TestApproximateTax:
    def test_gain_only_unchanged(self):
        pos = AssetPosition("G", 100.0, (TaxLot("a", 100, 80.0, date(2017, 1, 1)),))
        liab = liability_curve(pos, ASOF, PARAMS)
        cost = build_separable_cost(
            alpha=0.0, gamma_risk=2e-4, specific_var=1e-3, holding=pos.holding,
            benchmark_holding=10000.0, gamma_tc=1.0, spread=0.0005, gamma_tax=1.0,
            liability=liab, buy_cap=50000.0,
        )
        approx = approximate_tax(liab, cost, convex_envelope(cost), 1.0)
        assert approx.equals(liab.cut(cost.lo, cost.hi), tol=1e-9)

    def test_negative_inside_bridge_exact_outside(self):
        liab = liability_curve(two_lot_position(), ASOF, PARAMS)
        cost = build_separable_cost(
            alpha=0.0, gamma_risk=2e-7, specific_var=1.0, holding=15000.0,
            benchmark_holding=15000.0, gamma_tc=1.0, spread=0.0005, gamma_tax=2.0,
            liability=liab, buy_cap=1_000_000.0,
        )
        env = convex_envelope(cost)
        approx = approximate_tax(liab, cost, env, 2.0)
        assert approx.evaluate(0.0) == pytest.approx(
            (env.evaluate(0.0) - cost.evaluate(0.0)) / 2.0)
        assert approx.evaluate(0.0) < 0.0
        bridge = envelope_bridge(cost)
        x_out = bridge.sell_point - 1000.0
        assert approx.evaluate(x_out) == pytest.approx(liab.evaluate(x_out), abs=1e-9)
        grid = np.linspace(approx.lo, approx.hi, 4001)
        assert np.all(approx.evaluate(grid) <= liab.evaluate(grid) + 1e-9)

    def test_zero_gamma_rejected(self):
        liab = liability_curve(two_lot_position(), ASOF, PARAMS)
        with pytest.raises(ValueError):
            approximate_tax(liab, liab, liab, 0.0)
