import itertools
import math

import numpy as np
import pytest

from negrate.config import SolverConfig
from negrate.exceptions import DomainError
from negrate.kim.solver import KimMethod, kim_boundary
from negrate.pricing.blackscholes import MarketParams, OptionKind, european_price
from negrate.pricing.bounds import (
    BarrierStyle,
    BoundKind,
    CapOptionParams,
    barrier_price,
    barrier_sensitivities,
    boundary_bound,
)
from negrate.pricing.fdm import fd_boundary
from negrate.pricing.qdplus import sqrt_time_grid


def _barrier(kind, strike, barrier, rebate=3.0):
    market = MarketParams(spot=100.0, strike=strike, rate=0.08, dividend_yield=0.04, vol=0.25, maturity=0.5, kind=kind)
    return CapOptionParams(market=market, barrier=barrier, rebate=rebate)


@pytest.mark.parametrize(
    "kind, style, strike, barrier, expected",
    [
        (OptionKind.call, BarrierStyle.down_out, 90.0, 95.0, 9.0246),
        (OptionKind.call, BarrierStyle.down_out, 100.0, 95.0, 6.7924),
        (OptionKind.call, BarrierStyle.down_out, 110.0, 95.0, 4.8759),
        (OptionKind.call, BarrierStyle.up_out, 90.0, 105.0, 2.6789),
        (OptionKind.put, BarrierStyle.down_out, 90.0, 95.0, 2.2798),
        (OptionKind.put, BarrierStyle.up_out, 110.0, 105.0, 7.5187),
    ],
)
def test_knock_out_values_with_rebate(kind, style, strike, barrier, expected):
    assert barrier_price(_barrier(kind, strike, barrier), style) == pytest.approx(expected, abs=1e-3)


def test_spot_on_the_barrier_pays_the_rebate():
    c = _barrier(OptionKind.call, 100.0, 100.0)
    assert barrier_price(c, BarrierStyle.down_out) == 3.0
    close = CapOptionParams(market=c.market.replace(spot=120.0 * (1 - 1e-9)), barrier=120.0)
    assert barrier_price(close, BarrierStyle.up_out) == pytest.approx(20.0, abs=1e-4)


def test_remote_barrier_gives_the_european_price():
    c = _barrier(OptionKind.call, 100.0, 1e4, rebate=0.0)
    assert barrier_price(c, BarrierStyle.up_out) == pytest.approx(european_price(c.market), abs=1e-8)


def test_spot_beyond_the_barrier():
    c = _barrier(OptionKind.put, 110.0, 105.0)
    with pytest.raises(DomainError):
        barrier_price(CapOptionParams(market=c.market.replace(spot=106.0), barrier=105.0), BarrierStyle.up_out)
    with pytest.raises(DomainError):
        CapOptionParams(market=c.market, barrier=0.0)


def test_default_rebate_is_the_exercise_value():
    c = CapOptionParams(market=_barrier(OptionKind.put, 100.0, 80.0).market, barrier=80.0)
    assert c.rebate == 20.0


@pytest.mark.parametrize(
    "kind, style, rate, dividend_yield, vol, barrier",
    [
        (OptionKind.put, BarrierStyle.down_out, 0.02, 0.04, 0.40, 80.0),
        (OptionKind.call, BarrierStyle.up_out, 0.02, 0.04, 0.40, 130.0),
        (OptionKind.put, BarrierStyle.down_out, -0.005, -0.01, 0.08, 80.0),
        (OptionKind.put, BarrierStyle.up_out, -0.005, -0.01, 0.08, 70.0),
    ],
)
def test_barrier_sensitivities_match_finite_differences(kind, style, rate, dividend_yield, vol, barrier):
    spot = 90.0 if style is BarrierStyle.down_out else 60.0
    if kind is OptionKind.call:
        spot = 110.0
    market = MarketParams(spot=spot, strike=100.0, rate=rate, dividend_yield=dividend_yield, vol=vol, maturity=1.0, kind=kind)

    def value(level, s=spot):
        return barrier_price(CapOptionParams(market=market.replace(spot=s), barrier=level), style)

    def slope(level, s=spot):
        return barrier_sensitivities(CapOptionParams(market=market.replace(spot=s), barrier=level), style)[0]

    h = 1e-5 * barrier
    d_h, d_hh, d_sh = barrier_sensitivities(CapOptionParams(market=market, barrier=barrier), style)
    assert d_h == pytest.approx((value(barrier + h) - value(barrier - h)) / (2 * h), rel=1e-5, abs=1e-9)
    assert d_hh == pytest.approx((slope(barrier + h) - slope(barrier - h)) / (2 * h), rel=1e-5, abs=1e-9)
    k = 1e-5 * spot
    assert d_sh == pytest.approx((slope(barrier, spot + k) - slope(barrier, spot - k)) / (2 * k), rel=1e-5, abs=1e-9)


def test_put_upper_bound_starts_at_its_limit(make_market):
    p = make_market(rate=0.02, dividend_yield=0.04, vol=0.25, maturity=1.0)
    curve = boundary_bound(p, BoundKind.put_upper, sqrt_time_grid(1.0, 12))
    assert curve.values[0] == pytest.approx(50.0)
    assert np.all(np.isfinite(curve.values))
    assert np.all((curve.values > 0) & (curve.values <= 50.0 + 1e-9))


def test_negative_rate_bounds_enclose_the_boundary(make_market):
    p = make_market(maturity=10.0)
    times = sqrt_time_grid(10.0, 16)
    upper = boundary_bound(p, BoundKind.put_upper, times)
    lower = boundary_bound(p, BoundKind.put_lower, times)
    kim = kim_boundary(p, KimMethod.fp_b_prime, SolverConfig())
    assert np.all(np.isfinite(upper.values)) and np.all(np.isfinite(lower.values))
    assert np.all(upper.values <= 100.0 + 1e-9)
    assert np.all(lower.values >= 50.0 - 1e-9)
    assert float(upper(10.0)) >= kim.upper_at(0.0) - 1.0
    assert float(lower(10.0)) <= kim.lower_at(0.0) + 1.0


def test_bound_regimes(make_market):
    with pytest.raises(DomainError):
        boundary_bound(make_market(rate=-0.01, dividend_yield=-0.005), BoundKind.put_upper, [0.0, 1.0])
    with pytest.raises(DomainError):
        boundary_bound(make_market(rate=0.02, dividend_yield=0.04), BoundKind.put_lower, [0.0, 1.0])
    with pytest.raises(DomainError):
        boundary_bound(make_market(rate=0.04, dividend_yield=0.02), BoundKind.call_upper_lowerbound, [0.0, 1.0])
    with pytest.raises(DomainError):
        boundary_bound(make_market(), BoundKind.put_upper, [1.0, 0.5])


def test_call_lower_bound_sits_above_the_strike(make_market):
    p = make_market(rate=0.04, dividend_yield=0.02, vol=0.25, maturity=1.0, kind="call")
    curve = boundary_bound(p, BoundKind.call_lower, sqrt_time_grid(1.0, 8))
    assert curve.reference_level == pytest.approx(200.0)
    finite = curve.values[np.isfinite(curve.values)]
    assert np.all(finite >= 100.0)


def _monte_carlo(c, style, paths=100_000, steps=100, seed=7):
    """Knock-out value with a Brownian bridge crossing test between dates.

    Returns the estimate and its standard error.
    """
    p = c.market
    rng = np.random.default_rng(seed)
    dt = p.maturity / steps
    drift = (p.rate - p.dividend_yield - 0.5 * p.vol**2) * dt
    step_vol = p.vol * math.sqrt(dt)
    level = math.log(c.barrier)
    x = np.full(paths, math.log(p.spot))
    alive = np.ones(paths, dtype=bool)
    discounted = np.zeros(paths)
    for i in range(steps):
        following = x + drift + step_vol * rng.standard_normal(paths)
        gap = np.maximum((x - level) * (following - level), 0.0)
        crossed = rng.random(paths) < np.exp(-2.0 * gap / step_vol**2)
        hit = alive & crossed
        discounted[hit] = c.rebate * math.exp(-p.rate * (i + 0.5) * dt)
        alive &= ~crossed
        x = following
    terminal = np.exp(x[alive])
    sign = 1.0 if p.kind is OptionKind.call else -1.0
    discounted[alive] = np.maximum(sign * (terminal - p.strike), 0.0) * math.exp(-p.rate * p.maturity)
    return float(np.mean(discounted)), float(np.std(discounted) / math.sqrt(paths))


@pytest.mark.parametrize(
    "kind, style, spot, barrier, rate, dividend_yield, vol",
    [
        (OptionKind.call, BarrierStyle.down_out, 100.0, 95.0, 0.08, 0.04, 0.25),
        (OptionKind.put, BarrierStyle.down_out, 90.0, 80.0, -0.005, -0.01, 0.20),
        (OptionKind.put, BarrierStyle.up_out, 60.0, 70.0, -0.005, -0.01, 0.20),
    ],
)
def test_barrier_price_against_simulation(kind, style, spot, barrier, rate, dividend_yield, vol):
    market = MarketParams(spot=spot, strike=100.0, rate=rate, dividend_yield=dividend_yield, vol=vol, maturity=1.0, kind=kind)
    c = CapOptionParams(market=market, barrier=barrier)
    estimate, error = _monte_carlo(c, style)
    assert barrier_price(c, style) == pytest.approx(estimate, abs=4.0 * error + 0.02)


BOUND_CASES = list(
    itertools.product(
        (0.08, 0.15),
        (1.0, 5.0),
        ((-0.005, -0.01), (-0.01, -0.03), (-0.002, -0.006), (-0.01, -0.02), (-0.005, -0.02)),
    )
)


@pytest.mark.slow
@pytest.mark.parametrize("vol, maturity, rates", BOUND_CASES)
def test_bounds_enclose_the_finite_difference_boundary(make_market, vol, maturity, rates):
    rate, dividend_yield = rates
    p = make_market(rate=rate, dividend_yield=dividend_yield, vol=vol, maturity=maturity)
    times = sqrt_time_grid(maturity, 8)
    reference = fd_boundary(p, 400)
    upper = boundary_bound(p, BoundKind.put_upper, times)
    lower = boundary_bound(p, BoundKind.put_lower, times)
    # half a percent of the strike covers the finite difference space cell
    slack = 0.5
    for t in times:
        fd_upper, fd_lower = reference.upper_at(t), reference.lower_at(t)
        if not fd_upper > fd_lower:
            continue
        bound = float(upper(maturity - t))
        if math.isfinite(bound):
            assert bound >= fd_upper - slack
        bound = float(lower(maturity - t))
        if math.isfinite(bound):
            assert bound <= fd_lower + slack
