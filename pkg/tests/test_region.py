import pytest

from negrate.exceptions import DomainError
from negrate.pricing.blackscholes import OptionKind
from negrate.pricing.region import (
    asymptotic_boundaries,
    battauz_condition,
    classify,
    maturity_limits,
    reference_levels,
)


@pytest.mark.parametrize(
    "r, q, never, double",
    [
        (-0.01, -0.005, True, False),
        (-0.005, -0.01, False, True),
        (0.02, 0.04, False, False),
        (0.0, 0.01, True, False),
        (-0.01, 0.02, True, False),
        (0.05, -0.01, False, False),
    ],
)
def test_put_regimes(r, q, never, double):
    region = classify(OptionKind.put, r, q)
    assert region.never_optimal is never
    assert region.double_boundary_possible is double
    assert region.battauz_holds is False


def test_calls_are_classified_by_symmetry():
    assert classify("call", -0.01, -0.005).double_boundary_possible
    assert classify("call", -0.005, -0.01).never_optimal


def test_battauz_condition_depends_on_volatility():
    assert battauz_condition(-0.005, -0.01, 0.08) == (True, True, False)
    assert all(battauz_condition(-0.005, -0.01, 0.04))
    assert not classify(OptionKind.put, -0.005, -0.01, 0.08).battauz_holds
    assert classify(OptionKind.put, -0.005, -0.01, 0.04).battauz_holds
    with pytest.raises(DomainError):
        battauz_condition(-0.005, -0.01, 0.0)


def test_double_boundary_limits(make_market):
    limits = maturity_limits(make_market(rate=-0.005, dividend_yield=-0.01))
    assert limits.u_limit == 100.0
    assert limits.l_limit == pytest.approx(50.0)


def test_single_boundary_limits(make_market):
    limits = maturity_limits(make_market(rate=0.02, dividend_yield=0.04))
    assert limits.u_limit == pytest.approx(50.0)
    assert limits.l_limit is None
    assert maturity_limits(make_market(rate=0.02, dividend_yield=0.0)).u_limit == 100.0
    assert maturity_limits(make_market(rate=0.04, dividend_yield=0.02)).u_limit == 100.0


def test_call_limits_use_the_symmetric_put(make_market):
    call = make_market(spot=120.0, rate=-0.01, dividend_yield=-0.005, kind="call")
    assert reference_levels(call) == (120.0, pytest.approx(60.0))


def test_no_limits_when_never_optimal(make_market):
    with pytest.raises(DomainError):
        maturity_limits(make_market(rate=-0.01, dividend_yield=-0.005))


def test_asymptotics_at_maturity(make_market):
    p = make_market(rate=-0.005, dividend_yield=-0.01)
    assert asymptotic_boundaries(p, p.maturity) == (100.0, pytest.approx(50.0))


def test_asymptotics_close_to_maturity(make_market):
    p = make_market(rate=-0.005, dividend_yield=-0.01)
    upper, lower = asymptotic_boundaries(p, p.maturity - 1e-4)
    assert 50.0 < lower < upper < 100.0
    assert upper == pytest.approx(100.0, abs=2.0)
    assert lower == pytest.approx(50.0, abs=1.0)


def test_asymptotics_need_the_double_regime(make_market):
    with pytest.raises(DomainError):
        asymptotic_boundaries(make_market(rate=0.02, dividend_yield=0.04), 9.0)
    with pytest.raises(DomainError):
        asymptotic_boundaries(make_market(rate=-0.005, dividend_yield=-0.01, vol=0.04), 0.0)
