import math

import numpy as np
import pytest

from negrate import engine
from negrate.exceptions import BreakdownError, ConfigurationError, DomainError, NonConvergence
from negrate.pricing.results import PriceResult, plain


def test_default_method_follows_the_regime(make_market):
    assert engine.default_method(make_market()) is engine.Method.kim_fpbprime
    assert engine.default_method(make_market(rate=0.02)) is engine.Method.kim_fpb
    # a call is judged by its dividend yield, the rate of its symmetric put
    assert engine.default_method(make_market(rate=0.02, dividend_yield=-0.01, kind="call")) is engine.Method.kim_fpbprime


def test_configured_method_is_used(make_market, solver):
    assert engine.resolve_method(make_market(), None, solver.replace(method="fdm")) is engine.Method.fdm
    assert engine.resolve_method(make_market(), "juzhong", solver.replace(method="fdm")) is engine.Method.juzhong


def test_fp_a_rejected_for_negative_rates(make_market, solver):
    with pytest.raises(ConfigurationError):
        engine.price(make_market(), "kim-fpa", solver)


def test_bounds_do_not_price(make_market, solver):
    with pytest.raises(ConfigurationError):
        engine.price(make_market(rate=0.02), engine.Method.bounds, solver)


def test_unknown_method(make_market, solver):
    with pytest.raises(ValueError):
        engine.price(make_market(), "binomial", solver)


def test_european_method(make_market, solver):
    result = engine.price(make_market(), "european", solver)
    assert result.price == result.european == pytest.approx(8.368, abs=5e-4)
    assert result.premium == 0.0


def test_never_optimal_short_circuits(make_market, solver):
    result = engine.price(make_market(rate=-0.01, dividend_yield=-0.005), None, solver)
    assert result.price == result.european
    assert result.diagnostics == {"never_optimal": True}
    assert result.method == "kim-fpbprime"


def test_default_price(make_market, solver):
    result = engine.price(make_market(maturity=15.0), solver=solver)
    assert result.method == "kim-fpbprime"
    assert result.price == pytest.approx(10.287, abs=5e-3)
    assert "fallbacks" not in result.diagnostics


def test_qdplus_method_name(make_market, solver):
    result = engine.price(make_market(rate=0.05, dividend_yield=0.0, vol=0.2, maturity=1.0), "qdplus", solver)
    assert result.method == "qdplus"


def test_kim_qdplus_skips_the_iterations(make_market, solver):
    p = make_market(maturity=10.0)
    result = engine.price(p, "kim-qdplus", solver)
    assert result.method == "kim-qdplus"
    assert result.diagnostics["iterations"] == 0
    curves = engine.boundary(p, "kim-qdplus", solver)
    assert curves.upper.values.tolist() == result.diagnostics["boundary"]["upper"]


def test_fallback_to_gauss_newton(make_market, solver, monkeypatch):
    calls = []

    def flaky(p, method, config):
        calls.append(str(method))
        if method == "fp-b'":
            raise BreakdownError("fp-b'", 2)
        return PriceResult(price=1.0, european=0.5, method="kim-%s" % method)

    monkeypatch.setattr(engine, "kim_american_price", flaky)
    result = engine.price(make_market(), "kim-fpbprime", solver)
    assert calls == ["fp-b'", "gn-b"]
    assert result.method == "kim-gn"
    assert result.diagnostics["fallbacks"][0]["method"] == "kim-fpbprime"


def test_fallback_to_finite_differences(make_market, solver, monkeypatch):
    def broken(p, method, config):
        raise NonConvergence(str(method), 100, ())

    monkeypatch.setattr(engine, "kim_american_price", broken)
    monkeypatch.setattr(engine, "fd_price", lambda p, steps, lcp: PriceResult(price=2.0, european=1.0, method="fdm"))
    result = engine.price(make_market(), "kim-fpb", solver)
    assert result.method == "fdm"
    assert [entry["method"] for entry in result.diagnostics["fallbacks"]] == ["kim-fpb", "kim-gn"]


def test_total_failure(make_market, solver, monkeypatch):
    def broken(*args):
        raise NonConvergence("broken", 1, ())

    monkeypatch.setattr(engine, "kim_american_price", broken)
    monkeypatch.setattr(engine, "fd_price", broken)
    with pytest.raises(NonConvergence):
        engine.price(make_market(), "kim-gn", solver)


def test_price_many_matches_price(make_market, solver):
    p = make_market(maturity=5.0)
    spots = [80.0, 100.0, 120.0]
    batch = engine.price_many(p, spots, "kim-fpbprime", solver)
    single = [engine.price(p.replace(spot=s), "kim-fpbprime", solver) for s in spots]
    assert [r.price for r in batch] == [r.price for r in single]
    assert batch[0].price > batch[1].price > batch[2].price


def test_price_many_for_other_methods(make_market, solver):
    p = make_market(rate=0.05, dividend_yield=0.0, vol=0.2, maturity=1.0)
    results = engine.price_many(p, [90.0, 110.0], "juzhong", solver)
    assert [r.price for r in results] == [engine.price(p.replace(spot=s), "juzhong", solver).price for s in (90.0, 110.0)]


def test_call_symmetry(make_market, solver):
    call = make_market(spot=100.0, strike=100.0, rate=-0.01, dividend_yield=-0.005, kind="call", maturity=10.0)
    put = make_market(spot=100.0, strike=100.0, rate=-0.005, dividend_yield=-0.01, maturity=10.0)
    assert engine.price(call, solver=solver).price == pytest.approx(engine.price(put, solver=solver).price, rel=1e-12)


def test_boundary_by_method(make_market, solver):
    p = make_market(maturity=10.0)
    kim = engine.boundary(p, None, solver)
    qd = engine.boundary(p, "qdplus", solver)
    assert kim.lower is not None and qd.lower is not None
    assert kim.upper_at(0.0) == pytest.approx(qd.upper_at(0.0), abs=2.0)


def test_boundary_errors(make_market, solver):
    with pytest.raises(DomainError):
        engine.boundary(make_market(rate=-0.01, dividend_yield=-0.005), None, solver)
    with pytest.raises(ConfigurationError):
        engine.boundary(make_market(), "european", solver)


def test_boundary_rows(make_market, solver):
    db = engine.boundary(make_market(vol=0.15, maturity=5.0), "fdm", solver.replace(time_steps=50))
    rows = engine.boundary_rows(db, np.linspace(0.0, 5.0, 10, endpoint=False))
    assert len(rows) == 10
    assert rows[0][1] is None
    assert all(isinstance(t, float) for t, _, _ in rows)
    assert rows[-1][1] is not None and rows[-1][2] is not None


def test_result_serialization():
    result = PriceResult(price=1.5, european=1.0, method="fdm", diagnostics={"boundary": {"upper": math.nan}, "n": np.int64(3)})
    data = result.to_dict()
    assert data["premium"] == 0.5
    assert data["diagnostics"] == {"boundary": {"upper": None}, "n": 3}
    assert plain((np.float64(2.0), math.inf)) == [2.0, None]
