"""Method dispatch shared by the command line and the HTTP service."""

import dataclasses
import logging
import math
from enum import StrEnum

from .config import SolverConfig, config as default_config
from .exceptions import BreakdownError, ConfigurationError, DomainError, NonConvergence
from .kim.collocation import DoubleBoundary
from .kim.equations import QuadratureSpec
from .kim.solver import KimMethod, initial_boundary, kim_american_price, kim_boundary, kim_price_double, kim_qdplus_price
from .pricing.blackscholes import MarketParams, OptionKind, european_price, symmetric_put_params
from .pricing.bounds import BoundKind, boundary_bound
from .pricing.fdm import fd_boundary, fd_price
from .pricing.qdplus import juzhong_price, qdplus_boundary, sqrt_time_grid
from .pricing.region import classify
from .pricing.results import PriceResult

logger = logging.getLogger(__name__)


class Method(StrEnum):
    european = "european"
    qdplus = "qdplus"
    juzhong = "juzhong"
    kim_fpb = "kim-fpb"
    kim_fpa = "kim-fpa"
    kim_fpbprime = "kim-fpbprime"
    kim_gn = "kim-gn"
    kim_gna = "kim-gna"
    kim_qdplus = "kim-qdplus"
    fdm = "fdm"
    bounds = "bounds"


KIM_METHODS = {
    Method.kim_fpb: KimMethod.fp_b,
    Method.kim_fpa: KimMethod.fp_a,
    Method.kim_fpbprime: KimMethod.fp_b_prime,
    Method.kim_gn: KimMethod.gn_b,
    Method.kim_gna: KimMethod.gn_a,
}


def _put_rate(p: MarketParams) -> float:
    return p.rate if p.kind is OptionKind.put else p.dividend_yield


def default_method(p: MarketParams) -> Method:
    return Method.kim_fpbprime if _put_rate(p) < 0 else Method.kim_fpb


def resolve_method(p: MarketParams, method: Method | str | None, solver: SolverConfig) -> Method:
    """Pick the method and reject combinations the regime does not allow."""
    method = Method(method or solver.method or default_method(p))
    if method is Method.kim_fpa and _put_rate(p) < 0:
        raise ConfigurationError("method", "FP-A is unstable and undefined for negative rates")
    return method


def _fallback_chain(method: Method) -> list[Method]:
    if method is Method.kim_gn:
        return [Method.fdm]
    return [Method.kim_gn, Method.fdm]


def _run(p: MarketParams, method: Method, solver: SolverConfig) -> PriceResult:
    match method:
        case Method.qdplus | Method.juzhong:
            result = juzhong_price(p, solver.root_solver, solver.tolerance)
            return dataclasses.replace(result, method=str(method))
        case Method.fdm:
            return fd_price(p, solver.time_steps, solver.lcp_solver)
        case Method.bounds:
            raise ConfigurationError("method", "bounds estimate boundaries, they do not price")
        case Method.kim_qdplus:
            return kim_qdplus_price(p, solver)
        case _:
            result = kim_american_price(p, KIM_METHODS[method], solver)
            return dataclasses.replace(result, method=str(method))


def price(p: MarketParams, method: Method | str | None = None, solver: SolverConfig | None = None) -> PriceResult:
    """American price of ``p`` by ``method``.

    Kim fixed-point methods that break down or do not converge fall back to
    GN-B and then to finite differences; each fallback taken is listed in
    ``diagnostics["fallbacks"]``.
    """
    solver = solver or default_config.solver_config()
    method = resolve_method(p, method, solver)
    logger.info("pricing %s with %s", p, method)
    european = european_price(p)
    if method is Method.european:
        return PriceResult(price=european, european=european, method=str(method))
    put = symmetric_put_params(p) if p.kind is OptionKind.call else p
    if classify(put.kind, put.rate, put.dividend_yield).never_optimal:
        return PriceResult(price=european, european=european, method=str(method), diagnostics={"never_optimal": True})
    if method not in KIM_METHODS:
        return _run(p, method, solver)

    fallbacks = []
    for candidate in [method] + _fallback_chain(method):
        try:
            result = _run(p, candidate, solver)
        except (BreakdownError, NonConvergence) as err:
            logger.info("%s failed (%s), falling back", candidate, err)
            fallbacks.append({"method": str(candidate), "error": str(err)})
            continue
        if fallbacks:
            result.diagnostics["fallbacks"] = fallbacks
        return result
    raise NonConvergence(str(method), len(fallbacks), tuple(fallbacks))


def price_many(p: MarketParams, spots, method: Method | str | None = None, solver: SolverConfig | None = None) -> list[PriceResult]:
    """Prices of the contract ``p`` at each of ``spots``.

    The exercise boundary does not depend on the spot, so Kim methods on puts
    solve it once and only repeat the premium integral. Other methods price
    the spots one by one through :func:`price`. Results equal those of
    :func:`price` exactly.
    """
    solver = solver or default_config.solver_config()
    method = resolve_method(p, method, solver)
    individual = [p.replace(spot=float(spot)) for spot in spots]
    never = classify(p.kind, p.rate, p.dividend_yield).never_optimal
    if method not in KIM_METHODS or p.kind is OptionKind.call or never:
        return [price(contract, method, solver) for contract in individual]
    try:
        shared = kim_boundary(p, KIM_METHODS[method], solver)
    except (BreakdownError, NonConvergence) as err:
        logger.info("shared %s boundary failed (%s), pricing one by one", method, err)
        return [price(contract, method, solver) for contract in individual]
    quad = QuadratureSpec(solver.inner_points, solver.pricing_points)
    results = []
    for contract in individual:
        result = kim_price_double(contract, shared, quad, str(method))
        result.diagnostics["iterations"] = solver.iterations
        results.append(result)
    return results


def boundary(p: MarketParams, method: Method | str | None = None, solver: SolverConfig | None = None, times=None) -> DoubleBoundary:
    """Exercise boundaries of ``p`` (of its symmetric put for calls).

    ``times`` are the ascending calendar times used by the QD+ and bound
    sweeps; the Kim methods return their collocation curves and finite
    differences their own time levels.
    """
    solver = solver or default_config.solver_config()
    method = resolve_method(p, method, solver)
    put = symmetric_put_params(p) if p.kind is OptionKind.call else p
    region = classify(put.kind, put.rate, put.dividend_yield)
    if region.never_optimal:
        raise DomainError("rate", "early exercise is never optimal, no boundary")
    if times is None:
        times = sqrt_time_grid(put.maturity, 64)
    match method:
        case Method.european:
            raise ConfigurationError("method", "the European price has no exercise boundary")
        case Method.qdplus | Method.juzhong:
            return qdplus_boundary(put, times, solver.root_solver, solver.tolerance)
        case Method.fdm:
            return fd_boundary(put, solver.time_steps)
        case Method.kim_qdplus:
            return initial_boundary(put, solver)
        case Method.bounds:
            upper = boundary_bound(put, BoundKind.put_upper, times)
            lower = boundary_bound(put, BoundKind.put_lower, times) if region.double_boundary_possible else None
            return DoubleBoundary(upper=upper, lower=lower, maturity=put.maturity)
        case _:
            return kim_boundary(put, KIM_METHODS[method], solver)


def boundary_rows(db: DoubleBoundary, times) -> list[tuple[float, float | None, float | None]]:
    """(t, u(t), l(t)) at each calendar time, None where a curve is absent."""
    rows = []
    for t in times:
        upper, lower = float(db.upper_at(t)), float(db.lower_at(t))
        rows.append((float(t), upper if math.isfinite(upper) else None, lower if math.isfinite(lower) else None))
    return rows
