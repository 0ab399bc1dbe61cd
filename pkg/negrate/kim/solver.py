"""Fixed-point and Gauss-Newton solvers of the Kim boundary equations and the
full American pricing pipeline built on them."""

import logging
import math
from enum import StrEnum

import numpy as np

from ..exceptions import BreakdownError, ConfigurationError, DomainError, NonConvergence
from ..pricing.blackscholes import MarketParams, OptionKind, european_price, symmetric_put_params
from ..pricing.qdplus import (
    Branch,
    RootSolverKind,
    qdplus_double_boundary,
    qdplus_single_boundary,
    solve_boundary_point_robust,
    sqrt_time_grid,
)
from ..pricing.region import classify, maturity_limits
from ..pricing.results import PriceResult
from .collocation import BoundaryCurve, DoubleBoundary, Representation, chebyshev_boundary, chebyshev_nodes
from .equations import KimEquations, QuadratureSpec, american_value

logger = logging.getLogger(__name__)

# QD+ points of the dense guess used for the crossing estimate
GUESS_POINTS = 64
GAUSS_NEWTON_STEPS = 100
JACOBIAN_STEP = 1e-6


class KimMethod(StrEnum):
    fp_a = "fp-a"
    fp_b = "fp-b"
    fp_b_prime = "fp-b'"
    gn_a = "gn-a"
    gn_b = "gn-b"


class GaussNewtonSystem(StrEnum):
    gn_a = "gn-a"
    gn_b = "gn-b"


def _as_put(p: MarketParams) -> MarketParams:
    return symmetric_put_params(p) if p.kind is OptionKind.call else p


def _as_double(boundary, maturity: float) -> DoubleBoundary:
    if isinstance(boundary, BoundaryCurve):
        return DoubleBoundary(upper=boundary, maturity=maturity)
    return boundary


def _check_update(values: np.ndarray, method: str):
    bad = ~np.isfinite(values) | (values <= 0)
    if np.any(bad):
        knot = int(np.argmax(bad)) + 1
        logger.info("%s broke down at knot %d", method, knot)
        raise BreakdownError(method, knot)


def _ratio(numerator, denominator):
    with np.errstate(divide="ignore", invalid="ignore"):
        return numerator / denominator


def _project_upper(values: np.ndarray, reference: float, monotone: bool) -> np.ndarray:
    values = np.minimum(values, reference)
    if monotone:
        values = np.minimum.accumulate(values)
    return values


def _project_lower(values: np.ndarray, reference: float, monotone: bool) -> np.ndarray:
    values = np.maximum(values, reference)
    if monotone:
        values = np.maximum.accumulate(values)
    return values


def project(boundary: DoubleBoundary, monotone: bool = True) -> DoubleBoundary:
    """Keep each curve on its side of X; with two curves also enforce the
    monotonicity in tau and u >= l."""
    upper = _project_upper(boundary.upper.values.copy(), boundary.upper.reference_level, monotone)
    if boundary.lower is None:
        return DoubleBoundary(upper=boundary.upper.with_values(upper), maturity=boundary.maturity)
    lower = _project_lower(boundary.lower.values.copy(), boundary.lower.reference_level, monotone)
    crossed = upper < lower
    middle = 0.5 * (upper + lower)
    upper[crossed] = middle[crossed]
    lower[crossed] = middle[crossed]
    upper[0] = boundary.upper.reference_level
    lower[0] = boundary.lower.reference_level
    return DoubleBoundary(
        upper=boundary.upper.with_values(upper),
        lower=boundary.lower.with_values(lower),
        maturity=boundary.maturity,
        crossing_time=boundary.crossing_time,
    )


def _equations(p: MarketParams, boundary: DoubleBoundary, quad: QuadratureSpec) -> KimEquations:
    if p.kind is not OptionKind.put:
        raise DomainError("kind", "the Kim equations are written for puts")
    if boundary.lower is not None and not np.array_equal(boundary.upper.knots, boundary.lower.knots):
        raise DomainError("knots", "upper and lower curves must share their knots")
    return KimEquations(p, boundary.upper.knots, quad.inner_points)


def fp_b_step(boundary: BoundaryCurve | DoubleBoundary, p: MarketParams, quad: QuadratureSpec):
    """One FP-B sweep: S* = K N / D at every free knot.

    Returns the new upper values, or the (upper, lower) pair for two curves.
    The tau = 0 knot keeps its maturity limit.
    """
    boundary = _as_double(boundary, p.maturity)
    eq = _equations(p, boundary, quad)
    k = p.strike
    upper, lower = boundary.upper, boundary.lower
    numerator, denominator, _, _ = eq.continuity_terms(upper.values[1:], upper, lower)
    new_upper = k * _ratio(numerator, denominator)
    _check_update(new_upper, KimMethod.fp_b)
    new_upper = np.concatenate(([upper.reference_level], new_upper))
    if lower is None:
        return new_upper
    numerator, denominator, _, _ = eq.continuity_terms(lower.values[1:], upper, lower)
    new_lower = k * _ratio(numerator, denominator)
    _check_update(new_lower, KimMethod.fp_b)
    return new_upper, np.concatenate(([lower.reference_level], new_lower))


def fp_a_step(curve: BoundaryCurve, p: MarketParams, quad: QuadratureSpec) -> np.ndarray:
    """One FP-A sweep on the symmetrized high-contact equation."""
    boundary = _as_double(curve, p.maturity)
    if boundary.lower is not None:
        raise ConfigurationError("method", "FP-A is defined for a single boundary")
    eq = _equations(p, boundary, quad)
    numerator, denominator = eq.contact_terms(boundary.upper.values[1:], boundary.upper)
    values = p.strike * _ratio(numerator, denominator)
    _check_update(values, KimMethod.fp_a)
    return np.concatenate(([boundary.upper.reference_level], values))


def fp_b_prime_step(boundary: DoubleBoundary, p: MarketParams, quad: QuadratureSpec):
    """One FP-B' sweep: upper by FP-B, then the lower curve against the new
    upper curve with the q-integral moved to the numerator."""
    if boundary.lower is None:
        raise DomainError("lower", "FP-B' needs two boundaries")
    eq = _equations(p, boundary, quad)
    k = p.strike
    upper, lower = boundary.upper, boundary.lower
    numerator, denominator, _, _ = eq.continuity_terms(upper.values[1:], upper, lower)
    new_upper = k * _ratio(numerator, denominator)
    _check_update(new_upper, KimMethod.fp_b_prime)
    new_upper = np.concatenate(([upper.reference_level], new_upper))
    new_upper = _project_upper(new_upper, upper.reference_level, True)
    upper = upper.with_values(new_upper)

    x = lower.values[1:]
    numerator, denominator, _, i_q = eq.continuity_terms(x, upper, lower)
    new_lower = _ratio(k * numerator + x * i_q, denominator + i_q)
    _check_update(new_lower, KimMethod.fp_b_prime)
    return new_upper, np.concatenate(([lower.reference_level], new_lower))


def _relative_change(old: DoubleBoundary, new: DoubleBoundary) -> float:
    change = np.max(np.abs(new.upper.values - old.upper.values) / old.upper.values)
    if old.lower is not None:
        change = max(change, np.max(np.abs(new.lower.values - old.lower.values) / old.lower.values))
    return float(change)


def _iterate(sweep, boundary: DoubleBoundary, n: int, relative_stop: float, trace, method: str) -> DoubleBoundary:
    for iteration in range(n):
        updated = sweep(boundary)
        change = _relative_change(boundary, updated)
        boundary = updated
        logger.debug("%s iteration %d: max relative change %.3e", method, iteration + 1, change)
        if trace is not None:
            trace.append(change)
        if relative_stop > 0 and change < relative_stop:
            break
    return boundary


def _rebuild(boundary: DoubleBoundary, values, monotone: bool) -> DoubleBoundary:
    if boundary.lower is None:
        rebuilt = DoubleBoundary(upper=boundary.upper.with_values(values), maturity=boundary.maturity)
    else:
        upper, lower = values
        rebuilt = DoubleBoundary(
            upper=boundary.upper.with_values(upper),
            lower=boundary.lower.with_values(lower),
            maturity=boundary.maturity,
            crossing_time=boundary.crossing_time,
        )
    return project(rebuilt, monotone)


def fp_b_iterate(boundary, p: MarketParams, quad: QuadratureSpec, n: int, relative_stop: float = 0.0, trace=None) -> DoubleBoundary:
    boundary = _as_double(boundary, p.maturity)
    return _iterate(
        lambda b: _rebuild(b, fp_b_step(b, p, quad), monotone=False),
        boundary, n, relative_stop, trace, KimMethod.fp_b,
    )


def fp_a_iterate(curve, p: MarketParams, quad: QuadratureSpec, n: int, relative_stop: float = 0.0, trace=None) -> DoubleBoundary:
    """n FP-A sweeps. The knots are not projected below X, so an unstable
    sweep shows up as growing oscillations rather than a clipped curve."""
    boundary = _as_double(curve, p.maturity)
    return _iterate(
        lambda b: DoubleBoundary(upper=b.upper.with_values(fp_a_step(b.upper, p, quad)), maturity=b.maturity),
        boundary, n, relative_stop, trace, KimMethod.fp_a,
    )


def fp_b_prime_iterate(boundary: DoubleBoundary, p: MarketParams, quad: QuadratureSpec, n: int, relative_stop: float = 0.0, trace=None) -> DoubleBoundary:
    """n FP-B' sweeps, projecting onto monotone curves with u >= l after each.

    ``trace``, when given, collects the maximum relative knot change of every
    sweep.
    """
    return _iterate(
        lambda b: _rebuild(b, fp_b_prime_step(b, p, quad), monotone=True),
        boundary, n, relative_stop, trace, KimMethod.fp_b_prime,
    )


def gauss_newton_solve(
    system: GaussNewtonSystem,
    initial: BoundaryCurve | DoubleBoundary,
    p: MarketParams,
    quad: QuadratureSpec,
    tol: float = 1e-8,
    max_steps: int = GAUSS_NEWTON_STEPS,
) -> DoubleBoundary:
    """Least-squares solution of the collocation equations at every free knot.

    GN-A solves the high-contact equation (single boundary only), GN-B the
    price-continuity equations of one or both curves. The Jacobian is taken
    by forward differences; every step is projected and backtracked until
    the residual norm decreases.

    Raises:
        NonConvergence: after ``max_steps`` steps or on stagnation; the best
            boundary found is the single element of ``last_iterates``.
    """
    system = GaussNewtonSystem(system)
    initial = _as_double(initial, p.maturity)
    double = initial.lower is not None
    if system is GaussNewtonSystem.gn_a and double:
        raise ConfigurationError("method", "GN-A is defined for a single boundary")
    eq = _equations(p, initial, quad)
    m = len(initial.upper.knots) - 1

    def unpack(x) -> DoubleBoundary:
        upper = np.concatenate(([initial.upper.reference_level], x[:m]))
        if not double:
            return DoubleBoundary(upper=initial.upper.with_values(upper), maturity=initial.maturity)
        lower = np.concatenate(([initial.lower.reference_level], x[m:]))
        return DoubleBoundary(
            upper=initial.upper.with_values(upper),
            lower=initial.lower.with_values(lower),
            maturity=initial.maturity,
            crossing_time=initial.crossing_time,
        )

    def projected(x) -> np.ndarray:
        boundary = project(unpack(x), monotone=double)
        if not double:
            return boundary.upper.values[1:]
        return np.concatenate((boundary.upper.values[1:], boundary.lower.values[1:]))

    def residual(x):
        try:
            boundary = unpack(x)
        except DomainError:
            return None
        if system is GaussNewtonSystem.gn_a:
            values = eq.contact_residual(x[:m], boundary.upper)
        else:
            values = eq.continuity_residual(x[:m], boundary.upper, boundary.lower)
            if double:
                values = np.concatenate((values, eq.continuity_residual(x[m:], boundary.upper, boundary.lower)))
        return values if np.all(np.isfinite(values)) else None

    x = initial.upper.values[1:].copy()
    if double:
        x = np.concatenate((x, initial.lower.values[1:]))
    f = residual(x)
    if f is None:
        raise BreakdownError(system, 0)
    norm = float(np.linalg.norm(f))
    steps = 0
    while norm > tol and steps < max_steps:
        jacobian = np.empty((len(f), len(x)))
        for j in range(len(x)):
            shifted = x.copy()
            h = JACOBIAN_STEP * x[j]
            shifted[j] += h
            column = residual(shifted)
            if column is None:
                raise BreakdownError(system, j + 1)
            jacobian[:, j] = (column - f) / h
        delta = np.linalg.lstsq(jacobian, -f, rcond=None)[0]
        scale = 1.0
        for _ in range(30):
            trial = x + scale * delta
            trial_f = None
            if np.all(trial > 0):
                trial = projected(trial)
                trial_f = residual(trial)
            if trial_f is not None and np.linalg.norm(trial_f) < norm:
                break
            scale *= 0.5
        else:
            logger.debug("%s stagnated at residual %.3e", system, norm)
            break
        x, f = trial, trial_f
        norm = float(np.linalg.norm(f))
        steps += 1
        logger.debug("%s step %d: residual %.3e", system, steps, norm)
    if norm <= tol:
        return unpack(x)
    raise NonConvergence(system, steps, (unpack(x),))


def estimate_crossing_time(guess: DoubleBoundary, threshold: float | None = None, gap=None) -> float | None:
    """Bisection on g(t) = u(t) - l(t) of a boundary guess.

    A missing upper value counts as crossed. ``gap`` replaces the default
    g(t) read from the guess curves, e.g. by solving QD+ directly at t.

    Returns:
        float | None: the crossing time, None when g(0) > 0.
    """
    maturity = guess.maturity
    threshold = threshold or 1e-2 * maturity
    if gap is None:
        if guess.lower is None:
            return None

        def gap(t):
            return guess.upper_at(t) - guess.lower_at(t)

    def crossed(t):
        return not gap(t) > 0

    if not crossed(0.0):
        return None
    low, high = 0.0, maturity
    while high - low > threshold:
        middle = 0.5 * (low + high)
        if crossed(middle):
            low = middle
        else:
            high = middle
    return 0.5 * (low + high)


def adjust_crossed_guess(guess: DoubleBoundary) -> DoubleBoundary:
    """Flatten a crossed guess: beyond the first crossed knot (in tau) both
    curves take c* = min(max(u_s, l_prev), l_prev), l_prev being the lower
    value at the neighbouring knot closer to maturity."""
    if guess.lower is None:
        return guess
    upper = guess.upper.values.copy()
    lower = guess.lower.values.copy()
    with np.errstate(invalid="ignore"):
        crossed = np.isnan(upper[1:]) | (upper[1:] <= lower[1:])
    if not np.any(crossed):
        return guess
    s = int(np.argmax(crossed)) + 1
    neighbour = lower[s - 1]
    c_star = np.fmin(np.fmax(upper[s], neighbour), neighbour)
    upper[s:] = c_star
    lower[s:] = c_star
    return DoubleBoundary(
        upper=guess.upper.with_values(upper),
        lower=guess.lower.with_values(lower),
        maturity=guess.maturity,
        crossing_time=guess.crossing_time,
    )


def _fill_absent(values: np.ndarray, reference: float) -> np.ndarray:
    values = values.copy()
    last = reference
    for i, value in enumerate(values):
        if math.isfinite(value) and value > 0:
            last = value
        else:
            values[i] = last
    return values


def _qdplus_gap(p: MarketParams, guess: DoubleBoundary, solver: RootSolverKind, tol: float):
    l_limit = maturity_limits(p).l_limit

    def start(value, default):
        return value if math.isfinite(value) else default

    def gap(t):
        try:
            upper = solve_boundary_point_robust(p, t, Branch.upper, start(guess.upper_at(t), p.strike), solver, tol)
            lower = solve_boundary_point_robust(p, t, Branch.lower, start(guess.lower_at(t), l_limit), solver, tol)
        except (NonConvergence, DomainError):
            return math.nan
        return upper.s_star - lower.s_star

    return gap


def _piecewise(knots, values, reference, above) -> BoundaryCurve:
    return BoundaryCurve(
        knots=knots,
        values=np.asarray(values, dtype=float),
        reference_level=reference,
        representation=Representation.piecewise_exponential_linear,
        above_reference=above,
    )


def initial_boundary(p: MarketParams, config) -> DoubleBoundary:
    """QD+ starting curves on the Chebyshev knots, crossing handled."""
    solver, tol = config.root_solver, config.tolerance
    m = config.collocation_points
    maturity = p.maturity
    limits = maturity_limits(p)
    region = classify(p.kind, p.rate, p.dividend_yield)
    if not region.double_boundary_possible:
        knots = chebyshev_nodes(m, maturity)
        guess = qdplus_single_boundary(p, maturity - knots[:0:-1], solver, tol)
        values = _fill_absent(guess.upper(knots), limits.u_limit)
        upper = chebyshev_boundary(knots, np.minimum(values, limits.u_limit), limits.u_limit)
        return DoubleBoundary(upper=upper, maturity=maturity)

    dense = qdplus_double_boundary(p, sqrt_time_grid(maturity, GUESS_POINTS), solver, tol)
    crossing = estimate_crossing_time(dense, gap=_qdplus_gap(p, dense, solver, tol))
    if crossing is not None:
        logger.info("boundaries cross at t_s=%.4f", crossing)
    knots = chebyshev_nodes(m, maturity - (crossing or 0.0))
    guess = adjust_crossed_guess(
        DoubleBoundary(
            upper=_piecewise(knots, dense.upper(knots), limits.u_limit, False),
            lower=_piecewise(knots, dense.lower(knots), limits.l_limit, True),
            maturity=maturity,
        )
    )
    upper = _fill_absent(guess.upper.values, limits.u_limit)
    lower = _fill_absent(guess.lower.values, limits.l_limit)
    boundary = DoubleBoundary(
        upper=chebyshev_boundary(knots, np.minimum(upper, limits.u_limit), limits.u_limit),
        lower=chebyshev_boundary(knots, np.maximum(lower, limits.l_limit), limits.l_limit, above_reference=True),
        maturity=maturity,
        crossing_time=crossing,
    )
    return project(boundary)


def kim_boundary(p: MarketParams, method: KimMethod, config) -> DoubleBoundary:
    """Exercise boundaries of the put symmetric to ``p`` by a Kim scheme.

    FP-B' falls back to FP-B on single-boundary regimes; FP-A and GN-A are
    rejected on double-boundary regimes.
    """
    method = KimMethod(method)
    put = _as_put(p)
    region = classify(put.kind, put.rate, put.dividend_yield)
    if region.never_optimal:
        raise DomainError("rate", "early exercise is never optimal")
    double = region.double_boundary_possible
    if double and method in (KimMethod.fp_a, KimMethod.gn_a):
        raise ConfigurationError("method", "%s is defined for a single boundary" % method)
    quad = QuadratureSpec(config.inner_points, config.pricing_points)
    boundary = initial_boundary(put, config)
    n, stop = config.iterations, config.relative_stop
    match method:
        case KimMethod.fp_a:
            return fp_a_iterate(boundary, put, quad, n, stop)
        case KimMethod.fp_b:
            return fp_b_iterate(boundary, put, quad, n, stop)
        case KimMethod.fp_b_prime if double:
            return fp_b_prime_iterate(boundary, put, quad, n, stop)
        case KimMethod.fp_b_prime:
            return fp_b_iterate(boundary, put, quad, n, stop)
        case KimMethod.gn_a:
            return gauss_newton_solve(GaussNewtonSystem.gn_a, boundary, put, quad, config.gauss_newton_tolerance)
        case KimMethod.gn_b:
            return gauss_newton_solve(GaussNewtonSystem.gn_b, boundary, put, quad, config.gauss_newton_tolerance)


def boundary_snapshot(boundary: DoubleBoundary) -> dict:
    snapshot = {
        "tau": boundary.upper.knots.tolist(),
        "upper": boundary.upper.values.tolist(),
        "crossing_time": boundary.crossing_time,
    }
    if boundary.lower is not None:
        snapshot["lower"] = boundary.lower.values.tolist()
    return snapshot


def _check_domain(curve: BoundaryCurve, tau_max: float):
    if not curve.complete or not math.isclose(curve.tau_max, tau_max, rel_tol=1e-9, abs_tol=1e-12):
        raise DomainError("boundary", "curve must be defined on the whole exercise horizon")


def kim_price_single(p: MarketParams, b: BoundaryCurve, quad: QuadratureSpec, method: str = "kim") -> PriceResult:
    """Price from one boundary curve. Calls are priced through their symmetric
    put, whose boundary ``b`` must be."""
    put = _as_put(p)
    _check_domain(b, put.maturity)
    boundary = DoubleBoundary(upper=b, maturity=put.maturity)
    price, european = american_value(put, boundary, quad.pricing_points)
    return PriceResult(price=price, european=european, method=method, diagnostics={"boundary": boundary_snapshot(boundary)})


def kim_price_double(p: MarketParams, db: DoubleBoundary, quad: QuadratureSpec, method: str = "kim") -> PriceResult:
    put = _as_put(p)
    if not math.isclose(db.maturity, put.maturity):
        raise DomainError("maturity", "boundary and contract maturities differ")
    horizon = put.maturity - (db.crossing_time or 0.0)
    if db.crossing_time is not None and not 0.0 <= db.crossing_time < put.maturity:
        raise DomainError("crossing_time", "crossing time must lie in [0, T)")
    _check_domain(db.upper, horizon)
    if db.lower is not None:
        _check_domain(db.lower, horizon)
    price, european = american_value(put, db, quad.pricing_points)
    diagnostics = {"boundary": boundary_snapshot(db)}
    return PriceResult(price=price, european=european, method=method, diagnostics=diagnostics)


def kim_american_price(p: MarketParams, method: KimMethod, config) -> PriceResult:
    """American price by the Kim pipeline: QD+ guess, crossing estimate,
    collocation on [t_s, T], iterations and the premium integral."""
    method = KimMethod(method)
    name = "kim-%s" % method
    european = european_price(p)
    put = _as_put(p)
    if classify(put.kind, put.rate, put.dividend_yield).never_optimal:
        return PriceResult(price=european, european=european, method=name, diagnostics={"never_optimal": True})
    boundary = kim_boundary(p, method, config)
    quad = QuadratureSpec(config.inner_points, config.pricing_points)
    result = kim_price_double(put, boundary, quad, name)
    result.diagnostics["iterations"] = config.iterations
    return result


def kim_qdplus_price(p: MarketParams, config) -> PriceResult:
    """Premium integral over the uniterated QD+ starting curves."""
    european = european_price(p)
    put = _as_put(p)
    if classify(put.kind, put.rate, put.dividend_yield).never_optimal:
        return PriceResult(price=european, european=european, method="kim-qdplus", diagnostics={"never_optimal": True})
    quad = QuadratureSpec(config.inner_points, config.pricing_points)
    result = kim_price_double(put, initial_boundary(put, config), quad, "kim-qdplus")
    result.diagnostics["iterations"] = 0
    return result
