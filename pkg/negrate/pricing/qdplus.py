"""QD+ exercise boundaries and the Ju-Zhong American price.

The QD+ boundary S* at calendar time t solves

    eta = eta e^{-q tau} Phi(eta d1) + (lambda + c0) (eta (S - K) - V_E(S)) / S

with tau = T - t. Under negative rates a put has two boundaries, one per
root of lambda^2 + (beta - 1) lambda - alpha / h = 0: the upper boundary uses
the negative root lambda1, the lower boundary the positive root lambda2.
"""

import logging
import math
from dataclasses import dataclass
from enum import StrEnum, auto

import numpy as np
from scipy.optimize import brentq

from ..exceptions import ConfigurationError, DomainError, NonConvergence
from ..kim.collocation import BoundaryCurve, DoubleBoundary, Representation
from .blackscholes import (
    MarketParams,
    OptionKind,
    d1,
    european_dtau,
    european_price,
    european_value,
    norm_cdf,
    norm_pdf,
    symmetric_put_params,
)
from .region import classify, maturity_limits
from .results import PriceResult

logger = logging.getLogger(__name__)

MAX_ITERATIONS = 64
# relative distance under which an iterate counts as revisited
CYCLE_TOLERANCE = 1e-12


class RootSolverVariant(StrEnum):
    newton = auto()
    halley = auto()
    super_halley = auto()
    inverse_quadratic = auto()
    c_method = auto()


@dataclass(frozen=True)
class RootSolverKind:
    """Third-order update rule, written with L_f = f f'' / f'^2 as a factor
    applied to the Newton step f / f'."""

    variant: RootSolverVariant
    c: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "variant", RootSolverVariant(self.variant))
        if not 0.0 <= self.c <= 2.0:
            raise ConfigurationError("C_PARAMETER", "C must lie in [0, 2]")

    @property
    def name(self) -> str:
        if self.variant is RootSolverVariant.c_method:
            return "c_method(%g)" % self.c
        return str(self.variant)

    def step_factor(self, lf: float) -> float:
        match self.variant:
            case RootSolverVariant.newton:
                return 1.0
            case RootSolverVariant.halley:
                return 1.0 / (1.0 - 0.5 * lf)
            case RootSolverVariant.super_halley:
                return 1.0 + 0.5 * lf / (1.0 - lf)
            case RootSolverVariant.inverse_quadratic:
                return 1.0 + 0.5 * lf
            case RootSolverVariant.c_method:
                return 1.0 + 0.5 * lf + self.c * lf * lf


class Branch(StrEnum):
    upper = auto()
    lower = auto()


@dataclass(frozen=True)
class QDCoefficients:
    alpha: float
    beta: float
    h: float
    lambda1: float
    lambda2: float
    lambda_prime: float
    # alpha / h and alpha * lambda', both finite at r = 0
    alpha_over_h: float
    alpha_lambda_prime: float
    sqrt_discriminant: float

    def exponent(self, branch: Branch) -> float:
        return self.lambda1 if branch is Branch.upper else self.lambda2


@dataclass(frozen=True)
class BoundaryPointSolution:
    s_star: float
    a: float
    iterations: int
    residual: float
    converged: bool
    exponent: float


def qd_coefficients(p: MarketParams, t: float, branch: Branch = Branch.upper) -> QDCoefficients:
    tau = p.maturity - t
    if tau <= 0:
        raise DomainError("t", "QD coefficients need t < T")
    r, q, sigma = p.rate, p.dividend_yield, p.vol
    var = sigma * sigma
    alpha = 2.0 * r / var
    beta = 2.0 * (r - q) / var
    h = -math.expm1(-r * tau)
    x = r * tau
    scale = 1.0 if x == 0.0 else x / -math.expm1(-x)
    alpha_over_h = 2.0 / (var * tau) * scale
    discriminant = (beta - 1.0) ** 2 + 4.0 * alpha_over_h
    if discriminant < 0:
        raise DomainError("rate", "negative QD discriminant")
    root = math.sqrt(discriminant)
    lambda1 = 0.5 * (-(beta - 1.0) - root)
    lambda2 = 0.5 * (-(beta - 1.0) + root)
    sign = 1.0 if branch is Branch.upper else -1.0
    alpha_lambda_prime = sign * alpha_over_h * alpha_over_h / root
    lambda_prime = sign * alpha_over_h / h / root if h != 0.0 else math.nan
    return QDCoefficients(
        alpha=alpha,
        beta=beta,
        h=h,
        lambda1=lambda1,
        lambda2=lambda2,
        lambda_prime=lambda_prime,
        alpha_over_h=alpha_over_h,
        alpha_lambda_prime=alpha_lambda_prime,
        sqrt_discriminant=root,
    )


def _premium_terms(coef: QDCoefficients, branch: Branch, tau: float, r: float, sigma: float):
    """Constant part and Theta/premium slope of lambda + c0."""
    lam = coef.exponent(branch)
    w = 1.0 / (2.0 * lam + coef.beta - 1.0)
    one_minus_h = math.exp(-r * tau)
    c_a = one_minus_h * coef.alpha_over_h
    c_b = one_minus_h * coef.alpha_lambda_prime * w
    return lam - w * (c_a + c_b), 2.0 * w / (sigma * sigma), c_b


def qdplus_residual(s: float, p: MarketParams, t: float, branch: Branch = Branch.upper):
    """Value and first two analytic derivatives in ``s`` of the QD+ equation."""
    if s <= 0:
        raise DomainError("s", "boundary candidate must be positive")
    tau = p.maturity - t
    k, r, q, sigma, eta = p.strike, p.rate, p.dividend_yield, p.vol, p.eta
    coef = qd_coefficients(p, t, branch)
    base, slope, _ = _premium_terms(coef, branch, tau, r, sigma)

    sv = sigma * math.sqrt(tau)
    x1 = float(d1(s, k, r, q, sigma, tau))
    disc_q = math.exp(-q * tau)
    value = float(european_value(s, k, r, q, sigma, tau, eta))
    delta = eta * disc_q * float(norm_cdf(eta * x1))
    gamma = disc_q * float(norm_pdf(x1)) / (s * sv)
    k1 = -(x1 / sv + 1.0) / s
    k1_prime = -1.0 / (s * s * sv * sv) + (x1 / sv + 1.0) / (s * s)
    gamma1 = gamma * k1
    gamma2 = gamma * (k1 * k1 + k1_prime)

    drift = r - q + sigma * sigma
    half_var = 0.5 * sigma * sigma
    theta = r * value - (r - q) * s * delta - half_var * s * s * gamma
    theta1 = q * delta - drift * s * gamma - half_var * s * s * gamma1
    theta2 = q * gamma - drift * (gamma + s * gamma1) - sigma * sigma * s * gamma1 - half_var * s * s * gamma2

    prem = eta * (s - k) - value
    if prem == 0.0:
        raise DomainError("s", "early exercise premium vanishes at the candidate")
    prem1 = eta - delta
    prem2 = -gamma

    ratio = theta / prem
    ratio1 = (theta1 - ratio * prem1) / prem
    ratio2 = (theta2 - 2.0 * ratio1 * prem1 - ratio * prem2) / prem

    big_l = base + slope * ratio
    big_l1 = slope * ratio1
    big_l2 = slope * ratio2

    per = prem / s
    per1 = prem1 / s - prem / (s * s)
    per2 = prem2 / s - 2.0 * prem1 / (s * s) + 2.0 * prem / s**3

    f = delta + big_l * per - eta
    f1 = gamma + big_l1 * per + big_l * per1
    f2 = gamma1 + big_l2 * per + 2.0 * big_l1 * per1 + big_l * per2
    return f, f1, f2


def _premium_coefficient(p: MarketParams, t: float, s: float, exponent: float) -> float:
    tau = p.maturity - t
    value = float(european_value(s, p.strike, p.rate, p.dividend_yield, p.vol, tau, p.eta))
    return (p.eta * (s - p.strike) - value) / s**exponent


def solve_boundary_point(
    p: MarketParams,
    t: float,
    branch: Branch,
    s0: float,
    solver: RootSolverKind,
    tol: float = 1e-6,
    max_iterations: int = MAX_ITERATIONS,
) -> BoundaryPointSolution:
    """Iterate the chosen third-order scheme from ``s0`` until |f| <= tol.

    A 2-cycle (an iterate returning to the one before last while the
    residual stays above ``tol``) stops the iteration early.

    Raises:
        NonConvergence: carries the last two iterates, the cycling pair for
            a 2-cycle.
    """
    if s0 <= 0 or tol <= 0:
        raise DomainError("s0", "initial guess and tolerance must be positive")
    s = s0
    iterates = [s]
    for iteration in range(max_iterations + 1):
        try:
            f, f1, f2 = qdplus_residual(s, p, t, branch)
        except DomainError:
            break
        if not math.isfinite(f):
            break
        if abs(f) <= tol:
            exponent = qd_coefficients(p, t, branch).exponent(branch)
            return BoundaryPointSolution(
                s_star=s,
                a=_premium_coefficient(p, t, s, exponent),
                iterations=iteration,
                residual=f,
                converged=True,
                exponent=exponent,
            )
        if iteration == max_iterations or f1 == 0.0 or not math.isfinite(f1):
            break
        lf = f * f2 / (f1 * f1)
        step = solver.step_factor(lf) * f / f1
        candidate = s - step
        if not math.isfinite(candidate):
            break
        s = candidate if candidate > 0 else 0.5 * s
        iterates.append(s)
        logger.debug("%s iterate %d: %.10g (f=%.3e)", solver.name, iteration + 1, s, f)
        if _revisits(iterates):
            logger.info("%s cycles between %.10g and %.10g", solver.name, iterates[-2], s)
            raise NonConvergence(solver.name, len(iterates) - 1, (iterates[-2], s))
    raise NonConvergence(solver.name, len(iterates) - 1, tuple(iterates[-2:]))


def _revisits(iterates: list[float]) -> bool:
    if len(iterates) < 3:
        return False
    s, previous, before = iterates[-1], iterates[-2], iterates[-3]
    scale = CYCLE_TOLERANCE * max(abs(s), 1.0)
    return abs(s - before) <= scale and abs(s - previous) > scale


def _bracketed_root(p: MarketParams, t: float, branch: Branch, s0: float, tol: float) -> BoundaryPointSolution:
    """Bisection fallback on [1e-4 K, 10 K], using the sign change nearest to s0."""
    k = p.strike
    grid = np.geomspace(1e-4 * k, 10.0 * k, 241)

    def residual(s):
        return qdplus_residual(float(s), p, t, branch)[0]

    values = []
    for s in grid:
        try:
            values.append(residual(s))
        except DomainError:
            values.append(math.nan)
    values = np.asarray(values)
    candidates = []
    for i in range(len(grid) - 1):
        left, right = values[i], values[i + 1]
        if np.isfinite(left) and np.isfinite(right) and left * right < 0:
            candidates.append(i)
    candidates.sort(key=lambda i: abs(math.log(grid[i] / s0)))
    for i in candidates:
        root = brentq(residual, grid[i], grid[i + 1], xtol=1e-12 * k)
        f = residual(root)
        if abs(f) <= tol:
            exponent = qd_coefficients(p, t, branch).exponent(branch)
            return BoundaryPointSolution(
                s_star=root,
                a=_premium_coefficient(p, t, root, exponent),
                iterations=0,
                residual=f,
                converged=True,
                exponent=exponent,
            )
    raise NonConvergence("bisection", len(candidates), (s0,))


def solve_boundary_point_robust(
    p: MarketParams,
    t: float,
    branch: Branch,
    s0: float,
    solver: RootSolverKind,
    tol: float = 1e-6,
) -> BoundaryPointSolution:
    """``solve_boundary_point`` with the C-method and bisection fallbacks."""
    try:
        return solve_boundary_point(p, t, branch, s0, solver, tol)
    except NonConvergence as err:
        logger.debug("%s failed at t=%g, retrying with c_method(0.5)", solver.name, t)
        restart = err.last_iterates[-1] if err.last_iterates[-1] > 0 else s0
    try:
        return solve_boundary_point(p, t, branch, restart, RootSolverKind(RootSolverVariant.c_method, 0.5), tol)
    except NonConvergence:
        logger.debug("c_method(0.5) failed at t=%g, falling back to bisection", t)
    return _bracketed_root(p, t, branch, s0, tol)


def sweep_boundary(
    p: MarketParams,
    times,
    branch: Branch,
    initial_guess: float,
    solver: RootSolverKind | None = None,
    tol: float = 1e-6,
    robust: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Warm-started backward sweep over ``times`` (ascending calendar times).

    Returns boundary values aligned with ``times`` (NaN where no solution
    exists) and the iteration counts (-1 where absent).
    """
    solver = solver or RootSolverKind(RootSolverVariant.super_halley)
    times = np.asarray(times, dtype=float)
    values = np.full(times.shape, math.nan)
    iterations = np.full(times.shape, -1, dtype=int)
    guess = initial_guess
    for i in range(len(times) - 1, -1, -1):
        try:
            if robust:
                solution = solve_boundary_point_robust(p, times[i], branch, guess, solver, tol)
            else:
                solution = solve_boundary_point(p, times[i], branch, guess, solver, tol)
        except NonConvergence:
            logger.debug("no %s QD+ boundary at t=%g", branch, times[i])
            continue
        values[i] = solution.s_star
        iterations[i] = solution.iterations
        guess = solution.s_star
    return values, iterations


def _curve(p: MarketParams, times, values, reference: float, above: bool) -> BoundaryCurve:
    times = np.asarray(times, dtype=float)
    taus = p.maturity - times[::-1]
    vals = np.asarray(values, dtype=float)[::-1]
    return BoundaryCurve(
        knots=np.concatenate(([0.0], taus)),
        values=np.concatenate(([reference], vals)),
        reference_level=reference,
        representation=Representation.piecewise_exponential_linear,
        above_reference=above,
    )


def _check_times(p: MarketParams, times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0:
        raise DomainError("times", "need a non-empty one-dimensional time grid")
    if np.any(np.diff(times) <= 0) or times[0] < 0 or times[-1] >= p.maturity:
        raise DomainError("times", "times must be ascending inside [0, T)")
    return times


def qdplus_single_boundary(p: MarketParams, times, solver: RootSolverKind | None = None, tol: float = 1e-6) -> DoubleBoundary:
    """QD+ boundary of a put with a single exercise boundary."""
    if p.kind is OptionKind.call:
        p = symmetric_put_params(p)
    region = classify(p.kind, p.rate, p.dividend_yield)
    if region.never_optimal or region.double_boundary_possible:
        raise DomainError("rate", "single-boundary regime required")
    times = _check_times(p, times)
    limit = maturity_limits(p).u_limit
    values, _ = sweep_boundary(p, times, Branch.upper, limit, solver, tol)
    return DoubleBoundary(upper=_curve(p, times, values, limit, False), maturity=p.maturity)


def qdplus_double_boundary(p: MarketParams, times, solver: RootSolverKind | None = None, tol: float = 1e-6) -> DoubleBoundary:
    """QD+ upper and lower boundaries of a put under negative rates.

    Times where a branch has no solution (exercise never optimal there) are
    kept as absent (NaN) knots.
    """
    if p.kind is OptionKind.call:
        p = symmetric_put_params(p)
    region = classify(p.kind, p.rate, p.dividend_yield)
    if region.never_optimal:
        raise DomainError("rate", "early exercise is never optimal")
    if not region.double_boundary_possible:
        raise DomainError("rate", "double-boundary regime required")
    times = _check_times(p, times)
    limits = maturity_limits(p)
    upper, _ = sweep_boundary(p, times, Branch.upper, p.strike, solver, tol)
    lower, _ = sweep_boundary(p, times, Branch.lower, p.strike * min(1.0, p.rate / p.dividend_yield), solver, tol)
    return DoubleBoundary(
        upper=_curve(p, times, upper, limits.u_limit, False),
        lower=_curve(p, times, lower, limits.l_limit, True),
        maturity=p.maturity,
    )


def sqrt_time_grid(maturity: float, count: int) -> np.ndarray:
    """Ascending calendar times in [0, T), uniform in sqrt(T - t)."""
    steps = np.arange(count, 0, -1, dtype=float) / count
    return maturity * (1.0 - steps * steps)


def qdplus_boundary(p: MarketParams, times, solver: RootSolverKind | None = None, tol: float = 1e-6) -> DoubleBoundary:
    if p.kind is OptionKind.call:
        p = symmetric_put_params(p)
    if classify(p.kind, p.rate, p.dividend_yield).double_boundary_possible:
        return qdplus_double_boundary(p, times, solver, tol)
    return qdplus_single_boundary(p, times, solver, tol)


def _juzhong_value(p: MarketParams, s_star: float, branch: Branch) -> float:
    tau = p.maturity
    k, r, q, sigma, eta, s = p.strike, p.rate, p.dividend_yield, p.vol, p.eta, p.spot
    coef = qd_coefficients(p, 0.0, branch)
    lam = coef.exponent(branch)
    base, slope, c_b = _premium_terms(coef, branch, tau, r, sigma)
    value_star = float(european_value(s_star, k, r, q, sigma, tau, eta))
    prem_star = eta * (s_star - k) - value_star
    dtau_star = float(european_dtau(s_star, k, r, q, sigma, tau, eta))
    # c is c0 at the boundary; slope * (-Theta) / premium with Theta = -dV/dtau
    c = base - lam + slope * (-dtau_star) / prem_star
    b = 0.5 * c_b
    log_ratio = math.log(s / s_star)
    chi = b * log_ratio * log_ratio + c * log_ratio
    european = float(european_value(s, k, r, q, sigma, tau, eta))
    return european + prem_star * (s / s_star) ** lam / (1.0 - chi)


def juzhong_price(p: MarketParams, solver: RootSolverKind | None = None, tol: float = 1e-6, sweep_points: int = 32) -> PriceResult:
    """Ju-Zhong approximation built on the QD+ boundary at t = 0.

    In the double-boundary regime only the boundary nearer to the spot is
    used. Crossed or missing boundaries return the European price with
    ``degraded`` set.
    """
    european = european_price(p)
    put = symmetric_put_params(p) if p.kind is OptionKind.call else p
    region = classify(put.kind, put.rate, put.dividend_yield)
    if region.never_optimal:
        return PriceResult(price=european, european=european, method="juzhong", diagnostics={"never_optimal": True})

    times = sqrt_time_grid(put.maturity, sweep_points)
    intrinsic = max(put.strike - put.spot, 0.0)
    if not region.double_boundary_possible:
        boundary = qdplus_single_boundary(put, times, solver, tol)
        upper = boundary.upper_at(0.0)
        if not math.isfinite(upper):
            logger.warning("QD+ boundary missing at t=0, returning the European price")
            return PriceResult(price=european, european=european, method="juzhong", degraded=True)
        diagnostics = {"upper": upper}
        if put.spot <= upper:
            return PriceResult(price=intrinsic, european=european, method="juzhong", diagnostics=diagnostics)
        price = _juzhong_value(put, upper, Branch.upper)
        return PriceResult(price=price, european=european, method="juzhong", diagnostics=diagnostics)

    boundary = qdplus_double_boundary(put, times, solver, tol)
    upper, lower = boundary.upper_at(0.0), boundary.lower_at(0.0)
    diagnostics = {"upper": upper, "lower": lower}
    if not (math.isfinite(upper) and math.isfinite(lower)) or upper < lower:
        logger.warning("QD+ boundaries crossed or missing at t=0, returning the European price")
        return PriceResult(price=european, european=european, method="juzhong", degraded=True, diagnostics=diagnostics)
    if lower < put.spot < upper:
        return PriceResult(price=intrinsic, european=european, method="juzhong", diagnostics=diagnostics)
    if put.spot >= upper:
        price = _juzhong_value(put, upper, Branch.upper)
    else:
        price = _juzhong_value(put, lower, Branch.lower)
    return PriceResult(price=price, european=european, method="juzhong", diagnostics=diagnostics)
