"""Kim integral equation for American puts with one or two exercise boundaries.

For a boundary point x at time to maturity tau the integrals run over the
elapsed time v in [0, tau], the boundary being read at tau - v. The
substitution v = tau (1 + y)^2 / 4 removes the square-root behaviour at v = 0,
so the inner integrals are plain tanh-sinh sums in y.

Two-boundary integrands carry the bracket [F(x, u) - F(x, l)]; with the
lower boundary absent they reduce to the single-boundary integrands.
"""

from dataclasses import dataclass

import numpy as np

from ..exceptions import DomainError
from ..pricing.blackscholes import MarketParams, european_value, norm_cdf, norm_pdf
from .collocation import BoundaryCurve, DoubleBoundary
from .quadrature import tanh_sinh_rule


@dataclass(frozen=True)
class QuadratureSpec:
    inner_points: int = 11
    pricing_points: int = 21

    def __post_init__(self):
        if self.inner_points < 3 or self.pricing_points < 3:
            raise DomainError("points", "quadratures need at least 3 points")


class KimEquations:
    """Boundary equations at the free knots (tau > 0) of a curve.

    Args:
        p (MarketParams): put parameters.
        knots (np.ndarray): ascending tau knots, the first one 0.
        inner_points (int): tanh-sinh points of the inner integrals.
    """

    def __init__(self, p: MarketParams, knots: np.ndarray, inner_points: int):
        self.p = p
        self.knots = np.asarray(knots, dtype=float)
        rule = tanh_sinh_rule(inner_points)
        s = 0.5 * rule.from_left
        one_minus_s = 0.5 * rule.from_right
        tau = self.knots[1:, None]
        self.tau = self.knots[1:]
        self.elapsed = tau * s * s
        self.sqrt_elapsed = np.sqrt(tau) * s
        self.boundary_tau = tau * one_minus_s * (1.0 + s)
        self.weights = rule.weights * tau * s
        r, q = p.rate, p.dividend_yield
        self.rate_kernel = self.weights * r * np.exp(-r * self.elapsed)
        self.yield_kernel = self.weights * q * np.exp(-q * self.elapsed)

    def _d(self, x, levels):
        """d1, d2 of the knot values ``x`` against boundary ``levels``."""
        sigma = self.p.vol
        drift = self.p.rate - self.p.dividend_yield + 0.5 * sigma * sigma
        vol = sigma * self.sqrt_elapsed
        first = (np.log(x[:, None] / levels) + drift * self.elapsed) / vol
        return first, first - vol

    def _strike_d(self, x):
        p = self.p
        vol = p.vol * np.sqrt(self.tau)
        first = (np.log(x / p.strike) + (p.rate - p.dividend_yield + 0.5 * p.vol**2) * self.tau) / vol
        return first, first - vol, vol

    def _bracket(self, x, upper: BoundaryCurve, lower: BoundaryCurve | None, func):
        """Sum over the inner nodes of func(d1, d2) against u minus against l."""
        first, second = self._d(x, upper(self.boundary_tau))
        rate_part, yield_part = func(first, second)
        if lower is not None:
            first, second = self._d(x, lower(self.boundary_tau))
            rate_lower, yield_lower = func(first, second)
            rate_part = rate_part - rate_lower
            yield_part = yield_part - yield_lower
        return (
            np.sum(self.rate_kernel * rate_part, axis=1),
            np.sum(self.yield_kernel * yield_part, axis=1),
        )

    def continuity_terms(self, x, upper: BoundaryCurve, lower: BoundaryCurve | None = None):
        """(N, D, I_r, I_q) of the price-continuity equation K N = x D."""
        p = self.p
        first, second, _ = self._strike_d(x)
        i_r, i_q = self._bracket(x, upper, lower, lambda a, b: (norm_cdf(-b), norm_cdf(-a)))
        numerator = 1.0 - np.exp(-p.rate * self.tau) * norm_cdf(-second) - i_r
        denominator = 1.0 - np.exp(-p.dividend_yield * self.tau) * norm_cdf(-first) - i_q
        return numerator, denominator, i_r, i_q

    def contact_terms(self, x, curve: BoundaryCurve):
        """(N, D) of the symmetrized high-contact equation K N = x D."""
        p = self.p
        first, second, vol = self._strike_d(x)
        sqrt_v = p.vol * self.sqrt_elapsed

        def integrands(a, b):
            return norm_pdf(b) / sqrt_v, norm_cdf(a) + norm_pdf(a) / sqrt_v

        i_r, i_q = self._bracket(x, curve, None, integrands)
        disc_r = np.exp(-p.rate * self.tau)
        disc_q = np.exp(-p.dividend_yield * self.tau)
        numerator = disc_r * norm_pdf(second) / vol + i_r
        denominator = disc_q * norm_cdf(first) + disc_q * norm_pdf(first) / vol + i_q
        return numerator, denominator

    def continuity_residual(self, x, upper: BoundaryCurve, lower: BoundaryCurve | None = None):
        numerator, denominator, _, _ = self.continuity_terms(x, upper, lower)
        return self.p.strike * numerator - x * denominator

    def contact_residual(self, x, curve: BoundaryCurve):
        numerator, denominator = self.contact_terms(x, curve)
        return self.p.strike * numerator - x * denominator


def _premium_integrand(p: MarketParams, t, levels):
    s, k, r, q, sigma = p.spot, p.strike, p.rate, p.dividend_yield, p.vol
    vol = sigma * np.sqrt(t)
    first = (np.log(s / levels) + (r - q + 0.5 * sigma * sigma) * t) / vol
    second = first - vol
    return r * k * np.exp(-r * t) * norm_cdf(-second) - q * s * np.exp(-q * t) * norm_cdf(-first)


def premium_integral(p: MarketParams, boundary: DoubleBoundary, pricing_points: int) -> float:
    """Early exercise premium of the put ``p``.

    Integrates over calendar time t in [t_s, T] (t_s = 0 without crossing)
    with t = t_s + (T - t_s)(1 + y)^2 / 4; the curves are read at T - t.
    """
    maturity = p.maturity
    start = boundary.crossing_time or 0.0
    span = maturity - start
    rule = tanh_sinh_rule(pricing_points)
    s = 0.5 * rule.from_left
    t = start + span * s * s
    tau = span * (0.5 * rule.from_right) * (1.0 + s)
    weights = rule.weights * span * s
    integrand = _premium_integrand(p, t, boundary.upper(tau))
    if boundary.lower is not None:
        integrand = integrand - _premium_integrand(p, t, boundary.lower(tau))
    return float(np.dot(weights, integrand))


def american_value(p: MarketParams, boundary: DoubleBoundary, pricing_points: int) -> tuple[float, float]:
    """(American, European) value of the put ``p`` given its boundaries."""
    european = float(european_value(p.spot, p.strike, p.rate, p.dividend_yield, p.vol, p.maturity, -1))
    intrinsic = p.strike - p.spot
    if boundary.crossing_time is None:
        upper_now = float(boundary.upper(p.maturity))
        if boundary.lower is None:
            if p.spot <= upper_now:
                return intrinsic, european
        elif float(boundary.lower(p.maturity)) < p.spot < upper_now:
            return intrinsic, european
    return european + premium_integral(p, boundary, pricing_points), european
