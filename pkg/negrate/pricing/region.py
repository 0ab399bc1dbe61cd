import math
from dataclasses import dataclass

from ..exceptions import DomainError
from .blackscholes import MarketParams, OptionKind

# constant of the lower boundary expansion close to maturity
ALPHA0 = 0.451723


@dataclass(frozen=True)
class RegionClass:
    never_optimal: bool
    double_boundary_possible: bool
    battauz_holds: bool


@dataclass(frozen=True)
class MaturityLimits:
    """Exercise boundary limits at t -> T for a put.

    ``l_limit`` is None when there is no lower boundary.
    """

    u_limit: float
    l_limit: float | None


def battauz_condition(r: float, q: float, sigma: float) -> tuple[bool, bool, bool]:
    """The three inequalities under which a put has two free boundaries."""
    if sigma <= 0:
        raise DomainError("vol", "must be positive")
    drift = r - q - 0.5 * sigma * sigma
    return (r < 0, drift > 0, drift * drift + 2.0 * r * sigma * sigma > 0)


def classify(kind: OptionKind | str, r: float, q: float, sigma: float | None = None) -> RegionClass:
    """Exercise regime of an American option.

    Calls are classified through put-call symmetry, i.e. with r and q swapped.
    ``battauz_holds`` is only evaluated when ``sigma`` is given.
    """
    kind = OptionKind(kind)
    if kind is OptionKind.call:
        r, q = q, r
    never_optimal = r <= 0 and r <= q
    double = r < 0 and not never_optimal
    holds = False
    if sigma is not None:
        holds = all(battauz_condition(r, q, sigma))
    return RegionClass(
        never_optimal=never_optimal,
        double_boundary_possible=double,
        battauz_holds=holds,
    )


def maturity_limits(p: MarketParams) -> MaturityLimits:
    """Boundary limits of the put (or of the symmetric put of a call)."""
    r, q, k = p.rate, p.dividend_yield, p.strike
    if p.kind is OptionKind.call:
        r, q, k = q, r, p.spot
    region = classify(OptionKind.put, r, q)
    if region.never_optimal:
        raise DomainError("rate", "early exercise is never optimal, no boundary")
    if region.double_boundary_possible:
        # q < r < 0 here, so q != 0
        return MaturityLimits(u_limit=k, l_limit=r * k / q)
    if q > 0:
        return MaturityLimits(u_limit=k * min(1.0, r / q), l_limit=None)
    return MaturityLimits(u_limit=k, l_limit=None)


def reference_levels(p: MarketParams) -> tuple[float, float | None]:
    """Collocation reference levels X of the upper and lower put boundary."""
    limits = maturity_limits(p)
    return limits.u_limit, limits.l_limit


def asymptotic_boundaries(p: MarketParams, t: float) -> tuple[float, float]:
    """Near-expiry expansions (u*, l*) of a put in the double-boundary regime."""
    region = classify(p.kind, p.rate, p.dividend_yield)
    if p.kind is not OptionKind.put or not region.double_boundary_possible:
        raise DomainError("rate", "asymptotics need a put in the double-boundary regime")
    r, q, k, sigma = p.rate, p.dividend_yield, p.strike, p.vol
    tau = p.maturity - t
    if tau <= 0:
        return k, r * k / q
    argument = sigma * sigma / (8.0 * math.pi * tau * (r - q) ** 2)
    if argument < 1.0:
        raise DomainError("t", "asymptotic upper boundary undefined this far from expiry")
    u_star = k - k * sigma * math.sqrt(tau * math.log(argument))
    l_star = (r * k / q) * (1.0 + ALPHA0 * sigma * math.sqrt(2.0 * tau))
    return u_star, l_star
