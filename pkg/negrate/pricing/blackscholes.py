"""European Black-Scholes analytics shared by every American pricer.

All array helpers broadcast over numpy inputs; ``tau`` denotes time to
maturity in years and ``eta`` is +1 for calls and -1 for puts.
"""

import dataclasses
import math
from dataclasses import dataclass
from enum import StrEnum, auto

import numpy as np
from scipy.special import ndtr, wofz

from ..exceptions import DomainError

SQRT_2PI = math.sqrt(2.0 * math.pi)


class OptionKind(StrEnum):
    call = auto()
    put = auto()

    @property
    def eta(self) -> int:
        return 1 if self is OptionKind.call else -1


@dataclass(frozen=True)
class MarketParams:
    """Contract and model state of a vanilla option.

    Attributes:
        spot (float): S > 0.
        strike (float): K > 0.
        rate (float): continuously compounded interest rate r, any sign.
        dividend_yield (float): continuous dividend yield q, any sign.
        vol (float): Black-Scholes volatility sigma > 0.
        maturity (float): T > 0 in years.
        kind (OptionKind): call or put.
    """

    spot: float
    strike: float
    rate: float
    dividend_yield: float
    vol: float
    maturity: float
    kind: OptionKind = OptionKind.put

    def __post_init__(self):
        object.__setattr__(self, "kind", OptionKind(self.kind))
        for name in ("spot", "strike", "vol", "maturity"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise DomainError(name, "must be finite and positive, got %r" % value)
        for name in ("rate", "dividend_yield"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(name, "must be finite")

    @property
    def eta(self) -> int:
        return self.kind.eta

    def replace(self, **changes) -> "MarketParams":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class D1D2:
    d1: float
    d2: float
    tau: float


def norm_pdf(x):
    return np.exp(-0.5 * np.square(x)) / SQRT_2PI


norm_cdf = ndtr


def d1(s, b, r, q, sigma, tau):
    """d1 of spot ``s`` against level ``b`` over ``tau`` (tau > 0)."""
    vol_sqrt = sigma * np.sqrt(tau)
    return (np.log(s / b) + (r - q + 0.5 * sigma * sigma) * tau) / vol_sqrt


def d2(s, b, r, q, sigma, tau):
    return d1(s, b, r, q, sigma, tau) - sigma * np.sqrt(tau)


def d1d2(s: float, b: float, r: float, q: float, sigma: float, tau: float) -> D1D2:
    if tau <= 0:
        raise DomainError("tau", "d1/d2 need a positive time to maturity")
    first = float(d1(s, b, r, q, sigma, tau))
    return D1D2(d1=first, d2=first - sigma * math.sqrt(tau), tau=tau)


def european_value(s, k, r, q, sigma, tau, eta):
    """Black-Scholes value, falling back to the payoff where ``tau`` is 0."""
    s, k, tau = np.broadcast_arrays(
        np.asarray(s, dtype=float), np.asarray(k, dtype=float), np.asarray(tau, dtype=float)
    )
    live = tau > 0
    safe_tau = np.where(live, tau, 1.0)
    first = d1(s, k, r, q, sigma, safe_tau)
    second = first - sigma * np.sqrt(safe_tau)
    value = eta * (
        s * np.exp(-q * safe_tau) * ndtr(eta * first)
        - k * np.exp(-r * safe_tau) * ndtr(eta * second)
    )
    return np.where(live, value, np.maximum(eta * (s - k), 0.0))


def european_dtau(s, k, r, q, sigma, tau, eta):
    """Derivative of the European value with respect to time to maturity."""
    first = d1(s, k, r, q, sigma, tau)
    second = first - sigma * np.sqrt(tau)
    disc_q = np.exp(-q * tau)
    disc_r = np.exp(-r * tau)
    return (
        s * disc_q * norm_pdf(first) * sigma / (2.0 * np.sqrt(tau))
        - eta * q * s * disc_q * ndtr(eta * first)
        + eta * r * k * disc_r * ndtr(eta * second)
    )


def european_delta(s, k, r, q, sigma, tau, eta):
    return eta * np.exp(-q * tau) * ndtr(eta * d1(s, k, r, q, sigma, tau))


def european_gamma(s, k, r, q, sigma, tau):
    return np.exp(-q * tau) * norm_pdf(d1(s, k, r, q, sigma, tau)) / (s * sigma * np.sqrt(tau))


def european_price(p: MarketParams) -> float:
    return float(
        european_value(p.spot, p.strike, p.rate, p.dividend_yield, p.vol, p.maturity, p.eta)
    )


def european_theta(p: MarketParams) -> float:
    """Calendar-time derivative dV/dt at fixed maturity (minus dV/dT)."""
    return -float(
        european_dtau(p.spot, p.strike, p.rate, p.dividend_yield, p.vol, p.maturity, p.eta)
    )


def complex_erfc(z):
    """Complementary error function for complex arguments.

    Evaluated through the Faddeeva function w, erfc(z) = exp(-z^2) w(iz), in
    log-scaled form so that large exponents do not overflow before the
    product is formed. The left half-plane uses erfc(z) = 2 - erfc(-z).
    """
    z = np.asarray(z, dtype=complex)
    right = z.real >= 0
    zr = np.where(right, z, -z)
    scaled = np.exp(-zr * zr + np.log(wofz(1j * zr)))
    return np.where(right, scaled, 2.0 - scaled)


def complex_norm_cdf(w):
    """Standard normal CDF continued to complex arguments."""
    return 0.5 * complex_erfc(-np.asarray(w, dtype=complex) / math.sqrt(2.0))


def symmetric_put_params(p: MarketParams) -> MarketParams:
    """Put with the same American value as the call ``p`` (put-call symmetry)."""
    if p.kind is not OptionKind.call:
        raise DomainError("kind", "put-call symmetry maps calls onto puts")
    return MarketParams(
        spot=p.strike,
        strike=p.spot,
        rate=p.dividend_yield,
        dividend_yield=p.rate,
        vol=p.vol,
        maturity=p.maturity,
        kind=OptionKind.put,
    )
