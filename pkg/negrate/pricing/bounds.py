"""Exercise boundary estimates from knock-out options with rebate.

A knock-out option whose rebate is the exercise value |L - K| prices the
strategy "exercise when the spot reaches L". The best such barrier solves
lim_{S -> L} dV/dL = 0 and bounds the American exercise boundary.

Every barrier block is a sum of terms w S^p H^h N(a ln S + c ln H + d), so
values and derivatives in S and H are produced by one routine. Under negative
rates the rebate exponent lambda turns imaginary and N is continued to
complex arguments.
"""

import logging
import math
from dataclasses import dataclass
from enum import StrEnum

import numpy as np
from scipy.optimize import brentq

from ..exceptions import DomainError, NonConvergence
from ..kim.collocation import BoundaryCurve, Representation
from .blackscholes import SQRT_2PI, MarketParams, OptionKind, complex_norm_cdf, norm_cdf
from .region import classify, maturity_limits

logger = logging.getLogger(__name__)

NEWTON_STEPS = 50


class BarrierStyle(StrEnum):
    up_out = "up_out"
    down_out = "down_out"


class BoundKind(StrEnum):
    call_lower = "call_lower"
    put_upper = "put_upper"
    put_lower = "put_lower"
    call_upper_lowerbound = "call_upper_lowerbound"


@dataclass(frozen=True)
class CapOptionParams:
    """Knock-out option with rebate paid when the barrier is hit.

    Attributes:
        market (MarketParams): contract, ``maturity`` being the time left.
        barrier (float): L.
        rebate (float | None): rebate, |L - K| when omitted.
    """

    market: MarketParams
    barrier: float
    rebate: float | None = None

    def __post_init__(self):
        if not math.isfinite(self.barrier) or self.barrier <= 0:
            raise DomainError("barrier", "must be finite and positive")
        if self.rebate is None:
            object.__setattr__(self, "rebate", abs(self.barrier - self.market.strike))


@dataclass(frozen=True)
class _Term:
    weight: complex
    s_power: complex
    h_power: complex
    s_slope: complex
    h_slope: complex
    offset: complex


def _lambda(mu: float, r: float, sigma: float):
    discriminant = mu * mu + 2.0 * r / (sigma * sigma)
    if discriminant >= 0:
        return math.sqrt(discriminant)
    return 1j * math.sqrt(-discriminant)


def _blocks(p: MarketParams, phi: int, eta: int):
    """Terms of the A, B, C, D blocks and the rebate kernel G."""
    r, q, sigma, tau = p.rate, p.dividend_yield, p.vol, p.maturity
    v = sigma * math.sqrt(tau)
    mu = (r - q - 0.5 * sigma * sigma) / (sigma * sigma)
    lam = _lambda(mu, r, sigma)
    carry = phi * math.exp(-q * tau)
    discounted = -phi * p.strike * math.exp(-r * tau)
    log_k = math.log(p.strike)
    x1 = -log_k / v + (1.0 + mu) * v
    grow, decay = 1.0 + mu, -1.0 - 2.0 * mu
    return {
        "A": [
            _Term(carry, 1.0, 0.0, phi / v, 0.0, phi * x1),
            _Term(discounted, 0.0, 0.0, phi / v, 0.0, phi * (x1 - v)),
        ],
        "B": [
            _Term(carry, 1.0, 0.0, phi / v, -phi / v, phi * grow * v),
            _Term(discounted, 0.0, 0.0, phi / v, -phi / v, phi * mu * v),
        ],
        "C": [
            _Term(carry, decay, 2.0 * grow, -eta / v, 2.0 * eta / v, eta * x1),
            _Term(discounted, -2.0 * mu, 2.0 * mu, -eta / v, 2.0 * eta / v, eta * (x1 - v)),
        ],
        "D": [
            _Term(carry, decay, 2.0 * grow, -eta / v, eta / v, eta * grow * v),
            _Term(discounted, -2.0 * mu, 2.0 * mu, -eta / v, eta / v, eta * mu * v),
        ],
        "G": [
            _Term(1.0, -(mu + lam), mu + lam, -eta / v, eta / v, eta * lam * v),
            _Term(1.0, -(mu - lam), mu - lam, -eta / v, eta / v, -eta * lam * v),
        ],
    }


def _combination(kind: OptionKind, style: BarrierStyle, strike: float, barrier: float) -> tuple[int, int, dict]:
    """(phi, eta, signs of A..D) of the out option; G always enters with +1."""
    above = strike > barrier
    match (kind, style):
        case (OptionKind.call, BarrierStyle.down_out):
            signs = {"A": 1, "C": -1} if above else {"B": 1, "D": -1}
            return 1, 1, signs
        case (OptionKind.call, BarrierStyle.up_out):
            signs = {} if above else {"A": 1, "B": -1, "C": 1, "D": -1}
            return 1, -1, signs
        case (OptionKind.put, BarrierStyle.down_out):
            signs = {"A": 1, "B": -1, "C": 1, "D": -1} if above else {}
            return -1, 1, signs
        case (OptionKind.put, BarrierStyle.up_out):
            signs = {"B": 1, "D": -1} if above else {"A": 1, "C": -1}
            return -1, -1, signs


def _term_jet(term: _Term, x: float, y: float) -> np.ndarray:
    """(value, d/dx, d/dy, d2/dy2, d2/dxdy) of one term in x = ln S, y = ln H."""
    complex_term = any(
        isinstance(value, complex)
        for value in (term.weight, term.s_power, term.h_power, term.s_slope, term.h_slope, term.offset)
    )
    u = term.s_slope * x + term.h_slope * y + term.offset
    growth = term.weight * np.exp(term.s_power * x + term.h_power * y)
    big = complex_norm_cdf(u) if complex_term else norm_cdf(u)
    small = np.exp(-0.5 * u * u) / SQRT_2PI
    small_prime = -u * small
    a, c, p, h = term.s_slope, term.h_slope, term.s_power, term.h_power
    return growth * np.array(
        [
            big,
            p * big + a * small,
            h * big + c * small,
            h * h * big + 2.0 * h * c * small + c * c * small_prime,
            p * h * big + (h * a + p * c) * small + a * c * small_prime,
        ],
        dtype=complex,
    )


def _jet(terms, x, y) -> np.ndarray:
    total = np.zeros(5, dtype=complex)
    for term in terms:
        total += _term_jet(term, x, y)
    return total


def _real(values: np.ndarray, scale: float) -> np.ndarray:
    residue = np.max(np.abs(values.imag))
    if residue > 1e-10 * max(1.0, scale):
        raise DomainError("rate", "barrier formula left an imaginary residue of %.3e" % residue)
    return values.real


def _check_alive(c: CapOptionParams, style: BarrierStyle):
    s, barrier = c.market.spot, c.barrier
    if (style is BarrierStyle.up_out and s > barrier) or (style is BarrierStyle.down_out and s < barrier):
        raise DomainError("spot", "spot lies beyond the barrier")


def _evaluate(c: CapOptionParams, style: BarrierStyle, rebate_slope: float) -> np.ndarray:
    """(V, V_S, V_H, V_HH, V_SH) with the rebate changing by ``rebate_slope``
    per unit of barrier."""
    style = BarrierStyle(style)
    _check_alive(c, style)
    p = c.market
    s, h = p.spot, c.barrier
    phi, eta, signs = _combination(p.kind, style, p.strike, h)
    blocks = _blocks(p, phi, eta)
    x, y = math.log(s), math.log(h)
    jet = np.zeros(5, dtype=complex)
    for name, sign in signs.items():
        jet += sign * _jet(blocks[name], x, y)
    kernel = _jet(blocks["G"], x, y)
    jet += c.rebate * kernel
    # rebate(H) = rebate + slope (H - L), so d rebate / d ln H = slope H
    log_slope = rebate_slope * h
    jet[2] += log_slope * kernel[0]
    jet[3] += 2.0 * log_slope * kernel[2] + log_slope * kernel[0]
    jet[4] += log_slope * kernel[1]
    value, dx, dy, dyy, dxy = _real(jet, p.strike)
    return np.array([value, dx / s, dy / h, (dyy - dy) / (h * h), dxy / (s * h)])


def barrier_price(c: CapOptionParams, style: BarrierStyle) -> float:
    """Knock-out value with the rebate paid at the hitting time.

    Raises:
        DomainError: when the spot lies beyond the barrier.
    """
    if c.market.spot == c.barrier:
        return float(c.rebate)
    return float(_evaluate(c, style, 0.0)[0])


def barrier_sensitivities(c: CapOptionParams, style: BarrierStyle) -> tuple[float, float, float]:
    """(dV/dL, d2V/dL2, d2V/dSdL) with the rebate following |L - K|."""
    slope = math.copysign(1.0, c.barrier - c.market.strike)
    values = _evaluate(c, style, slope)
    return float(values[2]), float(values[3]), float(values[4])


def _optimality(p: MarketParams, style: BarrierStyle, level: float) -> tuple[float, float]:
    """g(L) = dV/dL at S = L and its total derivative in L."""
    c = CapOptionParams(market=p.replace(spot=level), barrier=level)
    d_h, d_hh, d_sh = barrier_sensitivities(c, style)
    return d_h, d_hh + d_sh


@dataclass(frozen=True)
class _BoundSetup:
    kind: OptionKind
    style: BarrierStyle
    reference: float
    low: float
    high: float


def _setup(p: MarketParams, which: BoundKind) -> _BoundSetup:
    k, r, q = p.strike, p.rate, p.dividend_yield
    if which in (BoundKind.put_upper, BoundKind.put_lower):
        region = classify(OptionKind.put, r, q)
        if region.never_optimal:
            raise DomainError("rate", "early exercise of the put is never optimal")
        limits = maturity_limits(p.replace(kind=OptionKind.put))
        if which is BoundKind.put_upper:
            return _BoundSetup(OptionKind.put, BarrierStyle.down_out, limits.u_limit, 1e-3 * k, k)
        if limits.l_limit is None:
            raise DomainError("rate", "the put has no lower exercise boundary")
        return _BoundSetup(OptionKind.put, BarrierStyle.up_out, limits.l_limit, 1e-3 * k, k)

    region = classify(OptionKind.call, r, q)
    if region.never_optimal:
        raise DomainError("rate", "early exercise of the call is never optimal")
    ratio = r / q if q != 0.0 else math.inf
    if which is BoundKind.call_lower:
        reference = k * max(1.0, ratio) if 0 < ratio < math.inf else k
        return _BoundSetup(OptionKind.call, BarrierStyle.up_out, reference, k, 1e3 * k)
    if not region.double_boundary_possible:
        raise DomainError("rate", "the call has no lower exercise boundary")
    return _BoundSetup(OptionKind.call, BarrierStyle.down_out, k, k, 1e3 * k)


def _admissible(level: float, setup: _BoundSetup) -> bool:
    return setup.low < level < setup.high and math.isfinite(level)


def _newton(p: MarketParams, setup: _BoundSetup, guess: float, tol: float) -> float:
    level = guess
    for _ in range(NEWTON_STEPS):
        g, slope = _optimality(p, setup.style, level)
        if not (math.isfinite(g) and math.isfinite(slope)) or slope == 0.0:
            break
        step = g / slope
        level -= step
        if not _admissible(level, setup):
            break
        if abs(step) <= tol * p.strike:
            return level
    raise NonConvergence("newton", NEWTON_STEPS, (level,))


def _bracketed(p: MarketParams, setup: _BoundSetup, guess: float) -> float:
    grid = np.geomspace(setup.low * (1.0 + 1e-9), setup.high * (1.0 - 1e-9), 121)

    def g(level):
        return _optimality(p, setup.style, float(level))[0]

    values = []
    for level in grid:
        try:
            values.append(g(level))
        except DomainError:
            values.append(math.nan)
    values = np.asarray(values)
    candidates = [
        i for i in range(len(grid) - 1)
        if np.isfinite(values[i]) and np.isfinite(values[i + 1]) and values[i] * values[i + 1] < 0
    ]
    if not candidates:
        raise NonConvergence("bisection", 0, (guess,))
    best = min(candidates, key=lambda i: abs(math.log(grid[i] / guess)))
    return brentq(g, grid[best], grid[best + 1], xtol=1e-12 * p.strike)


def boundary_bound(p: MarketParams, which: BoundKind, times, tol: float = 1e-10):
    """Bound on an exercise boundary at ascending calendar ``times``.

    Sweeps backward from the time nearest maturity, warm-starting Newton with
    the previous solution; bisection on the admissible side of K takes over
    when Newton fails. Unsolved times hold NaN.

    Returns:
        BoundaryCurve: piecewise curve with the maturity limit at tau = 0.
    """
    which = BoundKind(which)
    setup = _setup(p, which)
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0 or np.any(np.diff(times) <= 0) or times[0] < 0 or times[-1] >= p.maturity:
        raise DomainError("times", "times must be ascending inside [0, T)")
    edge = 1e-8 * p.strike
    guess = float(np.clip(setup.reference, setup.low + edge, setup.high - edge))
    values = np.full(times.shape, math.nan)
    for i in range(len(times) - 1, -1, -1):
        market = p.replace(kind=setup.kind, maturity=p.maturity - times[i])
        try:
            try:
                level = _newton(market, setup, guess, tol)
            except NonConvergence:
                level = _bracketed(market, setup, guess)
        except (NonConvergence, DomainError, ValueError):
            logger.debug("no %s bound at t=%g", which, times[i])
            continue
        values[i] = level
        guess = level
    above = which in (BoundKind.put_lower, BoundKind.call_lower)
    return BoundaryCurve(
        knots=np.concatenate(([0.0], p.maturity - times[::-1])),
        values=np.concatenate(([setup.reference], values[::-1])),
        reference_level=setup.reference,
        representation=Representation.piecewise_exponential_linear,
        above_reference=above,
    )
