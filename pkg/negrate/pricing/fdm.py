"""TR-BDF2 finite differences for the American option LCP.

Time to maturity runs on tau_j = T (j / m)^2, prices on S = K + c sinh(xi)
with xi uniform, so that nodes concentrate around the strike. Each time step
is a trapezoidal stage of length alpha dt followed by a BDF2 stage, both
solved as a linear complementarity problem min(M v - b, v - g) = 0.
"""

import logging
import math
from dataclasses import dataclass
from enum import StrEnum, auto

import numpy as np
from scipy.interpolate import interp1d
from scipy.linalg import solve_banded

from ..exceptions import ConfigurationError, NonConvergence
from ..kim.collocation import BoundaryCurve, DoubleBoundary, Representation
from .blackscholes import MarketParams, OptionKind, european_value, symmetric_put_params
from .region import classify, maturity_limits
from .results import PriceResult

logger = logging.getLogger(__name__)

ALPHA = 2.0 - math.sqrt(2.0)
SPACE_FACTOR = 10
# half-width of the price domain in standard deviations
WIDTH = 5.0
POLICY_ITERATIONS = 200
LCP_TOLERANCE = 1e-10


class LcpSolverKind(StrEnum):
    brennan_schwartz = auto()
    policy_iteration = auto()


@dataclass(frozen=True, eq=False)
class FdGrid:
    """Space and time discretization of one contract.

    Attributes:
        time_steps (int): m.
        space_nodes (np.ndarray): 10 m + 1 increasing prices.
        time_points (np.ndarray): ascending tau levels, tau_0 = 0.
        scale (float): c of the hyperbolic map.
    """

    time_steps: int
    space_nodes: np.ndarray
    time_points: np.ndarray
    scale: float

    @classmethod
    def build(cls, p: MarketParams, time_steps: int, spots=()) -> "FdGrid":
        k = p.strike
        spread = p.vol * math.sqrt(p.maturity)
        levels = [p.spot, k, *spots]
        if p.dividend_yield != 0.0 and p.rate / p.dividend_yield > 0:
            levels.append(k * p.rate / p.dividend_yield)
        low = min(levels) * math.exp(-WIDTH * spread)
        high = max(levels) * math.exp(WIDTH * spread)
        scale = 0.25 * k * spread
        xi = np.linspace(math.asinh((low - k) / scale), math.asinh((high - k) / scale), SPACE_FACTOR * time_steps + 1)
        nodes = k + scale * np.sinh(xi)
        steps = np.arange(time_steps + 1, dtype=float) / time_steps
        return cls(time_steps=time_steps, space_nodes=nodes, time_points=p.maturity * steps * steps, scale=scale)


def _operator(s: np.ndarray, r: float, q: float, sigma: float):
    """Tridiagonal coefficients (a, b, c) of the Black-Scholes operator.

    Convection switches to upwinding where central differences would give
    negative off-diagonals. Boundary rows are zero.
    """
    a = np.zeros_like(s)
    b = np.zeros_like(s)
    c = np.zeros_like(s)
    h_minus = s[1:-1] - s[:-2]
    h_plus = s[2:] - s[1:-1]
    total = h_minus + h_plus
    x = s[1:-1]
    diffusion = sigma * sigma * x * x
    drift = (r - q) * x
    central_a = (diffusion - drift * h_plus) / (h_minus * total)
    central_c = (diffusion + drift * h_minus) / (h_plus * total)
    upwind_a = diffusion / (h_minus * total) + np.maximum(-drift, 0.0) / h_minus
    upwind_c = diffusion / (h_plus * total) + np.maximum(drift, 0.0) / h_plus
    central = (central_a >= 0) & (central_c >= 0)
    a[1:-1] = np.where(central, central_a, upwind_a)
    c[1:-1] = np.where(central, central_c, upwind_c)
    b[1:-1] = -(a[1:-1] + c[1:-1]) - r
    return a, b, c


def _apply(a, b, c, v):
    out = b * v
    out[1:] += a[1:] * v[:-1]
    out[:-1] += c[:-1] * v[1:]
    return out


def _banded(theta_dt: float, a, b, c) -> np.ndarray:
    """(I - theta dt A) in the (1, 1) banded storage of solve_banded."""
    ab = np.zeros((3, len(b)))
    ab[0, 1:] = -theta_dt * c[:-1]
    ab[1] = 1.0 - theta_dt * b
    ab[2, :-1] = -theta_dt * a[1:]
    return ab


def _multiply(ab: np.ndarray, v: np.ndarray) -> np.ndarray:
    out = ab[1] * v
    out[:-1] += ab[0, 1:] * v[1:]
    out[1:] += ab[2, :-1] * v[:-1]
    return out


def lcp_residual(ab: np.ndarray, rhs: np.ndarray, obstacle: np.ndarray, v: np.ndarray) -> float:
    """Max norm of min(M v - b, v - g)."""
    return float(np.max(np.abs(np.minimum(_multiply(ab, v) - rhs, v - obstacle))))


def policy_iteration(ab: np.ndarray, rhs: np.ndarray, obstacle: np.ndarray, fixed: np.ndarray) -> tuple[np.ndarray, int]:
    """Howard's policy iteration for min(M v - b, v - g) = 0.

    Rows flagged in ``fixed`` (Dirichlet rows) never switch to the obstacle.

    Returns:
        tuple[np.ndarray, int]: solution and number of linear solves.
    """
    v = solve_banded((1, 1), ab, rhs)
    exercise = np.zeros(len(v), dtype=bool)
    for iteration in range(1, POLICY_ITERATIONS + 1):
        policy = (_multiply(ab, v) - rhs > v - obstacle) & ~fixed
        if np.array_equal(policy, exercise) or lcp_residual(ab, rhs, obstacle, v) <= LCP_TOLERANCE:
            return v, iteration
        exercise = policy
        modified = ab.copy()
        modified[1, exercise] = 1.0
        modified[0, 1:][exercise[:-1]] = 0.0
        modified[2, :-1][exercise[1:]] = 0.0
        v = solve_banded((1, 1), modified, np.where(exercise, obstacle, rhs))
    raise NonConvergence(LcpSolverKind.policy_iteration, POLICY_ITERATIONS, (v,))


def brennan_schwartz(ab: np.ndarray, rhs: np.ndarray, obstacle: np.ndarray, exercise_below: bool = True) -> np.ndarray:
    """Brennan-Schwartz elimination for a single exercise region.

    With ``exercise_below`` (puts) the upper diagonal is eliminated from the
    top and the projected substitution runs upwards in price; calls use the
    mirrored sweep.
    """
    if not exercise_below:
        flipped = ab[::-1, ::-1].copy()
        return brennan_schwartz(flipped, rhs[::-1], obstacle[::-1])[::-1]
    n = len(rhs)
    upper, diag, lower = ab[0, 1:], ab[1].copy(), ab[2, :-1]
    y = rhs.copy()
    for i in range(n - 2, -1, -1):
        factor = upper[i] / diag[i + 1]
        diag[i] -= factor * lower[i]
        y[i] -= factor * y[i + 1]
    v = np.empty(n)
    v[0] = max(y[0] / diag[0], obstacle[0])
    for i in range(1, n):
        v[i] = max((y[i] - lower[i - 1] * v[i - 1]) / diag[i], obstacle[i])
    return v


def _payoff(s, k, eta):
    return np.maximum(eta * (s - k), 0.0)


def _cell_averaged_payoff(s: np.ndarray, k: float, eta: int) -> np.ndarray:
    """Payoff averaged over [S_{i-1/2}, S_{i+1/2}]."""
    edges = np.concatenate(([s[0]], 0.5 * (s[1:] + s[:-1]), [s[-1]]))
    left, right = edges[:-1], edges[1:]
    width = right - left
    # integral of max(eta (x - K), 0) from left to right
    a = np.clip(eta * (left - k), 0.0, None)
    b = np.clip(eta * (right - k), 0.0, None)
    integral = eta * 0.5 * (b * b - a * a)
    averaged = np.where(width > 0, integral / np.where(width > 0, width, 1.0), _payoff(s, k, eta))
    return averaged


def _frontiers(s: np.ndarray, v: np.ndarray, obstacle: np.ndarray, k: float):
    """(lower, upper) edges of the exercise set, NaN when absent or when the
    set reaches the end of the grid."""
    gap = np.maximum(v - obstacle, 0.0)
    exercise = np.flatnonzero((gap[1:-1] <= 1e-9 * k) & (obstacle[1:-1] > 0)) + 1
    if len(exercise) == 0:
        return math.nan, math.nan
    low, high = exercise[0], exercise[-1]

    def refine(i, direction):
        j, l = i + direction, i + 2 * direction
        if l < 0 or l >= len(s):
            return s[i]
        w1, w2 = math.sqrt(gap[j]), math.sqrt(gap[l])
        if w2 == w1:
            return s[i]
        root = s[j] - w1 * (s[l] - s[j]) / (w2 - w1)
        return float(np.clip(root, min(s[i], s[j]), max(s[i], s[j])))

    lower = math.nan if low <= 1 else refine(low, -1)
    upper = math.nan if high >= len(s) - 2 else refine(high, +1)
    return lower, upper


def _solve(p: MarketParams, time_steps: int, solver: LcpSolverKind, american: bool, track: bool, spots=()):
    grid = FdGrid.build(p, time_steps, spots)
    s = grid.space_nodes
    k, r, q, sigma, eta = p.strike, p.rate, p.dividend_yield, p.vol, p.eta
    a, b, c = _operator(s, r, q, sigma)
    obstacle = _payoff(s, k, eta)
    fixed = np.zeros(len(s), dtype=bool)
    fixed[[0, -1]] = True
    edges = s[[0, -1]]

    def dirichlet(tau):
        values = european_value(edges, k, r, q, sigma, tau, eta)
        return np.maximum(values, _payoff(edges, k, eta)) if american else values

    def lcp(ab, rhs):
        if not american:
            return solve_banded((1, 1), ab, rhs), 1
        if solver is LcpSolverKind.brennan_schwartz:
            return brennan_schwartz(ab, rhs, obstacle, exercise_below=eta < 0), 1
        return policy_iteration(ab, rhs, obstacle, fixed)

    v = _cell_averaged_payoff(s, k, eta)
    frontiers = [(math.nan, math.nan)]
    solves = 0
    taus = grid.time_points
    for j in range(time_steps):
        dt = taus[j + 1] - taus[j]
        # trapezoidal stage to tau_j + alpha dt
        half = 0.5 * ALPHA * dt
        rhs = v + half * _apply(a, b, c, v)
        rhs[[0, -1]] = dirichlet(taus[j] + ALPHA * dt)
        stage, count = lcp(_banded(half, a, b, c), rhs)
        solves += count
        # BDF2 stage to tau_{j+1}
        rhs = (stage - (1.0 - ALPHA) ** 2 * v) / (ALPHA * (2.0 - ALPHA))
        rhs[[0, -1]] = dirichlet(taus[j + 1])
        v, count = lcp(_banded((1.0 - ALPHA) / (2.0 - ALPHA) * dt, a, b, c), rhs)
        solves += count
        if track:
            frontiers.append(_frontiers(s, v, obstacle, k))
    logger.debug("fd solve: %d steps, %d nodes, %d linear solves", time_steps, len(s), solves)
    return grid, v, frontiers, solves


def _read(s: np.ndarray, v: np.ndarray, spot: float) -> float:
    start = int(np.clip(np.searchsorted(s, spot) - 2, 0, len(s) - 4))
    window = slice(start, start + 4)
    return float(interp1d(s[window], v[window], kind="cubic")(spot))


def _check_solver(p: MarketParams, solver: LcpSolverKind, american: bool):
    put_rate = p.rate if p.kind is OptionKind.put else p.dividend_yield
    if american and solver is LcpSolverKind.brennan_schwartz and put_rate < 0:
        raise ConfigurationError("LCP_SOLVER", "Brennan-Schwartz assumes a single continuation region, use policy_iteration")


def fd_price(
    p: MarketParams,
    time_steps: int = 400,
    solver: LcpSolverKind = LcpSolverKind.policy_iteration,
    american: bool = True,
) -> PriceResult:
    """Finite difference price at the spot, read by cubic interpolation on the
    four nearest nodes. ``american=False`` solves the European PDE."""
    solver = LcpSolverKind(solver)
    _check_solver(p, solver, american)
    grid, v, frontiers, solves = _solve(p, time_steps, solver, american, track=american)
    s = grid.space_nodes
    price = _read(s, v, p.spot)
    european = float(european_value(p.spot, p.strike, p.rate, p.dividend_yield, p.vol, p.maturity, p.eta))
    diagnostics = {"time_steps": time_steps, "space_nodes": len(s), "linear_solves": solves}
    if american and p.kind is OptionKind.put:
        lower, upper = frontiers[-1]
        diagnostics["boundary"] = {"upper": upper, "lower": lower}
    return PriceResult(price=price, european=european, method="fdm", diagnostics=diagnostics)


def fd_boundary(p: MarketParams, time_steps: int = 400) -> DoubleBoundary:
    """Exercise frontiers at every time level, by policy iteration.

    Calls report the boundaries of their symmetric put. Levels with an empty
    exercise region hold NaN.
    """
    put = symmetric_put_params(p) if p.kind is OptionKind.call else p
    region = classify(put.kind, put.rate, put.dividend_yield)
    grid, _, frontiers, _ = _solve(put, time_steps, LcpSolverKind.policy_iteration, True, track=True)
    lower, upper = (np.asarray(values) for values in zip(*frontiers))
    knots = grid.time_points
    if region.never_optimal:
        limits = (put.strike, None)
    else:
        found = maturity_limits(put)
        limits = (found.u_limit, found.l_limit)
    upper[0] = limits[0]
    upper_curve = BoundaryCurve(
        knots=knots,
        values=upper,
        reference_level=limits[0],
        representation=Representation.piecewise_exponential_linear,
    )
    if not region.double_boundary_possible:
        return DoubleBoundary(upper=upper_curve, maturity=put.maturity)
    lower[0] = limits[1]
    lower_curve = BoundaryCurve(
        knots=knots,
        values=lower,
        reference_level=limits[1],
        representation=Representation.piecewise_exponential_linear,
        above_reference=True,
    )
    return DoubleBoundary(upper=upper_curve, lower=lower_curve, maturity=put.maturity)


def fd_prices(
    p: MarketParams,
    spots,
    time_steps: int = 400,
    solver: LcpSolverKind = LcpSolverKind.policy_iteration,
) -> np.ndarray:
    """American values at several spots from a single grid.

    The spot of ``p`` only widens the grid.
    """
    solver = LcpSolverKind(solver)
    _check_solver(p, solver, True)
    spots = np.atleast_1d(np.asarray(spots, dtype=float))
    grid, v, _, _ = _solve(p, time_steps, solver, True, track=False, spots=tuple(spots))
    return np.array([_read(grid.space_nodes, v, spot) for spot in spots])
