"""Exercise boundary curves.

A Chebyshev curve interpolates H = (ln(S*/X))^2 in z = 2 sqrt(tau/tau_max) - 1
on m + 1 Chebyshev extrema; the knot at tau = 0 sits on the maturity limit X.
"""

from dataclasses import dataclass
from enum import StrEnum, auto

import numpy as np
from numpy.polynomial import chebyshev

from ..exceptions import DomainError


class Representation(StrEnum):
    chebyshev_of_transformed = auto()
    piecewise_exponential_linear = auto()


@dataclass(frozen=True, eq=False)
class BoundaryCurve:
    """One exercise boundary as a function of the time to maturity tau.

    Attributes:
        knots (np.ndarray): ascending tau values, the first one 0.
        values (np.ndarray): boundary prices at the knots (NaN = absent).
        reference_level (float): X, the maturity limit of the curve.
        representation (Representation): how values between knots are read.
        above_reference (bool): the curve lies above X (lower put boundary).
        coefficients (np.ndarray | None): Chebyshev coefficients of H.
    """

    knots: np.ndarray
    values: np.ndarray
    reference_level: float
    representation: Representation = Representation.chebyshev_of_transformed
    above_reference: bool = False
    coefficients: np.ndarray | None = None

    @property
    def tau_max(self) -> float:
        return float(self.knots[-1])

    @property
    def complete(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def __call__(self, tau):
        tau = np.clip(np.asarray(tau, dtype=float), 0.0, self.tau_max)
        if self.representation is Representation.piecewise_exponential_linear:
            result = np.exp(np.interp(tau, self.knots, np.log(self.values)))
        else:
            z = 2.0 * np.sqrt(tau / self.tau_max) - 1.0
            h = np.maximum(chebyshev.chebval(z, self.coefficients), 0.0)
            sign = 1.0 if self.above_reference else -1.0
            result = self.reference_level * np.exp(sign * np.sqrt(h))
        # the stored values are returned exactly on the knots
        index = np.clip(np.searchsorted(self.knots, tau), 0, len(self.knots) - 1)
        result = np.where(self.knots[index] == tau, self.values[index], result)
        return result if np.ndim(result) else result[()]

    def with_values(self, values) -> "BoundaryCurve":
        values = np.asarray(values, dtype=float)
        if self.representation is Representation.chebyshev_of_transformed:
            return chebyshev_boundary(self.knots, values, self.reference_level, self.above_reference)
        return BoundaryCurve(
            knots=self.knots,
            values=values,
            reference_level=self.reference_level,
            representation=self.representation,
            above_reference=self.above_reference,
        )


@dataclass(frozen=True, eq=False)
class DoubleBoundary:
    """Upper and (optional) lower put boundary.

    ``crossing_time`` t_s is a calendar time; when present both curves live on
    tau in [0, T - t_s] only.
    """

    upper: BoundaryCurve
    maturity: float
    lower: BoundaryCurve | None = None
    crossing_time: float | None = None

    def upper_at(self, t):
        return self._at(self.upper, t)

    def lower_at(self, t):
        if self.lower is None:
            return np.nan
        return self._at(self.lower, t)

    def _at(self, curve: BoundaryCurve, t):
        tau = self.maturity - np.asarray(t, dtype=float)
        result = curve(tau)
        if self.crossing_time is not None:
            result = np.where(np.asarray(t) < self.crossing_time, np.nan, result)
        return result if np.ndim(result) else float(result)

    @property
    def crossed(self) -> bool:
        if self.crossing_time is not None:
            return True
        if self.lower is None:
            return False
        upper, lower = self.upper_at(0.0), self.lower_at(0.0)
        if np.isnan(upper) and np.isfinite(lower):
            return True
        return bool(upper < lower)


def chebyshev_nodes(m: int, tau_max: float) -> np.ndarray:
    """m + 1 ascending knots in tau, Chebyshev extrema in z."""
    if m < 2:
        raise DomainError("m", "need at least two collocation points")
    z = -np.cos(np.pi * np.arange(m + 1) / m)
    return tau_max * (0.5 * (1.0 + z)) ** 2


def chebyshev_boundary(knots, values, reference_level: float, above_reference: bool = False) -> BoundaryCurve:
    """Interpolate H = (ln(S*/X))^2 exactly at the knots."""
    knots = np.asarray(knots, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(knots) < 3 or len(knots) != len(values):
        raise DomainError("knots", "need m + 1 >= 3 knots matching the values")
    if np.any(~np.isfinite(values)) or np.any(values <= 0):
        raise DomainError("values", "boundary values must be positive")
    values = values.copy()
    values[0] = reference_level
    z = 2.0 * np.sqrt(knots / knots[-1]) - 1.0
    h = np.log(values / reference_level) ** 2
    coefficients = chebyshev.chebfit(z, h, len(knots) - 1)
    return BoundaryCurve(
        knots=knots,
        values=values,
        reference_level=reference_level,
        representation=Representation.chebyshev_of_transformed,
        above_reference=above_reference,
        coefficients=coefficients,
    )
