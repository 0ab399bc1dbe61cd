import math
from dataclasses import dataclass, field
from typing import Any


def plain(value):
    """JSON-friendly copy of ``value`` with NaN and infinities as None."""
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if hasattr(value, "item"):
        return plain(value.item())
    return value


@dataclass
class PriceResult:
    """Outcome of one pricing call.

    Attributes:
        price (float): American (or European) option value.
        european (float): Black-Scholes European value of the same contract.
        method (str): name of the method that produced ``price``.
        degraded (bool): the method could not produce its own estimate and fell
            back to a cruder one (e.g. Ju-Zhong with crossed boundaries).
        diagnostics (dict): iterations, residuals, fallbacks, boundary snapshot.
    """

    price: float
    european: float
    method: str
    degraded: bool = False
    diagnostics: dict[str, Any] = field(default_factory=dict)

    @property
    def premium(self) -> float:
        return self.price - self.european

    def to_dict(self) -> dict[str, Any]:
        return plain(
            {
                "price": self.price,
                "european": self.european,
                "premium": self.premium,
                "method": self.method,
                "degraded": self.degraded,
                "diagnostics": self.diagnostics,
            }
        )
