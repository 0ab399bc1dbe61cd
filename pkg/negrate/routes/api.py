import logging
from typing import Annotated, Any

import numpy as np
from fastapi import APIRouter, HTTPException, Query, status
from pydantic import BaseModel, Field

from .. import engine
from ..config import config
from ..exceptions import ConfigurationError, DomainError, NegrateError
from ..pricing.blackscholes import MarketParams, OptionKind
from ..pricing.region import classify

logger = logging.getLogger(__name__)

router = APIRouter()


class MarketParamsModel(BaseModel):
    spot: float = Field(gt=0)
    strike: float = Field(gt=0)
    rate: float
    dividend_yield: float
    vol: float = Field(gt=0)
    maturity: float = Field(gt=0)
    kind: OptionKind = OptionKind.put

    def to_params(self) -> MarketParams:
        return MarketParams(**self.model_dump())


class SolverOverrides(BaseModel):
    collocation_points: int | None = None
    iterations: int | None = None
    inner_points: int | None = None
    pricing_points: int | None = None
    tolerance: float | None = None
    time_steps: int | None = None


class PriceRequest(BaseModel):
    market: MarketParamsModel
    method: engine.Method | None = None
    solver: SolverOverrides = SolverOverrides()


class BoundaryRequest(PriceRequest):
    points: int = Field(default=64, gt=1, le=2000)


class PriceResultModel(BaseModel):
    price: float
    european: float
    premium: float
    method: str
    degraded: bool
    diagnostics: dict[str, Any]


class BoundaryPoint(BaseModel):
    t: float
    upper: float | None
    lower: float | None


class BoundaryModel(BaseModel):
    method: str
    crossing_time: float | None
    points: list[BoundaryPoint]


class RegionModel(BaseModel):
    never_optimal: bool
    double_boundary_possible: bool
    battauz_holds: bool


"""Translates library errors into HTTP errors.

    Args:
        err (NegrateError): The error raised by a pricer.

    Returns:
        HTTPException: 422 for invalid input or method choice, 500 when the
        numerical method failed.
"""


def http_error(err: NegrateError) -> HTTPException:
    if isinstance(err, (DomainError, ConfigurationError)):
        return HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=str(err))
    logger.warning("pricing failed: %s", err)
    return HTTPException(status_code=status.HTTP_500_INTERNAL_SERVER_ERROR, detail=str(err))


def _solver(overrides: SolverOverrides):
    return config.solver_config(**overrides.model_dump(exclude_none=True))


@router.post("/price", response_model=PriceResultModel)
def price(request: PriceRequest):
    try:
        result = engine.price(request.market.to_params(), request.method, _solver(request.solver))
    except NegrateError as err:
        raise http_error(err) from err
    return result.to_dict()


"""Computes the exercise boundaries of a contract.

    Calls report the boundaries of their symmetric put. The curves are
    sampled at ``points`` equidistant calendar times in [0, T).
"""


@router.post("/boundary", response_model=BoundaryModel)
def boundary(request: BoundaryRequest):
    try:
        p = request.market.to_params()
        solver = _solver(request.solver)
        method = engine.resolve_method(p, request.method, solver)
        db = engine.boundary(p, method, solver)
    except NegrateError as err:
        raise http_error(err) from err
    times = np.linspace(0.0, p.maturity, request.points, endpoint=False)
    rows = engine.boundary_rows(db, times)
    return BoundaryModel(
        method=str(method),
        crossing_time=db.crossing_time,
        points=[BoundaryPoint(t=t, upper=upper, lower=lower) for t, upper, lower in rows],
    )


@router.get("/region", response_model=RegionModel)
def region(
    rate: Annotated[float, Query()],
    dividend_yield: Annotated[float, Query()],
    kind: Annotated[OptionKind, Query()] = OptionKind.put,
    vol: Annotated[float | None, Query(gt=0)] = None,
):
    found = classify(kind, rate, dividend_yield, vol)
    return RegionModel(
        never_optimal=found.never_optimal,
        double_boundary_possible=found.double_boundary_possible,
        battauz_holds=found.battauz_holds,
    )
