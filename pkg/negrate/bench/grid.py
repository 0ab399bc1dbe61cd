"""Parameter grids, reference prices and error reports.

Every grid holds American puts with strike 100. Options whose reference
price is below the price floor are left out of all error measures.
"""

import hashlib
import itertools
import json
import logging
import math
import pathlib
import time
from concurrent.futures import ProcessPoolExecutor
from typing import ClassVar

import numpy as np
from pydantic import BaseModel, model_validator

from .. import engine
from ..config import SolverConfig, config as default_config
from ..exceptions import ConfigurationError, NegrateError
from ..pricing.blackscholes import MarketParams, OptionKind
from ..pricing.fdm import LcpSolverKind, fd_prices

logger = logging.getLogger(__name__)

REFERENCE_TIME_STEPS = 400
STRIKE = 100.0

Cell = tuple[float, float, float, float]


class TestGrid(BaseModel):
    """Cartesian parameter set (r, q, S, T, sigma).

    Attributes:
        name (str): used in reports and cache keys.
        rates, yields, spots, maturities, vols (list[float]): parameter sets.
        price_floor (float): options with a smaller reference price are dropped.
        yield_below_rate (bool): keep only q < r.
    """

    __test__: ClassVar[bool] = False

    name: str
    rates: list[float]
    yields: list[float]
    spots: list[float]
    maturities: list[float]
    vols: list[float]
    strike: float = STRIKE
    price_floor: float = 0.5
    yield_below_rate: bool = False

    def cells(self) -> list[Cell]:
        """(r, q, T, sigma) combinations in sorted order."""
        cells = [
            (r, q, t, sigma)
            for r, q, t, sigma in itertools.product(self.rates, self.yields, self.maturities, self.vols)
            if not self.yield_below_rate or q < r
        ]
        return sorted(cells)

    def contract(self, cell: Cell, spot: float | None = None) -> MarketParams:
        r, q, t, sigma = cell
        return MarketParams(
            spot=spot or self.strike,
            strike=self.strike,
            rate=r,
            dividend_yield=q,
            vol=sigma,
            maturity=t,
            kind=OptionKind.put,
        )

    @property
    def size(self) -> int:
        return len(self.cells()) * len(self.spots)


POSITIVE = TestGrid(
    name="positive",
    rates=[0.02, 0.04, 0.06, 0.08, 0.10],
    yields=[0.0, 0.04, 0.08, 0.12],
    spots=[25, 50, 80, 90, 100, 110, 120, 150, 175, 200],
    maturities=[1 / 12, 0.25, 0.5, 0.75, 1.0],
    vols=[0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
)

NEGATIVE_SHORT = TestGrid(
    name="negative_short",
    rates=[-0.005, -0.01, -0.02, -0.04],
    yields=[-0.01, -0.02, -0.03, -0.05],
    spots=[25, 50, 80, 90, 100, 110, 120, 150, 175, 200],
    maturities=[1 / 12, 0.25, 0.5, 0.75, 1.0],
    vols=[0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
    yield_below_rate=True,
)

NEGATIVE_LONG = NEGATIVE_SHORT.model_copy(update={"name": "negative_long", "maturities": [5.0, 10.0, 15.0]})

GRIDS = {grid.name: grid for grid in (POSITIVE, NEGATIVE_SHORT, NEGATIVE_LONG)}


class OptionRecord(BaseModel):
    spot: float
    strike: float
    rate: float
    dividend_yield: float
    vol: float
    maturity: float
    price: float
    reference: float
    abs_error: float
    rel_error: float
    error: str | None = None


class ErrorReport(BaseModel):
    """Error measures of one method on one grid.

    ``mae`` is the maximum absolute error and ``rrmse`` the root mean square
    of the relative errors, both over the options that priced successfully.
    """

    grid: str
    method: str
    count: int
    failures: int
    rmse: float
    mae: float
    rrmse: float
    throughput: float
    batch: bool
    records: list[OptionRecord] = []

    @model_validator(mode="after")
    def check_order(self):
        if self.count and not self.mae >= self.rmse >= 0.0:
            raise ValueError("expected mae >= rmse >= 0")
        return self


class ReferenceCache:
    """Reference prices on disk, one JSON file per (r, q, T, sigma) cell,
    keyed by a hash of everything that determines the prices."""

    def __init__(self, directory: pathlib.Path | str | None = None):
        self.directory = pathlib.Path(directory or default_config.cache_dir) / "reference"

    @staticmethod
    def key(grid: TestGrid, cell: Cell, time_steps: int) -> str:
        payload = {
            "cell": list(cell),
            "strike": grid.strike,
            "spots": list(grid.spots),
            "time_steps": time_steps,
            "solver": str(LcpSolverKind.policy_iteration),
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()).hexdigest()

    def path(self, grid: TestGrid, cell: Cell, time_steps: int) -> pathlib.Path:
        return self.directory / ("%s.json" % self.key(grid, cell, time_steps))

    def load(self, grid: TestGrid, cell: Cell, time_steps: int) -> list[float] | None:
        path = self.path(grid, cell, time_steps)
        if not path.exists():
            return None
        with open(path, encoding="utf-8") as f:
            return json.load(f)["prices"]

    def store(self, grid: TestGrid, cell: Cell, time_steps: int, prices) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self.path(grid, cell, time_steps)
        with open(path, "w", encoding="utf-8") as f:
            json.dump({"cell": list(cell), "spots": list(grid.spots), "prices": [float(v) for v in prices]}, f)


def _reference_cell(args) -> list[float]:
    grid, cell, time_steps = args
    return fd_prices(grid.contract(cell), grid.spots, time_steps).tolist()


def _pool_map(func, jobs: list, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [func(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, jobs))


def reference_prices(
    grid: TestGrid,
    reference: str = "fdm_m400",
    cache: ReferenceCache | None = None,
    workers: int | None = None,
) -> dict[Cell, list[float]]:
    """Reference prices per cell, aligned with ``grid.spots``.

    ``fdm_m400`` computes missing prices with TR-BDF2 on 400 time steps and
    stores them; ``stored`` only reads the cache.
    """
    if reference not in ("stored", "fdm_m400"):
        raise ConfigurationError("reference", "unknown reference %r" % reference)
    cache = cache or ReferenceCache()
    workers = workers or default_config.workers
    cells = grid.cells()
    prices = {cell: cache.load(grid, cell, REFERENCE_TIME_STEPS) for cell in cells}
    missing = [cell for cell in cells if prices[cell] is None]
    if missing and reference == "stored":
        raise ConfigurationError("reference", "%d cells of grid %s have no stored reference" % (len(missing), grid.name))
    if missing:
        logger.info("computing %d reference cells of grid %s", len(missing), grid.name)
        jobs = [(grid, cell, REFERENCE_TIME_STEPS) for cell in missing]
        for cell, values in zip(missing, _pool_map(_reference_cell, jobs, workers)):
            cache.store(grid, cell, REFERENCE_TIME_STEPS, values)
            prices[cell] = values
    return prices


def _price_one(p: MarketParams, method: str, solver: SolverConfig) -> tuple[float, str | None]:
    try:
        return engine.price(p, method, solver).price, None
    except NegrateError as err:
        logger.warning("%s failed at S=%g: %s", method, p.spot, err)
        return math.nan, str(err)


def _method_cell(args) -> tuple[list[tuple[float, str | None]], float]:
    grid, cell, method, solver, batch = args
    started = time.perf_counter()
    put = grid.contract(cell)
    if batch:
        try:
            results = engine.price_many(put, grid.spots, method, solver)
            prices = [(result.price, None) for result in results]
        except NegrateError as err:
            logger.info("batch pricing failed on %s (%s), pricing one by one", cell, err)
            prices = [_price_one(put.replace(spot=s), method, solver) for s in grid.spots]
    else:
        prices = [_price_one(put.replace(spot=s), method, solver) for s in grid.spots]
    return prices, time.perf_counter() - started


def run_grid(
    grid: TestGrid,
    method: str,
    solver: SolverConfig | None = None,
    reference: str = "fdm_m400",
    batch: bool = True,
    workers: int | None = None,
    cache: ReferenceCache | None = None,
) -> ErrorReport:
    """Price every option of ``grid`` with ``method`` and compare with the
    reference prices. Cells run in parallel when ``workers`` > 1 and are
    merged in sorted cell order."""
    solver = solver or default_config.solver_config()
    workers = workers or default_config.workers
    references = reference_prices(grid, reference, cache, workers)
    cells = grid.cells()
    jobs = [(grid, cell, method, solver, batch) for cell in cells]
    outcomes = _pool_map(_method_cell, jobs, workers)

    records = []
    elapsed = 0.0
    for cell, (prices, seconds) in zip(cells, outcomes):
        elapsed += seconds
        for spot, (value, error), ref in zip(grid.spots, prices, references[cell]):
            if ref < grid.price_floor:
                continue
            p = grid.contract(cell, spot)
            records.append(
                OptionRecord(
                    spot=spot,
                    strike=p.strike,
                    rate=p.rate,
                    dividend_yield=p.dividend_yield,
                    vol=p.vol,
                    maturity=p.maturity,
                    price=value,
                    reference=ref,
                    abs_error=abs(value - ref),
                    rel_error=abs(value - ref) / ref,
                    error=error,
                )
            )
    report = summarize(grid.name, method, records, elapsed, batch)
    logger.info("%s on %s: rmse=%.2e mae=%.2e rrmse=%.2e", method, grid.name, report.rmse, report.mae, report.rrmse)
    return report


def summarize(grid: str, method: str, records: list[OptionRecord], elapsed: float, batch: bool) -> ErrorReport:
    priced = [record for record in records if math.isfinite(record.price)]
    abs_errors = np.array([record.abs_error for record in priced])
    rel_errors = np.array([record.rel_error for record in priced])
    if len(priced):
        rmse = float(np.sqrt(np.mean(abs_errors**2)))
        mae = float(np.max(abs_errors))
        rrmse = float(np.sqrt(np.mean(rel_errors**2)))
    else:
        rmse = mae = rrmse = math.nan
    return ErrorReport(
        grid=grid,
        method=method,
        count=len(priced),
        failures=len(records) - len(priced),
        rmse=rmse,
        mae=mae,
        rrmse=rrmse,
        throughput=len(records) / elapsed if elapsed > 0 else math.inf,
        batch=batch,
        records=records,
    )

