import io
import json
import math

import pytest

from negrate.bench import grid as grid_module
from negrate.bench.grid import (
    GRIDS,
    NEGATIVE_LONG,
    NEGATIVE_SHORT,
    POSITIVE,
    ErrorReport,
    OptionRecord,
    ReferenceCache,
    TestGrid,
    _pool_map,
    reference_prices,
    run_grid,
    summarize,
)
from negrate.bench.tables import Table, evaluate, mean_qd_iterations, reproduce_table
from negrate.bench.targets import CheckKind, Target
from negrate.exceptions import ConfigurationError
from negrate.pricing.blackscholes import MarketParams
from negrate.pricing.qdplus import RootSolverKind, RootSolverVariant


@pytest.fixture
def tiny_grid():
    return TestGrid(name="tiny", rates=[0.04], yields=[0.0], spots=[90.0, 100.0, 110.0], maturities=[0.5], vols=[0.3])


@pytest.fixture
def fast_reference(monkeypatch):
    monkeypatch.setattr(grid_module, "REFERENCE_TIME_STEPS", 50)


def test_grid_sizes():
    assert POSITIVE.size == 6000
    assert len(NEGATIVE_SHORT.cells()) == 300
    assert NEGATIVE_SHORT.size == 3000
    assert len(NEGATIVE_LONG.cells()) == 180
    assert all(q < r for r, q, _, _ in NEGATIVE_SHORT.cells())
    assert set(GRIDS) == {"positive", "negative_short", "negative_long"}


def test_grid_contracts():
    cell = NEGATIVE_SHORT.cells()[0]
    p = NEGATIVE_SHORT.contract(cell, 80.0)
    assert (p.rate, p.dividend_yield, p.maturity, p.vol) == cell
    assert p.spot == 80.0 and p.strike == 100.0
    assert NEGATIVE_SHORT.contract(cell).spot == 100.0


def test_cells_are_sorted():
    cells = POSITIVE.cells()
    assert cells == sorted(cells)


@pytest.mark.parametrize(
    "target, value, passed",
    [
        (Target("a", "b", 1.0, 0.1), 1.05, True),
        (Target("a", "b", 1.0, 0.1), 1.2, False),
        (Target("a", "b", 1.0, 0.1), None, False),
        (Target("a", "b", 1.0, 0.05, CheckKind.diverge), 0.5, True),
        (Target("a", "b", 1.0, 0.05, CheckKind.diverge), None, True),
        (Target("a", "b", 1.0, 0.05, CheckKind.diverge), 1.01, False),
        (Target("a", "b", 1e-4, 2.5, CheckKind.at_most), 2e-4, True),
        (Target("a", "b", 1e-4, 2.5, CheckKind.at_most), 3e-4, False),
        (Target("a", "b", None, check=CheckKind.report), 42.0, None),
    ],
)
def test_evaluate(target, value, passed):
    assert evaluate(target, value).passed is passed


def test_evaluate_treats_nan_as_missing():
    cell = evaluate(Target("a", "b", 1.0, 0.1), math.nan)
    assert cell.value is None and cell.deviation is None


def test_summarize_counts_failures():
    def record(price, reference):
        return OptionRecord(
            spot=100.0, strike=100.0, rate=0.01, dividend_yield=0.0, vol=0.2, maturity=1.0,
            price=price, reference=reference, abs_error=abs(price - reference), rel_error=abs(price - reference) / reference,
        )

    report = summarize("g", "fdm", [record(1.0, 1.1), record(2.0, 2.0), record(math.nan, 3.0)], 2.0, True)
    assert (report.count, report.failures) == (2, 1)
    assert report.mae == pytest.approx(0.1)
    assert report.rmse == pytest.approx(math.sqrt(0.01 / 2))
    assert report.throughput == 1.5


def test_error_report_ordering():
    with pytest.raises(ValueError):
        ErrorReport(grid="g", method="m", count=1, failures=0, rmse=0.2, mae=0.1, rrmse=0.1, throughput=1.0, batch=True)


def test_reference_cache(tmp_path, tiny_grid):
    cache = ReferenceCache(tmp_path)
    cell = tiny_grid.cells()[0]
    assert cache.load(tiny_grid, cell, 50) is None
    cache.store(tiny_grid, cell, 50, [1.0, 2.0, 3.0])
    assert cache.load(tiny_grid, cell, 50) == [1.0, 2.0, 3.0]
    assert cache.path(tiny_grid, cell, 50).parent == tmp_path / "reference"
    assert cache.key(tiny_grid, cell, 50) != cache.key(tiny_grid, cell, 400)
    stored = json.loads(cache.path(tiny_grid, cell, 50).read_text(encoding="utf-8"))
    assert stored["spots"] == [90.0, 100.0, 110.0]


def test_cache_directory_from_the_environment(cache_dir, monkeypatch):
    from negrate.config import Config

    monkeypatch.setattr(grid_module, "default_config", Config("missing.toml"))
    assert ReferenceCache().directory == cache_dir / "reference"


def test_stored_reference_must_exist(tmp_path, tiny_grid):
    with pytest.raises(ConfigurationError):
        reference_prices(tiny_grid, "stored", ReferenceCache(tmp_path))
    with pytest.raises(ConfigurationError):
        reference_prices(tiny_grid, "binomial", ReferenceCache(tmp_path))


def test_run_grid(tmp_path, tiny_grid, fast_reference, solver):
    cache = ReferenceCache(tmp_path)
    report = run_grid(tiny_grid, "kim-fpb", solver, cache=cache, workers=1)
    assert report.count == 3 and report.failures == 0
    assert report.mae < 0.05
    assert report.mae >= report.rmse
    assert report.batch

    again = run_grid(tiny_grid, "kim-fpb", solver, reference="stored", batch=False, cache=cache, workers=1)
    assert [r.reference for r in again.records] == [r.reference for r in report.records]
    assert [r.price for r in again.records] == [r.price for r in report.records]
    assert not again.batch


def test_price_floor_drops_cheap_options(tmp_path, fast_reference, solver):
    grid = TestGrid(name="floor", rates=[0.04], yields=[0.0], spots=[100.0, 200.0], maturities=[0.25], vols=[0.2])
    report = run_grid(grid, "fdm", solver.replace(time_steps=20), cache=ReferenceCache(tmp_path), workers=1)
    assert [r.spot for r in report.records] == [100.0]


def test_pool_map_keeps_the_order():
    assert _pool_map(abs, [-3, 2, -1], 1) == [3, 2, 1]
    assert _pool_map(abs, [-3, 2, -1], 2) == [3, 2, 1]


def test_qd_iterations_are_small():
    p = MarketParams(spot=100.0, strike=100.0, rate=0.02, dividend_yield=0.04, vol=0.4, maturity=5.0)
    mean = mean_qd_iterations(p, RootSolverKind(RootSolverVariant.halley))
    assert 1.0 <= mean <= 6.0


def test_unknown_table():
    with pytest.raises(ConfigurationError):
        reproduce_table("table_9")


def test_table_output(tmp_path):
    table = Table(
        name="t",
        caption="c",
        cells=[evaluate(Target("r", "c", 1.0, 0.1), 1.05), evaluate(Target("r", "d", None, check=CheckKind.report), 3.0)],
    )
    assert table.passed
    assert table.cell("r", "d").value == 3.0
    with pytest.raises(KeyError):
        table.cell("x", "y")
    stream = io.StringIO()
    table.write_csv(stream)
    assert stream.getvalue().splitlines()[0].startswith("row,column,value,expected")
    stream = io.StringIO()
    table.write_json(stream)
    assert json.loads(stream.getvalue())["cells"][0]["passed"] is True


@pytest.mark.slow
@pytest.mark.parametrize("name", ["qd_iter", "jz_misprice_8", "jz_misprice_22", "fpa_instability"])
def test_published_tables(name):
    assert reproduce_table(name).passed


@pytest.mark.slow
def test_positive_grid_keeps_4495_options(tmp_path):
    table = reproduce_table("al_summary", cache=ReferenceCache(tmp_path), workers=4)
    for cell in table.cells:
        if cell.column == "count":
            assert cell.passed
