import csv
import io
import json

import pytest

from negrate import cli, engine
from negrate.bench import tables
from negrate.bench.tables import Table, TableCell
from negrate.bench.targets import CheckKind
from negrate.exceptions import NonConvergence

NEGATIVE = ["-r", "-0.005", "-q", "-0.01", "-v", "0.08"]


def test_region_text(capsys):
    assert cli.main(["region", "-r", "-0.01", "-q", "-0.005"]) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "never optimal: true" in out
    assert "double boundary possible: false" in out


@pytest.mark.parametrize(
    "args, name",
    [
        (["-r", "-0.01", "-q", "-0.005"], "region_put_never.json"),
        (NEGATIVE, "region_put_double_8.json"),
    ],
)
def test_region_json_matches_golden(capsys, golden, args, name):
    assert cli.main(["region", *args, "--output", "json"]) == cli.EXIT_OK
    assert capsys.readouterr().out == (golden / name).read_text(encoding="utf-8")


def test_region_csv(capsys):
    assert cli.main(["region", "-r", "0.02", "-q", "0.04", "--call", "--output", "csv"]) == cli.EXIT_OK
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[0] == ["never_optimal", "double_boundary_possible", "battauz_holds"]
    assert rows[1] == ["false", "false", "false"]


def test_price_text(capsys):
    assert cli.main(["price", *NEGATIVE, "-T", "15"]) == cli.EXIT_OK
    out = capsys.readouterr().out
    first = out.splitlines()[0]
    assert first.startswith("price: ")
    assert float(first.split()[1]) == pytest.approx(10.29, abs=0.01)
    assert "method: kim-fpbprime" in out


def test_price_json(capsys):
    assert cli.main(["price", *NEGATIVE, "-T", "10", "--method", "european", "--output", "json"]) == cli.EXIT_OK
    data = json.loads(capsys.readouterr().out)
    assert set(data) == {"price", "european", "premium", "method", "degraded", "diagnostics"}
    assert data["price"] == pytest.approx(8.368, abs=5e-4)


def test_price_csv(capsys):
    args = ["price", "-S", "90", "-r", "0.05", "-q", "0", "-v", "0.2", "-T", "1", "--method", "juzhong", "--output", "csv"]
    assert cli.main(args) == cli.EXIT_OK
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[0] == ["price", "european", "premium", "method", "degraded"]
    assert rows[1][3] == "juzhong"


def test_boundary_csv(capsys):
    args = ["boundary", *NEGATIVE[:4], "-v", "0.15", "-T", "5", "--method", "fdm", "--time-steps", "50", "--points", "5", "--output", "csv"]
    assert cli.main(args) == cli.EXIT_OK
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[0] == ["t", "upper", "lower"]
    assert len(rows) == 6
    assert rows[1][1] == ""


def test_usage_errors(capsys):
    assert cli.main(["price", "-r", "0.01"]) == cli.EXIT_USAGE
    assert cli.main([]) == cli.EXIT_USAGE
    assert cli.main(["price", *NEGATIVE, "-T", "1", "--method", "binomial"]) == cli.EXIT_USAGE
    assert cli.main(["--help"]) == cli.EXIT_OK


def test_fp_a_with_negative_rates_is_a_usage_error(capsys):
    assert cli.main(["price", *NEGATIVE, "-T", "10", "--method", "kim-fpa"]) == cli.EXIT_USAGE
    assert "ConfigurationError" in capsys.readouterr().err


def test_invalid_market_is_a_usage_error(capsys):
    assert cli.main(["price", "-S", "-1", *NEGATIVE, "-T", "10"]) == cli.EXIT_USAGE
    assert "DomainError[spot" in capsys.readouterr().err


def test_numerical_failure(capsys, monkeypatch):
    def broken(*args, **kwargs):
        raise NonConvergence("kim-gn", 100, ())

    monkeypatch.setattr(engine, "price", broken)
    assert cli.main(["price", *NEGATIVE, "-T", "10"]) == cli.EXIT_FAILURE
    assert "NonConvergence" in capsys.readouterr().err


def test_solver_flags_override_the_configuration():
    args = cli.build_parser().parse_args(["price", *NEGATIVE, "-T", "1", "-m", "7", "-n", "16", "--time-steps", "50"])
    solver = cli._solver(args)
    assert (solver.collocation_points, solver.iterations, solver.time_steps) == (7, 16, 50)


@pytest.fixture
def fake_table(monkeypatch):
    cells = [
        TableCell(row="halley", column="r=2% q=4%", value=2.5, expected=2.43, tolerance=0.15, check=CheckKind.match, deviation=0.07, passed=True),
        TableCell(row="halley", column="r=q=2%", value=None, expected=2.74, tolerance=0.15, check=CheckKind.match, deviation=None, passed=False),
    ]

    def build(solver=None):
        return Table(name="qd_iter", caption="fake", cells=cells)

    monkeypatch.setitem(tables.TABLES, "qd_iter", build)


def test_bench_writes_csv(tmp_path, fake_table):
    target = tmp_path / "qd_iter.csv"
    assert cli.main(["bench", "qd_iter", "--output", "csv", "--write", str(target)]) == cli.EXIT_OK
    rows = list(csv.reader(io.StringIO(target.read_text(encoding="utf-8"))))
    assert rows[0][:3] == ["row", "column", "value"]
    assert rows[1][:3] == ["halley", "r=2% q=4%", "2.5"]
    assert rows[2][2] == ""


def test_bench_text(capsys, fake_table):
    assert cli.main(["bench", "qd_iter"]) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("qd_iter: fake")
    assert "FAIL" in out and "ok" in out


def test_bench_json(capsys, fake_table):
    assert cli.main(["bench", "qd_iter", "--output", "json"]) == cli.EXIT_OK
    data = json.loads(capsys.readouterr().out)
    assert data["name"] == "qd_iter"
    assert len(data["cells"]) == 2
