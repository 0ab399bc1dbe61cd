"""Command line front end.

Rates, yields and volatilities are decimals: ``-r -0.005`` is -0.5%.

Exit codes: 0 on success, 2 on invalid arguments (including method and regime
combinations that are not allowed), 3 when the numerical method failed.
"""

import argparse
import csv
import json
import logging
import sys

import numpy as np

from . import engine
from .bench.grid import GRIDS, ReferenceCache, run_grid
from .bench.tables import TABLES, reproduce_table
from .config import config
from .exceptions import ConfigurationError, DomainError, NegrateError
from .pricing.blackscholes import MarketParams, OptionKind
from .pricing.region import classify
from .pricing.results import plain

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FAILURE = 3

SOLVER_FLAGS = {
    "collocation_points": "m",
    "iterations": "n",
    "inner_points": "l",
    "pricing_points": "p",
    "time_steps": "time_steps",
    "tolerance": "tolerance",
}


def _add_kind(parser: argparse.ArgumentParser):
    kind = parser.add_mutually_exclusive_group()
    kind.add_argument("--put", dest="kind", action="store_const", const=OptionKind.put, help="American put (default)")
    kind.add_argument("--call", dest="kind", action="store_const", const=OptionKind.call, help="American call")
    parser.set_defaults(kind=OptionKind.put)


def _add_market(parser: argparse.ArgumentParser):
    parser.add_argument("-S", "--spot", type=float, default=100.0)
    parser.add_argument("-K", "--strike", type=float, default=100.0)
    parser.add_argument("-r", "--rate", type=float, required=True, help="interest rate as a decimal")
    parser.add_argument("-q", "--dividend-yield", type=float, required=True, help="dividend yield as a decimal")
    parser.add_argument("-v", "--vol", type=float, required=True, help="volatility as a decimal")
    parser.add_argument("-T", "--maturity", type=float, required=True, help="maturity in years")
    _add_kind(parser)


def _add_solver(parser: argparse.ArgumentParser):
    parser.add_argument("--method", choices=[str(m) for m in engine.Method], default=None)
    parser.add_argument("-m", type=int, help="number of collocation points")
    parser.add_argument("-n", type=int, help="number of fixed-point iterations")
    parser.add_argument("-l", type=int, help="quadrature points of the boundary integrals")
    parser.add_argument("-p", type=int, help="quadrature points of the premium integral")
    parser.add_argument("--time-steps", type=int, help="finite difference time steps")
    parser.add_argument("--tolerance", type=float, help="QD+ root solver tolerance")


def _add_output(parser: argparse.ArgumentParser):
    parser.add_argument("--output", choices=["text", "json", "csv"], default="text")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="negrate", description="American options under negative interest rates")
    parser.add_argument("--verbose", action="store_true", help="log at DEBUG level")
    commands = parser.add_subparsers(dest="command", required=True)

    price = commands.add_parser("price", help="price one option")
    _add_market(price)
    _add_solver(price)
    _add_output(price)

    boundary = commands.add_parser("boundary", help="exercise boundaries as (t, upper, lower) rows")
    _add_market(boundary)
    _add_solver(boundary)
    boundary.add_argument("--points", type=int, default=64, help="number of equidistant times in [0, T)")
    _add_output(boundary)

    region = commands.add_parser("region", help="classify the exercise regime")
    region.add_argument("-r", "--rate", type=float, required=True)
    region.add_argument("-q", "--dividend-yield", type=float, required=True)
    region.add_argument("-v", "--vol", type=float, default=None)
    _add_kind(region)
    _add_output(region)

    bench = commands.add_parser("bench", help="reproduce a table or run a test grid")
    bench.add_argument("name", choices=sorted(TABLES) + sorted(GRIDS))
    bench.add_argument("--reference", choices=["fdm_m400", "stored"], default="fdm_m400")
    bench.add_argument("--workers", type=int, default=None)
    bench.add_argument("--no-batch", dest="batch", action="store_false", help="price every option on its own")
    bench.add_argument("--write", default=None, help="write to this file instead of stdout")
    _add_solver(bench)
    _add_output(bench)
    return parser


def _solver(args):
    overrides = {}
    for field, flag in SOLVER_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[field] = value
    return config.solver_config(**overrides)


def _market(args) -> MarketParams:
    return MarketParams(
        spot=args.spot,
        strike=args.strike,
        rate=args.rate,
        dividend_yield=args.dividend_yield,
        vol=args.vol,
        maturity=args.maturity,
        kind=args.kind,
    )


def _dump(data, out):
    json.dump(plain(data), out, indent=2, sort_keys=True)
    out.write("\n")


def _price(args, out):
    result = engine.price(_market(args), args.method, _solver(args))
    data = result.to_dict()
    match args.output:
        case "json":
            _dump(data, out)
        case "csv":
            writer = csv.writer(out)
            writer.writerow(["price", "european", "premium", "method", "degraded"])
            writer.writerow([data["price"], data["european"], data["premium"], data["method"], data["degraded"]])
        case _:
            out.write("price: %.6f\n" % result.price)
            out.write("european: %.6f\n" % result.european)
            out.write("premium: %.6f\n" % result.premium)
            out.write("method: %s\n" % result.method)
            for entry in result.diagnostics.get("fallbacks", []):
                out.write("fallback: %s (%s)\n" % (entry["method"], entry["error"]))


def _boundary(args, out):
    p = _market(args)
    solver = _solver(args)
    method = engine.resolve_method(p, args.method, solver)
    if args.points < 2:
        raise DomainError("points", "need at least two times")
    db = engine.boundary(p, method, solver)
    rows = engine.boundary_rows(db, np.linspace(0.0, p.maturity, args.points, endpoint=False))
    match args.output:
        case "json":
            _dump({"method": str(method), "crossing_time": db.crossing_time, "rows": rows}, out)
        case "csv":
            writer = csv.writer(out)
            writer.writerow(["t", "upper", "lower"])
            for row in rows:
                writer.writerow(["" if v is None else v for v in row])
        case _:
            out.write("# method %s, crossing time %s\n" % (method, db.crossing_time))
            for t, upper, lower in rows:
                out.write("%.6f %s %s\n" % (t, "-" if upper is None else "%.6f" % upper, "-" if lower is None else "%.6f" % lower))


def _region(args, out):
    found = classify(args.kind, args.rate, args.dividend_yield, args.vol)
    data = {
        "never_optimal": found.never_optimal,
        "double_boundary_possible": found.double_boundary_possible,
        "battauz_holds": found.battauz_holds,
    }
    match args.output:
        case "json":
            _dump(data, out)
        case "csv":
            writer = csv.writer(out)
            writer.writerow(list(data))
            writer.writerow([str(v).lower() for v in data.values()])
        case _:
            for key, value in data.items():
                out.write("%s: %s\n" % (key.replace("_", " "), str(value).lower()))


def _bench(args, out):
    solver = _solver(args)
    if args.name in TABLES:
        table = reproduce_table(args.name, solver, args.reference, args.workers, ReferenceCache())
        match args.output:
            case "json":
                table.write_json(out)
            case "csv":
                table.write_csv(out)
            case _:
                out.write("%s: %s\n" % (table.name, table.caption))
                for cell in table.cells:
                    flag = {True: "ok", False: "FAIL", None: "-"}[cell.passed]
                    note = " (expected failure)" if cell.expected_failure else ""
                    out.write("%-22s %-14s %12s %12s %s%s\n" % (cell.row, cell.column, cell.value, cell.expected, flag, note))
        return
    grid = GRIDS[args.name]
    method = args.method or solver.method or engine.default_method(grid.contract(grid.cells()[0]))
    report = run_grid(grid, method, solver, args.reference, args.batch, args.workers)
    match args.output:
        case "json":
            out.write(report.model_dump_json(indent=2))
            out.write("\n")
        case "csv":
            fields = list(report.records[0].model_dump()) if report.records else []
            writer = csv.DictWriter(out, fieldnames=fields)
            writer.writeheader()
            for record in report.records:
                writer.writerow(record.model_dump())
        case _:
            out.write("%s on %s: %d options, %d failures\n" % (method, grid.name, report.count, report.failures))
            out.write("rmse %.2e  mae %.2e  rrmse %.2e  %.0f options/s\n" % (report.rmse, report.mae, report.rrmse, report.throughput))


COMMANDS = {"price": _price, "boundary": _boundary, "region": _region, "bench": _bench}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_OK if err.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else config.log_level)

    out = open(args.write, "w", newline="", encoding="utf-8") if getattr(args, "write", None) else sys.stdout
    try:
        COMMANDS[args.command](args, out)
    except (DomainError, ConfigurationError) as err:
        print("negrate: %s" % err, file=sys.stderr)
        return EXIT_USAGE
    except NegrateError as err:
        print("negrate: %s" % err, file=sys.stderr)
        return EXIT_FAILURE
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
