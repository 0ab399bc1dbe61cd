from __future__ import annotations

import importlib
from pathlib import Path

import pytest
from fastapi import FastAPI
from fastapi.testclient import TestClient

from negrate.config import SolverConfig
from negrate.pricing.blackscholes import MarketParams, OptionKind

GOLDEN = Path(__file__).resolve().parent / "golden"


@pytest.fixture()
def make_market():
    """Factory for contracts, defaulting to the sigma = 8% negative rate put."""

    def _make(
        spot: float = 100.0,
        strike: float = 100.0,
        rate: float = -0.005,
        dividend_yield: float = -0.01,
        vol: float = 0.08,
        maturity: float = 10.0,
        kind: OptionKind | str = OptionKind.put,
    ) -> MarketParams:
        return MarketParams(
            spot=spot,
            strike=strike,
            rate=rate,
            dividend_yield=dividend_yield,
            vol=vol,
            maturity=maturity,
            kind=kind,
        )

    return _make


@pytest.fixture()
def solver() -> SolverConfig:
    return SolverConfig(collocation_points=5, iterations=8, inner_points=11, pricing_points=21)


@pytest.fixture()
def golden() -> Path:
    return GOLDEN


@pytest.fixture()
def config_file(tmp_path: Path) -> Path:
    config_text = "\n".join(
        [
            "DEBUG = true",
            "",
            "[solver]",
            "COLLOCATION_POINTS = 7",
            "ITERATIONS = 16",
            "INNER_POINTS = 15",
            "PRICING_POINTS = 31",
            'ROOT_SOLVER = "halley"',
            "",
            "[fdm]",
            "TIME_STEPS = 100",
            'LCP_SOLVER = "brennan_schwartz"',
            "",
            "[bench]",
            f'CACHE_DIR = "{tmp_path / "configured-cache"}"',
            "WORKERS = 2",
            "",
        ]
    )
    path = tmp_path / "config.toml"
    path.write_text(config_text, encoding="utf-8")
    return path


@pytest.fixture()
def cache_dir(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> Path:
    path = tmp_path / "cache"
    monkeypatch.setenv("NEGRATE_CACHE_DIR", str(path))
    return path


@pytest.fixture()
def api_module():
    import negrate.routes.api as api

    return importlib.reload(api)


@pytest.fixture()
def app(api_module) -> FastAPI:
    app = FastAPI()
    app.include_router(api_module.router)
    return app


@pytest.fixture()
def client(app: FastAPI) -> TestClient:
    return TestClient(app)


@pytest.fixture()
def main_app():
    import negrate.main as main

    return importlib.reload(main).app
