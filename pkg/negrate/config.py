import dataclasses
import logging
import os
import pathlib
from dataclasses import dataclass, field

import toml

from .exceptions import ConfigurationError
from .pricing.fdm import LcpSolverKind
from .pricing.qdplus import RootSolverKind, RootSolverVariant

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    """Numerical settings shared by the integral, QD+ and finite difference
    pricers.

    Attributes:
        collocation_points (int): m, number of free Chebyshev knots.
        iterations (int): n, fixed-point iterations.
        inner_points (int): l, tanh-sinh points of the boundary integrals.
        pricing_points (int): p, tanh-sinh points of the premium integral.
        tolerance (float): tolerance on |f| for the QD+ root solvers.
        root_solver (RootSolverKind): QD+ root solver.
        gauss_newton_tolerance (float): residual norm target of GN-A/GN-B.
        relative_stop (float): optional relative change stopping rule for
            the fixed-point iterations, 0 disables it.
        time_steps (int): finite difference time steps.
        lcp_solver (LcpSolverKind): finite difference LCP solver.
        method (str | None): pricing method, None selects by regime.
    """

    collocation_points: int = 5
    iterations: int = 8
    inner_points: int = 11
    pricing_points: int = 21
    tolerance: float = 1e-6
    root_solver: RootSolverKind = field(
        default_factory=lambda: RootSolverKind(RootSolverVariant.super_halley)
    )
    gauss_newton_tolerance: float = 1e-8
    relative_stop: float = 0.0
    time_steps: int = 400
    lcp_solver: LcpSolverKind = LcpSolverKind.policy_iteration
    method: str | None = None

    def __post_init__(self):
        if self.collocation_points < 2:
            raise ConfigurationError("COLLOCATION_POINTS", "m must be at least 2")
        if self.iterations < 0:
            raise ConfigurationError("ITERATIONS", "n must be non-negative")
        if self.inner_points < 3:
            raise ConfigurationError("INNER_POINTS", "l must be at least 3")
        if self.pricing_points < 3:
            raise ConfigurationError("PRICING_POINTS", "p must be at least 3")
        if self.tolerance <= 0 or self.gauss_newton_tolerance <= 0:
            raise ConfigurationError("TOLERANCE", "tolerances must be positive")
        if self.time_steps < 2:
            raise ConfigurationError("TIME_STEPS", "at least two time steps are needed")

    def replace(self, **changes) -> "SolverConfig":
        return dataclasses.replace(self, **changes)


class Config:
    debug: bool = False
    solver: SolverConfig
    cache_dir: pathlib.Path
    workers: int

    def __init__(self, config_file: str):
        self.config_file = config_file
        if os.path.exists(config_file):
            config = toml.load(config_file)
        else:
            logger.info("no configuration file at %s, using defaults", config_file)
            config = {}
        self.debug = config.get("DEBUG", False)

        solver = config.get("solver", {})
        fdm = config.get("fdm", {})
        try:
            variant = RootSolverVariant(solver.get("ROOT_SOLVER", "super_halley"))
            lcp_solver = LcpSolverKind(fdm.get("LCP_SOLVER", "policy_iteration"))
        except ValueError as err:
            raise ConfigurationError("solver", str(err)) from err
        root_solver = RootSolverKind(variant, solver.get("C_PARAMETER", 0.5))
        self.solver = SolverConfig(
            collocation_points=solver.get("COLLOCATION_POINTS", 5),
            iterations=solver.get("ITERATIONS", 8),
            inner_points=solver.get("INNER_POINTS", 11),
            pricing_points=solver.get("PRICING_POINTS", 21),
            tolerance=solver.get("TOLERANCE", 1e-6),
            root_solver=root_solver,
            gauss_newton_tolerance=solver.get("GAUSS_NEWTON_TOLERANCE", 1e-8),
            relative_stop=solver.get("RELATIVE_STOP", 0.0),
            time_steps=fdm.get("TIME_STEPS", 400),
            lcp_solver=lcp_solver,
        )

        bench = config.get("bench", {})
        cache_dir = os.environ.get("NEGRATE_CACHE_DIR") or bench.get(
            "CACHE_DIR", "~/.cache/negrate"
        )
        self.cache_dir = pathlib.Path(cache_dir).expanduser()
        self.workers = bench.get("WORKERS", 1)
        if self.workers < 1:
            raise ConfigurationError("WORKERS", "at least one worker is needed")

    def solver_config(self, **overrides) -> SolverConfig:
        if not overrides:
            return self.solver
        return self.solver.replace(**overrides)

    @property
    def log_level(self) -> int:
        return logging.DEBUG if self.debug else logging.WARNING


CONFIG_PATH = pathlib.Path(
    os.environ.get("NEGRATE_CONFIG", pathlib.Path(__file__).parent / "config.toml")
)
config = Config(str(CONFIG_PATH))
