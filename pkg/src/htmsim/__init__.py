"""Simulate quota accounting of a DC pension plan under HTM and MTM bond valuation."""

from .curve import YieldCurve, YieldCurveSet, load_curves, market_price, parse_curve_csv, rate_at
from .engine import ScenarioConfig, ScriptedCohort, SimulationResult, run_scenario
from .errors import ConfigError, DataError, HTMSimError
from .ledger import BondBook, BondLot, SaleStrategy
from .scenario import GridSpec, emit_reports, enumerate_grid, run_grid
from .transfer import aggregate, exit_transfers, stay_transfers

__version__ = "0.1.0"

__all__ = [
    "BondBook",
    "BondLot",
    "ConfigError",
    "DataError",
    "GridSpec",
    "HTMSimError",
    "SaleStrategy",
    "ScenarioConfig",
    "ScriptedCohort",
    "SimulationResult",
    "YieldCurve",
    "YieldCurveSet",
    "aggregate",
    "emit_reports",
    "enumerate_grid",
    "exit_transfers",
    "load_curves",
    "market_price",
    "parse_curve_csv",
    "rate_at",
    "run_grid",
    "run_scenario",
    "stay_transfers",
]
