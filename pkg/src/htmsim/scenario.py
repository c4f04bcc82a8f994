"""Scenario grid: enumeration, deterministic (optionally parallel) runs, reports.

Per-scenario seeds are derived from the master seed and the scenario's index
in the full grid, so results do not depend on worker count, execution order
or filtering.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import itertools
import json
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from .curve import YieldCurveSet
from .engine import (
    DEFAULT_MATURITIES,
    ENGINE_VERSION,
    CurveMarket,
    ScenarioConfig,
    run_scenario,
)
from .errors import ConfigError, HTMSimError
from .ledger import SaleStrategy
from .transfer import DEFAULT_BINS, TransferSummary, aggregate, exit_transfers, stay_transfers

GRID_SCHEMA = "htmsim.grid/1"
MANIFEST_SCHEMA = "htmsim.manifest/1"
SUMMARY_STATS = (
    "population", "max_loss_pct", "max_loss_year", "max_gain_pct", "max_gain_year", "mean_pct",
)
SUMMARY_HEADER = (
    "scenario_id", "participants", "salary", "exit_rate", "entry_rate", "strategy", "allocation",
    "status", "halt_year",
    *(f"exit_{k}" for k in SUMMARY_STATS),
    *(f"stay_{k}" for k in SUMMARY_STATS),
)
HIST_HEADER = ("scenario_id", "kind", "bin_low", "bin_high", "members")
FAILURE_HEADER = ("scenario_id", "status", "halt_year", "message")
FILTER_KEYS = ("participants", "salary", "exit_rate", "entry_rate", "strategy", "allocation")


@dataclass(frozen=True)
class GridSpec:
    participants: tuple[int, ...] = (1000, 10000, 50000)
    salary: tuple[float, ...] = (5000.0, 15000.0)
    exit_rate: tuple[float, ...] = (0.0010, 0.0357, 0.0703, 0.1050)
    entry_rate: tuple[float, ...] = (0.0, 0.0333, 0.0667, 0.1000)
    strategy: tuple[str, ...] = ("oldest", "newest", "shortest")
    allocation_step: float = 0.25
    maturities: tuple[str, ...] = DEFAULT_MATURITIES
    htm_fraction: float = 1.0
    master_seed: int = 0
    contribution_rate: float = 0.15
    payments_per_year: int = 13
    years: int = 20
    start_year: int = 2005
    extrapolate: bool = False
    histogram_bins: int = DEFAULT_BINS

    def __post_init__(self) -> None:
        for name in ("participants", "salary", "exit_rate", "entry_rate", "strategy", "maturities"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def validate(self) -> None:
        steps = 1.0 / self.allocation_step
        if self.allocation_step <= 0 or abs(steps - round(steps)) > 1e-9:
            raise ConfigError(f"allocation_step must divide 1, got {self.allocation_step}")
        if not self.participants or any(int(p) != p or p < 0 for p in self.participants):
            raise ConfigError("participants must be non-negative integers")
        for name in ("exit_rate", "entry_rate"):
            if any(not 0 <= r <= 1 for r in getattr(self, name)):
                raise ConfigError(f"{name} values must lie in [0, 1]")
        if any(s < 0 for s in self.salary):
            raise ConfigError("salary values must be non-negative")
        for s in self.strategy:
            try:
                SaleStrategy.parse(s)
            except HTMSimError as exc:
                raise ConfigError(str(exc)) from None
        if not 0 <= self.htm_fraction <= 1:
            raise ConfigError("htm_fraction must lie in [0, 1]")
        if self.histogram_bins < 1:
            raise ConfigError("histogram_bins must be >= 1")
        for axis in ("participants", "salary", "exit_rate", "entry_rate", "strategy"):
            values = getattr(self, axis)
            if len(set(values)) != len(values):
                raise ConfigError(f"duplicate values in {axis}")

    def to_dict(self) -> dict:
        d = {"schema": GRID_SCHEMA}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            d[f.name] = list(v) if isinstance(v, tuple) else v
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "GridSpec":
        d = dict(d)
        schema = d.pop("schema", None)
        if schema != GRID_SCHEMA:
            raise ConfigError(f"grid schema must be {GRID_SCHEMA!r}, got {schema!r}")
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown grid fields: {sorted(unknown)}")
        try:
            spec = cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        spec.validate()
        return spec


@dataclass(frozen=True)
class GridScenario:
    index: int
    config: ScenarioConfig

    @property
    def scenario_id(self) -> str:
        return f"s{self.index:05d}"


def allocation_simplex(n: int = 3, step: float = 0.25) -> list[tuple[float, ...]]:
    """Non-negative weight vectors on a ``step`` lattice summing to one."""
    k = round(1.0 / step)
    out = []
    for head in itertools.product(range(k + 1), repeat=n - 1):
        rest = k - sum(head)
        if rest >= 0:
            out.append(tuple(h / k for h in head) + (rest / k,))
    return out


def derive_seed(master_seed: int, index: int) -> int:
    state = np.random.SeedSequence([master_seed, index]).generate_state(1, dtype=np.uint64)
    return int(state[0])


def format_allocation(weights: Sequence[float]) -> str:
    return "/".join(f"{w:g}" for w in weights)


def parse_filters(items: Iterable[str]) -> dict[str, set[str]]:
    """``key=v1,v2`` strings into a filter mapping."""
    filters: dict[str, set[str]] = {}
    for item in items:
        key, sep, values = item.partition("=")
        key = key.strip()
        if not sep or key not in FILTER_KEYS:
            raise ConfigError(f"bad filter {item!r}; expected key=value with key in {', '.join(FILTER_KEYS)}")
        filters.setdefault(key, set()).update(v.strip() for v in values.split(",") if v.strip())
    return filters


def _matches(filters: Mapping[str, set[str]], key: str, value: Any) -> bool:
    wanted = filters.get(key)
    if not wanted:
        return True
    if key == "allocation":
        return format_allocation(value) in wanted or any(
            _same_allocation(value, w) for w in wanted
        )
    if key == "strategy":
        return str(value) in {w.lower() for w in wanted}
    try:
        return any(abs(float(w) - float(value)) < 1e-12 for w in wanted)
    except ValueError:
        return False


def _same_allocation(value: Sequence[float], text: str) -> bool:
    try:
        parts = [float(p) for p in text.split("/")]
    except ValueError:
        return False
    return len(parts) == len(value) and all(abs(a - b) < 1e-9 for a, b in zip(parts, value))


def enumerate_grid(spec: GridSpec, filters: Mapping[str, set[str]] | None = None) -> list[GridScenario]:
    """Scenarios in lexicographic order of (participants, salary, exit, entry, strategy, allocation)."""
    spec.validate()
    filters = filters or {}
    allocations = allocation_simplex(len(spec.maturities), spec.allocation_step)
    axes = (spec.participants, spec.salary, spec.exit_rate, spec.entry_rate, spec.strategy, allocations)
    out = []
    for index, combo in enumerate(itertools.product(*axes)):
        if not all(_matches(filters, k, v) for k, v in zip(FILTER_KEYS, combo)):
            continue
        participants, salary, exit_rate, entry_rate, strategy, allocation = combo
        config = ScenarioConfig(
            initial_participants=int(participants),
            monthly_salary=float(salary),
            contribution_rate=spec.contribution_rate,
            payments_per_year=spec.payments_per_year,
            exit_rate=float(exit_rate),
            entry_rate=float(entry_rate),
            allocation=allocation,
            maturities=spec.maturities,
            sale_strategy=SaleStrategy.parse(strategy),
            htm_fraction=spec.htm_fraction,
            seed=derive_seed(spec.master_seed, index),
            years=spec.years,
            start_year=spec.start_year,
            extrapolate=spec.extrapolate,
        )
        out.append(GridScenario(index, config))
    return out


# --------------------------------------------------------------------------
# running


@dataclass
class ScenarioOutcome:
    index: int
    scenario_id: str
    config: ScenarioConfig
    status: str
    halt_year: int | None = None
    message: str = ""
    exit: TransferSummary = field(default_factory=lambda: TransferSummary("exit"))
    stay: TransferSummary = field(default_factory=lambda: TransferSummary("stay"))


@dataclass
class GridReport:
    outcomes: list[ScenarioOutcome]
    manifest: dict

    @property
    def failures(self) -> list[ScenarioOutcome]:
        return [o for o in self.outcomes if o.status != "ok"]


_WORKER_CURVES: YieldCurveSet | None = None
_WORKER_MARKETS: dict = {}


def _init_worker(curves: YieldCurveSet) -> None:
    global _WORKER_CURVES, _WORKER_MARKETS
    _WORKER_CURVES = curves
    _WORKER_MARKETS = {}


def _market_for(config: ScenarioConfig) -> CurveMarket:
    key = (config.maturities, config.start_year, config.years, config.extrapolate)
    market = _WORKER_MARKETS.get(key)
    if market is None:
        market = CurveMarket.for_config(_WORKER_CURVES, config)
        _WORKER_MARKETS[key] = market
    return market


def run_one(scenario: GridScenario, bins: int = DEFAULT_BINS) -> ScenarioOutcome:
    outcome = ScenarioOutcome(scenario.index, scenario.scenario_id, scenario.config, "ok")
    try:
        result = run_scenario(scenario.config, market=_market_for(scenario.config))
    except HTMSimError as exc:
        outcome.status = "error"
        outcome.message = f"{type(exc).__name__}: {exc}"
        return outcome
    outcome.exit = aggregate(exit_transfers(result), "exit", bins)
    outcome.stay = aggregate(stay_transfers(result), "stay", bins)
    if result.insolvent:
        outcome.status = "insolvent"
        outcome.halt_year = result.state.halt_year
        outcome.message = f"HTM exits exceed market value of the book in {result.state.halt_year}"
    return outcome


def _run_chunk(args: tuple[list[GridScenario], int]) -> list[ScenarioOutcome]:
    scenarios, bins = args
    return [run_one(s, bins) for s in scenarios]


def curves_digest(curves: YieldCurveSet) -> str:
    h = hashlib.sha256()
    for year, curve in curves.curves.items():
        h.update(f"{year},{curve.observation_date}".encode())
        for p in curve.points:
            h.update(f",{p.term_days}:{p.rate!r}".encode())
        h.update(b"\n")
    return h.hexdigest()


def config_digest(config: ScenarioConfig) -> str:
    return hashlib.sha256(json.dumps(config.to_dict(), sort_keys=True).encode()).hexdigest()


def build_manifest(
    scenarios: Sequence[GridScenario],
    curves: YieldCurveSet,
    spec: GridSpec | None = None,
    filters: Mapping[str, set[str]] | None = None,
) -> dict:
    return {
        "schema": MANIFEST_SCHEMA,
        "engine_version": ENGINE_VERSION,
        "curves_sha256": curves_digest(curves),
        "grid_spec": spec.to_dict() if spec is not None else None,
        "filters": {k: sorted(v) for k, v in sorted((filters or {}).items())},
        "histogram_bins": spec.histogram_bins if spec is not None else DEFAULT_BINS,
        "scenarios": [
            {
                "scenario_id": s.scenario_id,
                "index": s.index,
                "seed": s.config.seed,
                "config_sha256": config_digest(s.config),
                "config": s.config.to_dict(),
            }
            for s in scenarios
        ],
    }


def scenarios_from_manifest(manifest: Mapping[str, Any]) -> list[GridScenario]:
    if manifest.get("schema") != MANIFEST_SCHEMA:
        raise ConfigError(f"manifest schema must be {MANIFEST_SCHEMA!r}")
    out = []
    for entry in manifest["scenarios"]:
        config = ScenarioConfig.from_dict(entry["config"])
        if config_digest(config) != entry["config_sha256"]:
            raise ConfigError(f"config hash mismatch for {entry['scenario_id']}")
        out.append(GridScenario(int(entry["index"]), config))
    return out


def run_grid(
    scenarios: Sequence[GridScenario],
    curves: YieldCurveSet,
    parallelism: int = 1,
    *,
    spec: GridSpec | None = None,
    filters: Mapping[str, set[str]] | None = None,
    bins: int | None = None,
    progress: Callable[[int, int], None] | None = None,
) -> GridReport:
    """Run every scenario; engine failures are recorded per scenario."""
    if bins is None:
        bins = spec.histogram_bins if spec is not None else DEFAULT_BINS
    scenarios = list(scenarios)
    manifest = build_manifest(scenarios, curves, spec, filters)
    manifest["histogram_bins"] = bins
    total = len(scenarios)
    outcomes: list[ScenarioOutcome] = []
    if total == 0:
        return GridReport([], manifest)
    if parallelism <= 1:
        _init_worker(curves)
        for i, s in enumerate(scenarios, 1):
            outcomes.append(run_one(s, bins))
            if progress:
                progress(i, total)
    else:
        chunk = max(1, min(64, total // (parallelism * 4) or 1))
        chunks = [(scenarios[i : i + chunk], bins) for i in range(0, total, chunk)]
        done = 0
        with ProcessPoolExecutor(max_workers=parallelism, initializer=_init_worker, initargs=(curves,)) as pool:
            for part in pool.map(_run_chunk, chunks):
                outcomes.extend(part)
                done += len(part)
                if progress:
                    progress(done, total)
    outcomes.sort(key=lambda o: o.index)
    return GridReport(outcomes, manifest)


# --------------------------------------------------------------------------
# reports


def _num(x: float | None) -> str:
    if x is None:
        return ""
    return format(float(x), ".10g")


def _csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _write_atomic(path: Path, text: str) -> None:
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def _stats(s: TransferSummary) -> tuple:
    return (
        s.population,
        _num(s.max_loss_pct),
        "" if s.max_loss_year is None else s.max_loss_year,
        _num(s.max_gain_pct),
        "" if s.max_gain_year is None else s.max_gain_year,
        _num(s.mean_pct),
    )


def summary_rows(report: GridReport) -> list[tuple]:
    """One row per scenario: its settings, status, then exit and stay statistics."""
    rows = []
    for o in report.outcomes:
        c = o.config
        rows.append(
            (
                o.scenario_id,
                c.initial_participants if c.script is None else "",
                _num(c.monthly_salary) if c.script is None else "",
                _num(c.exit_rate) if c.script is None else "",
                _num(c.entry_rate) if c.script is None else "",
                c.sale_strategy.value,
                format_allocation(c.allocation),
                o.status,
                "" if o.halt_year is None else o.halt_year,
                *_stats(o.exit),
                *_stats(o.stay),
            )
        )
    return rows


def summary_csv(report: GridReport) -> str:
    return _csv_text(SUMMARY_HEADER, summary_rows(report))


def surface_tables(report: GridReport) -> dict[str, list[tuple]]:
    """Max loss over the allocation simplex, one table per fixed setting and kind."""
    tables: dict[str, list[tuple]] = {}
    for o in report.outcomes:
        c = o.config
        if c.script is not None or len(c.allocation) != 3:
            continue
        for s in (o.exit, o.stay):
            key = (
                f"{s.kind}_p{c.initial_participants}_s{c.monthly_salary:g}"
                f"_x{c.exit_rate:g}_e{c.entry_rate:g}_{c.sale_strategy.value}"
            )
            tables.setdefault(key, []).append((*(f"{w:g}" for w in c.allocation), _num(s.max_loss_pct)))
    return tables


def emit_reports(report: GridReport, out_dir: str | os.PathLike, *, histograms: bool = True) -> list[Path]:
    """Write summary, histogram, surface, failure and manifest files."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written = []

    def put(name: str, text: str) -> None:
        path = out / name
        _write_atomic(path, text)
        written.append(path)

    put("summary.csv", summary_csv(report))
    if histograms:
        for o in report.outcomes:
            for s in (o.exit, o.stay):
                for kind, bins in ((s.kind, s.histogram), (f"{s.kind}_money", s.histogram_money)):
                    rows = [(o.scenario_id, kind, _num(lo), _num(hi), n) for lo, hi, n in bins]
                    put(f"hist_{o.scenario_id}_{kind}.csv", _csv_text(HIST_HEADER, rows))
    for key, rows in surface_tables(report).items():
        put(f"surface_{key}.csv", _csv_text(("w2025", "w2030", "w2035", "max_loss_pct"), rows))
    put(
        "failures.csv",
        _csv_text(
            FAILURE_HEADER,
            [(o.scenario_id, o.status, "" if o.halt_year is None else o.halt_year, o.message) for o in report.failures],
        ),
    )
    put("manifest.json", json.dumps(report.manifest, indent=1, sort_keys=True) + "\n")
    return written
