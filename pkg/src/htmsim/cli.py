"""Command-line entry point: ``htmsim {examples,run,grid}``.

Exit codes: 0 ok, 1 runtime or filesystem failure, 2 usage, 3 configuration
error, 4 market-data error, 5 worked-example oracle failure.

Environment overrides (flags win): HTMSIM_SEED, HTMSIM_PARALLELISM.
Standard output carries one JSON object per command; progress and notes go
to standard error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from importlib import resources
from pathlib import Path

from .curve import load_curves
from .engine import ScenarioConfig, run_scenario
from .errors import ConfigError, DataError, HTMSimError
from .scenario import (
    GridSpec,
    emit_reports,
    enumerate_grid,
    parse_filters,
    run_grid,
    scenarios_from_manifest,
)
from .transfer import exit_transfers, stay_transfers
from .worked_examples import default_oracles, run_oracles

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_ORACLE = 5

BUNDLED_CURVES = "stylized_ipca_curves.csv"


def _note(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _read_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None


def _curves(path: str | None):
    if path is None:
        _note(f"using bundled synthetic curves ({BUNDLED_CURVES}); pass --curves for market data")
        ref = resources.files("htmsim") / "data" / BUNDLED_CURVES
        with resources.as_file(ref) as p:
            return load_curves(p)
    try:
        return load_curves(path)
    except FileNotFoundError:
        raise DataError(f"curve file not found: {path}") from None
    except DataError as exc:
        raise type(exc)(f"{path}: {exc}") from None


def _env_int(name: str) -> int | None:
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {raw!r}") from None


def _seed(args) -> int | None:
    seed = args.seed if args.seed is not None else _env_int("HTMSIM_SEED")
    if seed is not None and not 0 <= seed < 2**64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def _write_csv(path: Path, header, rows) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    os.replace(tmp, path)


def cmd_examples(args) -> int:
    ok = run_oracles(default_oracles(), sys.stdout)
    return EXIT_OK if ok else EXIT_ORACLE


def cmd_run(args) -> int:
    config = ScenarioConfig.from_dict(_read_json(args.config))
    seed = _seed(args)
    if seed is not None:
        config = dataclasses.replace(config, seed=seed)
    if args.alpha is not None:
        config = dataclasses.replace(config, htm_fraction=args.alpha)
    config.validate()
    curves = _curves(args.curves)
    result = run_scenario(config, curves)
    _note(f"seed {config.seed}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tmp = out / "result.json.tmp"
    tmp.write_text(json.dumps(result.to_dict(), indent=1) + "\n", encoding="utf-8")
    os.replace(tmp, out / "result.json")
    _write_csv(
        out / "exit_transfers.csv",
        ("year", "entry_year", "members", "transfer", "pct", "exit_value_mtm", "exit_value_htm"),
        [
            (t.year, t.entry_year, t.members, repr(t.transfer), "" if t.pct is None else repr(t.pct),
             repr(t.exit_value_mtm), repr(t.exit_value_htm))
            for t in exit_transfers(result)
        ],
    )
    _write_csv(
        out / "stay_transfers.csv",
        ("year", "entry_year", "members", "transfer", "pct", "pct_of_plan"),
        [
            (t.year, t.entry_year, t.members, repr(t.transfer),
             "" if t.pct is None else repr(t.pct), "" if t.pct_of_plan is None else repr(t.pct_of_plan))
            for t in stay_transfers(result)
        ],
    )
    last = result.state.history[-1]
    gap = abs(last["value_htm"] - last["value_mtm"]) / last["value_mtm"] if last["value_mtm"] > 0 else None
    summary = {
        "seed": config.seed,
        "insolvent": result.insolvent,
        "halt_year": result.state.halt_year,
        "final_year": last["year"],
        "value_mtm": last["value_mtm"],
        "value_htm": last["value_htm"],
        "relative_gap": gap,
        "out": str(out),
    }
    print(json.dumps(summary))
    return EXIT_OK


def cmd_grid(args) -> int:
    curves = _curves(args.curves)
    spec = filters = None
    if args.manifest:
        manifest = _read_json(args.manifest)
        scenarios = scenarios_from_manifest(manifest)
        if manifest.get("grid_spec"):
            spec = GridSpec.from_dict(manifest["grid_spec"])
        filters = {k: set(v) for k, v in manifest.get("filters", {}).items()}
    else:
        if not args.config:
            raise ConfigError("grid needs --config <gridspec.json> or --manifest <manifest.json>")
        spec = GridSpec.from_dict(_read_json(args.config))
        overrides = {}
        seed = _seed(args)
        if seed is not None:
            overrides["master_seed"] = seed
        if args.alpha is not None:
            overrides["htm_fraction"] = args.alpha
        if overrides:
            spec = GridSpec.from_dict({**spec.to_dict(), **overrides})
        filters = parse_filters(args.filter or [])
        scenarios = enumerate_grid(spec, filters)

    parallelism = args.parallelism if args.parallelism is not None else _env_int("HTMSIM_PARALLELISM")
    parallelism = parallelism or 1
    if parallelism < 1:
        raise ConfigError("parallelism must be >= 1")
    total = len(scenarios)
    _note(f"running {total} scenarios with {parallelism} worker(s)")
    step = max(1, total // 20)

    def progress(done: int, n: int) -> None:
        if done == n or done % step == 0:
            _note(f"  {done}/{n}")

    report = run_grid(scenarios, curves, parallelism, spec=spec, filters=filters, progress=progress)
    emit_reports(report, args.out, histograms=not args.no_histograms)
    counts: dict[str, int] = {}
    for o in report.outcomes:
        counts[o.status] = counts.get(o.status, 0) + 1
    print(json.dumps({"scenarios": total, "status": dict(sorted(counts.items())), "out": str(args.out)}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="htmsim", description="HTM versus MTM wealth-transfer simulator")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("examples", help="check the two-period worked examples")

    run = sub.add_parser("run", help="simulate one scenario")
    run.add_argument("--config", required=True, help="scenario JSON")
    run.add_argument("--curves", help="yield-curve CSV (default: bundled synthetic curves)")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int, help="override the scenario seed (env HTMSIM_SEED)")
    run.add_argument("--alpha", type=float, help="override the HTM fraction in [0, 1]")

    grid = sub.add_parser("grid", help="run a scenario grid and write reports")
    grid.add_argument("--config", help="grid spec JSON")
    grid.add_argument("--manifest", help="re-run the scenarios listed in a manifest.json")
    grid.add_argument("--curves", help="yield-curve CSV (default: bundled synthetic curves)")
    grid.add_argument("--out", required=True, help="output directory")
    grid.add_argument("--seed", type=int, help="override the master seed (env HTMSIM_SEED)")
    grid.add_argument("--parallelism", type=int, help="worker processes (env HTMSIM_PARALLELISM, default 1)")
    grid.add_argument("--alpha", type=float, help="override the HTM fraction in [0, 1]")
    grid.add_argument("--filter", action="append", metavar="KEY=V1,V2", help="restrict a grid axis; repeatable")
    grid.add_argument("--no-histograms", action="store_true", help="skip per-scenario histogram files")
    return p


COMMANDS = {"examples": cmd_examples, "run": cmd_run, "grid": cmd_grid}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        _note(f"config error: {exc}")
        return EXIT_CONFIG
    except DataError as exc:
        _note(f"data error: {exc}")
        return EXIT_DATA
    except HTMSimError as exc:
        _note(f"error: {type(exc).__name__}: {exc}")
        return EXIT_RUNTIME
    except OSError as exc:
        _note(f"io error: {exc}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
