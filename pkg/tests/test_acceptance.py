"""One PASS/FAIL line per acceptance criterion, at the stated tolerances.

Lines are collected into the pytest terminal summary ("acceptance criteria"
section) and printed directly when this file is run as a script.  Criteria
that need exchange curve data read them from the file named by the
HTMSIM_B3_CURVES environment variable and skip otherwise.
"""

from __future__ import annotations

import dataclasses
import os
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import ACCEPTANCE_LINES  # noqa: E402
from htmsim.curve import load_curves  # noqa: E402
from htmsim.engine import ScenarioConfig, ScriptedCohort, run_scenario  # noqa: E402
from htmsim.scenario import GridScenario, GridSpec, emit_reports, enumerate_grid, run_grid  # noqa: E402
from htmsim.transfer import exit_transfers, stay_transfers  # noqa: E402
from htmsim.worked_examples import exit_example, single_bond_example, two_bond_example  # noqa: E402

B3_ENV = "HTMSIM_B3_CURVES"

CONVERGENCE = ScenarioConfig(
    allocation=(1.0,), maturities=("2024-12-31",),
    script=(ScriptedCohort(2005, 2, {y: 500.0 for y in range(2005, 2025)}),),
)
INSOLVENCY = ScenarioConfig(
    allocation=(1.0,), maturities=("2035-12-31",),
    script=(ScriptedCohort(2005, 2, {2005: 50.0}), ScriptedCohort(2012, 1, {2012: 1000.0}, exit_year=2015)),
)


def record(label: str, ok: bool | None, detail: str) -> None:
    status = {True: "PASS", False: "FAIL", None: "SKIP"}[ok]
    line = f"{status} criterion {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def close(got: float, want: float, tol: float) -> bool:
    return abs(got - want) <= tol


def b3_curves():
    path = os.environ.get(B3_ENV)
    return load_curves(path) if path else None


def test_criterion_1_entry_transfer():
    ex = single_bond_example()
    pct_contrib = ex["marcos_pct_of_contribution"]
    ok = (
        close(ex["marcos_transfer"], -0.037, 0.001)
        and close(pct_contrib, -3.7, 0.1)
        and close(ex["ana_transfer"], 0.037, 0.001)
    )
    record(
        "1a",
        ok,
        f"entrant {ex['marcos_transfer']:+.6f} (-0.037 +/- 0.001), {pct_contrib:+.3f}% of contribution "
        f"(-3.7 +/- 0.1); incumbent {ex['ana_transfer']:+.6f} (+0.037 +/- 0.001)",
    )
    assert ok


def test_criterion_1_incumbent_pct_of_plan_value():
    ex = single_bond_example()
    ok = close(ex["ana_pct_of_plan"], 1.26, 0.05)
    record("1b", ok, f"incumbent transfer = {ex['ana_pct_of_plan']:.4f}% of plan MTM value (1.26 +/- 0.05)")
    assert ok


@pytest.mark.xfail(strict=True, reason="1.26% is the transfer over the plan's MTM value; over the incumbent's own balance it is 1.92%")
def test_criterion_1_incumbent_pct_of_own_balance():
    ex = single_bond_example()
    ok = close(ex["ana_pct_of_balance"], 1.26, 0.05)
    record(
        "1c",
        ok,
        f"incumbent transfer = {ex['ana_pct_of_balance']:.4f}% of own MTM balance 1.90 (1.26 +/- 0.05); "
        "see decisions ledger",
    )
    assert ok


def test_criterion_2_two_bond():
    ex = two_bond_example(1.0)
    a, b = ex["marcos_by_bond"]
    ok = close(ex["marcos_transfer"], -0.029, 0.001) and close(a, -0.018, 0.001) and close(b, -0.011, 0.001)
    record("2", ok, f"entrant {ex['marcos_transfer']:+.6f} = {a:+.6f} + {b:+.6f} (-0.029 = -0.018 + -0.011, +/- 0.001)")
    assert ok


def test_criterion_3_partial_htm():
    ex = two_bond_example(0.30)
    zero = two_bond_example(0.0)["marcos_transfer"]
    one = two_bond_example(1.0)["marcos_transfer"]
    ok = (
        close(ex["quota_htm"], 0.94873, 1e-5)
        and close(ex["marcos_transfer"], -0.00892, 1e-4)
        and abs(zero) <= 1e-12
        and close(one, -0.029, 0.001)
    )
    record(
        "3",
        ok,
        f"quota {ex['quota_htm']:.6f} (0.94873 +/- 1e-5), transfer {ex['marcos_transfer']:+.6f} "
        f"(-0.00892 +/- 1e-4), alpha=0 {zero:+.1e}, alpha=1 {one:+.6f}",
    )
    assert ok


def test_criterion_4_exit():
    ex = exit_example(0.90)
    near = exit_example(0.98)
    cong = abs(ex["congruence_transfer"] - ex["transfer"])
    ok = (
        close(ex["exit_htm"], 2.01, 0.005)
        and close(ex["exit_mtm"], 1.90, 0.005)
        and close(ex["transfer"], 0.11, 0.005)
        and close(near["transfer"], 0.03, 0.005)
        and cong <= 1e-9
        and close(ex["bonds_remaining"], 0.989, 0.001)
    )
    record(
        "4",
        ok,
        f"HTM {ex['exit_htm']:.4f} vs MTM {ex['exit_mtm']:.4f}, transfer {ex['transfer']:+.4f} (0.11 +/- 0.005); "
        f"near-curve {near['transfer']:+.4f} (0.03 +/- 0.005); bond-count congruence gap {cong:.1e}",
    )
    assert ok


def _convergence_gap(curves):
    last = run_scenario(CONVERGENCE, curves).state.history[-1]
    return last["year"], abs(last["value_htm"] - last["value_mtm"]) / last["value_mtm"]


def test_criterion_5_maturity_convergence(bundled_curves):
    year, gap = _convergence_gap(bundled_curves)
    parts = [f"synthetic curves {year}: gap {gap:.2e}"]
    ok = year == 2024 and gap < 1e-9
    real = b3_curves()
    if real is not None:
        ryear, rgap = _convergence_gap(real)
        parts.append(f"exchange curves {ryear}: gap {rgap:.2e}")
        ok = ok and ryear == 2024 and rgap < 1e-9
    else:
        parts.append(f"exchange curves not supplied ({B3_ENV} unset)")
    record("5", ok, "; ".join(parts) + " (< 1e-9)")
    assert ok


def _insolvency(curves):
    r = run_scenario(INSOLVENCY, curves)
    ev = next((e for e in r.state.events if e["type"] == "insolvency"), None)
    return r, ev


def test_criterion_6_insolvency(bundled_curves):
    r, ev = _insolvency(bundled_curves)
    ok = r.insolvent and r.state.halt_year == 2015 and ev is not None and ev["bonds_required"][0] > ev["bonds_held"][0]
    detail = (
        f"synthetic curves: halt {r.state.halt_year}, required {ev['bonds_required'][0] / 1000:.4f} "
        f"> held {ev['bonds_held'][0] / 1000:.4f} (per 1000 face)"
        if ev else "synthetic curves: no insolvency"
    )
    real = b3_curves()
    if real is not None:
        rr, rev = _insolvency(real)
        rok = rr.insolvent and rr.state.halt_year == 2015 and rev is not None and rev["bonds_required"][0] > rev["bonds_held"][0]
        ok = ok and rok
        if rev:
            detail += (
                f"; exchange curves: halt {rr.state.halt_year}, required {rev['bonds_required'][0] / 1000:.4f} "
                f"(4.5734 non-blocking) > held {rev['bonds_held'][0] / 1000:.4f}"
            )
    else:
        detail += f"; exact values need exchange curves ({B3_ENV} unset, non-blocking)"
    record("6", ok, detail)
    assert ok


def test_criterion_7_property_suites(bundled_curves, tmp_path):
    start = time.perf_counter()
    worst = {"zero_sum": 0.0, "mtm_null": 0.0, "conservation": 0.0}
    bit_exact = True
    rng = np.random.default_rng(2024)
    allocations = [(1, 0, 0), (0, 1, 0), (0, 0, 1), (0.25, 0.25, 0.5), (0.5, 0.5, 0)]
    for k in range(40):
        cfg = ScenarioConfig(
            initial_participants=int(rng.choice([100, 1000, 10000])),
            exit_rate=float(rng.choice([0.001, 0.0357, 0.0703, 0.105])),
            entry_rate=float(rng.choice([0.0, 0.0333, 0.0667, 0.1])),
            sale_strategy=str(rng.choice(["oldest", "newest", "shortest"])),
            allocation=allocations[k % len(allocations)],
            seed=int(rng.integers(2**63)),
        )
        r = run_scenario(cfg, bundled_curves)
        s = r.state
        scale = max(1.0, float(np.abs(s.attributed).max()))
        worst["conservation"] = max(worst["conservation"], float(np.abs(s.cohort_bonds() - s.attributed).max()) / scale)
        if not r.insolvent:
            ts = stay_transfers(r)
            gross = max(sum(t.members * abs(t.transfer) for t in ts), s.history[-1]["value_mtm"])
            worst["zero_sum"] = max(worst["zero_sum"], abs(sum(t.members * t.transfer for t in ts)) / gross)
        r0 = run_scenario(dataclasses.replace(cfg, htm_fraction=0.0), bundled_curves)
        bit_exact &= r0.quota_path_htm == r0.quota_path_mtm and all(
            h["value_htm"] == h["value_mtm"] for h in r0.state.history
        )
        if sum(w > 0 for w in cfg.allocation) == 1:
            total = r0.state.history[-1]["value_mtm"]
            for t in stay_transfers(r0):
                worst["mtm_null"] = max(worst["mtm_null"], abs(t.transfer) / total)
            for t in exit_transfers(r0):
                worst["mtm_null"] = max(worst["mtm_null"], abs(t.transfer) / max(t.exit_value_mtm, 1e-300))

    cardinality = len(enumerate_grid(GridSpec()))

    spec = GridSpec(participants=(1000,), salary=(15000.0,), exit_rate=(0.0357, 0.105), entry_rate=(0.0667,),
                    strategy=("oldest",), master_seed=3)
    scenarios = enumerate_grid(spec)[:30]
    a = run_grid(scenarios, bundled_curves, 1, spec=spec)
    b = run_grid(scenarios, bundled_curves, 8, spec=spec)
    emit_reports(a, tmp_path / "p1")
    emit_reports(b, tmp_path / "p8")
    identical = all(
        p.read_bytes() == (tmp_path / "p8" / p.name).read_bytes() for p in (tmp_path / "p1").iterdir()
    ) and sorted(p.name for p in (tmp_path / "p1").iterdir()) == sorted(p.name for p in (tmp_path / "p8").iterdir())
    elapsed = time.perf_counter() - start

    ok = (
        worst["zero_sum"] < 1e-9
        and worst["mtm_null"] < 1e-9
        and bit_exact
        and worst["conservation"] < 1e-9
        and cardinality == 4320
        and identical
        and elapsed < 60
    )
    record(
        "7",
        ok,
        f"zero-sum {worst['zero_sum']:.1e}, MTM null {worst['mtm_null']:.1e} (single maturity), "
        f"alpha=0 bit-exact {bit_exact}, conservation {worst['conservation']:.1e}, grid {cardinality}, "
        f"1 vs 8 workers byte-identical {identical}, {elapsed:.1f}s",
    )
    assert ok


def _table2_rows(curves):
    spec = GridSpec(participants=(10000,), salary=(15000.0,), exit_rate=(0.001,), entry_rate=(0.0333,),
                    strategy=("oldest",), master_seed=0)
    wanted = {(1.0, 0.0, 0.0): None, (0.0, 1.0, 0.0): None, (0.0, 0.0, 1.0): None}
    scenarios = [s for s in enumerate_grid(spec) if s.config.allocation in wanted]
    report = run_grid(scenarios, curves, 1, spec=spec)
    return {o.config.allocation: o.exit for o in report.outcomes}


def test_criterion_8_table_trends(bundled_curves):
    real = b3_curves()
    if real is None:
        rows = _table2_rows(bundled_curves)
        info = ", ".join(
            f"{'/'.join(f'{w:g}' for w in a)}: mean loss {-s.mean_pct:.2f}, max loss {s.max_loss_year}, max gain {s.max_gain_year}"
            for a, s in rows.items()
        )
        record("8", None, f"needs exchange curves ({B3_ENV} unset); synthetic-curve values for reference only: {info}")
        pytest.skip(f"{B3_ENV} not set")
    rows = _table2_rows(real)
    losses = [-rows[a].mean_pct for a in ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))]
    years_ok = all(s.max_loss_year == 2012 and s.max_gain_year == 2013 for s in rows.values())
    ok = losses[0] < losses[1] < losses[2] and years_ok
    record(
        "8",
        ok,
        f"mean exit loss {losses[0]:.2f} < {losses[1]:.2f} < {losses[2]:.2f} (9.55 < 13.49 < 16.47); "
        f"loss/gain years {[(s.max_loss_year, s.max_gain_year) for s in rows.values()]} (2012, 2013)",
    )
    assert ok


@pytest.mark.slow
def test_criterion_9_full_grid_runtime(bundled_curves, tmp_path):
    curves = b3_curves() or bundled_curves
    spec = GridSpec()
    scenarios = [
        GridScenario(s.index, dataclasses.replace(s.config, initial_participants=10000))
        for s in enumerate_grid(spec)
    ]
    start = time.perf_counter()
    report = run_grid(scenarios, curves, 1, spec=spec)
    emit_reports(report, tmp_path, histograms=False)
    elapsed = time.perf_counter() - start
    rows = len((tmp_path / "summary.csv").read_text().splitlines()) - 1
    ok = elapsed < 600 and rows == 4320
    record("9", ok, f"{rows} scenarios x 10,000 participants on 1 worker in {elapsed:.1f}s (< 600s)")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
