"""Two-period fixtures with hand-set prices, run through the real engine.

Ana joins at t=1 and contributes 1 at t=1 and t=2; Marcos joins at t=2 with
a single contribution of 1.  Bond A costs 1.00 at t=1 and trades at 0.90 at
t=2 while its t=1 lot accrues to 1.01.  Bond B (two-bond cases only) costs
0.90 at t=1, trades at 0.85 at t=2 and accrues to 0.91.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, TextIO

from .engine import ScenarioConfig, ScriptedCohort, TabularMarket, run_scenario
from .transfer import exit_transfer, stay_transfer

# Nominal maturity; tabular markets never price from dates.
_MATURITY = "0009-12-31"

ANA = ScriptedCohort(entry_year=1, members=1, contributions={1: 1.0, 2: 1.0})
MARCOS = ScriptedCohort(entry_year=2, members=1, contributions={2: 1.0})


def _config(n_bonds: int, htm_fraction: float, years: int, script) -> ScenarioConfig:
    allocation = (1.0,) if n_bonds == 1 else (0.5, 0.5)
    maturities = (_MATURITY,) if n_bonds == 1 else (_MATURITY, "0010-12-31")
    return ScenarioConfig(
        allocation=allocation,
        maturities=maturities,
        htm_fraction=htm_fraction,
        start_year=1,
        years=years,
        script=tuple(script),
    )


def _stay(result):
    state = result.state
    ana, marcos = state.cohorts
    return stay_transfer(ana, state, result.prices), stay_transfer(marcos, state, result.prices)


def single_bond_example(htm_fraction: float = 1.0, market_t2: float = 0.90) -> dict:
    market = TabularMarket(prices={1: [1.00], 2: [market_t2]}, yields={1: [0.01]})
    result = run_scenario(_config(1, htm_fraction, 2, [ANA, MARCOS]), market=market)
    ana, marcos = _stay(result)
    hist = result.state.history[-1]
    return {
        "result": result,
        "quota_mtm": result.state.quota_mtm,
        "quota_htm": result.state.quota_htm,
        "value_mtm": hist["value_mtm"],
        "value_htm": hist["value_htm"],
        "ana_transfer": ana.transfer,
        "ana_pct_of_plan": ana.pct_of_plan,
        "ana_pct_of_balance": ana.pct,
        "marcos_transfer": marcos.transfer,
        "marcos_pct_of_contribution": 100.0 * marcos.transfer / 1.0,
        "marcos_quotas_htm": result.state.cohorts[1].quotas_htm_pm,
        "marcos_bonds": float(result.state.cohorts[1].bonds_pm[0]),
    }


def two_bond_example(htm_fraction: float = 1.0) -> dict:
    market = TabularMarket(
        prices={1: [1.00, 0.90], 2: [0.90, 0.85]},
        yields={1: [0.01, 0.91 / 0.90 - 1.0]},
    )
    result = run_scenario(_config(2, htm_fraction, 2, [ANA, MARCOS]), market=market)
    ana, marcos = _stay(result)
    return {
        "result": result,
        "quota_mtm": result.state.quota_mtm,
        "quota_htm": result.state.quota_htm,
        "marcos_quotas_htm": result.state.cohorts[1].quotas_htm_pm,
        "marcos_transfer": marcos.transfer,
        "marcos_by_bond": marcos.by_maturity,
        "ana_transfer": ana.transfer,
    }


def exit_example(market_price: float = 0.90) -> dict:
    """Ana redeems everything right after the t=2 contribution.

    Modelled as a third step at unchanged prices and curve values, so the
    redemption uses the quotas held after the t=2 purchase.
    """
    market = TabularMarket(
        prices={1: [1.00], 2: [market_price], 3: [market_price]},
        yields={1: [0.01]},
        curve_values={(0, 1, 3): 1.01, (0, 2, 3): market_price},
    )
    ana = ScriptedCohort(1, 1, {1: 1.0, 2: 1.0}, exit_year=3)
    result = run_scenario(_config(1, 1.0, 3, [ana, MARCOS]), market=market)
    (event,) = result.exits
    held_before = result.state.history[1]["bonds_htm"][0]
    held_after = result.state.history[2]["bonds_htm"][0]
    sold = held_before - held_after
    attributed = event.bonds_pm[0]
    xfer = exit_transfer(event)
    return {
        "result": result,
        "exit_htm": event.exit_value_htm_pm,
        "exit_mtm": event.exit_value_mtm_pm,
        "transfer": xfer.transfer,
        "bonds_sold": sold,
        "bonds_remaining": held_after,
        "marcos_bonds": float(result.state.cohorts[1].bonds_pm[0]),
        "congruence_transfer": (sold - attributed) * market_price,
    }


@dataclass(frozen=True)
class Oracle:
    name: str
    compute: Callable[[], float]
    expected: float
    tol: float

    def check(self) -> tuple[bool, float]:
        got = self.compute()
        return abs(got - self.expected) <= self.tol, got


def _cached(fn, *args):
    cache = {}

    def get(key):
        if "v" not in cache:
            cache["v"] = fn(*args)
        return cache["v"][key]

    return get


def default_oracles() -> list[Oracle]:
    ex1 = _cached(single_bond_example)
    ex2 = _cached(two_bond_example, 1.0)
    ex2_mtm = _cached(two_bond_example, 0.0)
    ex3 = _cached(two_bond_example, 0.30)
    out = _cached(exit_example, 0.90)
    near = _cached(exit_example, 0.98)
    return [
        Oracle("ex1.quota_mtm", lambda: ex1("quota_mtm"), 0.90, 1e-12),
        Oracle("ex1.quota_htm", lambda: ex1("quota_htm"), 1.01, 1e-12),
        Oracle("ex1.plan_value_mtm", lambda: ex1("value_mtm"), 2.90, 0.005),
        Oracle("ex1.plan_value_htm", lambda: ex1("value_htm"), 3.01, 0.005),
        Oracle("ex1.marcos_quotas_htm", lambda: ex1("marcos_quotas_htm"), 0.99, 0.005),
        Oracle("ex1.marcos_bonds", lambda: ex1("marcos_bonds"), 1.111, 0.001),
        Oracle("ex1.marcos_transfer", lambda: ex1("marcos_transfer"), -0.037, 0.001),
        Oracle("ex1.marcos_pct_of_contribution", lambda: ex1("marcos_pct_of_contribution"), -3.7, 0.1),
        Oracle("ex1.ana_transfer", lambda: ex1("ana_transfer"), 0.037, 0.001),
        Oracle("ex1.ana_pct_of_plan", lambda: ex1("ana_pct_of_plan"), 1.26, 0.05),
        Oracle("ex2.quota_mtm", lambda: ex2("quota_mtm"), 0.9222, 1e-4),
        Oracle("ex2.quota_htm", lambda: ex2("quota_htm"), 1.01056, 1e-5),
        Oracle("ex2.marcos_transfer", lambda: ex2("marcos_transfer"), -0.029, 0.001),
        Oracle("ex2.marcos_transfer_bond_a", lambda: ex2("marcos_by_bond")[0], -0.018, 0.001),
        Oracle("ex2.marcos_transfer_bond_b", lambda: ex2("marcos_by_bond")[1], -0.011, 0.001),
        Oracle("ex2.mtm_transfer", lambda: ex2_mtm("marcos_transfer"), 0.0, 1e-9),
        Oracle("ex3.quota", lambda: ex3("quota_htm"), 0.94873, 1e-5),
        Oracle("ex3.marcos_quotas", lambda: ex3("marcos_quotas_htm"), 1.05404, 1e-5),
        Oracle("ex3.marcos_transfer", lambda: ex3("marcos_transfer"), -0.00892, 1e-4),
        Oracle("ex3.ana_transfer", lambda: ex3("ana_transfer"), 0.00892, 1e-4),
        Oracle("exit.htm_value", lambda: out("exit_htm"), 2.01, 0.005),
        Oracle("exit.mtm_value", lambda: out("exit_mtm"), 1.90, 0.005),
        Oracle("exit.transfer", lambda: out("transfer"), 0.11, 0.005),
        Oracle("exit.bonds_remaining", lambda: out("bonds_remaining"), 0.989, 0.001),
        Oracle("exit.congruence", lambda: out("congruence_transfer") - out("transfer"), 0.0, 1e-9),
        Oracle("exit_near_curve.mtm_value", lambda: near("exit_mtm"), 1.98, 0.005),
        Oracle("exit_near_curve.transfer", lambda: near("transfer"), 0.03, 0.005),
    ]


def run_oracles(oracles: Iterable[Oracle], out: TextIO) -> bool:
    ok_all = True
    for o in oracles:
        try:
            ok, got = o.check()
        except Exception as exc:  # report and keep going
            ok, got = False, float("nan")
            print(f"FAIL {o.name}: raised {type(exc).__name__}: {exc}", file=out)
            ok_all = False
            continue
        status = "PASS" if ok else "FAIL"
        line = f"{status} {o.name}: got {got:.6f} expected {o.expected:.6f} tol {o.tol:g}"
        if not ok:
            line += f" diff {got - o.expected:+.6g}"
        print(line, file=out)
        ok_all &= ok
    return ok_all
