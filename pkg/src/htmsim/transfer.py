"""Wealth transfer per participant on exit and at the horizon, plus aggregates.

Sign convention: a transfer is what the subject gains under HTM relative to
MTM.  Percentages are in percent units.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .engine import Cohort, ExitEvent, PlanState, SimulationResult

Kind = Literal["exit", "stay"]
DEFAULT_BINS = 50


@dataclass(frozen=True)
class ExitTransfer:
    year: int
    entry_year: int
    members: int
    transfer: float
    pct: float | None
    exit_value_mtm: float
    exit_value_htm: float


@dataclass(frozen=True)
class StayTransfer:
    entry_year: int
    members: int
    transfer: float
    pct: float | None
    pct_of_plan: float | None
    by_maturity: tuple[float, ...]
    year: int | None = None


def exit_transfer(event: ExitEvent) -> ExitTransfer:
    transfer = event.exit_value_htm_pm - event.exit_value_mtm_pm
    pct = 100.0 * transfer / event.exit_value_mtm_pm if event.exit_value_mtm_pm > 0 else None
    return ExitTransfer(
        event.year,
        event.entry_year,
        event.members,
        transfer,
        pct,
        event.exit_value_mtm_pm,
        event.exit_value_htm_pm,
    )


def stay_transfer(cohort: Cohort, state: PlanState, prices: Sequence[float]) -> StayTransfer:
    """Transfer to one member of ``cohort`` implied by the terminal state.

    The member's share of HTM quotas minus its share of the attributed bonds
    of each maturity, applied to the bonds the plan actually holds at market.
    """
    n = len(state.attributed)
    q_mtm_total, q_htm_total = state.total_quotas()
    if q_htm_total <= 0 or cohort.members == 0:
        return StayTransfer(cohort.entry_year, cohort.members, 0.0, None, None, (0.0,) * n, state.year)
    held = state.htm.book.quantities(n)
    attributed = state.cohort_bonds()
    quota_share = cohort.quotas_htm_pm / q_htm_total
    by_maturity = []
    for m in range(n):
        bond_share = cohort.bonds_pm[m] / attributed[m] if attributed[m] > 0 else 0.0
        by_maturity.append((quota_share - bond_share) * held[m] * float(prices[m]))
    transfer = sum(by_maturity)
    balance = cohort.quotas_mtm_pm * state.quota_mtm
    plan_value = q_mtm_total * state.quota_mtm
    pct = 100.0 * transfer / balance if balance > 0 else None
    pct_of_plan = 100.0 * transfer / plan_value if plan_value > 0 else None
    return StayTransfer(
        cohort.entry_year, cohort.members, transfer, pct, pct_of_plan, tuple(by_maturity), state.year
    )


def exit_transfers(result: SimulationResult) -> list[ExitTransfer]:
    return [exit_transfer(e) for e in result.exits]


def stay_transfers(result: SimulationResult) -> list[StayTransfer]:
    """Horizon transfers for every remaining cohort; empty for insolvent runs."""
    if result.insolvent:
        return []
    state = result.state
    return [stay_transfer(c, state, result.prices) for c in state.cohorts if c.members > 0]


def partial_htm_scaling_check(htm_fraction: float) -> float:
    """Entrant's transfer in the two-bond worked example at a given HTM fraction."""
    from .worked_examples import two_bond_example

    return two_bond_example(htm_fraction)["marcos_transfer"]


@dataclass
class TransferSummary:
    kind: str
    population: int = 0
    max_loss_pct: float = 0.0
    max_loss_year: int | None = None
    max_gain_pct: float = 0.0
    max_gain_year: int | None = None
    mean_pct: float = 0.0
    mean_transfer: float = 0.0
    histogram: list[tuple[float, float, int]] = field(default_factory=list)
    histogram_money: list[tuple[float, float, int]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "population": self.population,
            "max_loss_pct": self.max_loss_pct,
            "max_loss_year": self.max_loss_year,
            "max_gain_pct": self.max_gain_pct,
            "max_gain_year": self.max_gain_year,
            "mean_pct": self.mean_pct,
            "mean_transfer": self.mean_transfer,
        }


def histogram(values: Sequence[float], weights: Sequence[int], bins: int = DEFAULT_BINS) -> list[tuple[float, float, int]]:
    """Equal-width bins over [min, max] holding member counts."""
    if len(values) == 0:
        return []
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=np.int64)
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        return [(lo, hi, int(w.sum()))]
    counts, edges = np.histogram(v, bins=bins, range=(lo, hi), weights=w)
    return [(float(edges[i]), float(edges[i + 1]), int(round(counts[i]))) for i in range(bins)]


def aggregate(
    transfers: Sequence[ExitTransfer | StayTransfer], kind: Kind, bins: int = DEFAULT_BINS
) -> TransferSummary:
    """Member-weighted summary.  Losses and gains are reported as magnitudes."""
    summary = TransferSummary(kind)
    rows = [t for t in transfers if t.members > 0 and t.pct is not None]
    if not rows:
        return summary
    pcts = np.array([t.pct for t in rows])
    money = np.array([t.transfer for t in rows])
    members = np.array([t.members for t in rows], dtype=np.int64)
    years = [t.year if kind == "exit" else None for t in rows]
    summary.population = int(members.sum())
    i_min = int(np.argmin(pcts))
    i_max = int(np.argmax(pcts))
    if pcts[i_min] < 0:
        summary.max_loss_pct = float(-pcts[i_min])
        summary.max_loss_year = years[i_min]
    if pcts[i_max] > 0:
        summary.max_gain_pct = float(pcts[i_max])
        summary.max_gain_year = years[i_max]
    summary.mean_pct = float(np.dot(pcts, members) / summary.population)
    summary.mean_transfer = float(np.dot(money, members) / summary.population)
    summary.histogram = histogram(pcts, members, bins)
    summary.histogram_money = histogram(money, members, bins)
    return summary
