"""Annual simulation of a DC plan under parallel MTM and HTM cotization.

Two tracks run side by side on the same flows.  The MTM track marks its bond
book at market every year.  The HTM track updates its quota with a blend of
the hold-to-maturity ratio (weight ``htm_fraction``) and the market ratio of
its own book; with ``htm_fraction = 0`` it is the MTM track bit for bit.
Participants are grouped into cohorts of identical members (same entry year,
same contributions), so state scales with the number of entry years rather
than with head count.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from datetime import date
from decimal import ROUND_HALF_UP, Decimal
from typing import Any, Mapping, Protocol, Sequence

import numpy as np

from .curve import YieldCurveSet, curve_value, market_price, purchase_yield
from .errors import ConfigError, DataError, DegeneracyError, DomainError
from .ledger import BondBook, BondLot, SaleStrategy

SCENARIO_SCHEMA = "htmsim.scenario/1"
ENGINE_VERSION = "1.0.0"
DEFAULT_MATURITIES = ("2025-12-31", "2030-12-31", "2035-12-31")


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ScriptedCohort:
    """A hand-specified group of members for fixture-style runs.

    Years are calendar years.  ``contributions`` maps year to cash per member;
    a cohort exits in full at ``exit_year`` (no contribution that year).
    """

    entry_year: int
    members: int
    contributions: Mapping[int, float]
    exit_year: int | None = None

    def to_dict(self) -> dict:
        return {
            "entry_year": self.entry_year,
            "members": self.members,
            "contributions": {str(y): c for y, c in sorted(self.contributions.items())},
            "exit_year": self.exit_year,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ScriptedCohort":
        unknown = set(d) - {"entry_year", "members", "contributions", "exit_year"}
        if unknown:
            raise ConfigError(f"unknown script fields: {sorted(unknown)}")
        try:
            contributions = {int(y): float(c) for y, c in d.get("contributions", {}).items()}
            return cls(int(d["entry_year"]), int(d["members"]), contributions, d.get("exit_year"))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad script entry {dict(d)!r}: {exc}") from None


@dataclass(frozen=True)
class ScenarioConfig:
    initial_participants: int = 1000
    monthly_salary: float = 15000.0
    contribution_rate: float = 0.15
    payments_per_year: int = 13
    exit_rate: float = 0.001
    entry_rate: float = 0.0333
    allocation: tuple[float, ...] = (1.0, 0.0, 0.0)
    maturities: tuple[str, ...] = DEFAULT_MATURITIES
    sale_strategy: SaleStrategy = SaleStrategy.OLDEST
    htm_fraction: float = 1.0
    seed: int = 0
    years: int = 20
    start_year: int = 2005
    extrapolate: bool = False
    script: tuple[ScriptedCohort, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "allocation", tuple(float(w) for w in self.allocation))
        object.__setattr__(self, "maturities", tuple(str(m) for m in self.maturities))
        try:
            object.__setattr__(self, "sale_strategy", SaleStrategy.parse(self.sale_strategy))
        except DomainError as exc:
            raise ConfigError(str(exc)) from None
        if self.script is not None:
            object.__setattr__(self, "script", tuple(self.script))

    @property
    def end_year(self) -> int:
        return self.start_year + self.years - 1

    def maturity_dates(self) -> list[date]:
        try:
            return [date.fromisoformat(m) for m in self.maturities]
        except ValueError as exc:
            raise ConfigError(f"bad maturity date: {exc}") from None

    def validate(self) -> None:
        if self.years < 1:
            raise ConfigError("years must be >= 1")
        if self.initial_participants < 0:
            raise ConfigError("initial_participants must be >= 0")
        for name in ("contribution_rate", "exit_rate", "entry_rate", "htm_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        if self.monthly_salary < 0 or self.payments_per_year < 0:
            raise ConfigError("monthly_salary and payments_per_year must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if len(self.allocation) != len(self.maturities) or not self.maturities:
            raise ConfigError("allocation and maturities must have the same nonzero length")
        if any(w < 0 for w in self.allocation):
            raise ConfigError("allocation weights must be non-negative")
        if abs(sum(self.allocation) - 1.0) > 1e-9:
            raise ConfigError(f"allocation must sum to 1, got {sum(self.allocation)}")
        dates = self.maturity_dates()
        if dates != sorted(dates) or len(set(dates)) != len(dates):
            raise ConfigError("maturities must be strictly increasing")
        if dates[0].year < self.end_year:
            raise ConfigError(f"maturity {dates[0]} falls before the last simulated year {self.end_year}")
        if self.script is not None:
            for c in self.script:
                if not self.start_year <= c.entry_year <= self.end_year:
                    raise ConfigError(f"scripted cohort entry year {c.entry_year} outside the horizon")
                if c.members < 0:
                    raise ConfigError("scripted cohort members must be >= 0")
                if c.exit_year is not None and not c.entry_year < c.exit_year <= self.end_year:
                    raise ConfigError(f"scripted exit year {c.exit_year} must follow entry and lie in the horizon")
                if any(v < 0 for v in c.contributions.values()):
                    raise ConfigError("scripted contributions must be non-negative")

    def to_dict(self) -> dict:
        d = {
            "schema": SCENARIO_SCHEMA,
            "initial_participants": self.initial_participants,
            "monthly_salary": self.monthly_salary,
            "contribution_rate": self.contribution_rate,
            "payments_per_year": self.payments_per_year,
            "exit_rate": self.exit_rate,
            "entry_rate": self.entry_rate,
            "allocation": list(self.allocation),
            "maturities": list(self.maturities),
            "sale_strategy": self.sale_strategy.value,
            "htm_fraction": self.htm_fraction,
            "seed": self.seed,
            "years": self.years,
            "start_year": self.start_year,
            "extrapolate": self.extrapolate,
        }
        if self.script is not None:
            d["script"] = [c.to_dict() for c in self.script]
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ScenarioConfig":
        d = dict(d)
        schema = d.pop("schema", None)
        if schema != SCENARIO_SCHEMA:
            raise ConfigError(f"config schema must be {SCENARIO_SCHEMA!r}, got {schema!r}")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if "script" in d and d["script"] is not None:
            d["script"] = tuple(ScriptedCohort.from_dict(c) for c in d["script"])
        for key in ("allocation", "maturities"):
            if key in d:
                d[key] = tuple(d[key])
        try:
            cfg = cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        cfg.validate()
        return cfg


def annual_contribution(config: ScenarioConfig) -> float:
    return config.monthly_salary * config.contribution_rate * config.payments_per_year


def round_half_up(x: float) -> int:
    return int(Decimal(repr(x)).quantize(Decimal(1), rounding=ROUND_HALF_UP))


# --------------------------------------------------------------------------
# market views


class Market(Protocol):
    n_maturities: int

    def prices(self, t: int) -> np.ndarray: ...

    def yields(self, t: int) -> np.ndarray: ...

    def lot_value(self, lot: BondLot, t: int) -> float: ...


class CurveMarket:
    """Prices and accrual yields from ingested curves, cached per simulation year.

    Year index ``t`` runs from 1 (``start_year``).  A bond is redeemed at face
    in its maturity calendar year.
    """

    def __init__(
        self,
        curves: YieldCurveSet,
        maturities: Sequence[date],
        start_year: int,
        years: int,
        *,
        extrapolate: bool = False,
    ):
        self.start_year = start_year
        self.years = years
        self.maturities = list(maturities)
        self.n_maturities = len(self.maturities)
        calendar = range(start_year, start_year + years)
        curves.require_years(calendar)
        self.maturity_t = [d.year - start_year + 1 for d in self.maturities]
        self._prices = np.empty((years + 1, self.n_maturities))
        self._yields = np.empty((years + 1, self.n_maturities))
        self._prices[0] = np.nan
        self._yields[0] = np.nan
        for t in range(1, years + 1):
            for m, mat in enumerate(self.maturities):
                mt = self.maturity_t[m]
                if t > mt:
                    raise DomainError(f"maturity {mat} precedes simulation year {start_year + t - 1}")
                if t == mt:
                    price, y = 1.0, 0.0
                else:
                    try:
                        price = market_price(curves, start_year + t - 1, mat, extrapolate=extrapolate)
                    except DataError as exc:
                        raise type(exc)(f"year {start_year + t - 1}: {exc}") from None
                    y = purchase_yield(price, mt - t)
                self._prices[t, m] = price
                self._yields[t, m] = y

    @classmethod
    def for_config(cls, curves: YieldCurveSet, config: ScenarioConfig) -> "CurveMarket":
        return cls(curves, config.maturity_dates(), config.start_year, config.years, extrapolate=config.extrapolate)

    def prices(self, t: int) -> np.ndarray:
        return self._prices[t]

    def yields(self, t: int) -> np.ndarray:
        return self._yields[t]

    def lot_value(self, lot: BondLot, t: int) -> float:
        return curve_value(lot, t, self.maturity_t[lot.maturity_id])


class TabularMarket:
    """Explicit prices and yields per year, for hand-built fixtures.

    ``curve_values`` optionally pins the HTM value of lot
    ``(maturity_id, acquisition_year)`` at year ``t``.
    """

    def __init__(
        self,
        prices: Mapping[int, Sequence[float]],
        yields: Mapping[int, Sequence[float]] | None = None,
        curve_values: Mapping[tuple[int, int, int], float] | None = None,
    ):
        self._prices = {t: np.asarray(p, dtype=float) for t, p in prices.items()}
        self.n_maturities = len(next(iter(self._prices.values())))
        zeros = np.zeros(self.n_maturities)
        self._yields = {t: np.asarray((yields or {}).get(t, zeros), dtype=float) for t in self._prices}
        self._curve_values = dict(curve_values or {})

    def prices(self, t: int) -> np.ndarray:
        try:
            return self._prices[t]
        except KeyError:
            raise DomainError(f"no prices for year {t}") from None

    def yields(self, t: int) -> np.ndarray:
        return self._yields[t]

    def lot_value(self, lot: BondLot, t: int) -> float:
        pinned = self._curve_values.get((lot.maturity_id, lot.acquisition_year, t))
        if pinned is not None:
            return pinned
        return curve_value(lot, t)


# --------------------------------------------------------------------------
# state


@dataclass
class Cohort:
    entry_year: int
    members: int
    quotas_mtm_pm: float
    quotas_htm_pm: float
    bonds_pm: np.ndarray

    def to_dict(self) -> dict:
        return {
            "entry_year": self.entry_year,
            "members": self.members,
            "quotas_mtm_pm": self.quotas_mtm_pm,
            "quotas_htm_pm": self.quotas_htm_pm,
            "bonds_pm": [float(b) for b in self.bonds_pm],
        }


@dataclass(frozen=True)
class ExitEvent:
    year: int
    entry_year: int
    members: int
    exit_value_mtm_pm: float
    exit_value_htm_pm: float
    claim_htm_pm: float
    bonds_pm: tuple[float, ...]

    def to_dict(self) -> dict:
        return {"type": "exit", **dataclasses.asdict(self), "bonds_pm": list(self.bonds_pm)}


@dataclass
class Track:
    """One cotization track: a quota value and the bond book behind it."""

    htm_fraction: float
    quota: float = 1.0
    book: BondBook = field(default_factory=BondBook)

    def ratios(self, market: Market, t: int) -> tuple[float, float]:
        """(htm ratio, mtm ratio) of the t-1 holdings between t-1 and t."""
        if not self.book.lots:
            return 1.0, 1.0
        mv_prev = self.book.market_value(market.prices(t - 1))
        if mv_prev <= 0:
            raise DegeneracyError(f"year index {t}: zero prior market value with nonzero holdings")
        ratio_mtm = self.book.market_value(market.prices(t)) / mv_prev
        ratio_htm = 0.0
        if self.htm_fraction > 0:
            hv_prev = self.book.valued(lambda lot: market.lot_value(lot, t - 1))
            if hv_prev <= 0:
                raise DegeneracyError(f"year index {t}: zero prior curve value with nonzero holdings")
            ratio_htm = self.book.valued(lambda lot: market.lot_value(lot, t)) / hv_prev
        return ratio_htm, ratio_mtm

    def update(self, market: Market, t: int) -> float:
        ratio_htm, ratio_mtm = self.ratios(market, t)
        self.quota = blended_quota(self.quota, ratio_htm, ratio_mtm, self.htm_fraction)
        return self.quota


def blended_quota(prev_quota: float, ratio_htm: float, ratio_mtm: float, htm_fraction: float) -> float:
    return prev_quota * (htm_fraction * ratio_htm + (1.0 - htm_fraction) * ratio_mtm)


@dataclass
class PlanState:
    t: int
    year: int
    mtm: Track
    htm: Track
    cohorts: list[Cohort]
    attributed: np.ndarray
    insolvent: bool = False
    halt_year: int | None = None
    events: list[dict] = field(default_factory=list)
    exits: list[ExitEvent] = field(default_factory=list)
    history: list[dict] = field(default_factory=list)

    @property
    def quota_mtm(self) -> float:
        return self.mtm.quota

    @property
    def quota_htm(self) -> float:
        return self.htm.quota

    def members(self) -> int:
        return sum(c.members for c in self.cohorts)

    def total_quotas(self) -> tuple[float, float]:
        q_mtm = sum(c.members * c.quotas_mtm_pm for c in self.cohorts)
        q_htm = sum(c.members * c.quotas_htm_pm for c in self.cohorts)
        return q_mtm, q_htm

    def cohort_bonds(self) -> np.ndarray:
        total = np.zeros_like(self.attributed)
        for c in self.cohorts:
            total += c.members * c.bonds_pm
        return total


class Plan:
    """Mutable plan driven one step at a time.

    Within a year the order is: quota update, exits, contributions of the
    remaining members, entrants.
    """

    def __init__(
        self,
        market: Market,
        allocation: Sequence[float],
        strategy: SaleStrategy | str = SaleStrategy.OLDEST,
        htm_fraction: float = 1.0,
        start_year: int = 1,
    ):
        self.market = market
        self.allocation = tuple(float(w) for w in allocation)
        self.strategy = SaleStrategy.parse(strategy)
        self.start_year = start_year
        n = len(self.allocation)
        self.state = PlanState(
            t=1,
            year=start_year,
            mtm=Track(0.0),
            htm=Track(float(htm_fraction)),
            cohorts=[],
            attributed=np.zeros(n),
        )

    @property
    def n_maturities(self) -> int:
        return len(self.allocation)

    def year_of(self, t: int) -> int:
        return self.start_year + t - 1

    def quota_update(self, t: int) -> tuple[float, float]:
        s = self.state
        if t != s.t + 1:
            raise DomainError(f"quota update for year index {t} after {s.t}")
        s.mtm.update(self.market, t)
        s.htm.update(self.market, t)
        s.t = t
        s.year = self.year_of(t)
        return s.mtm.quota, s.htm.quota

    def _buy(self, cohort: Cohort, cash_pm: float) -> None:
        s = self.state
        if cash_pm <= 0 or cohort.members == 0:
            return
        prices = self.market.prices(s.t)
        yields = self.market.yields(s.t)
        cohort.quotas_mtm_pm += cash_pm / s.mtm.quota
        cohort.quotas_htm_pm += cash_pm / s.htm.quota
        bonds_pm = np.zeros(self.n_maturities)
        for m, w in enumerate(self.allocation):
            if w > 0:
                bonds_pm[m] = cash_pm * w / prices[m]
        cohort.bonds_pm = cohort.bonds_pm + bonds_pm
        s.attributed = s.attributed + cohort.members * bonds_pm
        cash = cohort.members * cash_pm
        s.mtm.book.record_purchase(s.t, self.allocation, cash, prices, yields)
        s.htm.book.record_purchase(s.t, self.allocation, cash, prices, yields)

    def apply_contributions(self, cash_pm: Mapping[int, float]) -> None:
        """Contributions keyed by cohort index, cash per member."""
        for i, cash in cash_pm.items():
            self._buy(self.state.cohorts[i], cash)

    def add_cohort(self, members: int, cash_pm: float) -> int:
        s = self.state
        cohort = Cohort(s.year, int(members), 0.0, 0.0, np.zeros(self.n_maturities))
        s.cohorts.append(cohort)
        if members > 0:
            s.events.append({"type": "entry", "year": s.year, "members": int(members), "cash_pm": cash_pm})
        self._buy(cohort, cash_pm)
        return len(s.cohorts) - 1

    def process_exits(self, counts: Sequence[int]) -> list[ExitEvent]:
        """Remove ``counts[i]`` members from cohort ``i`` and liquidate both tracks."""
        s = self.state
        prices = self.market.prices(s.t)
        exiting = [(i, int(k)) for i, k in enumerate(counts) if k > 0]
        if not exiting:
            return []
        claims = []
        cash_htm = cash_mtm = 0.0
        for i, k in exiting:
            c = s.cohorts[i]
            if k > c.members:
                raise DomainError(f"cannot remove {k} members from a cohort of {c.members}")
            g = c.quotas_htm_pm * s.htm.quota
            h = c.quotas_mtm_pm * s.mtm.quota
            claims.append((i, k, g, h, tuple(float(b) for b in c.bonds_pm)))
            cash_htm += k * g
            cash_mtm += k * h
            c.members -= k
            s.attributed = s.attributed - k * c.bonds_pm

        held = s.htm.book.quantities(self.n_maturities)
        sale_htm = s.htm.book.sell_for_cash(cash_htm, prices, self.allocation, self.strategy)
        sale_mtm = s.mtm.book.sell_for_cash(cash_mtm, prices, self.allocation, self.strategy)
        paid_fraction = 1.0
        if sale_htm.shortfall > 0:
            paid_fraction = sale_htm.proceeds / cash_htm
            s.insolvent = True
            s.halt_year = s.year
            s.events.append(
                {
                    "type": "insolvency",
                    "year": s.year,
                    "cash_needed": cash_htm,
                    "proceeds": sale_htm.proceeds,
                    "shortfall": sale_htm.shortfall,
                    "bonds_required": [float(cash_htm * w / p) for w, p in zip(self.allocation, prices)],
                    "bonds_held": [float(q) for q in held],
                }
            )
        if sale_mtm.shortfall > 0:
            raise DegeneracyError(f"year {s.year}: MTM track cannot fund exits at market value")

        events = []
        for i, k, g, h, bonds in claims:
            ev = ExitEvent(s.year, s.cohorts[i].entry_year, k, h, g * paid_fraction, g, bonds)
            events.append(ev)
            s.exits.append(ev)
            s.events.append(ev.to_dict())
        return events

    def snapshot(self) -> dict:
        s = self.state
        q_mtm, q_htm = s.total_quotas()
        prices = self.market.prices(s.t)
        return {
            "year": s.year,
            "quota_mtm": s.mtm.quota,
            "quota_htm": s.htm.quota,
            "members": s.members(),
            "total_quotas_mtm": q_mtm,
            "total_quotas_htm": q_htm,
            "value_mtm": q_mtm * s.mtm.quota,
            "value_htm": q_htm * s.htm.quota,
            "htm_book_market_value": s.htm.book.market_value(prices),
            "bonds_mtm": [float(q) for q in s.mtm.book.quantities(self.n_maturities)],
            "bonds_htm": [float(q) for q in s.htm.book.quantities(self.n_maturities)],
            "prices": [float(p) for p in prices],
        }


# --------------------------------------------------------------------------
# runner


def sample_exit_counts(
    rng: np.random.Generator, members: Sequence[int], exit_rate: float
) -> np.ndarray:
    """Exit counts per cohort: a uniform draw without replacement from the pool."""
    colors = np.asarray(members, dtype=np.int64)
    pool = int(colors.sum())
    total = min(round_half_up(exit_rate * pool), pool)
    if total == 0:
        return np.zeros_like(colors)
    if total == pool:
        return colors.copy()
    return rng.multivariate_hypergeometric(colors, total)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


@dataclass
class SimulationResult:
    config: ScenarioConfig
    state: PlanState
    prices: np.ndarray

    @property
    def exits(self) -> list[ExitEvent]:
        return self.state.exits

    @property
    def insolvent(self) -> bool:
        return self.state.insolvent

    @property
    def quota_path_mtm(self) -> list[float]:
        return [h["quota_mtm"] for h in self.state.history]

    @property
    def quota_path_htm(self) -> list[float]:
        return [h["quota_htm"] for h in self.state.history]

    def to_dict(self) -> dict:
        s = self.state
        return {
            "schema": "htmsim.result/1",
            "engine_version": ENGINE_VERSION,
            "config": self.config.to_dict(),
            "seed": self.config.seed,
            "insolvent": s.insolvent,
            "halt_year": s.halt_year,
            "final_year": s.year,
            "quota_path": {
                "years": [h["year"] for h in s.history],
                "mtm": self.quota_path_mtm,
                "htm": self.quota_path_htm,
            },
            "history": s.history,
            "events": s.events,
            "cohorts": [c.to_dict() for c in s.cohorts],
            "attributed_bonds": [float(b) for b in s.attributed],
            "books": {
                "mtm": [lot.to_dict() for lot in s.mtm.book],
                "htm": [lot.to_dict() for lot in s.htm.book],
            },
        }


def run_scenario(
    config: ScenarioConfig,
    curves: YieldCurveSet | None = None,
    *,
    market: Market | None = None,
) -> SimulationResult:
    """Simulate ``config`` over its horizon; deterministic in (config, data)."""
    config.validate()
    if market is None:
        if curves is None:
            raise ConfigError("run_scenario needs curves or a market")
        market = CurveMarket.for_config(curves, config)
    plan = Plan(market, config.allocation, config.sale_strategy, config.htm_fraction, config.start_year)
    if config.script is not None:
        _run_scripted(plan, config)
    else:
        _run_rates(plan, config)
    return SimulationResult(
        config=config,
        state=plan.state,
        prices=np.array(market.prices(plan.state.t)),
    )


def _run_rates(plan: Plan, config: ScenarioConfig) -> None:
    rng = make_rng(config.seed)
    contribution = annual_contribution(config)
    s = plan.state
    plan.add_cohort(config.initial_participants, contribution)
    s.history.append(plan.snapshot())
    for t in range(2, config.years + 1):
        plan.quota_update(t)
        population = s.members()
        counts = sample_exit_counts(rng, [c.members for c in s.cohorts], config.exit_rate)
        plan.process_exits(counts)
        if s.insolvent:
            s.history.append(plan.snapshot())
            break
        plan.apply_contributions({i: contribution for i, c in enumerate(s.cohorts) if c.members > 0})
        entrants = round_half_up(config.entry_rate * population)
        if entrants > 0:
            plan.add_cohort(entrants, contribution)
        s.history.append(plan.snapshot())


def _run_scripted(plan: Plan, config: ScenarioConfig) -> None:
    s = plan.state
    index: dict[int, int] = {}
    script = list(config.script or ())

    def enter(year: int) -> None:
        for j, c in enumerate(script):
            if c.entry_year == year:
                index[j] = plan.add_cohort(c.members, c.contributions.get(year, 0.0))

    enter(config.start_year)
    s.history.append(plan.snapshot())
    for t in range(2, config.years + 1):
        plan.quota_update(t)
        year = s.year
        counts = [0] * len(s.cohorts)
        for j, i in index.items():
            if script[j].exit_year == year:
                counts[i] = s.cohorts[i].members
        plan.process_exits(counts)
        if s.insolvent:
            s.history.append(plan.snapshot())
            break
        plan.apply_contributions(
            {
                i: script[j].contributions.get(year, 0.0)
                for j, i in index.items()
                if s.cohorts[i].members > 0
            }
        )
        enter(year)
        s.history.append(plan.snapshot())
