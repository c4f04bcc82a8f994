"""Term structures of real rates, zero-coupon pricing and hold-to-maturity accrual.

Rates are annual effective, terms are calendar days and year fractions use
days / 365.  Interpolation between vertices is a natural cubic spline.
"""

from __future__ import annotations

import csv
import io
import math
from bisect import bisect_left
from dataclasses import dataclass, field
from datetime import date
from typing import TYPE_CHECKING, Iterable, Mapping

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (
    CoverageError,
    CurveParseError,
    DomainError,
    ExtrapolationError,
    IllPosedSplineError,
)

if TYPE_CHECKING:
    from .ledger import BondLot

DAYS_PER_YEAR = 365.0
MIN_KNOTS = 4
CSV_HEADER = ("reference_date", "term_days", "rate")


@dataclass(frozen=True)
class TermPoint:
    term_days: int
    rate: float

    def __post_init__(self) -> None:
        if self.term_days <= 0:
            raise DomainError(f"term_days must be positive, got {self.term_days}")
        if not self.rate > -1.0:
            raise DomainError(f"rate must be > -1, got {self.rate}")


@dataclass(frozen=True)
class YieldCurve:
    """One observation date's vertices plus the spline through them."""

    observation_date: date
    points: tuple[TermPoint, ...]
    _terms: tuple[int, ...] = field(init=False, repr=False, compare=False)
    _spline: CubicSpline = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        points = tuple(self.points)
        object.__setattr__(self, "points", points)
        if len(points) < MIN_KNOTS:
            raise IllPosedSplineError(
                f"curve {self.observation_date} has {len(points)} points; "
                f"a cubic spline needs at least {MIN_KNOTS}"
            )
        terms = tuple(p.term_days for p in points)
        if any(b <= a for a, b in zip(terms, terms[1:])):
            raise DomainError(f"curve {self.observation_date}: term_days not strictly increasing")
        x = np.array(terms, dtype=float)
        y = np.array([p.rate for p in points], dtype=float)
        object.__setattr__(self, "_terms", terms)
        object.__setattr__(self, "_spline", CubicSpline(x, y, bc_type="natural"))

    @property
    def min_term(self) -> int:
        return self._terms[0]

    @property
    def max_term(self) -> int:
        return self._terms[-1]

    def rate_at(self, term_days: float, *, extrapolate: bool = False) -> float:
        return rate_at(self, term_days, extrapolate=extrapolate)


@dataclass(frozen=True)
class YieldCurveSet:
    """Curves keyed by calendar year of observation."""

    curves: Mapping[int, YieldCurve]

    def __post_init__(self) -> None:
        object.__setattr__(self, "curves", dict(sorted(self.curves.items())))

    @property
    def years(self) -> list[int]:
        return list(self.curves)

    def __getitem__(self, year: int) -> YieldCurve:
        try:
            return self.curves[year]
        except KeyError:
            raise CoverageError(f"no yield curve for year {year}") from None

    def __contains__(self, year: object) -> bool:
        return year in self.curves

    def require_years(self, years: Iterable[int]) -> None:
        missing = [y for y in years if y not in self.curves]
        if missing:
            raise CoverageError(f"yield curves missing for years: {', '.join(map(str, missing))}")


def parse_curve_csv(text: str, years: Iterable[int] | None = None) -> YieldCurveSet:
    """Parse ``reference_date,term_days,rate`` rows into a curve set.

    Lines starting with ``#`` and blank lines are skipped.  If ``years`` is
    given, every one of them must have a curve.
    """
    rows: dict[date, dict[int, float]] = {}
    header_seen = False
    for lineno, raw in enumerate(io.StringIO(text, newline=None), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = next(csv.reader([line]))
        fields = [f.strip() for f in fields]
        if not header_seen:
            if tuple(fields) != CSV_HEADER:
                raise CurveParseError(f"expected header {','.join(CSV_HEADER)!r}, got {line!r}", lineno)
            header_seen = True
            continue
        if len(fields) != 3:
            raise CurveParseError(f"expected 3 fields, got {len(fields)}", lineno)
        try:
            ref = date.fromisoformat(fields[0])
            term = int(fields[1])
            rate = float(fields[2])
        except ValueError as exc:
            raise CurveParseError(f"malformed row {line!r}: {exc}", lineno) from None
        if term <= 0:
            raise CurveParseError(f"term_days must be positive, got {term}", lineno)
        if not math.isfinite(rate) or rate <= -1.0:
            raise CurveParseError(f"rate must be finite and > -1, got {rate}", lineno)
        by_term = rows.setdefault(ref, {})
        if term in by_term:
            raise CurveParseError(f"duplicate row for {ref} term {term}", lineno)
        by_term[term] = rate
    if not header_seen:
        raise CurveParseError("empty curve file: header missing")

    curves: dict[int, YieldCurve] = {}
    for ref, by_term in sorted(rows.items()):
        if ref.year in curves:
            raise CurveParseError(
                f"two observation dates in {ref.year}: {curves[ref.year].observation_date} and {ref}"
            )
        points = tuple(TermPoint(t, by_term[t]) for t in sorted(by_term))
        curves[ref.year] = YieldCurve(ref, points)
    curve_set = YieldCurveSet(curves)
    if years is not None:
        curve_set.require_years(years)
    return curve_set


def load_curves(path, years: Iterable[int] | None = None) -> YieldCurveSet:
    with open(path, encoding="utf-8") as fh:
        return parse_curve_csv(fh.read(), years)


def rate_at(curve: YieldCurve, term_days: float, *, extrapolate: bool = False) -> float:
    """Spline rate at ``term_days``; knots are returned exactly.

    Beyond the last vertex the last rate is held flat when ``extrapolate`` is
    set; otherwise, and always below the first vertex, an error is raised.
    """
    terms = curve._terms
    if term_days < terms[0]:
        raise ExtrapolationError(
            f"term {term_days} below shortest vertex {terms[0]} of curve {curve.observation_date}"
        )
    if term_days > terms[-1]:
        if extrapolate:
            return curve.points[-1].rate
        raise ExtrapolationError(
            f"term {term_days} beyond longest vertex {terms[-1]} of curve {curve.observation_date}"
        )
    i = bisect_left(terms, term_days)
    if i < len(terms) and terms[i] == term_days:
        return curve.points[i].rate
    return float(curve._spline(float(term_days)))


def discount(rate: float, days: float) -> float:
    return (1.0 + rate) ** (-days / DAYS_PER_YEAR)


def market_price(
    curves: YieldCurveSet, obs_year: int, maturity_date: date, *, extrapolate: bool = False
) -> float:
    """Price per unit face of a zero-coupon bond observed at ``obs_year``'s curve."""
    curve = curves[obs_year]
    days = (maturity_date - curve.observation_date).days
    if days < 0:
        raise DomainError(f"maturity {maturity_date} precedes observation date {curve.observation_date}")
    if days == 0:
        return 1.0
    return discount(rate_at(curve, days, extrapolate=extrapolate), days)


def purchase_yield(price: float, years_to_maturity: float) -> float:
    """Annual yield that accrues ``price`` to unit face in ``years_to_maturity``."""
    if not price > 0:
        raise DomainError(f"price must be positive, got {price}")
    if not years_to_maturity > 0:
        raise DomainError(f"years_to_maturity must be positive, got {years_to_maturity}")
    return price ** (-1.0 / years_to_maturity) - 1.0


def curve_value(lot: BondLot, obs_year: int, maturity_year: int | None = None) -> float:
    """Hold-to-maturity value per unit face of ``lot`` at ``obs_year``."""
    if obs_year < lot.acquisition_year:
        raise DomainError(f"year {obs_year} precedes acquisition year {lot.acquisition_year}")
    if maturity_year is not None and obs_year > maturity_year:
        raise DomainError(f"year {obs_year} is after maturity year {maturity_year}")
    elapsed = obs_year - lot.acquisition_year
    if elapsed == 0:
        return lot.purchase_price
    return lot.purchase_price * (1.0 + lot.purchase_yield) ** elapsed
