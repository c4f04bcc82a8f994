"""Lot-level bond book: purchases, MTM/HTM valuation and sales to fund exits."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .curve import curve_value
from .errors import DomainError

# Quantities this small after a sale are treated as exhausted.
QTY_EPS = 1e-12


class SaleStrategy(str, Enum):
    OLDEST = "oldest"
    NEWEST = "newest"
    SHORTEST = "shortest"

    @classmethod
    def parse(cls, value: "str | SaleStrategy") -> "SaleStrategy":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            choices = ", ".join(s.value for s in cls)
            raise DomainError(f"unknown sale strategy {value!r} (choose from {choices})") from None


@dataclass
class BondLot:
    maturity_id: int
    acquisition_year: int
    quantity: float
    purchase_price: float
    purchase_yield: float

    def to_dict(self) -> dict:
        return {
            "maturity_id": self.maturity_id,
            "acquisition_year": self.acquisition_year,
            "quantity": self.quantity,
            "purchase_price": self.purchase_price,
            "purchase_yield": self.purchase_yield,
        }


@dataclass
class SaleResult:
    sold: list[tuple[int, int, float]] = field(default_factory=list)
    proceeds: float = 0.0
    shortfall: float = 0.0

    def sold_by_maturity(self, n_maturities: int) -> np.ndarray:
        out = np.zeros(n_maturities)
        for m, _, q in self.sold:
            out[m] += q
        return out


def _price(prices: Sequence[float], m: int) -> float:
    try:
        p = float(prices[m])
    except (IndexError, KeyError):
        raise DomainError(f"no price for maturity {m}") from None
    if not p > 0:
        raise DomainError(f"price for maturity {m} must be positive, got {p}")
    return p


class BondBook:
    """Lots keyed by ``(maturity_id, acquisition_year)``.

    Same-year purchases of one maturity merge into a single lot.  The book is
    mutated in place; each simulation track owns its own book.
    """

    def __init__(self, lots: Sequence[BondLot] = ()):
        self.lots: dict[tuple[int, int], BondLot] = {}
        for lot in lots:
            key = (lot.maturity_id, lot.acquisition_year)
            if key in self.lots:
                raise DomainError(f"duplicate lot {key}")
            self.lots[key] = lot

    def __len__(self) -> int:
        return len(self.lots)

    def __iter__(self):
        return iter(self.lots.values())

    def copy(self) -> "BondBook":
        return BondBook(
            [BondLot(l.maturity_id, l.acquisition_year, l.quantity, l.purchase_price, l.purchase_yield) for l in self]
        )

    def quantities(self, n_maturities: int) -> np.ndarray:
        out = np.zeros(n_maturities)
        for lot in self.lots.values():
            out[lot.maturity_id] += lot.quantity
        return out

    def total_quantity(self, maturity_id: int) -> float:
        return sum(l.quantity for l in self.lots.values() if l.maturity_id == maturity_id)

    def record_purchase(
        self,
        year: int,
        allocation: Sequence[float],
        cash: float,
        prices: Sequence[float],
        yields: Sequence[float],
    ) -> np.ndarray:
        """Invest ``cash`` across maturities; returns bonds bought per maturity."""
        if cash < 0:
            raise DomainError(f"cash must be non-negative, got {cash}")
        bought = np.zeros(len(allocation))
        if cash == 0:
            return bought
        for m, w in enumerate(allocation):
            if w < 0:
                raise DomainError(f"negative allocation weight {w} for maturity {m}")
            if w == 0:
                continue
            price = _price(prices, m)
            qty = cash * w / price
            bought[m] = qty
            key = (m, year)
            lot = self.lots.get(key)
            if lot is None:
                self.lots[key] = BondLot(m, year, qty, price, float(yields[m]))
            else:
                lot.quantity += qty
        return bought

    def market_value(self, prices: Sequence[float]) -> float:
        total = 0.0
        for lot in self.lots.values():
            if lot.quantity != 0.0:
                total += lot.quantity * _price(prices, lot.maturity_id)
        return total

    def htm_value(self, obs_year: int, maturity_years: Sequence[int] | None = None) -> float:
        total = 0.0
        for lot in self.lots.values():
            mat = None if maturity_years is None else maturity_years[lot.maturity_id]
            total += lot.quantity * curve_value(lot, obs_year, mat)
        return total

    def valued(self, value_of: Callable[[BondLot], float]) -> float:
        """Sum of ``quantity * value_of(lot)`` over lots."""
        return sum(lot.quantity * value_of(lot) for lot in self.lots.values())

    def _lots_of(self, m: int, newest_first: bool) -> list[BondLot]:
        lots = [l for l in self.lots.values() if l.maturity_id == m and l.quantity > 0]
        lots.sort(key=lambda l: l.acquisition_year, reverse=newest_first)
        return lots

    def _take(self, lot: BondLot, qty: float, result: SaleResult) -> float:
        take = min(lot.quantity, qty)
        if take <= 0:
            return 0.0
        remaining = lot.quantity - take
        if remaining <= QTY_EPS * max(1.0, lot.quantity):
            take = lot.quantity
            remaining = 0.0
        lot.quantity = remaining
        if remaining == 0.0:
            del self.lots[(lot.maturity_id, lot.acquisition_year)]
        result.sold.append((lot.maturity_id, lot.acquisition_year, take))
        return take

    def sell_for_cash(
        self,
        cash_needed: float,
        prices: Sequence[float],
        allocation: Sequence[float],
        strategy: SaleStrategy | str,
        term_order: Sequence[int] | None = None,
    ) -> SaleResult:
        """Sell bonds at market until ``cash_needed`` is raised.

        ``oldest``/``newest`` split the cash by allocation weight and deplete
        each maturity's lots by acquisition year; any cash a maturity cannot
        cover is then raised from the remaining lots, shortest term first.
        ``shortest`` ignores the weights: shortest maturity first, newest lot
        first within a maturity.  Insufficient inventory is reported as
        ``shortfall`` rather than raised.
        """
        strategy = SaleStrategy.parse(strategy)
        if cash_needed < 0:
            raise DomainError(f"cash_needed must be non-negative, got {cash_needed}")
        result = SaleResult()
        if cash_needed == 0:
            return result
        n = len(allocation)
        order = list(range(n)) if term_order is None else list(term_order)
        uncovered = 0.0

        if strategy is SaleStrategy.SHORTEST:
            uncovered = cash_needed
        else:
            newest_first = strategy is SaleStrategy.NEWEST
            for m in range(n):
                w = allocation[m]
                if w <= 0:
                    continue
                price = _price(prices, m)
                need = cash_needed * w / price
                for lot in self._lots_of(m, newest_first):
                    if need <= 0:
                        break
                    need -= self._take(lot, need, result)
                if need > QTY_EPS * max(1.0, cash_needed * w / price):
                    uncovered += need * price

        if uncovered > 0:
            # Residual cash: shortest maturity first, newest lot first.
            for m in order:
                if uncovered <= 0:
                    break
                lots = self._lots_of(m, newest_first=True)
                if not lots:
                    continue
                price = _price(prices, m)
                need = uncovered / price
                for lot in lots:
                    if need <= 0:
                        break
                    need -= self._take(lot, need, result)
                uncovered = max(need, 0.0) * price

        result.proceeds = sum(q * _price(prices, m) for m, _, q in result.sold)
        shortfall = cash_needed - result.proceeds
        result.shortfall = shortfall if shortfall > max(1e-9 * cash_needed, QTY_EPS) else 0.0
        return result
