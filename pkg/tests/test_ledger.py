import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from htmsim.curve import curve_value, purchase_yield
from htmsim.errors import DomainError
from htmsim.ledger import QTY_EPS, BondBook, BondLot, SaleStrategy


def book_with(lots):
    return BondBook([BondLot(m, y, q, p, purchase_yield(p, 10 - y)) for m, y, q, p in lots])


def test_purchase_single_and_split():
    b = BondBook()
    bought = b.record_purchase(2, (1.0, 0.0, 0.0), 1.0, (0.90, 1.0, 1.0), (0.01, 0, 0))
    assert bought[0] == pytest.approx(1.1111111, abs=1e-6)
    assert len(b) == 1
    b = BondBook()
    bought = b.record_purchase(1, (0.5, 0.5), 1.0, (1.0, 0.9), (0.0, 0.0))
    assert bought == pytest.approx([0.5, 0.5556], abs=1e-4)


def test_purchase_zero_and_errors():
    b = BondBook()
    assert not b.record_purchase(1, (1.0,), 0.0, (0.9,), (0.0,)).any()
    assert len(b) == 0
    with pytest.raises(DomainError):
        b.record_purchase(1, (1.0,), -1.0, (0.9,), (0.0,))
    with pytest.raises(DomainError):
        b.record_purchase(1, (1.0,), 1.0, (0.0,), (0.0,))


def test_same_year_purchases_merge():
    b = BondBook()
    b.record_purchase(3, (1.0,), 1.0, (0.8,), (0.05,))
    b.record_purchase(3, (1.0,), 2.0, (0.8,), (0.05,))
    assert len(b) == 1
    assert b.total_quantity(0) == pytest.approx(3.75)


def test_market_value_examples():
    assert BondBook().market_value(()) == 0.0
    b = BondBook([BondLot(0, 1, 1.0, 1.0, 0.01), BondLot(0, 2, 2.2222222222222223, 0.9, 0.0)])
    assert b.market_value((0.90,)) == pytest.approx(2.90, abs=1e-12)
    with pytest.raises(DomainError):
        b.market_value(())


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 9), st.floats(0, 1e4), st.floats(0.1, 1.0)),
                min_size=0, max_size=20, unique_by=lambda x: (x[0], x[1])))
def test_market_value_matches_naive_sum(lots):
    b = book_with(lots)
    prices = (0.93, 0.71, 0.52)
    naive = 0.0
    for m, _, q, _ in lots:
        naive += q * prices[m]
    assert b.market_value(prices) == pytest.approx(naive, rel=1e-12, abs=1e-12)


def test_htm_value_example_and_face():
    b = BondBook([BondLot(0, 1, 1.0, 1.0, 0.01), BondLot(0, 2, 2.2222222222222223, 0.9, 0.0)])
    assert b.htm_value(2) == pytest.approx(1.01 + 2.0, abs=1e-12)
    b = BondBook()
    b.record_purchase(5, (1.0,), 7.0, (0.7,), (purchase_yield(0.7, 4),))
    assert b.htm_value(5) == pytest.approx(7.0, abs=1e-12)
    assert b.htm_value(9) == pytest.approx(10.0, abs=1e-12)


def test_example_exit_sale():
    b = BondBook([BondLot(0, 1, 1.0, 1.0, 0.01), BondLot(0, 2, 2.2222222222222223, 0.9, 0.0)])
    r = b.sell_for_cash(2.01, (0.90,), (1.0,), "oldest")
    assert sum(q for _, _, q in r.sold) == pytest.approx(2.2333, abs=1e-4)
    assert b.total_quantity(0) == pytest.approx(0.989, abs=1e-3)
    assert r.shortfall == 0.0
    assert r.proceeds == pytest.approx(2.01, abs=1e-12)


def test_zero_sale_is_noop():
    b = book_with([(0, 1, 2.0, 0.9)])
    r = b.sell_for_cash(0.0, (0.9,), (1.0,), "newest")
    assert r.sold == [] and r.proceeds == 0.0 and b.total_quantity(0) == 2.0
    with pytest.raises(DomainError):
        b.sell_for_cash(-1.0, (0.9,), (1.0,), "newest")


def test_insolvency_shortfall():
    b = book_with([(0, 1, 3.600, 0.2)])
    r = b.sell_for_cash(1138.54, (248.95,), (1.0,), SaleStrategy.OLDEST)
    assert 1138.54 / 248.95 == pytest.approx(4.5734, abs=1e-4)
    assert r.shortfall > 0
    assert len(b) == 0
    assert r.proceeds == pytest.approx(3.6 * 248.95)


def test_lot_order_by_strategy():
    lots = [(0, 1, 1.0, 0.8), (0, 2, 1.0, 0.8), (1, 1, 1.0, 0.6), (1, 3, 1.0, 0.6)]
    prices = (1.0, 1.0)
    b = book_with(lots)
    r = b.sell_for_cash(1.0, prices, (0.5, 0.5), "oldest")
    assert r.sold == [(0, 1, 0.5), (1, 1, 0.5)]
    b = book_with(lots)
    r = b.sell_for_cash(1.0, prices, (0.5, 0.5), "newest")
    assert r.sold == [(0, 2, 0.5), (1, 3, 0.5)]
    b = book_with(lots)
    r = b.sell_for_cash(1.5, prices, (0.5, 0.5), "shortest")
    assert r.sold == [(0, 2, 1.0), (0, 1, 0.5)]


def test_residual_cover_when_a_maturity_runs_out():
    b = book_with([(0, 1, 0.2, 0.8), (1, 1, 5.0, 0.6)])
    r = b.sell_for_cash(1.0, (1.0, 1.0), (0.5, 0.5), "oldest")
    assert r.shortfall == 0.0
    assert r.proceeds == pytest.approx(1.0)
    assert b.total_quantity(0) == 0.0
    assert b.total_quantity(1) == pytest.approx(4.2)


lot_lists = st.lists(
    st.tuples(st.integers(0, 2), st.integers(0, 9), st.floats(0.0, 100.0), st.floats(0.2, 1.0)),
    min_size=1, max_size=15, unique_by=lambda x: (x[0], x[1]),
)


@settings(max_examples=150, deadline=None)
@given(lot_lists, st.floats(0, 1.2), st.sampled_from(list(SaleStrategy)),
       st.sampled_from([(1.0, 0, 0), (0.5, 0.25, 0.25), (0, 0, 1.0), (0.25, 0.75, 0)]))
def test_sale_conservation_and_nonnegativity(lots, frac, strategy, alloc):
    prices = (0.97, 0.74, 0.55)
    b = book_with(lots)
    before = b.quantities(3)
    mv = b.market_value(prices)
    r = b.sell_for_cash(frac * mv, prices, alloc, strategy)
    after = b.quantities(3)
    assert np.allclose(before - r.sold_by_maturity(3), after, atol=1e-12 * max(1, before.max()))
    assert all(l.quantity >= -1e-12 for l in b)
    assert r.proceeds == pytest.approx(sum(q * prices[m] for m, _, q in r.sold), rel=1e-12)
    if frac * mv <= mv * (1 - 1e-9):
        assert r.shortfall == 0.0
        assert r.proceeds == pytest.approx(frac * mv, rel=1e-9, abs=1e-9)
    if r.shortfall > 0:
        assert b.quantities(3).sum() == 0.0
    if frac > 1.0 + 1e-6 and mv > 0:
        missing = frac * mv - mv
        assert (r.shortfall > 0) == (missing > max(1e-9 * frac * mv, QTY_EPS))


@settings(max_examples=100, deadline=None)
@given(lot_lists, st.floats(0, 0.95))
def test_proceeds_independent_of_strategy(lots, frac):
    prices = (0.97, 0.74, 0.55)
    alloc = (0.5, 0.25, 0.25)
    mv = book_with(lots).market_value(prices)
    proceeds = [book_with(lots).sell_for_cash(frac * mv, prices, alloc, s).proceeds for s in SaleStrategy]
    assert max(proceeds) - min(proceeds) <= 1e-9 * max(1.0, mv)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 9), st.floats(0.1, 50)), min_size=1, max_size=10))
def test_single_maturity_htm_meets_market_at_maturity(purchases):
    """HTM and MTM coincide when every lot has reached face."""
    b = BondBook()
    for year, cash in sorted(purchases):
        price = 0.6 + 0.03 * year
        b.record_purchase(year, (1.0,), cash, (price,), (purchase_yield(price, 10 - year),))
    assert b.htm_value(10, (10,)) == pytest.approx(b.market_value((1.0,)), rel=1e-12)


def test_copy_is_independent():
    b = book_with([(0, 1, 1.0, 0.9)])
    c = b.copy()
    c.sell_for_cash(0.45, (0.9,), (1.0,), "oldest")
    assert b.total_quantity(0) == 1.0 and c.total_quantity(0) == pytest.approx(0.5)
    assert curve_value(next(iter(b)), 1) == 0.9


def test_unknown_strategy():
    with pytest.raises(DomainError):
        SaleStrategy.parse("fifo")
    assert SaleStrategy.parse("Newest") is SaleStrategy.NEWEST
