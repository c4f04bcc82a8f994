"""Write the bundled stylized real-rate curves (Dec/2005 .. Dec/2024).

These are NOT exchange data.  Each year-end curve is a Nelson-Siegel shape
fitted through three hand-set anchor rates (6 months, 5 years, 30 years)
that follow the broad path of Brazilian IPCA-coupon yields: a slide into
the 2012 trough, a sharp 2013 rebound, a 2015 peak, a second trough around
2020 and a rise into 2024.  The 2005, 2012 and 2015 long anchors are chosen
so that the 30-year bond prices reproduce the insolvency case in
configs/insolvency.json.  Use real curves through ``--curves`` for anything else.

    python scripts/make_stylized_curves.py > src/htmsim/data/stylized_ipca_curves.csv
"""

from __future__ import annotations

import sys
from datetime import date, timedelta

import numpy as np

# year: (6m, 5y, 30y) annual real rates in percent
ANCHORS = {
    2005: (10.8, 8.6, 9.2),
    2006: (8.5, 7.0, 7.2),
    2007: (7.0, 6.6, 6.6),
    2008: (8.5, 7.6, 7.2),
    2009: (5.5, 6.4, 6.6),
    2010: (5.8, 5.9, 6.1),
    2011: (4.8, 5.3, 5.6),
    2012: (1.5, 3.1, 3.5),
    2013: (4.3, 6.3, 6.6),
    2014: (6.3, 6.2, 6.2),
    2015: (7.2, 7.3, 7.2),
    2016: (6.0, 5.8, 5.9),
    2017: (3.5, 4.9, 5.4),
    2018: (2.8, 4.4, 5.0),
    2019: (1.2, 2.8, 3.7),
    2020: (-1.0, 2.3, 3.9),
    2021: (3.5, 5.0, 5.4),
    2022: (5.5, 5.8, 5.9),
    2023: (4.9, 5.2, 5.6),
    2024: (7.8, 7.4, 7.0),
}
TERMS_DAYS = (182, 365, 730, 1095, 1460, 1825, 2555, 3650, 5475, 7300, 9125, 10950, 12775)
LAMBDA_YEARS = 2.0


def last_business_day(year: int) -> date:
    d = date(year, 12, 31)
    while d.weekday() >= 5:
        d -= timedelta(days=1)
    return d


def loadings(tau: np.ndarray) -> np.ndarray:
    x = tau / LAMBDA_YEARS
    f1 = (1 - np.exp(-x)) / x
    f2 = f1 - np.exp(-x)
    return np.column_stack([np.ones_like(x), f1, f2])


def curve(anchors: tuple[float, float, float]) -> np.ndarray:
    beta = np.linalg.solve(loadings(np.array([0.5, 5.0, 30.0])), np.array(anchors) / 100.0)
    return loadings(np.array(TERMS_DAYS) / 365.0) @ beta


def main(out=sys.stdout) -> None:
    out.write("# Stylized IPCA-coupon-like real rates; synthetic, not B3 data.\n")
    out.write("# Generated by scripts/make_stylized_curves.py\n")
    out.write("reference_date,term_days,rate\n")
    for year, anchors in ANCHORS.items():
        ref = last_business_day(year).isoformat()
        for term, rate in zip(TERMS_DAYS, curve(anchors)):
            out.write(f"{ref},{term},{rate:.6f}\n")


if __name__ == "__main__":
    main()
