from __future__ import annotations

from datetime import date
from importlib import resources

import pytest

from htmsim.curve import load_curves, parse_curve_csv

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def bundled_curves():
    ref = resources.files("htmsim") / "data" / "stylized_ipca_curves.csv"
    with resources.as_file(ref) as p:
        return load_curves(p)


def flat_curves_csv(years, rate=0.06, terms=(182, 365, 1825, 3650, 7300, 12775)) -> str:
    lines = ["reference_date,term_days,rate"]
    for y in years:
        for t in terms:
            lines.append(f"{date(y, 12, 31).isoformat()},{t},{rate}")
    return "\n".join(lines) + "\n"


@pytest.fixture
def flat_curves():
    return parse_curve_csv(flat_curves_csv(range(2005, 2025)))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
