from __future__ import annotations

import argparse
from importlib import resources

from htmsim.curve import load_curves


def curves_arg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--curves", help="yield-curve CSV (default: bundled synthetic curves)")


def load(path: str | None):
    if path:
        return load_curves(path)
    ref = resources.files("htmsim") / "data" / "stylized_ipca_curves.csv"
    with resources.as_file(ref) as p:
        return load_curves(p)
