"""Rows of the stay and exit transfer tables, from a single grid run.

    python scripts/transfer_tables.py [--curves FILE] [--seed N] [--parallelism N]
"""

from __future__ import annotations

import argparse

from _common import curves_arg, load

from htmsim.scenario import GridSpec, enumerate_grid, run_grid

# (allocation, exit rate, entry rate, strategy)
ROWS = [
    ((1.0, 0.0, 0.0), 0.001, 0.0333, "oldest"),
    ((0.0, 1.0, 0.0), 0.001, 0.0333, "oldest"),
    ((0.0, 0.0, 1.0), 0.001, 0.0333, "oldest"),
    ((0.0, 1.0, 0.0), 0.0357, 0.0333, "oldest"),
    ((0.0, 1.0, 0.0), 0.0703, 0.0333, "oldest"),
    ((0.0, 1.0, 0.0), 0.105, 0.0333, "oldest"),
    ((0.0, 1.0, 0.0), 0.001, 0.0, "oldest"),
    ((0.0, 1.0, 0.0), 0.001, 0.0667, "oldest"),
    ((0.0, 1.0, 0.0), 0.001, 0.1, "oldest"),
    ((0.25, 0.25, 0.5), 0.001, 0.0333, "oldest"),
    ((0.25, 0.25, 0.5), 0.001, 0.0333, "shortest"),
    ((0.25, 0.25, 0.5), 0.0357, 0.0333, "shortest"),
    ((0.25, 0.25, 0.5), 0.0703, 0.0333, "shortest"),
    ((0.25, 0.25, 0.5), 0.105, 0.0333, "shortest"),
]


def fmt(x, year=None):
    s = f"{x:6.2f}"
    return f"{s} ({year})" if year is not None else s


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    curves_arg(ap)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--parallelism", type=int, default=1)
    args = ap.parse_args()
    spec = GridSpec(participants=(10000,), salary=(15000.0,), master_seed=args.seed)
    wanted = {(a, x, e, s) for a, x, e, s in ROWS}
    scenarios = [
        s for s in enumerate_grid(spec)
        if (s.config.allocation, s.config.exit_rate, s.config.entry_rate, s.config.sale_strategy.value) in wanted
    ]
    report = run_grid(scenarios, load(args.curves), args.parallelism, spec=spec)
    by_key = {
        (o.config.allocation, o.config.exit_rate, o.config.entry_rate, o.config.sale_strategy.value): o
        for o in report.outcomes
    }
    for kind in ("stay", "exit"):
        print(f"\n{kind} transfers (%): allocation, exit, entry, strategy | max loss | max gain | mean loss (gain)")
        for key in ROWS:
            o = by_key[key]
            s = getattr(o, kind)
            a, x, e, strat = key
            mean = -s.mean_pct
            mean_s = f"{mean:6.2f}" if mean >= 0 else f"({-mean:.2f})"
            print(
                f"{'/'.join(f'{w:.0%}' for w in a):>12} {x:7.2%} {e:7.2%} {strat:>8} | "
                f"{fmt(s.max_loss_pct, s.max_loss_year if kind == 'exit' else None)} | "
                f"{fmt(s.max_gain_pct, s.max_gain_year if kind == 'exit' else None)} | {mean_s}"
                + ("" if o.status == "ok" else f"  [{o.status}]")
            )


if __name__ == "__main__":
    main()
