"""Year-by-year path of the insolvency case plus the failed exit.

    python scripts/insolvency.py [--curves FILE]
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from _common import curves_arg, load

from htmsim.engine import ScenarioConfig, run_scenario

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "insolvency.json"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    curves_arg(ap)
    args = ap.parse_args()
    cfg = ScenarioConfig.from_dict(json.loads(CONFIG.read_text()))
    r = run_scenario(cfg, load(args.curves))
    print("year,value_mtm,value_htm,quota_mtm,quota_htm,quotas_founder,bonds_htm,price")
    founder = r.state.cohorts[0].quotas_htm_pm
    for h in r.state.history:
        print(
            f"{h['year']},{h['value_mtm']:.4f},{h['value_htm']:.4f},{h['quota_mtm']:.6f},"
            f"{h['quota_htm']:.6f},{founder:.4f},{h['bonds_htm'][0]:.6f},{h['prices'][0]:.6f}"
        )
    for ev in r.state.events:
        if ev["type"] == "insolvency":
            print(
                f"# insolvent in {ev['year']}: claim {ev['cash_needed']:.2f}, proceeds {ev['proceeds']:.2f}, "
                f"bonds required {ev['bonds_required'][0]:.4f} vs held {ev['bonds_held'][0]:.4f}"
            )


if __name__ == "__main__":
    main()
