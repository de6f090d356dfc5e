#!/usr/bin/env python3
"""Run the small-data inflow smoke scenario end to end and print the audits.

Usage: python scripts/run_smoke.py [out_dir]
"""

import json
import sys

from rvm_halfspace.cli import run_scenario
from rvm_halfspace.config import load_config


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else "out/smoke"
    cfg = load_config(
        {
            "init": {"preset": "inflow-gaussian"},
            "domain": {"Lx": 1.5, "Lz": 1.25, "nx": 12, "ny": 12, "nz": 10},
            "velocity": {"nv": 6},
            "time": {"T": 0.1, "n_levels": 32},
            "picard": {"max_iter": 4, "tol": 1e-4, "h_max": 0.04, "step_scale": 0.04},
            "quadrature": {"radial_order": 5, "angular_order": 6, "disk_radial_order": 6},
            "output": {"dir": out, "snapshot_stride": 4},
        }
    )
    state, report = run_scenario(cfg)
    print(f"converged in {report.iterations} sweeps ({report.stop_reason});"
          f" ratios {['%.2e' % r for r in report.ratios]}")
    with open(f"{out}/audits.jsonl") as fh:
        for line in fh:
            rec = json.loads(line)
            print(f"  {rec['audit']:<18}", {k: v for k, v in rec.items() if k != 'audit'})


if __name__ == "__main__":
    main()
