#!/usr/bin/env python3
"""Grazing-set derivative study: raw vs alpha-weighted d_{x3} f as x3 -> 0.

Runs a short converged inflow scenario, then probes the vertical derivative
of f along a family of heights approaching the wall at fixed small v3,
printing the raw blow-up next to the tamed alpha-weighted values.

Usage: python scripts/gamma0_study.py
"""

import numpy as np

from rvm_halfspace.config import build_scenario, load_config
from rvm_halfspace.core import lorentz_gamma
from rvm_halfspace.picard import PicardRunner
from rvm_halfspace.trace import pull_back_batch
from rvm_halfspace.weight import WeightContext, alpha


def main():
    cfg = load_config(
        {
            "init": {"preset": "inflow-gaussian"},
            "domain": {"Lx": 1.5, "Lz": 1.25, "nx": 10, "ny": 10, "nz": 8},
            "velocity": {"nv": 6},
            "time": {"T": 0.1, "n_levels": 16},
            "picard": {"max_iter": 2, "tol": 1e-5, "h_max": 0.04, "step_scale": 0.04},
            "quadrature": {"radial_order": 4, "angular_order": 6, "disk_radial_order": 5},
        }
    )
    sc = build_scenario(cfg)
    runner = PicardRunner(
        sc.env, sc.grid, sc.vgrid, sc.closure, sc.f0, sc.init_data, sc.settings,
        gs_quad=sc.gs_quad, f0_separable=sc.f0_separable,
    )
    state, report = runner.run()
    field_list = runner._field_eval_list(state)
    ctx = WeightContext(env=sc.env)

    def f_at(x3):
        h = 0.2 * x3
        pts = np.array([[0.0, 0.0, x3 + h], [0.0, 0.0, x3 - h]])
        v = np.array([0.3, 0.0, 0.02])
        vals = pull_back_batch(
            sc.settings.T, pts, np.tile(v, (2, 1)), field_list, sc.env, sc.closure, sc.f0,
            h_max=0.01, step_scale=0.01,
        )
        return (vals[0] - vals[1]) / (2 * h)

    v = np.array([0.3, 0.0, 0.02])
    w5 = float(lorentz_gamma(v)) ** (5.0 + sc.env.delta)
    print(f"{'x3':>9} {'|d_x3 f|':>12} {'alpha':>10} {'<v>^(5+d) a |d f|':>18}")
    for x3 in (5e-3, 1.5e-3, 5e-4, 1.5e-4, 5e-5):
        d = abs(f_at(x3))
        a = float(alpha(sc.settings.T, np.array([0.0, 0.0, x3]), v, ctx))
        print(f"{x3:9.1e} {d:12.4e} {a:10.4f} {w5 * a * d:18.4e}")


if __name__ == "__main__":
    main()
