#!/usr/bin/env python3
"""Cross-check the retarded-integral field evaluation against the Yee oracle.

Evaluates the manufactured free-streaming pulse at t = T on the interior of
the desk grid with both solvers and prints the relative L2 disagreement at
two joint resolutions.

Usage: python scripts/fdtd_crosscheck.py
"""

import time

import numpy as np

from rvm_halfspace.fdtd import run_oracle
from rvm_halfspace.fields import (
    ChannelKernels,
    DirectionSet,
    DirectSource,
    GSAssembler,
    GSConfig,
    GSQuadrature,
)
from rvm_halfspace.grids import SpatialGrid, ZERO_FIELDS
from rvm_halfspace.moments import SourceHistory, VelocityGrid
from rvm_halfspace.presets import ManufacturedPulse


def main():
    sc = ManufacturedPulse()
    grid = SpatialGrid(Lx=1.5, Lz=1.25, nx=12, ny=12, nz=10)
    T = 0.1
    times = np.linspace(0, T, 32)
    nodes = grid.nodes()
    rho = np.stack([sc.moments.rho(t, nodes).reshape(grid.shape) for t in times])
    J = np.stack([sc.moments.J(t, nodes).reshape(grid.shape + (3,)) for t in times])
    hist = SourceHistory(grid, times, rho, J)
    g1, g2, g3 = grid.x1[2:-2], grid.x2[2:-2], grid.x3[1:-1]
    X1, X2, X3 = np.meshgrid(g1, g2, g3, indexing="ij")
    targets = np.stack([X1, X2, X3], -1).reshape(-1, 3)

    for label, (nv, ang, nr, dx) in (
        ("coarse", (8, 6, 5, 0.075)),
        ("fine", (8, 8, 6, 0.05)),
    ):
        vg = VelocityGrid(vmax=6.0, n_v=nv)
        ds = DirectionSet(ang, ang)
        kers = ChannelKernels(vg, ds)
        asm = GSAssembler(
            sc.env, grid, sc.field_data, DirectSource(kers, sc.f_direct), hist, ZERO_FIELDS,
            kers, GSConfig(GSQuadrature(n_r=nr, n_mu=ang, n_phi=ang), source_margin=0.3),
            f0_separable=sc.f0,
        )
        t0 = time.time()
        E_gs, B_gs = asm.eval_batch(T, targets)
        t_gs = time.time() - t0
        t0 = time.time()
        E_fd, B_fd, dt = run_oracle(sc, T, targets, dx=dx)
        t_fd = time.time() - t0
        relE = np.linalg.norm(E_gs - E_fd) / np.linalg.norm(E_fd)
        relB = np.linalg.norm(B_gs - B_fd) / np.linalg.norm(B_fd)
        print(
            f"{label}: rel L2 E = {relE:.4f}, B = {relB:.4f} "
            f"(retarded {t_gs:.0f}s, Yee {t_fd:.0f}s at dx={dx}, dt={dt:.4f})"
        )


if __name__ == "__main__":
    main()
