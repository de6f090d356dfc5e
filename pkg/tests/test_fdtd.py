import numpy as np

from rvm_halfspace.fdtd import FdtdHalfSpace, YeeGrid
from rvm_halfspace.presets import standing_wave_field, standing_wave_solution


def _run_wave(dx, T=0.35):
    k = np.pi / 1.25
    fd = standing_wave_field(0.5, k)
    efn, bfn = standing_wave_solution(0.5, k)
    n = int(2.0 / dx) + 1
    nz = int(2.5 / dx) + 1
    grid = YeeGrid(x0=-1.0, y0=-1.0, nx=n, ny=n, nz=nz, dx=dx)
    n_steps = int(np.ceil(T / (0.45 * dx / np.sqrt(3))))
    solver = FdtdHalfSpace(grid, T / n_steps)
    solver.init_fields(fd.E0, fd.B0, fd.dtB0)
    B_prev = None
    for step in range(n_steps):
        if step == n_steps - 1:
            B_prev = {c: solver.F["B" + c].copy() for c in "xyz"}
        solver.step()
    rng = np.random.default_rng(2)
    pts = np.column_stack(
        [rng.uniform(-0.3, 0.3, 50), rng.uniform(-0.3, 0.3, 50), rng.uniform(0.05, 1.9, 50)]
    )
    E = np.stack([solver.field_at_nodes("E" + c, pts) for c in "xyz"], -1)
    B_now = {c: solver.F["B" + c].copy() for c in "xyz"}
    B = np.empty_like(E)
    for i, c in enumerate("xyz"):
        solver.F["B" + c] = 0.5 * (B_prev[c] + B_now[c])
        B[..., i] = solver.field_at_nodes("B" + c, pts)
        solver.F["B" + c] = B_now[c]
    errE = np.abs(E - efn(T, pts)).max() / np.abs(efn(T, pts)).max()
    errB = np.abs(B - bfn(T, pts)).max() / np.abs(bfn(T, pts)).max()
    return errE, errB


def test_fdtd_standing_wave_accuracy_and_convergence():
    e1, b1 = _run_wave(0.08)
    e2, b2 = _run_wave(0.04)
    assert e1 < 0.01 and b1 < 0.01
    # second-order scheme: errors drop by ~4 under halving
    assert e2 < 0.45 * e1
    assert b2 < 0.45 * b1


def test_pec_wall_tangential_E_zero():
    k = np.pi / 1.25
    fd = standing_wave_field(0.5, k)
    grid = YeeGrid(x0=-1.0, y0=-1.0, nx=20, ny=20, nz=24, dx=0.1)
    solver = FdtdHalfSpace(grid, 0.02)
    solver.init_fields(fd.E0, fd.B0, fd.dtB0)
    for _ in range(10):
        solver.step()
    assert np.abs(solver.F["Ex"][:, :, 0]).max() == 0.0
    assert np.abs(solver.F["Ey"][:, :, 0]).max() == 0.0
    # PEC keeps Bz on the wall identically zero when it starts at zero
    assert np.abs(solver.F["Bz"][:, :, 0]).max() <= 1e-15
