"""Independent Yee-grid FDTD solve of Maxwell in the half space with a PEC wall.

Second-order staggered leapfrog for dE/dt = curl B - 4 pi J, dB/dt = -curl E
with tangential E zeroed on the z = 0 conductor plane.  Serves as the oracle
the retarded-integral field evaluation is checked against; everything here is
deliberately independent of the kernel machinery.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass
class YeeGrid:
    """Nodes x_i = x0 + i dx etc. with standard staggering.

    Ex lives at (i+1/2, j, k), Ey at (i, j+1/2, k), Ez at (i, j, k+1/2);
    Bx at (i, j+1/2, k+1/2), By at (i+1/2, j, k+1/2), Bz at (i+1/2, j+1/2, k).
    The PEC wall is the k = 0 plane.
    """

    x0: float
    y0: float
    nx: int
    ny: int
    nz: int
    dx: float

    def axes(self, stag_x, stag_y, stag_z):
        ax = self.x0 + (np.arange(self.nx - (1 if stag_x else 0)) + (0.5 if stag_x else 0.0)) * self.dx
        ay = self.y0 + (np.arange(self.ny - (1 if stag_y else 0)) + (0.5 if stag_y else 0.0)) * self.dx
        az = (np.arange(self.nz - (1 if stag_z else 0)) + (0.5 if stag_z else 0.0)) * self.dx
        return ax, ay, az

    def points(self, stag_x, stag_y, stag_z):
        ax, ay, az = self.axes(stag_x, stag_y, stag_z)
        X, Y, Z = np.meshgrid(ax, ay, az, indexing="ij")
        return np.stack([X, Y, Z], axis=-1)


STAGGER = {
    "Ex": (1, 0, 0),
    "Ey": (0, 1, 0),
    "Ez": (0, 0, 1),
    "Bx": (0, 1, 1),
    "By": (1, 0, 1),
    "Bz": (1, 1, 0),
}


class FdtdHalfSpace:
    """Leapfrog PEC half-space solver driven by analytic initial data and sources."""

    def __init__(self, grid: YeeGrid, dt: float):
        self.grid = grid
        self.dt = dt
        self.F = {name: np.zeros([n - s for n, s in zip((grid.nx, grid.ny, grid.nz), stag)])
                  for name, stag in STAGGER.items()}

    def sample(self, name: str, fn: Callable):
        pts = self.grid.points(*STAGGER[name])
        return np.asarray(fn(pts.reshape(-1, 3))).reshape(pts.shape[:-1])

    def init_fields(self, E0_fn, B0_fn, dtB0_fn):
        comp = {"x": 0, "y": 1, "z": 2}
        for c, i in comp.items():
            self.F["E" + c] = self.sample("E" + c, lambda p, i=i: E0_fn(p)[:, i])
            # B starts at t = dt/2: second-order shifted initialization
            self.F["B" + c] = self.sample(
                "B" + c, lambda p, i=i: B0_fn(p)[:, i] + 0.5 * self.dt * dtB0_fn(p)[:, i]
            )
        self._apply_pec()

    def _apply_pec(self):
        # wall plane k = 0 and all outer faces: tangential E = 0
        F = self.F
        F["Ex"][:, :, 0] = 0.0
        F["Ey"][:, :, 0] = 0.0
        F["Ex"][:, 0, :] = 0.0
        F["Ex"][:, -1, :] = 0.0
        F["Ex"][:, :, -1] = 0.0
        F["Ey"][0, :, :] = 0.0
        F["Ey"][-1, :, :] = 0.0
        F["Ey"][:, :, -1] = 0.0
        F["Ez"][0, :, :] = 0.0
        F["Ez"][-1, :, :] = 0.0
        F["Ez"][:, 0, :] = 0.0
        F["Ez"][:, -1, :] = 0.0

    def step(self, J_fns=None):
        """One leapfrog step: E^n -> E^{n+1} with B^{n+1/2}, then B -> B^{n+3/2}.

        ``J_fns``: component callables evaluated at the half step on the E grids.
        """
        F, d = self.F, self.grid.dx
        dt = self.dt
        # E update from curl B at the half step (interior transverse indices)
        cEx = (F["Bz"][:, 1:, 1:-1] - F["Bz"][:, :-1, 1:-1]) / d - (
            F["By"][:, 1:-1, 1:] - F["By"][:, 1:-1, :-1]
        ) / d
        F["Ex"][:, 1:-1, 1:-1] += dt * cEx
        cEy = (F["Bx"][1:-1, :, 1:] - F["Bx"][1:-1, :, :-1]) / d - (
            F["Bz"][1:, :, 1:-1] - F["Bz"][:-1, :, 1:-1]
        ) / d
        F["Ey"][1:-1, :, 1:-1] += dt * cEy
        cEz = (F["By"][1:, 1:-1, :] - F["By"][:-1, 1:-1, :]) / d - (
            F["Bx"][1:-1, 1:, :] - F["Bx"][1:-1, :-1, :]
        ) / d
        F["Ez"][1:-1, 1:-1, :] += dt * cEz
        if J_fns is not None:
            for c in "xyz":
                F["E" + c] -= dt * 4.0 * np.pi * J_fns[c]
        self._apply_pec()
        self.step_B()

    def step_B(self):
        F, d = self.F, self.grid.dx
        dt = self.dt
        F["Bx"] += dt * (
            -(F["Ez"][:, 1:, :] - F["Ez"][:, :-1, :]) / d
            + (F["Ey"][:, :, 1:] - F["Ey"][:, :, :-1]) / d
        )
        F["By"] += dt * (
            -(F["Ex"][:, :, 1:] - F["Ex"][:, :, :-1]) / d
            + (F["Ez"][1:, :, :] - F["Ez"][:-1, :, :]) / d
        )
        F["Bz"] += dt * (
            -(F["Ey"][1:, :, :] - F["Ey"][:-1, :, :]) / d
            + (F["Ex"][:, 1:, :] - F["Ex"][:, :-1, :]) / d
        )

    def field_at_nodes(self, name: str, targets: np.ndarray) -> np.ndarray:
        """Trilinear interpolation of one staggered component at arbitrary points."""
        stag = STAGGER[name]
        ax, ay, az = self.grid.axes(*stag)
        arr = self.F[name]
        t = np.asarray(targets, dtype=float)
        fx = np.clip((t[..., 0] - ax[0]) / self.grid.dx, 0, len(ax) - 1.0)
        fy = np.clip((t[..., 1] - ay[0]) / self.grid.dx, 0, len(ay) - 1.0)
        fz = np.clip((t[..., 2] - az[0]) / self.grid.dx, 0, len(az) - 1.0)
        i0 = np.minimum(fx.astype(int), len(ax) - 2)
        j0 = np.minimum(fy.astype(int), len(ay) - 2)
        k0 = np.minimum(fz.astype(int), len(az) - 2)
        tx, ty, tz = fx - i0, fy - j0, fz - k0
        out = np.zeros(t.shape[:-1])
        for di, wi in ((0, 1 - tx), (1, tx)):
            for dj, wj in ((0, 1 - ty), (1, ty)):
                for dk, wk in ((0, 1 - tz), (1, tz)):
                    out += wi * wj * wk * arr[i0 + di, j0 + dj, k0 + dk]
        return out


def run_oracle(
    scenario,
    T: float,
    targets: np.ndarray,
    dx: float = 0.06,
    pad: float = 0.35,
    cfl: float = 0.45,
    n_source_times: int = 9,
):
    """Solve the manufactured scenario to time T; return (E, B) at the targets.

    Sources rho, J come from the scenario's closed-form free-streaming moments,
    tabulated at a few times and quadratically interpolated per step.  The box
    covers the targets plus ``pad`` so outer-wall reflections stay causal.
    """
    targets = np.asarray(targets, dtype=float)
    x0 = float(np.min(targets[:, 0])) - pad - T
    x1 = float(np.max(targets[:, 0])) + pad + T
    y0 = float(np.min(targets[:, 1])) - pad - T
    y1 = float(np.max(targets[:, 1])) + pad + T
    z1 = float(np.max(targets[:, 2])) + pad + T
    nx = int(np.ceil((x1 - x0) / dx)) + 1
    ny = int(np.ceil((y1 - y0) / dx)) + 1
    nz = int(np.ceil(z1 / dx)) + 1
    grid = YeeGrid(x0=x0, y0=y0, nx=nx, ny=ny, nz=nz, dx=dx)
    n_steps = max(int(np.ceil(T / (cfl * dx / np.sqrt(3.0)))), 4)
    dt = T / n_steps
    solver = FdtdHalfSpace(grid, dt)

    fd = scenario.field_data
    solver.init_fields(fd.E0, fd.B0, fd.dtB0)

    # source tabulation on the three E-staggered grids
    t_samp = np.linspace(0.0, T, n_source_times)
    pts = {c: grid.points(*STAGGER["E" + c]).reshape(-1, 3) for c in "xyz"}
    comp = {"x": 0, "y": 1, "z": 2}
    tabs = {
        c: np.stack([scenario.moments.J(ts, pts[c])[:, comp[c]] for ts in t_samp])
        for c in "xyz"
    }

    def J_at(time):
        out = {}
        for c in "xyz":
            k = np.searchsorted(t_samp, time) - 1
            k = min(max(k, 0), len(t_samp) - 3)
            t0, t1, t2 = t_samp[k : k + 3]
            l0 = (time - t1) * (time - t2) / ((t0 - t1) * (t0 - t2))
            l1 = (time - t0) * (time - t2) / ((t1 - t0) * (t1 - t2))
            l2 = (time - t0) * (time - t1) / ((t2 - t0) * (t2 - t1))
            vals = l0 * tabs[c][k] + l1 * tabs[c][k + 1] + l2 * tabs[c][k + 2]
            out[c] = vals.reshape(solver.F["E" + c].shape)
        return out

    B_prev = None
    for n in range(n_steps):
        t_half = (n + 0.5) * dt
        if n == n_steps - 1:
            B_prev = {c: solver.F["B" + c].copy() for c in "xyz"}
        solver.step(J_fns=J_at(t_half))

    E = np.stack([solver.field_at_nodes("E" + c, targets) for c in "xyz"], axis=-1)
    # B sits at T + dt/2 after the loop; average with T - dt/2 for B(T)
    B_now = {c: solver.F["B" + c].copy() for c in "xyz"}
    B = np.empty_like(E)
    for i, c in enumerate("xyz"):
        solver.F["B" + c] = 0.5 * (B_prev[c] + B_now[c])
        B[..., i] = solver.field_at_nodes("B" + c, targets)
        solver.F["B" + c] = B_now[c]
    return E, B, dt
