"""Numerical audits of the identities and inequalities a converged run must honor."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import Environment, lorentz_gamma
from .grids import FieldState
from .moments import SourceHistory, VelocityGrid
from .weight import WeightContext, alpha as alpha_fn


@dataclass
class AuditReport:
    name: str
    residuals: dict
    tolerance: Optional[float]
    passed: Optional[bool]
    refinement: Optional[dict] = None

    def record(self):
        out = {"audit": self.name, "tolerance": self.tolerance, "passed": self.passed}
        out.update(self.residuals)
        if self.refinement:
            out["refinement"] = self.refinement
        return out


def _curl(F, dx, dy, dz):
    c = np.empty_like(F)
    c[..., 0] = np.gradient(F[..., 2], dy, axis=1) - np.gradient(F[..., 1], dz, axis=2)
    c[..., 1] = np.gradient(F[..., 0], dz, axis=2) - np.gradient(F[..., 2], dx, axis=0)
    c[..., 2] = np.gradient(F[..., 1], dx, axis=0) - np.gradient(F[..., 0], dy, axis=1)
    return c


def _div(F, dx, dy, dz):
    return (
        np.gradient(F[..., 0], dx, axis=0)
        + np.gradient(F[..., 1], dy, axis=1)
        + np.gradient(F[..., 2], dz, axis=2)
    )


def compatibility_check(init_data, rho0_grid, grid, rel_tol: float = 0.25,
                        h_fd: float = 0.02) -> AuditReport:
    """Check of the initial compatibility conditions at load.

    div E0 = 4 pi rho0 and div B0 = 0 via small off-grid central stencils of
    the analytic data (the grid only places the probe points), plus the wall
    traces E0_par = B0_3 = 0.  The tolerance absorbs quadrature of rho0 and
    any deliberate near-wall shaping of f0 (grazing-set damping).
    """
    nodes = grid.nodes().reshape(grid.shape + (3,))[1:-1, 1:-1, 1:-1].reshape(-1, 3)
    divE = np.zeros(len(nodes))
    divB = np.zeros(len(nodes))
    for m in range(3):
        dx = np.zeros(3)
        dx[m] = h_fd
        divE += (init_data.E0(nodes + dx)[:, m] - init_data.E0(nodes - dx)[:, m]) / (2 * h_fd)
        divB += (init_data.B0(nodes + dx)[:, m] - init_data.B0(nodes - dx)[:, m]) / (2 * h_fd)
    target = 4 * np.pi * rho0_grid[1:-1, 1:-1, 1:-1].reshape(-1)
    scale = max(float(np.max(np.abs(target))), 1e-14)
    gauss_e = float(np.max(np.abs(divE - target))) / scale
    gauss_b = float(np.max(np.abs(divB))) / scale
    wall_nodes = grid.nodes().reshape(grid.shape + (3,))[:, :, 0].reshape(-1, 3)
    E0w = init_data.E0(wall_nodes)
    B0w = init_data.B0(wall_nodes)
    wall = max(float(np.abs(E0w[:, :2]).max()), float(np.abs(B0w[:, 2]).max()))
    ok = gauss_e <= rel_tol and gauss_b <= rel_tol and wall <= 1e-10 * max(
        1.0, float(np.abs(E0w).max())
    ) + 1e-12
    return AuditReport(
        name="initial_compatibility",
        residuals={"gauss_E_rel": gauss_e, "gauss_B_rel": gauss_b, "wall_trace_sup": wall},
        tolerance=rel_tol,
        passed=bool(ok),
    )


def maxwell_residuals(fields: FieldState, hist: SourceHistory) -> list:
    """Centered-difference residuals of the four Maxwell equations on interior nodes."""
    if len(fields.times) < 3:
        raise ValueError("maxwell_residuals needs at least 3 time levels")
    g = fields.grid
    dt = float(fields.times[1] - fields.times[0])
    core = (slice(1, -1),) * 3
    reports = []

    dtE = (fields.E[2:] - fields.E[:-2]) / (2 * dt)
    dtB = (fields.B[2:] - fields.B[:-2]) / (2 * dt)
    amp = []
    far = []
    gaussE = []
    gaussB = []
    for k in range(1, len(fields.times) - 1):
        curlB = _curl(fields.B[k], g.dx, g.dy, g.dz)
        curlE = _curl(fields.E[k], g.dx, g.dy, g.dz)
        ra = dtE[k - 1] - curlB + 4 * np.pi * hist.J[k]
        rf = dtB[k - 1] + curlE
        ge = _div(fields.E[k], g.dx, g.dy, g.dz) - 4 * np.pi * hist.rho[k]
        gb = _div(fields.B[k], g.dx, g.dy, g.dz)
        amp.append(np.abs(ra[core]).max())
        far.append(np.abs(rf[core]).max())
        gaussE.append(np.abs(ge[core]).max())
        gaussB.append(np.abs(gb[core]).max())
    for name, vals in (
        ("ampere", amp),
        ("faraday", far),
        ("gauss_E", gaussE),
        ("gauss_B", gaussB),
    ):
        reports.append(
            AuditReport(
                name=f"maxwell_{name}",
                residuals={"sup": float(np.max(vals)), "mean": float(np.mean(vals))},
                tolerance=None,
                passed=None,
            )
        )
    return reports


def conductor_bc_residuals(fields: FieldState, hist: SourceHistory) -> AuditReport:
    """Dirichlet sup of (E1, E2, B3) on the wall and one-sided Neumann defects.

    Neumann: d3 E3 = 4 pi rho, d3 B1 = 4 pi J2, d3 B2 = -4 pi J1 at x3 = 0,
    via second-order one-sided differences.
    """
    g = fields.grid
    dz = g.dz
    dirichlet = max(
        float(np.abs(fields.E[:, :, :, 0, 0]).max()),
        float(np.abs(fields.E[:, :, :, 0, 1]).max()),
        float(np.abs(fields.B[:, :, :, 0, 2]).max()),
    )

    def one_sided(F):
        return (-3.0 * F[:, :, :, 0] + 4.0 * F[:, :, :, 1] - F[:, :, :, 2]) / (2 * dz)

    d3E3 = one_sided(fields.E[..., 2])
    d3B1 = one_sided(fields.B[..., 0])
    d3B2 = one_sided(fields.B[..., 1])
    defect_E3 = float(np.abs(d3E3 - 4 * np.pi * hist.wall_rho()).max())
    defect_B1 = float(np.abs(d3B1 - 4 * np.pi * hist.wall_J()[..., 1]).max())
    defect_B2 = float(np.abs(d3B2 + 4 * np.pi * hist.wall_J()[..., 0]).max())
    return AuditReport(
        name="conductor_bc",
        residuals={
            "dirichlet_sup": dirichlet,
            "neumann_E3": defect_E3,
            "neumann_B1": defect_B1,
            "neumann_B2": defect_B2,
        },
        tolerance=None,
        passed=None,
    )


def _axis_weights(n):
    """Composite Simpson weights on n uniform nodes (3/8 patch when n is even).

    Falls back to trapezoid for n < 4; returns weights in units of the grid
    spacing.
    """
    if n < 4:
        w = np.ones(n)
        w[0] = w[-1] = 0.5
        return w
    w = np.zeros(n)
    m = n if n % 2 else n - 3
    w[0] += 1.0 / 3.0
    w[m - 1] += 1.0 / 3.0
    w[1:m - 1:2] += 4.0 / 3.0
    w[2:m - 1:2] += 2.0 / 3.0
    if n % 2 == 0:
        w[m - 1] += 3.0 / 8.0
        w[m] += 9.0 / 8.0
        w[m + 1] += 9.0 / 8.0
        w[m + 2] += 3.0 / 8.0
    return w


def _box_weights(grid, order: str = "high"):
    """Product weights for volume integrals over the box.

    "high" composite-Simpson weights suit localized profiles (mass audits);
    "trapezoid" is spectrally accurate for slab modes and keeps the discrete
    standing-wave energy exactly constant (energy audits).
    """
    axis = _axis_weights if order == "high" else _trap_weights
    w = (
        axis(grid.nx)[:, None, None]
        * axis(grid.ny)[None, :, None]
        * axis(grid.nz)[None, None, :]
    )
    return w * grid.dx * grid.dy * grid.dz


def _trap_weights(n):
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    return w


def energy_balance(
    fields: FieldState,
    hist: SourceHistory,
    env: Environment,
    closure_kind: str,
    rel_tol: float = 0.05,
) -> AuditReport:
    """Discrete balance of field + kinetic energy against the ambient forcing.

    d/dt [ int (|E|^2 + |B|^2)/2 dx + 4 pi int <v> f dv dx ]
        = 4 pi (Ee - g) int vhat3 f dv dx + 4 pi (wall flux terms).
    The wall flux vanishes for the specular closure, which is the audited case;
    other closures get the defect reported without a pass flag.
    """
    g = fields.grid
    wV = _box_weights(g, order="trapezoid")
    W_field = 0.5 * np.einsum("txyzc,xyz->t", fields.E ** 2 + fields.B ** 2, wV)
    W_kin = 4 * np.pi * np.einsum("txyz,xyz->t", hist.kinetic, wV)
    total = W_field + W_kin
    dt = float(fields.times[1] - fields.times[0])
    dtot = (total[2:] - total[:-2]) / (2 * dt)
    rhs = 4 * np.pi * (env.Ee - env.g) * np.einsum("txyz,xyz->t", hist.J[..., 2], wV)
    rhs_mid = rhs[1:-1]
    flow_scale = max(float(np.max(np.abs(dtot))), float(np.max(np.abs(rhs_mid))))
    energy_scale = max(float(np.max(np.abs(total))), 1e-300)
    if flow_scale <= 1e-10 * energy_scale:
        # both sides vanish at the energy scale: the balance holds identically
        defect = float(np.max(np.abs(dtot - rhs_mid))) / energy_scale
    else:
        defect = float(np.max(np.abs(dtot - rhs_mid))) / flow_scale
    passed = defect <= rel_tol if closure_kind == "specular" else None
    return AuditReport(
        name="energy_balance",
        residuals={"rel_defect": defect, "flow_scale": flow_scale, "energy_scale": energy_scale},
        tolerance=rel_tol if closure_kind == "specular" else None,
        passed=passed,
    )


def mass_flux_audit(
    hist: SourceHistory,
    closure_kind: str,
    flux_tol: Optional[float] = None,
    mass_tol: float = 0.01,
) -> AuditReport:
    """Wall flux int f vhat3 dv (= J3 trace) and total-mass drift over the run.

    The null-flux condition applies to the diffuse and specular closures only;
    for inflow the flux values are reported without a pass flag.
    """
    g = hist.grid
    wV = _box_weights(g)
    dA = g.dx * g.dy
    flux_sup = float(np.abs(hist.wall_J()[..., 2]).max())
    flux_int = float(np.max(np.abs(np.sum(hist.wall_J()[..., 2], axis=(1, 2)) * dA)))
    mass = np.einsum("txyz,xyz->t", hist.rho, wV)
    drift = float(np.abs(mass - mass[0]).max() / max(abs(mass[0]), 1e-300))
    if closure_kind in ("diffuse", "specular"):
        ok_flux = flux_sup <= flux_tol if flux_tol is not None else None
        ok = (ok_flux if ok_flux is not None else True) and drift <= mass_tol
    else:
        ok = None
    return AuditReport(
        name="mass_flux",
        residuals={
            "wall_flux_sup": flux_sup,
            "wall_flux_integral": flux_int,
            "mass_drift_rel": drift,
            "mass0": float(mass[0]),
        },
        tolerance=flux_tol,
        passed=ok,
    )


@dataclass
class DerivativeProbe:
    x3: float
    v3: float
    unweighted_dx3: float
    weighted_dx3: float
    weighted_dxpar: float
    weighted_dv: float
    alpha: float


def weighted_derivative_audit(
    f_at: Callable,
    t: float,
    ctx: WeightContext,
    env: Environment,
    x_par=(0.0, 0.0),
    v_par=(0.3, 0.0),
    x3_values=(1e-2, 1e-3, 1e-4),
    v3: float = 0.02,
    rel_step: float = 0.1,
    h_par: float = 1e-3,
) -> list:
    """Probe family x3 -> 0 at fixed small v3: derivative growth versus weighting.

    ``f_at(t, x, v)`` evaluates the density.  Central differences in x3 use
    step rel_step * x3 so they stay inside the domain.  Per probe the report
    carries the raw |d_{x3} f|, the <v>^(5+delta) alpha |d_{x3} f| weighting,
    and the <v>^(4+delta) |d_{x_par} f| and <v>^(5+delta) |d_v f| companions
    (bounded norms that must not blow up toward the grazing set).
    """
    probes = []
    v = np.array([v_par[0], v_par[1], v3])
    gamma = float(lorentz_gamma(v))
    w5 = gamma ** (5.0 + env.delta)
    w4 = gamma ** (4.0 + env.delta)
    for x3 in x3_values:
        h = rel_step * x3
        x0 = np.array([x_par[0], x_par[1], x3])
        dx3 = (f_at(t, x0 + [0, 0, h], v) - f_at(t, x0 - [0, 0, h], v)) / (2 * h)
        dp1 = (f_at(t, x0 + [h_par, 0, 0], v) - f_at(t, x0 - [h_par, 0, 0], v)) / (2 * h_par)
        dp2 = (f_at(t, x0 + [0, h_par, 0], v) - f_at(t, x0 - [0, h_par, 0], v)) / (2 * h_par)
        dv = max(
            abs(f_at(t, x0, v + dvv) - f_at(t, x0, v - dvv)) / (2 * h_par)
            for dvv in (np.array([h_par, 0, 0]), np.array([0, h_par, 0]), np.array([0, 0, h_par]))
        )
        a = float(alpha_fn(t, x0, v, ctx))
        probes.append(
            DerivativeProbe(
                x3=x3,
                v3=v3,
                unweighted_dx3=abs(float(dx3)),
                weighted_dx3=w5 * a * abs(float(dx3)),
                weighted_dxpar=w4 * max(abs(float(dp1)), abs(float(dp2))),
                weighted_dv=w5 * float(dv),
                alpha=a,
            )
        )
    return probes


def diffuse_flux_tolerance(vgrid: VelocityGrid, c_mu: float, influx_scale: float,
                           n_mc: int, k_max: int, f_sup: float) -> float:
    """Combined quadrature + Monte Carlo + truncation tolerance for the wall flux.

    Quadrature part: defect of the discrete emitted-flux normalization
    c_mu sum_w vhat3 mu(v) over the outgoing half-grid versus 1.
    MC part: a 3/sqrt(N) standard-error allowance on the influx estimate.
    Truncation: the 2^-k_max geometric cycle tail.
    """
    from .trace import maxwellian

    nodes = vgrid.nodes
    w = vgrid.weights
    vh3 = vgrid.vhat_nodes[:, 2]
    outgoing = vh3 > 0
    disc = c_mu * float(np.sum(w[outgoing] * vh3[outgoing] * maxwellian(nodes[outgoing])))
    quad_defect = abs(disc - 1.0) * influx_scale
    mc_part = 3.0 * influx_scale / np.sqrt(max(n_mc, 1))
    tail = f_sup * 2.0 ** (-k_max)
    return quad_defect + mc_part + tail
