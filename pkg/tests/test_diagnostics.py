import numpy as np
import pytest

from rvm_halfspace.core import Environment, vhat
from rvm_halfspace.diagnostics import (
    conductor_bc_residuals,
    diffuse_flux_tolerance,
    energy_balance,
    mass_flux_audit,
    maxwell_residuals,
    weighted_derivative_audit,
)
from rvm_halfspace.grids import FieldState, SpatialGrid
from rvm_halfspace.moments import SourceHistory, VelocityGrid
from rvm_halfspace.presets import standing_wave_solution
from rvm_halfspace.weight import WeightContext

ENV0 = Environment(g=0.0, Ee=0.0, Be=0.0)


def _wave_state(n=14, n_t=17, T=0.4, amp=0.5):
    grid = SpatialGrid(Lx=1.0, Lz=1.25, nx=n, ny=5, nz=n)
    times = np.linspace(0, T, n_t)
    efn, bfn = standing_wave_solution(amp, np.pi / 1.25)
    fields = FieldState.from_analytic(grid, times, efn, bfn)
    hist = SourceHistory.zeros(grid, times)
    return fields, hist


def test_maxwell_residuals_zero_for_vacuum_static():
    grid = SpatialGrid(Lx=1.0, Lz=1.0, nx=6, ny=6, nz=6)
    times = np.linspace(0, 0.1, 5)
    fields = FieldState.zeros(grid, times)
    hist = SourceHistory.zeros(grid, times)
    reps = maxwell_residuals(fields, hist)
    assert all(r.residuals["sup"] == 0.0 for r in reps)


def test_maxwell_residual_matches_fd_truncation_on_plane_wave():
    """On the sampled standing wave the residual equals the known FD truncation error."""
    fields, hist = _wave_state()
    reps = {r.name: r for r in maxwell_residuals(fields, hist)}
    # Faraday-2 residual: the centered d_t and d_z truncation terms carry
    # opposite signs on this mode, so the symbolic leading error is
    # amp k^3 |dt^2 - dz^2| / 6 at the cos(kz)cos(kt) maxima.
    k = np.pi / 1.25
    dt = fields.times[1] - fields.times[0]
    dz = fields.grid.dz
    expected = 0.5 * k ** 3 * abs(dt ** 2 - dz ** 2) / 6
    measured = reps["maxwell_faraday"].residuals["sup"]
    assert measured == pytest.approx(expected, rel=0.10)


def test_maxwell_residual_second_order_in_time_and_space():
    sups = []
    for n, n_t in ((10, 13), (19, 25)):
        fields, hist = _wave_state(n=n, n_t=n_t)
        reps = {r.name: r for r in maxwell_residuals(fields, hist)}
        sups.append(reps["maxwell_ampere"].residuals["sup"])
    assert sups[1] < 0.35 * sups[0]


def test_conductor_audit_zero_run():
    grid = SpatialGrid(Lx=1.0, Lz=1.0, nx=6, ny=6, nz=6)
    times = np.linspace(0, 0.1, 5)
    rep = conductor_bc_residuals(FieldState.zeros(grid, times), SourceHistory.zeros(grid, times))
    assert rep.residuals["dirichlet_sup"] == 0.0
    assert rep.residuals["neumann_E3"] == 0.0


def test_energy_constant_for_vacuum_standing_wave():
    fields, hist = _wave_state(n=20, n_t=33)
    rep = energy_balance(fields, hist, ENV0, closure_kind="specular")
    # J = 0: RHS is zero; drift is pure FD error of the discrete energy series
    assert rep.passed
    assert rep.residuals["rel_defect"] <= 0.05


def test_mass_flux_specular_symmetry():
    grid = SpatialGrid(Lx=1.0, Lz=1.0, nx=6, ny=6, nz=6)
    times = np.linspace(0, 0.1, 5)
    vg = VelocityGrid(vmax=6.0, n_v=8)
    # even-in-v3 wall distribution: discrete flux cancels by node symmetry
    f_wall = np.exp(-0.5 * np.sum(vg.nodes ** 2, -1))
    flux = np.sum(vg.weights * vg.vhat_nodes[:, 2] * f_wall)
    assert abs(flux) <= 1e-14
    hist = SourceHistory.zeros(grid, times)
    rep = mass_flux_audit(hist, "specular")
    assert rep.passed


def test_diffuse_flux_tolerance_components():
    from rvm_halfspace.trace import flux_normalization

    vg = VelocityGrid(vmax=6.0, n_v=8)
    tol = diffuse_flux_tolerance(vg, flux_normalization(), influx_scale=1e-2, n_mc=8, k_max=16, f_sup=1e-2)
    assert tol > 0.0 and np.isfinite(tol)


def test_weighted_derivative_probes_bounded_for_free_streaming():
    ctx = WeightContext(env=Environment(g=2.0, Ee=0.0, Be=0.0))

    def f_at(t, x, v):
        pull = x - t * vhat(v)
        return float(np.exp(-0.5 * np.sum((pull - [0, 0, 0.6]) ** 2) / 0.09) * np.exp(-0.5 * v @ v))

    probes = weighted_derivative_audit(
        f_at, 0.05, ctx, Environment(g=2.0, Ee=0.0, Be=0.0), x3_values=(0.3, 0.1, 0.03), v3=-0.5
    )
    vals = [p.unweighted_dx3 for p in probes]
    # smooth transported data: no blow-up toward the wall
    assert max(vals) <= 10 * max(min(vals), 1e-12)


def test_neumann_audit_catches_wall_term_sign_flip():
    """Mutation guard: flipping the retarded wall-term sign breaks the Neumann audit.

    With a constant charge trace and no other sources, E3 is exactly the wall
    term -4 pi rho0 (t - x3)+, so its one-sided derivative reproduces the
    Neumann datum; removing the term twice (a sign flip) must blow the defect
    up to the 8 pi rho0 scale.
    """
    from rvm_halfspace.core import Environment
    from rvm_halfspace.fields import (
        ChannelKernels, DirectionSet, DirectSource, GSAssembler, GSConfig, GSQuadrature,
        neumann_boundary_term,
    )
    from rvm_halfspace.grids import ZERO_FIELDS
    from rvm_halfspace.presets import zero_field_data

    rho0 = 0.3
    grid = SpatialGrid(Lx=1.0, Lz=0.5, nx=6, ny=6, nz=11)
    times = np.linspace(0.0, 0.4, 5)
    nodes = grid.nodes()
    rho = np.full((len(times),) + grid.shape, rho0)
    J = np.zeros((len(times),) + grid.shape + (3,))
    hist = SourceHistory(grid, times, rho, J)

    vg = VelocityGrid(vmax=6.0, n_v=4)
    ds = DirectionSet(6, 6)
    kers = ChannelKernels(vg, ds)
    zero_f = lambda t, X, vn: np.zeros((len(np.atleast_2d(X)), len(vn)))
    asm = GSAssembler(
        Environment(g=0, Ee=0, Be=0), grid, zero_field_data(), DirectSource(kers, zero_f),
        hist, ZERO_FIELDS, kers, GSConfig(GSQuadrature(n_r=4, n_mu=6, n_phi=6), source_margin=10.0),
    )
    # audit away from t = 0: the synthetic constant-charge history is
    # deliberately incompatible at the initial slice (E0 = 0)
    fields = asm.eval_state(times)
    late = FieldState(grid, fields.times[2:], fields.E[2:], fields.B[2:])
    hist_late = SourceHistory(grid, times[2:], rho[2:], J[2:])
    base = conductor_bc_residuals(late, hist_late).residuals["neumann_E3"]
    assert base <= 0.1 * 4 * np.pi * rho0

    mut = FieldState(grid, late.times, late.E.copy(), late.B.copy())
    for k, t in enumerate(times[2:]):
        for iz, z in enumerate(grid.x3):
            if z >= t:
                continue
            w = neumann_boundary_term(
                float(t), np.array([0.0, 0.0, z]), lambda tt, yp: rho0 * np.ones(np.shape(tt))
            )
            mut.E[k, :, :, iz, 2] -= 2.0 * w
    flipped = conductor_bc_residuals(mut, hist_late).residuals["neumann_E3"]
    assert flipped > 5.0 * max(base, 0.05 * 4 * np.pi * rho0)
