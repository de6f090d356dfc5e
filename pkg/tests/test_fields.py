import numpy as np
import pytest

from rvm_halfspace.core import Environment
from rvm_halfspace.grids import SpatialGrid, ZERO_FIELDS
from rvm_halfspace.moments import SourceHistory, VelocityGrid
from rvm_halfspace.fields import (
    ChannelKernels,
    ContractionTable,
    DirectionSet,
    DirectSource,
    GSAssembler,
    GSConfig,
    GSQuadrature,
    LightConeError,
    neumann_boundary_term,
)
from rvm_halfspace.presets import (
    ManufacturedPulse,
    standing_wave_field,
    standing_wave_solution,
    zero_field_data,
)

ENV0 = Environment(g=0.0, Ee=0.0, Be=0.0)


def _zero_f(t, X, vn):
    return np.zeros((len(np.atleast_2d(X)), len(vn)))


def _make_asm(grid, init, hist=None, f_eval=_zero_f, f0_sep=None, quad=None, margin=100.0):
    vg = VelocityGrid(vmax=6.0, n_v=8)
    quad = quad or GSQuadrature()
    ds = DirectionSet(quad.n_mu, quad.n_phi)
    kers = ChannelKernels(vg, ds)
    cfg = GSConfig(quad, source_margin=margin)
    src = DirectSource(kers, f_eval)
    return GSAssembler(ENV0, grid, init, src, hist, ZERO_FIELDS, kers, cfg, f0_separable=f0_sep)


def test_direction_set_clip_and_interp_weights_are_polynomially_exact():
    ds = DirectionSet(8, 8)
    for c in (-1.0, -0.4, 0.0, 0.3, 0.9):
        w = ds.clip_weights(c)
        for p in range(8):
            assert float(w @ ds.mu ** p) == pytest.approx((1 - c ** (p + 1)) / (p + 1), abs=1e-12)
    L = ds.interp_weights(np.array([-0.9, 0.12, 0.77]))
    for p in range(8):
        np.testing.assert_allclose(L @ ds.mu ** p, np.array([-0.9, 0.12, 0.77]) ** p, atol=1e-11)


def test_zero_data_evaluates_to_zero():
    grid = SpatialGrid(Lx=1.0, Lz=1.0, nx=5, ny=5, nz=5)
    times = np.linspace(0, 0.2, 4)
    hist = SourceHistory.zeros(grid, times)
    asm = _make_asm(grid, zero_field_data(), hist)
    E, B = asm.eval_batch(0.15, np.array([[0.1, -0.2, 0.4], [0.0, 0.0, 0.0]]))
    assert np.all(E == 0.0) and np.all(B == 0.0)


def test_standing_wave_reproduced_to_machine_precision():
    grid = SpatialGrid(Lx=1.5, Lz=1.25, nx=6, ny=6, nz=6)
    k = np.pi / 1.25
    asm = _make_asm(grid, standing_wave_field(0.5, k))
    efn, bfn = standing_wave_solution(0.5, k)
    rng = np.random.default_rng(1)
    pts = np.column_stack([rng.uniform(-1, 1, 16), rng.uniform(-1, 1, 16), rng.uniform(0, 1.2, 16)])
    for t in (0.1, 0.35):
        E, B = asm.eval_batch(t, pts)
        assert np.abs(E - efn(t, pts)).max() <= 1e-12
        assert np.abs(B - bfn(t, pts)).max() <= 1e-12


def test_dirichlet_conditions_exact_at_wall():
    sc = ManufacturedPulse()
    grid = SpatialGrid(Lx=1.5, Lz=1.25, nx=8, ny=8, nz=8)
    times = np.linspace(0, 0.1, 8)
    nodes = grid.nodes()
    rho = np.stack([sc.moments.rho(t, nodes).reshape(grid.shape) for t in times])
    J = np.stack([sc.moments.J(t, nodes).reshape(grid.shape + (3,)) for t in times])
    hist = SourceHistory(grid, times, rho, J)
    asm = _make_asm(grid, sc.field_data, hist, sc.f_direct, sc.f0, margin=0.3)
    rng = np.random.default_rng(2)
    wall = np.column_stack([rng.uniform(-1, 1, 8), rng.uniform(-1, 1, 8), np.zeros(8)])
    E, B = asm.eval_batch(0.1, wall)
    assert np.abs(E[:, :2]).max() <= 1e-12
    assert np.abs(B[:, 2]).max() <= 1e-12


def test_neumann_term_closed_form_and_causality():
    rho0 = 0.7
    const = lambda t, yp: rho0 * np.ones(np.shape(t))
    for (t, x3) in ((0.5, 0.1), (1.0, 0.5)):
        w = neumann_boundary_term(t, np.array([0.2, -0.1, x3]), const)
        assert w == pytest.approx(-4 * np.pi * rho0 * (t - x3), rel=1e-8)
    assert neumann_boundary_term(0.3, np.array([0, 0, 0.4]), const) == 0.0
    assert neumann_boundary_term(0.5, np.array([0, 0, 0.1]), lambda t, yp: np.zeros(np.shape(t))) == 0.0


def test_bulk_term_causality_under_far_source_perturbation():
    """Sources strictly outside the backward cone cannot change the fields."""
    sc = ManufacturedPulse()
    grid = SpatialGrid(Lx=1.5, Lz=1.25, nx=8, ny=8, nz=8)
    times = np.linspace(0, 0.08, 6)
    vg = VelocityGrid(vmax=6.0, n_v=8)
    ds = DirectionSet(8, 8)
    kers = ChannelKernels(vg, ds)
    cfg = GSConfig(GSQuadrature(), source_margin=0.3)
    nodes = grid.nodes()
    rho = np.stack([sc.moments.rho(t, nodes).reshape(grid.shape) for t in times])
    J = np.stack([sc.moments.J(t, nodes).reshape(grid.shape + (3,)) for t in times])
    hist = SourceHistory(grid, times, rho, J)

    target = np.array([[0.0, 0.0, 0.6]])
    t_eval = 0.08

    def f_pert(t, X, vn, bump=0.0):
        base = sc.f_direct(t, X, vn)
        X = np.atleast_2d(X)
        far = np.sum((X - np.array([1.2, 1.2, 0.6])) ** 2, -1) < 0.05 ** 2
        return base + bump * far[:, None]

    out = {}
    for bump in (0.0, 10.0):
        src = DirectSource(kers, lambda t, X, vn, b=bump: f_pert(t, X, vn, b))
        asm = GSAssembler(ENV0, grid, sc.field_data, src, hist, ZERO_FIELDS, kers, cfg, f0_separable=sc.f0)
        out[bump] = asm.eval_batch(t_eval, target)
    np.testing.assert_array_equal(out[0.0][0], out[10.0][0])
    np.testing.assert_array_equal(out[0.0][1], out[10.0][1])


def test_tabulated_path_matches_direct_path():
    sc = ManufacturedPulse()
    grid = SpatialGrid(Lx=1.5, Lz=1.25, nx=12, ny=12, nz=10)
    times = np.linspace(0, 0.1, 16)
    vg = VelocityGrid(vmax=6.0, n_v=8)
    ds = DirectionSet(6, 6)
    kers = ChannelKernels(vg, ds)
    quad = GSQuadrature(n_r=5, n_mu=6, n_phi=6)
    cfg = GSConfig(quad, source_margin=0.3)
    nodes = grid.nodes()
    rho = np.stack([sc.moments.rho(t, nodes).reshape(grid.shape) for t in times])
    J = np.stack([sc.moments.J(t, nodes).reshape(grid.shape + (3,)) for t in times])
    hist = SourceHistory(grid, times, rho, J)
    f_table = np.stack([sc.f_direct(t, nodes, vg.nodes).astype(np.float32) for t in times])
    table = ContractionTable(grid, times, kers, f_table)
    asm_t = GSAssembler(ENV0, grid, sc.field_data, table, hist, ZERO_FIELDS, kers, cfg, f0_separable=sc.f0)
    asm_d = GSAssembler(
        ENV0, grid, sc.field_data, DirectSource(kers, sc.f_direct), hist, ZERO_FIELDS, kers, cfg,
        f0_separable=sc.f0,
    )
    rng = np.random.default_rng(5)
    pts = np.column_stack([rng.uniform(-1, 1, 12), rng.uniform(-1, 1, 12), rng.uniform(0, 1, 12)])
    Et, Bt = asm_t.eval_batch(0.1, pts)
    Ed, Bd = asm_d.eval_batch(0.1, pts)
    scale = np.abs(Ed).max()
    assert np.abs(Et - Ed).max() <= 0.01 * scale
    assert np.abs(Bt - Bd).max() <= 0.01 * scale


def test_gauss_law_from_retarded_representation():
    """div E of the assembled field approaches 4 pi rho (FD stencil at one point)."""
    sc = ManufacturedPulse()
    grid = SpatialGrid(Lx=1.5, Lz=1.25, nx=8, ny=8, nz=8)
    times = np.linspace(0, 0.08, 8)
    nodes = grid.nodes()
    rho = np.stack([sc.moments.rho(t, nodes).reshape(grid.shape) for t in times])
    J = np.stack([sc.moments.J(t, nodes).reshape(grid.shape + (3,)) for t in times])
    hist = SourceHistory(grid, times, rho, J)
    asm = _make_asm(grid, sc.field_data, hist, sc.f_direct, sc.f0, margin=0.4)
    x0 = np.array([0.1, 0.0, 0.55])
    t = 0.08
    h = 0.02
    div = 0.0
    for m in range(3):
        dx = np.zeros(3)
        dx[m] = h
        Ep, _ = asm.eval_batch(t, (x0 + dx)[None, :])
        Em, _ = asm.eval_batch(t, (x0 - dx)[None, :])
        div += (Ep[0, m] - Em[0, m]) / (2 * h)
    target = 4 * np.pi * sc.moments.rho(t, x0[None, :])[0]
    assert div == pytest.approx(target, rel=0.05)


def test_wave_equation_residual_matches_sources():
    """(d_tt - Lap) E -> -4 pi grad rho - 4 pi d_t J under quadrature refinement.

    Second differences amplify smooth quadrature bias, so the residual is
    checked at two sets of orders: the refined one must sit within 5% of the
    analytic source and improve on the coarse one.
    """
    sc = ManufacturedPulse()
    grid = SpatialGrid(Lx=1.5, Lz=1.25, nx=8, ny=8, nz=8)
    times = np.linspace(0, 0.12, 10)
    nodes = grid.nodes()
    rho = np.stack([sc.moments.rho(t, nodes).reshape(grid.shape) for t in times])
    J = np.stack([sc.moments.J(t, nodes).reshape(grid.shape + (3,)) for t in times])
    hist = SourceHistory(grid, times, rho, J)
    x0 = np.array([0.05, -0.1, 0.5])
    t0 = 0.06
    h, ht = 0.05, 0.03

    grad_rho = np.zeros(3)
    for m in range(3):
        dx = np.zeros(3)
        dx[m] = 1e-4
        grad_rho[m] = (
            sc.moments.rho(t0, (x0 + dx)[None, :])[0] - sc.moments.rho(t0, (x0 - dx)[None, :])[0]
        ) / 2e-4
    dtJ = (sc.moments.J(t0 + 1e-4, x0[None, :])[0] - sc.moments.J(t0 - 1e-4, x0[None, :])[0]) / 2e-4
    rhs = -4 * np.pi * grad_rho - 4 * np.pi * dtJ
    scale = np.abs(rhs).max()

    devs = []
    for nv, ang, nr in ((8, 8, 6), (12, 12, 8)):
        vg = VelocityGrid(vmax=6.0, n_v=nv)
        ds = DirectionSet(ang, ang)
        kers = ChannelKernels(vg, ds)
        asm = GSAssembler(
            ENV0, grid, sc.field_data, DirectSource(kers, sc.f_direct), hist, ZERO_FIELDS, kers,
            GSConfig(GSQuadrature(n_r=nr, n_mu=ang, n_phi=ang), source_margin=0.4),
            f0_separable=sc.f0,
        )

        def E_at(t, x):
            return asm.eval_batch(t, x[None, :])[0][0]

        lap = -6.0 * E_at(t0, x0)
        for m in range(3):
            dx = np.zeros(3)
            dx[m] = h
            lap += E_at(t0, x0 + dx) + E_at(t0, x0 - dx)
        lap /= h * h
        dtt = (E_at(t0 + ht, x0) - 2 * E_at(t0, x0) + E_at(t0 - ht, x0)) / ht ** 2
        devs.append(np.abs((dtt - lap) - rhs).max() / scale)
    assert devs[1] < 0.05
    assert devs[1] < 0.5 * devs[0]


def test_light_cone_error_names_required_box():
    grid = SpatialGrid(Lx=1.0, Lz=1.0, nx=5, ny=5, nz=5)
    asm = _make_asm(grid, zero_field_data(), SourceHistory.zeros(grid, np.linspace(0, 0.5, 4)), margin=0.0)
    with pytest.raises(LightConeError, match="Lx >="):
        asm.eval_batch(0.4, np.array([[0.9, 0.0, 0.5]]))


def test_separable_and_general_initial_f_paths_agree():
    sc = ManufacturedPulse()
    grid = SpatialGrid(Lx=1.5, Lz=1.25, nx=8, ny=8, nz=8)
    times = np.linspace(0, 0.08, 6)
    nodes = grid.nodes()
    rho = np.stack([sc.moments.rho(t, nodes).reshape(grid.shape) for t in times])
    J = np.stack([sc.moments.J(t, nodes).reshape(grid.shape + (3,)) for t in times])
    hist = SourceHistory(grid, times, rho, J)
    vg = VelocityGrid(vmax=6.0, n_v=8)
    ds = DirectionSet(8, 8)
    kers = ChannelKernels(vg, ds)
    cfg = GSConfig(GSQuadrature(), source_margin=0.4)
    src = DirectSource(kers, sc.f_direct)
    asm_sep = GSAssembler(ENV0, grid, sc.field_data, src, hist, ZERO_FIELDS, kers, cfg, f0_separable=sc.f0)
    asm_gen = GSAssembler(
        ENV0, grid, sc.field_data, src, hist, ZERO_FIELDS, kers, cfg,
        f0_general=lambda X, vn: sc.f_direct(0.0, X, vn),
    )
    pts = np.array([[0.1, 0.2, 0.5], [0.0, 0.0, 0.05]])
    E1, B1 = asm_sep.eval_batch(0.08, pts)
    E2, B2 = asm_gen.eval_batch(0.08, pts)
    np.testing.assert_allclose(E1, E2, atol=1e-12)
    np.testing.assert_allclose(B1, B2, atol=1e-12)
