import numpy as np
import pytest
from scipy.integrate import quad

from rvm_halfspace.grids import SpatialGrid
from rvm_halfspace.moments import (
    QuadratureFailure,
    SourceHistory,
    VelocityGrid,
    compute_moments,
    continuity_residual,
    moment_tables,
)


def maxwell_f(t, x, v):
    v = np.atleast_2d(v)
    return (2 * np.pi) ** -1.5 * np.exp(-0.5 * np.sum(v * v, axis=-1))


def test_gaussian_normalization_and_odd_symmetry():
    vg = VelocityGrid(vmax=8.0, n_v=24)
    rho, J = compute_moments(maxwell_f, 0.0, np.zeros(3), vg)
    assert rho == pytest.approx(1.0, abs=1e-6)
    assert np.abs(J).max() <= 1e-8


def test_zero_distribution():
    vg = VelocityGrid(vmax=6.0, n_v=8)
    rho, J = compute_moments(lambda t, x, v: np.zeros(len(np.atleast_2d(v))), 0.0, np.zeros(3), vg)
    assert rho == 0.0 and np.all(J == 0.0)


def _adaptive_flux_reference(switch):
    """2 pi int int (v3/<v>) e^{-(s^2+v3^2)/2} switch(v3) s ds dv3 by nested adaptive quadrature."""

    def inner(v3):
        val, _ = quad(
            lambda s: s * np.exp(-0.5 * s * s) * v3 / np.sqrt(1 + s * s + v3 * v3),
            0,
            12,
            epsabs=1e-13,
        )
        return val * np.exp(-0.5 * v3 * v3) * switch(v3)

    ref, _ = quad(inner, -12, 12, epsabs=1e-13, limit=200)
    return 2 * np.pi * ref


def test_half_maxwellian_flux_converges_to_adaptive_oracle():
    # The sharp indicator leaves a v3-kink the cube rule resolves only at
    # second order, so the oracle match is asserted as a convergence trend.
    ref = _adaptive_flux_reference(lambda v3: 1.0 * (v3 > 0))
    errs = []
    for nv in (16, 32, 64):
        vg = VelocityGrid(vmax=8.0, n_v=nv)

        def f(t, x, v):
            v = np.atleast_2d(v)
            return np.exp(-0.5 * np.sum(v * v, axis=-1)) * (v[:, 2] > 0)

        rho, J = compute_moments(f, 0.0, np.zeros(3), vg)
        errs.append(abs(J[2] - ref))
        assert abs(J[0]) < 1e-8 and abs(J[1]) < 1e-8
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 0.5 * errs[1]


def test_smooth_flux_matches_adaptive_oracle_tightly():
    from scipy.special import erf

    switch = lambda v3: 0.5 * (1.0 + erf(np.asarray(v3) / 1.0))
    ref = _adaptive_flux_reference(switch)
    vg = VelocityGrid(vmax=8.0, n_v=64)

    def f(t, x, v):
        v = np.atleast_2d(v)
        return np.exp(-0.5 * np.sum(v * v, axis=-1)) * switch(v[:, 2])

    rho, J = compute_moments(f, 0.0, np.zeros(3), vg)
    assert J[2] == pytest.approx(ref, abs=1e-6)


def test_nv_must_be_even():
    with pytest.raises(ValueError):
        VelocityGrid(n_v=15)


def test_nan_propagates_with_node():
    vg = VelocityGrid(vmax=6.0, n_v=8)

    def f(t, x, v):
        v = np.atleast_2d(v)
        out = np.ones(len(v))
        out[7] = np.nan
        return out

    with pytest.raises(QuadratureFailure):
        compute_moments(f, 0.0, np.zeros(3), vg)


def test_positivity_up_to_quadrature():
    vg = VelocityGrid(vmax=6.0, n_v=16)
    rng = np.random.default_rng(0)

    def f(t, x, v):
        v = np.atleast_2d(v)
        return np.exp(-np.sum(v * v, -1)) * (1 + 0.5 * np.sin(3 * v[:, 0]))

    rho, _ = compute_moments(f, 0.0, np.zeros(3), vg)
    assert rho >= -1e-10 * len(vg.nodes)


def test_truncation_tail_bound():
    delta = 0.5
    f_w = 1.0  # sup |<v>^{4+delta} f| for f = <v>^-(4+delta)
    vg = VelocityGrid(vmax=6.0, n_v=24)
    vg2 = VelocityGrid(vmax=12.0, n_v=48)

    def f(t, x, v):
        v = np.atleast_2d(v)
        return (1 + np.sum(v * v, -1)) ** (-0.5 * (4 + delta))

    r1, _ = compute_moments(f, 0.0, np.zeros(3), vg)
    r2, _ = compute_moments(f, 0.0, np.zeros(3), vg2)
    assert abs(r2 - r1) <= vg.tail_estimate(f_w, delta)


def _mk_hist(grid, times, rho_fn, J_fn):
    nodes = grid.nodes()
    rho = np.stack([rho_fn(t, nodes).reshape(grid.shape) for t in times])
    J = np.stack([J_fn(t, nodes).reshape(grid.shape + (3,)) for t in times])
    return SourceHistory(grid, times, rho, J)


def test_continuity_constants_exact_zero():
    grid = SpatialGrid(Lx=1.0, Lz=1.0, nx=6, ny=6, nz=6)
    times = np.linspace(0, 0.1, 5)
    hist = _mk_hist(
        grid,
        times,
        lambda t, x: 0.7 * np.ones(len(x)),
        lambda t, x: np.tile([0.1, -0.2, 0.3], (len(x), 1)),
    )
    rep = continuity_residual(hist)
    assert rep.sup == 0.0


def test_continuity_manufactured_defect():
    # rho = sin(t) cos(x1), J = (cos(t) sin(x1), 0, 0):
    # d_t rho + div J = cos(t) cos(x1) + cos(t) cos(x1) = 2 cos(t) cos(x1)
    grid = SpatialGrid(Lx=1.0, Lz=1.0, nx=24, ny=5, nz=5)
    times = np.linspace(0, 0.2, 9)
    hist = _mk_hist(
        grid,
        times,
        lambda t, x: np.sin(t) * np.cos(x[:, 0]),
        lambda t, x: np.stack([np.cos(t) * np.sin(x[:, 0]), 0 * x[:, 0], 0 * x[:, 0]], -1),
    )
    rep = continuity_residual(hist)
    # known analytic defect 2 cos(t) cos(x1), sup over interior ~ 2
    assert rep.sup == pytest.approx(2.0, rel=0.02)


def test_continuity_free_streaming_second_order():
    from rvm_halfspace.presets import FreeStreamMoments

    mom = FreeStreamMoments([(1.0, np.array([0.0, 0.0, 0.6]), 0.25)])
    sups = []
    # joint space-time refinement; the coarser pair under-resolves the sup
    # location, so the order is measured on the resolved pair
    for n, n_t in ((15, 9), (29, 17)):
        grid = SpatialGrid(Lx=1.2, Lz=1.2, nx=n, ny=n, nz=n)
        times = np.linspace(0, 0.05, n_t)
        hist = _mk_hist(grid, times, mom.rho, mom.J)
        sups.append(continuity_residual(hist).sup)
    order = np.log(sups[0] / sups[1]) / np.log((29 - 1) / (15 - 1))
    assert order > 1.5


def test_moment_tables_match_pointwise():
    vg = VelocityGrid(vmax=6.0, n_v=8)
    rng = np.random.default_rng(2)
    f_tab = rng.uniform(size=(5, len(vg.nodes)))
    rho, J, ke = moment_tables(f_tab, vg)
    for i in range(5):
        r2, J2 = compute_moments(lambda t, x, v, i=i: f_tab[i], 0.0, np.zeros(3), vg)
        assert rho[i] == pytest.approx(r2, rel=1e-13)
        np.testing.assert_allclose(J[i], J2, rtol=1e-12, atol=1e-14)
    assert np.all(ke >= rho - 1e-12)
