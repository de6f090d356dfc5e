"""Velocity-space quadrature for charge/current moments and the continuity residual."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import lorentz_gamma, vhat


class QuadratureFailure(RuntimeError):
    def __init__(self, node, value):
        self.node = node
        self.value = value
        super().__init__(f"non-finite f at velocity node {node}: {value}")


@dataclass(frozen=True)
class VelocityGrid:
    """Product Gauss-Legendre rule on the cube [-vmax, vmax]^3.

    ``n_v`` nodes per axis (must be even so no node sits on v3 = 0, keeping
    quadrature clear of the grazing plane).  Exposes flat (n^3, 3) nodes and
    weights plus the relativistic velocity table.
    """

    vmax: float = 6.0
    n_v: int = 16

    def __post_init__(self):
        if self.n_v % 2:
            raise ValueError(f"n_v must be even, got {self.n_v}")
        if self.vmax <= 0:
            raise ValueError("vmax must be positive")

    @property
    def axis(self):
        x, _ = np.polynomial.legendre.leggauss(self.n_v)
        return self.vmax * x

    def _build(self):
        x, w = np.polynomial.legendre.leggauss(self.n_v)
        x = self.vmax * x
        w = self.vmax * w
        V1, V2, V3 = np.meshgrid(x, x, x, indexing="ij")
        nodes = np.stack([V1, V2, V3], axis=-1).reshape(-1, 3)
        W1, W2, W3 = np.meshgrid(w, w, w, indexing="ij")
        weights = (W1 * W2 * W3).ravel()
        return nodes, weights

    @property
    def nodes(self) -> np.ndarray:
        if not hasattr(self, "_nodes"):
            n, w = self._build()
            object.__setattr__(self, "_nodes", n)
            object.__setattr__(self, "_weights", w)
        return self._nodes

    @property
    def weights(self) -> np.ndarray:
        self.nodes
        return self._weights

    @property
    def vhat_nodes(self) -> np.ndarray:
        return vhat(self.nodes)

    @property
    def gamma_nodes(self) -> np.ndarray:
        return lorentz_gamma(self.nodes)

    def tail_estimate(self, f_sup_weighted: float, delta: float) -> float:
        """Upper bound for the |v| > vmax truncation given sup |<v>^(4+delta) f|.

        int_{|v|>M} <v>^-(4+delta) dv <= 4 pi / ((1+delta) M^(1+delta)).
        """
        return f_sup_weighted * 4.0 * np.pi / ((1.0 + delta) * self.vmax ** (1.0 + delta))


def compute_moments(f_eval, t, x, vgrid: VelocityGrid):
    """(rho, J) at one space-time point by cube quadrature of f and vhat f.

    ``f_eval(t, x, v_nodes)`` must return the (n^3,) array of f values.
    NaNs are reported with the offending node.  |J| <= rho is asserted up to
    quadrature slack since |vhat| < 1.
    """
    nodes = vgrid.nodes
    f = np.asarray(f_eval(t, x, nodes), dtype=float)
    bad = ~np.isfinite(f)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise QuadratureFailure(nodes[k], f[k])
    w = vgrid.weights
    rho = float(np.sum(w * f))
    J = (w * f) @ vgrid.vhat_nodes
    slack = 1e-10 * len(nodes) * max(float(np.max(np.abs(f))), 1.0)
    if np.linalg.norm(J) > abs(rho) + slack:
        raise AssertionError(
            f"|J| = {np.linalg.norm(J):.3e} exceeds rho = {rho:.3e} beyond quadrature slack"
        )
    return rho, J


def moment_tables(f_table, vgrid: VelocityGrid):
    """rho, J, kinetic-energy density from an (..., n^3) table of f values."""
    w = vgrid.weights
    rho = f_table @ w
    J = np.einsum("...n,n,nk->...k", f_table, w, vgrid.vhat_nodes)
    ke = f_table @ (w * vgrid.gamma_nodes)
    return rho, J, ke


@dataclass
class SourceHistory:
    """Time-stamped rho/J grids plus wall traces, immutable within a Picard sweep.

    rho has shape (n_t, nx, ny, nz); J has a trailing component axis.  The
    kinetic-energy density rides along for the energy audit.  Wall traces are
    views of the x3 = 0 plane.
    """

    grid: "SpatialGrid"
    times: np.ndarray
    rho: np.ndarray
    J: np.ndarray
    kinetic: np.ndarray = None

    def wall_rho(self):
        return self.rho[:, :, :, 0]

    def wall_J(self):
        return self.J[:, :, :, 0, :]

    def interp_wall_rho(self, t, x_par):
        return _interp_wall(self.grid, self.times, self.wall_rho(), t, x_par)

    def interp_wall_J(self, t, x_par, comp):
        return _interp_wall(self.grid, self.times, self.wall_J()[..., comp], t, x_par)

    @classmethod
    def zeros(cls, grid, times):
        times = np.asarray(times, float)
        shape = (len(times),) + grid.shape
        return cls(grid, times, np.zeros(shape), np.zeros(shape + (3,)), np.zeros(shape))


def _interp_wall(grid, times, table, t, x_par):
    """Bilinear in x_par, linear in t, zero before t=0 (sources vanish for t < 0)."""
    x_par = np.asarray(x_par, dtype=float)
    t = np.asarray(t, dtype=float)
    tt = np.broadcast_to(t, x_par.shape[:-1]).astype(float)
    dt = float(times[1] - times[0]) if len(times) > 1 else 1.0
    ft = (tt - float(times[0])) / dt
    before = ft < 0.0
    ft = np.clip(ft, 0.0, len(times) - 1.0)
    k0 = np.minimum(ft.astype(np.int64), max(len(times) - 2, 0))
    tau = np.clip(ft - k0, 0.0, 1.0)

    fx = np.clip((x_par[..., 0] + grid.Lx) / grid.dx, 0.0, grid.nx - 1.0)
    fy = np.clip((x_par[..., 1] + grid.Lx) / grid.dy, 0.0, grid.ny - 1.0)
    i0 = np.minimum(fx.astype(np.int64), grid.nx - 2)
    j0 = np.minimum(fy.astype(np.int64), grid.ny - 2)
    tx = fx - i0
    ty = fy - j0

    def level(kk):
        v00 = table[kk, i0, j0]
        v10 = table[kk, i0 + 1, j0]
        v01 = table[kk, i0, j0 + 1]
        v11 = table[kk, i0 + 1, j0 + 1]
        return (
            v00 * (1 - tx) * (1 - ty)
            + v10 * tx * (1 - ty)
            + v01 * (1 - tx) * ty
            + v11 * tx * ty
        )

    out = level(k0) * (1.0 - tau)
    if len(times) > 1:
        out = out + level(np.minimum(k0 + 1, len(times) - 1)) * tau
    return np.where(before, 0.0, out)


@dataclass
class ContinuityReport:
    sup: float
    l2: float
    n_interior: int


def continuity_residual(hist: SourceHistory) -> ContinuityReport:
    """Centered-difference residual of d_t rho + div J on interior nodes."""
    if len(hist.times) < 3:
        raise ValueError("continuity residual needs at least 3 time levels")
    g = hist.grid
    dt = float(hist.times[1] - hist.times[0])
    drho = (hist.rho[2:] - hist.rho[:-2]) / (2 * dt)
    Jmid = hist.J[1:-1]
    divJ = (
        (Jmid[:, 2:, 1:-1, 1:-1, 0] - Jmid[:, :-2, 1:-1, 1:-1, 0]) / (2 * g.dx)
        + (Jmid[:, 1:-1, 2:, 1:-1, 1] - Jmid[:, 1:-1, :-2, 1:-1, 1]) / (2 * g.dy)
        + (Jmid[:, 1:-1, 1:-1, 2:, 2] - Jmid[:, 1:-1, 1:-1, :-2, 2]) / (2 * g.dz)
    )
    res = drho[:, 1:-1, 1:-1, 1:-1] + divJ
    return ContinuityReport(
        sup=float(np.max(np.abs(res))),
        l2=float(np.sqrt(np.mean(res ** 2))),
        n_interior=res.size,
    )
