"""Evaluation of E(t, x) and B(t, x) from retarded light-cone integrals.

The representation decomposes each component into
  * Kirchhoff sphere terms of the initial fields (with image data below the
    wall realizing the Dirichlet/Neumann conditions),
  * bulk light-cone integrals of f against direction kernels,
  * transport (S) terms, integrated by parts in v onto gradient kernels and
    the frozen force of the current linearization,
  * initial-slice sphere integrals of f0,
  * boundary-disk integrals of the wall trace of f, and
  * the Neumann wall term driven by the retarded charge trace.

Image-side integrands equal the upper-half kernels evaluated on cones centered
at the reflected observation point, carrying the parity signs iota = (1,1,-1),
so one kernel set serves both halves.

Two interchangeable sources feed the velocity contractions: a per-sweep
``ContractionTable`` (fast path used by the Picard pipeline) and a
``DirectSource`` that queries an analytic f on the fly (reference path used by
tests and single-point audits).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss, legvander

from .core import Environment, E3_UNIT
from .grids import SpatialGrid, FieldState, trilinear_corners
from .kernels import (
    IOTA,
    boundary_disk_B,
    boundary_disk_E,
    bulk_B,
    bulk_E,
    grad_s_kernel_B,
    grad_s_kernel_E,
    initial_sphere_B,
    initial_sphere_E,
)
from .moments import SourceHistory, VelocityGrid
from .presets import InitialFieldData, SeparableF0


class LightConeError(RuntimeError):
    pass


@dataclass(frozen=True)
class GSQuadrature:
    """Orders of the light-cone rules: radial, polar (cos theta), azimuth, disk radial."""

    n_r: int = 6
    n_mu: int = 8
    n_phi: int = 8
    n_disk_r: int = 8


class DirectionSet:
    """Fixed angular rule: Gauss-Legendre in mu = cos(theta), uniform azimuth.

    Polar clipping to mu in (c, 1] integrates the degree-(n_mu - 1)
    interpolant exactly, which keeps one set of base directions serving every
    target height and both cone families.
    """

    def __init__(self, n_mu: int, n_phi: int):
        self.n_mu = n_mu
        self.n_phi = n_phi
        self.mu, self.w_mu_full = leggauss(n_mu)
        self.phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
        self.w_phi = 2.0 * np.pi / n_phi
        sin_t = np.sqrt(1.0 - self.mu ** 2)
        dirs = np.empty((n_mu, n_phi, 3))
        dirs[..., 0] = sin_t[:, None] * np.cos(self.phi)[None, :]
        dirs[..., 1] = sin_t[:, None] * np.sin(self.phi)[None, :]
        dirs[..., 2] = self.mu[:, None]
        self.dirs = dirs
        self.dirs_flat = dirs.reshape(-1, 3)
        self.n_dirs = n_mu * n_phi
        # values -> Legendre coefficients
        V = legvander(self.mu, n_mu - 1)
        self._coeff_from_vals = np.linalg.inv(V)

    def clip_weights(self, c) -> np.ndarray:
        """Weights w with sum_i w_i q(mu_i) = int_c^1 q dmu for polys of deg < n_mu.

        Uses int P_j = (P_{j+1} - P_{j-1}) / (2j + 1); c is clamped to [-1, 1]
        so an empty range returns exactly zero weights.
        """
        c = np.clip(np.asarray(c, dtype=float), -1.0, 1.0)
        Pc = legvander(np.atleast_1d(c).ravel(), self.n_mu)
        Pc = Pc.reshape(np.shape(c) + (self.n_mu + 1,))
        m = np.empty(np.shape(c) + (self.n_mu,))
        m[..., 0] = 1.0 - c
        for j in range(1, self.n_mu):
            m[..., j] = (Pc[..., j - 1] - Pc[..., j + 1]) / (2 * j + 1)
        return m @ self._coeff_from_vals

    def interp_weights(self, mu_t) -> np.ndarray:
        """Row weights evaluating the polar interpolant at arbitrary mu."""
        mu_t = np.asarray(mu_t, dtype=float)
        P = legvander(np.atleast_1d(mu_t).ravel(), self.n_mu - 1)
        P = P.reshape(np.shape(mu_t) + (self.n_mu,))
        return P @ self._coeff_from_vals


# channel layout of the velocity contractions
CH_BULK_E = slice(0, 3)
CH_BULK_B = slice(3, 6)
CH_SEA = slice(6, 15)
CH_SED = slice(15, 24)
CH_SBA = slice(24, 33)
CH_SBD = slice(33, 42)
CH_BDRY_E = slice(42, 45)
CH_BDRY_B = slice(45, 48)
N_CHANNELS = 48


def _channel_kernels(v_nodes, omega):
    """All channel kernel values for one direction: (n_v, N_CHANNELS)."""
    n_v = len(v_nodes)
    out = np.empty((n_v, N_CHANNELS))
    vh = v_nodes / np.sqrt(1.0 + np.sum(v_nodes ** 2, axis=-1, keepdims=True))
    out[:, CH_BULK_E] = bulk_E(v_nodes, omega)
    out[:, CH_BULK_B] = bulk_B(v_nodes, omega)
    gse = grad_s_kernel_E(v_nodes, omega)
    gsb = grad_s_kernel_B(v_nodes, omega)
    out[:, CH_SEA] = gse.reshape(n_v, 9)
    out[:, CH_SED] = np.cross(gse, vh[:, None, :]).reshape(n_v, 9)
    out[:, CH_SBA] = gsb.reshape(n_v, 9)
    out[:, CH_SBD] = np.cross(gsb, vh[:, None, :]).reshape(n_v, 9)
    out[:, CH_BDRY_E] = boundary_disk_E(v_nodes, omega)
    out[:, CH_BDRY_B] = boundary_disk_B(v_nodes, omega)
    return out


class ChannelKernels:
    """Kernel matrix over (directions x channels x velocity nodes), weight-folded."""

    def __init__(self, vgrid: VelocityGrid, dirset: DirectionSet):
        self.vgrid = vgrid
        self.dirset = dirset
        nodes = vgrid.nodes
        w = vgrid.weights
        K = np.empty((dirset.n_dirs, N_CHANNELS, len(nodes)), dtype=np.float64)
        for d, omega in enumerate(dirset.dirs_flat):
            K[d] = _channel_kernels(nodes, omega).T
        self.K = K
        self.Kw = (K * w[None, None, :]).astype(np.float64)

    def contract(self, f_vals: np.ndarray) -> np.ndarray:
        """f_vals (..., n_v) -> channel values (..., n_dirs, N_CHANNELS)."""
        flat = np.asarray(f_vals, dtype=np.float64).reshape(-1, self.Kw.shape[-1])
        out = flat @ self.Kw.reshape(-1, self.Kw.shape[-1]).T
        return out.reshape(f_vals.shape[:-1] + (self.dirset.n_dirs, N_CHANNELS))

    def contract_at(self, f_vals: np.ndarray) -> np.ndarray:
        """Direction-aligned contraction: f_vals (..., n_dirs, n_v) -> (..., n_dirs, N_CHANNELS)."""
        return np.einsum("dcv,...dv->...dc", self.Kw, np.asarray(f_vals, dtype=np.float64))

    def init_sphere_tables(self, G_values: np.ndarray):
        """kappa_E, kappa_B (n_dirs, 3): initial-slice kernels contracted with one G."""
        w = self.vgrid.weights * np.asarray(G_values, dtype=float)
        nodes = self.vgrid.nodes
        kE = np.empty((self.dirset.n_dirs, 3))
        kB = np.empty((self.dirset.n_dirs, 3))
        for d, omega in enumerate(self.dirset.dirs_flat):
            kE[d] = w @ initial_sphere_E(nodes, omega)
            kB[d] = w @ initial_sphere_B(nodes, omega)
        return kE, kB


class ContractionTable:
    """Per-sweep channel contractions of f on (time levels x grid nodes x directions)."""

    def __init__(self, grid: SpatialGrid, times, kernels: ChannelKernels, f_table):
        """f_table: (n_t, n_nodes, n_v) array (float32 ok) of f on the grid."""
        self.grid = grid
        self.times = np.asarray(times, dtype=float)
        self.kernels = kernels
        n_t, n_nodes, n_v = f_table.shape
        Kmat = kernels.Kw.reshape(-1, n_v).T.astype(np.float32)  # (n_v, n_dirs*N_CH)
        C = np.empty((n_t, n_nodes, kernels.dirset.n_dirs * N_CHANNELS), dtype=np.float32)
        for k in range(n_t):
            C[k] = np.asarray(f_table[k], dtype=np.float32) @ Kmat
        self.C = C.reshape(n_t, n_nodes, kernels.dirset.n_dirs, N_CHANNELS)
        self._flat = self.C.reshape(n_t, n_nodes, -1)
        self._dt = float(self.times[1] - self.times[0]) if n_t > 1 else 1.0

    def _time_pair(self, tp):
        ft = (float(tp) - float(self.times[0])) / self._dt
        ft = min(max(ft, 0.0), len(self.times) - 1.0)
        k0 = min(int(ft), max(len(self.times) - 2, 0))
        tau = min(max(ft - k0, 0.0), 1.0)
        return k0, tau

    def sample_cone(self, tp: float, centers: np.ndarray, radius: float) -> np.ndarray:
        """Direction-aligned channel values at y = centers + radius * dirs.

        Returns (n_b, n_dirs, N_CHANNELS); trilinear in space, linear in time.
        The time blend happens on the table once per call, so the hot loop is
        eight weighted corner gathers in float32.
        """
        dirs = self.kernels.dirset.dirs_flat
        n_dirs = dirs.shape[0]
        pos = centers[:, None, :] + radius * dirs[None, :, :]
        idx, w = trilinear_corners(self.grid, pos)      # (n_b, n_dirs, 8)
        k0, tau = self._time_pair(tp)
        if tau > 0.0 and len(self.times) > 1:
            Ct = self.C[k0] * np.float32(1.0 - tau)
            Ct += self.C[k0 + 1] * np.float32(tau)
        else:
            Ct = self.C[k0]
        flat = Ct.reshape(-1, N_CHANNELS)
        d_ar = np.arange(n_dirs, dtype=np.int64)[None, :]
        w32 = w.astype(np.float32)
        out = np.zeros((len(centers), n_dirs, N_CHANNELS), dtype=np.float32)
        for c in range(8):
            comp = idx[:, :, c] * n_dirs + d_ar
            out += w32[:, :, c, None] * flat[comp]
        return out.astype(np.float64)

    def sample_wall(self, tp: float, pts_par: np.ndarray) -> np.ndarray:
        """Channel values on the wall plane at parallel points (..., 2).

        Returns (..., n_mu, n_phi, N_CHANNELS): all base directions, so the
        caller can interpolate in mu / select phi for disk-node directions.
        """
        g = self.grid
        pts = np.asarray(pts_par, dtype=float)
        fx = np.clip((pts[..., 0] + g.Lx) / g.dx, 0.0, g.nx - 1.0)
        fy = np.clip((pts[..., 1] + g.Lx) / g.dy, 0.0, g.ny - 1.0)
        i0 = np.minimum(fx.astype(np.int64), g.nx - 2)
        j0 = np.minimum(fy.astype(np.int64), g.ny - 2)
        tx = (fx - i0)[..., None, None]
        ty = (fy - j0)[..., None, None]
        k0, tau = self._time_pair(tp)

        def level(k):
            tab = self.C[k].reshape(g.nx, g.ny, g.nz, -1)[:, :, 0, :]
            v00 = tab[i0, j0].astype(np.float64)
            v10 = tab[i0 + 1, j0].astype(np.float64)
            v01 = tab[i0, j0 + 1].astype(np.float64)
            v11 = tab[i0 + 1, j0 + 1].astype(np.float64)
            ax = tx.reshape(tx.shape[:-2] + (1,))
            ay = ty.reshape(ty.shape[:-2] + (1,))
            return (
                v00 * (1 - ax) * (1 - ay)
                + v10 * ax * (1 - ay)
                + v01 * (1 - ax) * ay
                + v11 * ax * ay
            )

        out = level(k0) * (1.0 - tau)
        if tau > 0.0 and len(self.times) > 1:
            out = out + level(k0 + 1) * tau
        ds = self.kernels.dirset
        return out.reshape(pts.shape[:-1] + (ds.n_mu, ds.n_phi, N_CHANNELS))


class DirectSource:
    """Channel contractions straight from an analytic evaluator f(t, X, v_nodes)."""

    def __init__(self, kernels: ChannelKernels, f_eval: Callable):
        self.kernels = kernels
        self.f_eval = f_eval

    def sample_cone(self, tp, centers, radius):
        dirs = self.kernels.dirset.dirs_flat
        pos = centers[:, None, :] + radius * dirs[None, :, :]
        f_vals = self.f_eval(tp, pos.reshape(-1, 3), self.kernels.vgrid.nodes)
        f_vals = np.asarray(f_vals, dtype=float).reshape(len(centers), len(dirs), -1)
        return self.kernels.contract_at(f_vals)

    def sample_wall(self, tp, pts_par):
        pts = np.asarray(pts_par, dtype=float)
        X = np.zeros(pts.shape[:-1] + (3,))
        X[..., :2] = pts
        f_vals = self.f_eval(tp, X.reshape(-1, 3), self.kernels.vgrid.nodes)
        f_vals = np.asarray(f_vals, dtype=float).reshape(X.shape[:-1] + (-1,))
        out = self.kernels.contract(f_vals)
        ds = self.kernels.dirset
        return out.reshape(pts.shape[:-1] + (ds.n_mu, ds.n_phi, N_CHANNELS))


def neumann_boundary_term(
    t: float,
    x: np.ndarray,
    rho_trace: Callable,
    n_radial: int = 16,
    n_psi: int = 16,
) -> float:
    """w(t, x) = -2 int_{disk} rho(t - r, y_par) / r dy_par, r = sqrt(|y-x|_par^2 + x3^2).

    The 1/r weight is absorbed by the polar Jacobian, leaving a smooth
    integrand; an empty retarded disk (x3 >= t) returns exactly zero.
    ``rho_trace(t, x_par)`` must accept broadcast arrays.
    """
    x = np.asarray(x, dtype=float)
    x3 = float(x[2])
    if x3 >= t:
        return 0.0
    R = np.sqrt(t * t - x3 * x3)
    xs, ws = leggauss(n_radial)
    s = 0.5 * R * (xs + 1.0)
    w_s = 0.5 * R * ws
    psi = 2.0 * np.pi * np.arange(n_psi) / n_psi
    y_par = np.empty((n_radial, n_psi, 2))
    y_par[..., 0] = x[0] + s[:, None] * np.cos(psi)[None, :]
    y_par[..., 1] = x[1] + s[:, None] * np.sin(psi)[None, :]
    r = np.sqrt(s ** 2 + x3 ** 2)
    tp = t - r
    rho = np.asarray(rho_trace(tp[:, None] * np.ones_like(psi)[None, :], y_par), dtype=float)
    integral = np.sum(w_s[:, None] * (s / r)[:, None] * rho * (2.0 * np.pi / n_psi))
    return float(-2.0 * integral)


@dataclass
class GSConfig:
    quad: GSQuadrature
    source_margin: float = 0.0     # sources vanish within this distance of the box edge
    strict_cone: bool = True


class GSAssembler:
    """Assembles E and B at batches of targets from all representation terms."""

    def __init__(
        self,
        env: Environment,
        grid: SpatialGrid,
        init_data: InitialFieldData,
        source,                      # ContractionTable or DirectSource
        hist: Optional[SourceHistory],
        frozen_fields,               # callable (t, X) -> (E, B) of the previous iterate
        kernels: ChannelKernels,
        config: GSConfig,
        f0_separable: Optional[SeparableF0] = None,
        f0_general: Optional[Callable] = None,   # (X, v_nodes) -> (..., n_v)
    ):
        self.env = env
        self.grid = grid
        self.init_data = init_data
        self.source = source
        self.hist = hist
        self.frozen_fields = frozen_fields
        self.kernels = kernels
        self.cfg = config
        self.dirset = kernels.dirset
        self.quad = config.quad
        self.f0_separable = f0_separable
        self.f0_general = f0_general
        if f0_separable is not None:
            self._init_tables = []
            for term in f0_separable.terms:
                Gv = term.G(kernels.vgrid.nodes)
                kE, kB = kernels.init_sphere_tables(Gv)
                self._init_tables.append((term.n, kE, kB))
        else:
            self._init_tables = None

    # -- helpers ----------------------------------------------------------

    def _check_cone(self, t, X):
        if not self.cfg.strict_cone:
            return
        g = self.grid
        m = self.cfg.source_margin
        over = max(
            float(np.max(np.abs(X[:, 0]) + t)) - (g.Lx + m),
            float(np.max(np.abs(X[:, 1]) + t)) - (g.Lx + m),
            float(np.max(X[:, 2] + t)) - (g.Lz + m),
        )
        if over > 1e-12:
            raise LightConeError(
                f"light cone of radius t={t:.4g} leaves the truncated box plus "
                f"source margin {m:.4g}; enlarge the domain to at least "
                f"Lx >= {g.Lx + over:.4g} (or declare a larger support margin)"
            )

    def _clip_sum(self, vals, w_mu):
        """vals (n_b, n_dirs, ...) with dirs (mu-major); w_mu (n_b, n_mu)."""
        ds = self.dirset
        v = vals.reshape(vals.shape[0], ds.n_mu, ds.n_phi, *vals.shape[2:])
        return np.einsum("bm,bmp...->b...", w_mu, v) * ds.w_phi

    def _s_combo(self, ch, tp, pos):
        """S-term integrand: A_i . (E' + Ee e3 - g e3) + D_i . (B' + Be e3), per direction."""
        Ef, Bf = self.frozen_fields(tp, pos)
        cvec = Ef + (self.env.Ee - self.env.g) * E3_UNIT
        btot = Bf + self.env.Be * E3_UNIT
        A_E = ch[..., CH_SEA].reshape(ch.shape[:-1] + (3, 3))
        D_E = ch[..., CH_SED].reshape(ch.shape[:-1] + (3, 3))
        A_B = ch[..., CH_SBA].reshape(ch.shape[:-1] + (3, 3))
        D_B = ch[..., CH_SBD].reshape(ch.shape[:-1] + (3, 3))
        sE = np.einsum("...im,...m->...i", A_E, cvec) + np.einsum("...im,...m->...i", D_E, btot)
        sB = np.einsum("...im,...m->...i", A_B, cvec) + np.einsum("...im,...m->...i", D_B, btot)
        return sE, sB

    # -- term groups -------------------------------------------------------

    def _kirchhoff(self, t, X, E_out, B_out):
        ds = self.dirset
        x3 = X[:, 2]
        for image in (False, True):
            centers = X.copy()
            if image:
                centers[:, 2] = -centers[:, 2]
                c = np.clip(x3 / t, -1.0, 1.0)
            else:
                c = np.clip(-x3 / t, -1.0, 1.0)
            w_mu = ds.clip_weights(c)
            if not np.any(w_mu):
                continue
            pos = centers[:, None, :] + t * ds.dirs_flat[None, :, :]
            payE = self.init_data.kirchhoff_payload("E", t, pos, centers[:, None, :])
            payB = self.init_data.kirchhoff_payload("B", t, pos, centers[:, None, :])
            sumE = self._clip_sum(payE, w_mu) / (4.0 * np.pi)
            sumB = self._clip_sum(payB, w_mu) / (4.0 * np.pi)
            if image:
                E_out -= IOTA * sumE
                B_out += IOTA * sumB
            else:
                E_out += sumE
                B_out += sumB

    def _bulk_and_s(self, t, X, E_out, B_out):
        ds = self.dirset
        xr, wr = leggauss(self.quad.n_r)
        radii = 0.5 * t * (xr + 1.0)
        w_r = 0.5 * t * wr
        x3 = X[:, 2]
        for r_j, w_j in zip(radii, w_r):
            tp = t - r_j
            for image in (False, True):
                centers = X.copy()
                if image:
                    centers[:, 2] = -centers[:, 2]
                    c = x3 / r_j
                    if np.all(c >= 1.0):
                        continue
                else:
                    c = -x3 / r_j
                w_mu = ds.clip_weights(c)
                ch = self.source.sample_cone(tp, centers, r_j)
                pos = centers[:, None, :] + r_j * ds.dirs_flat[None, :, :]
                sE, sB = self._s_combo(ch, tp, pos)
                bulkE = self._clip_sum(ch[..., CH_BULK_E], w_mu)
                bulkB = self._clip_sum(ch[..., CH_BULK_B], w_mu)
                sE_c = self._clip_sum(sE, w_mu)
                sB_c = self._clip_sum(sB, w_mu)
                if image:
                    E_out += IOTA * (-w_j * bulkE + w_j * r_j * sE_c)
                    B_out += IOTA * (w_j * bulkB + w_j * r_j * sB_c)
                else:
                    E_out += w_j * bulkE - w_j * r_j * sE_c
                    B_out += w_j * bulkB + w_j * r_j * sB_c

    def _initial_f_sphere(self, t, X, E_out, B_out):
        ds = self.dirset
        x3 = X[:, 2]
        if self._init_tables is None and self.f0_general is None:
            return
        for image in (False, True):
            centers = X.copy()
            if image:
                centers[:, 2] = -centers[:, 2]
                c = np.clip(x3 / t, -1.0, 1.0)
            else:
                c = np.clip(-x3 / t, -1.0, 1.0)
            w_mu = ds.clip_weights(c)
            if not np.any(w_mu):
                continue
            pos = centers[:, None, :] + t * ds.dirs_flat[None, :, :]
            if self._init_tables is not None:
                sumE = np.zeros((len(X), 3))
                sumB = np.zeros((len(X), 3))
                for n_fn, kE, kB in self._init_tables:
                    nv = n_fn(pos)
                    sumE += self._clip_sum(nv[..., None] * kE[None, :, :], w_mu)
                    sumB += self._clip_sum(nv[..., None] * kB[None, :, :], w_mu)
            else:
                f_vals = self.f0_general(pos.reshape(-1, 3), self.kernels.vgrid.nodes)
                f_vals = np.asarray(f_vals, dtype=float).reshape(len(X), ds.n_dirs, -1)
                w = self.kernels.vgrid.weights
                nodes = self.kernels.vgrid.nodes
                kE_dir = np.empty((ds.n_dirs, f_vals.shape[-1], 3))
                kB_dir = np.empty_like(kE_dir)
                for d, omega in enumerate(ds.dirs_flat):
                    kE_dir[d] = initial_sphere_E(nodes, omega)
                    kB_dir[d] = initial_sphere_B(nodes, omega)
                sumE = self._clip_sum(np.einsum("bdv,v,dvi->bdi", f_vals, w, kE_dir), w_mu)
                sumB = self._clip_sum(np.einsum("bdv,v,dvi->bdi", f_vals, w, kB_dir), w_mu)
            if image:
                E_out += IOTA * t * sumE
                B_out += IOTA * t * sumB
            else:
                E_out -= t * sumE
                B_out += t * sumB

    def _disk_terms(self, t, X, E_out, B_out):
        ds = self.dirset
        x3 = X[:, 2]
        mask = x3 < t - 1e-14
        if not np.any(mask) or self.hist is None:
            return
        Xm = X[mask]
        x3m = Xm[:, 2]
        R = np.sqrt(t * t - x3m * x3m)
        xs, wns = leggauss(self.quad.n_disk_r)
        psi = ds.phi
        n_psi = ds.n_phi
        accE = np.zeros((len(Xm), 3))
        accB = np.zeros((len(Xm), 3))
        for q in range(self.quad.n_disk_r):
            s = 0.5 * R * (xs[q] + 1.0)              # (n_bm,)
            w_s = 0.5 * R * wns[q]
            r = np.sqrt(s ** 2 + x3m ** 2)
            tp = t - r                               # (n_bm,)
            y_par = np.empty((len(Xm), n_psi, 2))
            y_par[..., 0] = Xm[:, 0, None] + s[:, None] * np.cos(psi)[None, :]
            y_par[..., 1] = Xm[:, 1, None] + s[:, None] * np.sin(psi)[None, :]
            # traces of rho and J for the Neumann terms
            rho_tr = self.hist.interp_wall_rho(tp[:, None], y_par)
            J1_tr = self.hist.interp_wall_J(tp[:, None], y_par, 0)
            J2_tr = self.hist.interp_wall_J(tp[:, None], y_par, 1)
            geom = (w_s * s / r)[:, None] * ds.w_phi
            accE[:, 2] += -2.0 * np.sum(geom * rho_tr, axis=1)
            accB[:, 0] += -2.0 * np.sum(geom * J2_tr, axis=1)
            accB[:, 1] += 2.0 * np.sum(geom * J1_tr, axis=1)
            # f-trace disk kernels at the true node directions
            ch_wall = self._wall_channels(tp, y_par)  # (n_bm, n_psi, n_mu, N_CH)
            mu_down = -x3m / r
            Ldown = ds.interp_weights(mu_down)        # (n_bm, n_mu)
            Lup = ds.interp_weights(x3m / r)
            bdE_dn = np.einsum("bm,bpmc->bpc", Ldown, ch_wall[..., CH_BDRY_E])
            bdE_up = np.einsum("bm,bpmc->bpc", Lup, ch_wall[..., CH_BDRY_E])
            bdB_dn = np.einsum("bm,bpmc->bpc", Ldown, ch_wall[..., CH_BDRY_B])
            bdB_up = np.einsum("bm,bpmc->bpc", Lup, ch_wall[..., CH_BDRY_B])
            accE += np.sum(geom[..., None] * (bdE_dn - IOTA * bdE_up), axis=1)
            accB += np.sum(geom[..., None] * (bdB_dn + IOTA * bdB_up), axis=1)
        E_out[mask] += accE
        B_out[mask] += accB

    def _wall_channels(self, tp, y_par):
        """Wall channel values arranged (n_b, n_psi, n_mu, N_CH) with psi = phi grid."""
        n_b, n_psi = y_par.shape[:2]
        vals = np.empty((n_b, n_psi, self.dirset.n_mu, N_CHANNELS))
        for b in range(n_b):
            ch = self.source.sample_wall(float(tp[b]), y_par[b])  # (n_psi, n_mu, n_phi, N_CH)
            sel = np.arange(n_psi)
            vals[b] = ch[sel, :, sel, :].reshape(n_psi, self.dirset.n_mu, N_CHANNELS)
        return vals

    # -- public ------------------------------------------------------------

    def eval_batch(self, t: float, X: np.ndarray):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if t <= 1e-14:
            return self.init_data.E0(X), self.init_data.B0(X)
        self._check_cone(t, X)
        E_out = np.zeros((len(X), 3))
        B_out = np.zeros((len(X), 3))
        self._kirchhoff(t, X, E_out, B_out)
        self._bulk_and_s(t, X, E_out, B_out)
        self._initial_f_sphere(t, X, E_out, B_out)
        self._disk_terms(t, X, E_out, B_out)
        return E_out, B_out

    def eval_point(self, t, x):
        E, B = self.eval_batch(t, np.asarray(x, float)[None, :])
        return E[0], B[0]

    def eval_E(self, i: int, t, x) -> float:
        """Component i (1-based) of E at (t, x)."""
        return float(self.eval_point(t, x)[0][i - 1])

    def eval_B(self, i: int, t, x) -> float:
        return float(self.eval_point(t, x)[1][i - 1])

    def eval_state(self, times, chunk: int = 256) -> FieldState:
        nodes = self.grid.nodes()
        times = np.asarray(times, dtype=float)
        shape = (len(times),) + self.grid.shape + (3,)
        E = np.zeros(shape)
        B = np.zeros(shape)
        for k, t in enumerate(times):
            rowsE = np.empty((len(nodes), 3))
            rowsB = np.empty((len(nodes), 3))
            for lo in range(0, len(nodes), chunk):
                sl = slice(lo, min(lo + chunk, len(nodes)))
                rowsE[sl], rowsB[sl] = self.eval_batch(float(t), nodes[sl])
            E[k] = rowsE.reshape(self.grid.shape + (3,))
            B[k] = rowsB.reshape(self.grid.shape + (3,))
        return FieldState(self.grid, times, E, B)
