"""Spatial grid, time-stamped field states, and interpolating field evaluators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform tensor grid on [-Lx, Lx]^2 x [0, Lz]."""

    Lx: float
    Lz: float
    nx: int
    ny: int
    nz: int

    @property
    def x1(self):
        return np.linspace(-self.Lx, self.Lx, self.nx)

    @property
    def x2(self):
        return np.linspace(-self.Lx, self.Lx, self.ny)

    @property
    def x3(self):
        return np.linspace(0.0, self.Lz, self.nz)

    @property
    def dx(self):
        return 2 * self.Lx / (self.nx - 1)

    @property
    def dy(self):
        return 2 * self.Lx / (self.ny - 1)

    @property
    def dz(self):
        return self.Lz / (self.nz - 1)

    @property
    def shape(self):
        return (self.nx, self.ny, self.nz)

    def nodes(self) -> np.ndarray:
        """All grid nodes as an (nx*ny*nz, 3) array in C order."""
        X1, X2, X3 = np.meshgrid(self.x1, self.x2, self.x3, indexing="ij")
        return np.stack([X1, X2, X3], axis=-1).reshape(-1, 3)

    def fractional_index(self, X: np.ndarray):
        """Clamped fractional indices of positions X (..., 3) for trilinear work."""
        fx = (X[..., 0] + self.Lx) / self.dx
        fy = (X[..., 1] + self.Lx) / self.dy
        fz = X[..., 2] / self.dz
        fx = np.clip(fx, 0.0, self.nx - 1.0)
        fy = np.clip(fy, 0.0, self.ny - 1.0)
        fz = np.clip(fz, 0.0, self.nz - 1.0)
        return fx, fy, fz


def trilinear_corners(grid: SpatialGrid, X: np.ndarray):
    """Corner flat-indices + weights for trilinear interpolation, shapes (..., 8)."""
    fx, fy, fz = grid.fractional_index(X)
    i0 = np.minimum(fx.astype(np.int64), grid.nx - 2)
    j0 = np.minimum(fy.astype(np.int64), grid.ny - 2)
    k0 = np.minimum(fz.astype(np.int64), grid.nz - 2)
    tx = fx - i0
    ty = fy - j0
    tz = fz - k0
    wx = np.stack([1.0 - tx, tx], axis=-1)
    wy = np.stack([1.0 - ty, ty], axis=-1)
    wz = np.stack([1.0 - tz, tz], axis=-1)
    w = (wx[..., :, None, None] * wy[..., None, :, None] * wz[..., None, None, :]).reshape(
        *fx.shape, 8
    )
    base = (i0 * grid.ny + j0) * grid.nz + k0
    offs = np.array(
        [
            0,
            1,
            grid.nz,
            grid.nz + 1,
            grid.ny * grid.nz,
            grid.ny * grid.nz + 1,
            (grid.ny + 1) * grid.nz,
            (grid.ny + 1) * grid.nz + 1,
        ],
        dtype=np.int64,
    )
    idx = base[..., None] + offs
    return idx, w


@dataclass
class FieldState:
    """E and B sampled on the grid at uniform time levels.

    Arrays have shape (n_t, nx, ny, nz, 3).  ``wall`` views give the x3 = 0
    traces used by the kinetic weight and the boundary-condition audits.
    """

    grid: SpatialGrid
    times: np.ndarray
    E: np.ndarray
    B: np.ndarray

    def wall_E3(self):
        return self.E[:, :, :, 0, 2]

    def wall_B1(self):
        return self.B[:, :, :, 0, 0]

    def wall_B2(self):
        return self.B[:, :, :, 0, 1]

    def sup_diff(self, other: "FieldState"):
        dE = float(np.max(np.abs(self.E - other.E)))
        dB = float(np.max(np.abs(self.B - other.B)))
        return dE, dB

    @classmethod
    def zeros(cls, grid: SpatialGrid, times):
        times = np.asarray(times, dtype=float)
        shape = (len(times),) + grid.shape + (3,)
        return cls(grid, times, np.zeros(shape), np.zeros(shape))

    @classmethod
    def from_analytic(cls, grid: SpatialGrid, times, e_fn, b_fn):
        times = np.asarray(times, dtype=float)
        nodes = grid.nodes()
        E = np.stack([e_fn(t, nodes).reshape(grid.shape + (3,)) for t in times])
        B = np.stack([b_fn(t, nodes).reshape(grid.shape + (3,)) for t in times])
        return cls(grid, times, E, B)


class FieldEvaluator:
    """Callable (t, X) -> (E, B): trilinear in space, linear in time.

    Times below the first level clamp to it (the fields extend backward as
    their initial values); positions clamp to the box, which is exact whenever
    the data is supported a light-cone margin inside the box.  Time-constant
    states (the initial iterate) collapse to a static fast path.
    """

    def __init__(self, state: FieldState):
        self.state = state
        self.grid = state.grid
        n_t = len(state.times)
        EB = np.concatenate(
            [state.E.reshape(n_t, -1, 3), state.B.reshape(n_t, -1, 3)], axis=-1
        ).astype(np.float32)
        self._n_nodes = EB.shape[1]
        self._static = n_t == 1 or bool(
            np.array_equal(state.E[0], state.E[-1]) and np.array_equal(state.B[0], state.B[-1])
            and np.array_equal(state.E[0], state.E[n_t // 2])
            and np.array_equal(state.B[0], state.B[n_t // 2])
        )
        self._EB0 = np.ascontiguousarray(EB[0])
        self._EB = EB.reshape(-1, 6)
        self._t0 = float(state.times[0])
        self._dt = float(state.times[1] - state.times[0]) if n_t > 1 else 1.0
        self._nt = n_t

    def __call__(self, t, X):
        X = np.asarray(X, dtype=float)
        idx, w = trilinear_corners(self.grid, X)
        out = np.zeros(X.shape[:-1] + (6,))
        if self._static:
            for c in range(8):
                out += w[..., c, None] * self._EB0[idx[..., c]]
            return out[..., :3], out[..., 3:]
        ft = (np.asarray(t, dtype=float) - self._t0) / self._dt
        ft = np.clip(ft, 0.0, self._nt - 1.0)
        k0 = np.minimum(ft.astype(np.int64), self._nt - 2)
        tau = np.clip(ft - k0, 0.0, 1.0)
        k0 = np.broadcast_to(k0, X.shape[:-1])
        tau = np.broadcast_to(tau, X.shape[:-1])[..., None]
        base0 = k0 * self._n_nodes
        base1 = base0 + self._n_nodes
        for c in range(8):
            rows0 = self._EB[base0 + idx[..., c]]
            rows1 = self._EB[base1 + idx[..., c]]
            out += w[..., c, None] * (rows0 + tau * (rows1 - rows0))
        return out[..., :3], out[..., 3:]

    def grad_sup_estimate(self):
        """Sup of centered-difference field gradients over the grid (C1 surrogate)."""
        g = self.grid
        sup = 0.0
        for arr in (self.state.E, self.state.B):
            for ax, h in ((1, g.dx), (2, g.dy), (3, g.dz)):
                d = np.gradient(arr, h, axis=ax)
                sup = max(sup, float(np.max(np.abs(d))))
        return sup


class AnalyticFields:
    """Field evaluator from closed-form callables (used by oracles and tests)."""

    def __init__(self, e_fn=None, b_fn=None):
        self.e_fn = e_fn
        self.b_fn = b_fn

    def __call__(self, t, X):
        X = np.asarray(X, dtype=float)
        shape = X.shape
        E = self.e_fn(t, X) if self.e_fn else np.zeros(shape)
        B = self.b_fn(t, X) if self.b_fn else np.zeros(shape)
        return np.asarray(E, float), np.asarray(B, float)


ZERO_FIELDS = AnalyticFields()
