"""Batched relativistic characteristic tracing with wall closures.

The backward pull-back of f is organized as a vectorized loop over ray
batches: all rays advance with per-ray RK4 steps; wall crossings are refined
by bisection on the crossing step; closure handling (inflow lookup, specular
reflection, diffuse resampling) mutates the batch in place.  The same engine
serves the single-point evaluate_f API and the per-sweep phase-space tables.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import Environment, lorentz_gamma, vhat, E3_UNIT

EPS_GRAZE = 1e-8
TOL_EXIT = 1e-10


def force_eval(fields, env: Environment, s, X, V):
    E, B = fields(s, X)
    vh = vhat(V)
    return E + env.e_ext + np.cross(vh, B + env.b_ext) - env.g * E3_UNIT


def rk4_step(fields, env, s, X, V, ds, k1v=None):
    """One classical RK4 step of dX/ds = vhat(V), dV/ds = F(s, X, V).

    ``ds`` may be a per-ray array (negative for backward steps); ``k1v`` lets
    the caller reuse an already-computed stage-one force.
    """
    ds_ = np.asarray(ds, dtype=float)
    dse = ds_[..., None] if ds_.ndim else ds_
    k1x = vhat(V)
    if k1v is None:
        k1v = force_eval(fields, env, s, X, V)
    k2x = vhat(V + 0.5 * dse * k1v)
    k2v = force_eval(fields, env, s + 0.5 * ds_, X + 0.5 * dse * k1x, V + 0.5 * dse * k1v)
    k3x = vhat(V + 0.5 * dse * k2v)
    k3v = force_eval(fields, env, s + 0.5 * ds_, X + 0.5 * dse * k2x, V + 0.5 * dse * k2v)
    k4x = vhat(V + dse * k3v)
    k4v = force_eval(fields, env, s + ds_, X + dse * k3x, V + dse * k3v)
    Xn = X + dse / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
    Vn = V + dse / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    return Xn, Vn


def step_size(env, V, fields, s, X, h_max, step_scale=1e-2):
    """Per-ray step cap min(h_max, step_scale * <v> / (1 + |F|))."""
    F = force_eval(fields, env, s, X, V)
    fnorm = np.linalg.norm(F, axis=-1)
    return np.minimum(h_max, step_scale * lorentz_gamma(V) / (1.0 + fnorm))


def integrate(t, x, v, s_target, fields, env: Environment, h_max=1e-2, max_steps=100_000,
              step_scale=1e-2):
    """Integrate the characteristic ODE from time t to s_target (either direction).

    Returns (X, V) at s_target; fourth-order accurate, no wall handling
    (caller keeps the trajectory inside the domain).  Vectorized over
    leading axes of x, v.
    """
    X = np.atleast_2d(np.asarray(x, dtype=float)).copy()
    V = np.atleast_2d(np.asarray(v, dtype=float)).copy()
    n = X.shape[0]
    s = np.full(n, float(t))
    sign = 1.0 if s_target >= t else -1.0
    for _ in range(max_steps):
        remaining = sign * (s_target - s)
        active = remaining > 0
        if not np.any(active):
            break
        h = np.minimum(step_size(env, V, fields, s, X, h_max, step_scale), remaining)
        h = np.where(active, h, 0.0)
        Xn, Vn = rk4_step(fields, env, s, X, V, sign * h)
        X = np.where(active[:, None], Xn, X)
        V = np.where(active[:, None], Vn, V)
        s = s + sign * h
    else:
        raise RuntimeError(
            f"integrate: step budget exhausted before reaching s={s_target} "
            f"(worst remaining {float(np.max(sign * (s_target - s))):.3e})"
        )
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return X[0], V[0]
    return X, V


@dataclass
class ExitEvent:
    t_b: float
    x_b: np.ndarray
    v_b: np.ndarray
    reached_initial_time: bool
    grazing: bool = False


@dataclass
class CycleRecord:
    """Bounce bookkeeping for specular/diffuse generalized characteristics.

    ``velocities`` holds the post-reflection launches; ``incoming`` the wall
    arrival states, so reflection exactness is checkable bit by bit.
    """

    times: list = field(default_factory=list)
    positions: list = field(default_factory=list)
    velocities: list = field(default_factory=list)
    incoming: list = field(default_factory=list)
    truncated: bool = False

    @property
    def n_bounces(self):
        return len(self.times)

    def add(self, t, x, v, v_in=None):
        self.times.append(float(t))
        self.positions.append(np.array(x))
        self.velocities.append(np.array(v))
        if v_in is not None:
            self.incoming.append(np.array(v_in))


@dataclass
class BoundaryClosure:
    """Wall closure for f: 'inflow' (profile g), 'diffuse' (T_w = 1), or 'specular'."""

    kind: str
    inflow_g: Callable = None            # (t, x, v) -> value on gamma_-
    c_mu: float = None                   # diffuse flux normalization
    n_mc: int = 64                       # diffuse samples per wall event
    k_max: int = 16                      # bounce budget

    def __post_init__(self):
        if self.kind not in ("inflow", "diffuse", "specular"):
            raise ValueError(f"unknown boundary closure {self.kind!r}")
        if self.kind == "inflow" and self.inflow_g is None:
            raise ValueError("inflow closure needs a boundary profile g")
        if self.kind == "diffuse" and self.c_mu is None:
            self.c_mu = flux_normalization()


def maxwellian(v) -> np.ndarray:
    """mu(v) = (2 pi)^{-3/2} exp(-|v|^2 / 2)."""
    v = np.asarray(v, dtype=float)
    return (2.0 * np.pi) ** -1.5 * np.exp(-0.5 * np.sum(v * v, axis=-1))


def flux_normalization(n_quad: int = 400) -> float:
    """c_mu with c_mu * int_{v3>0} vhat3 mu(v) dv = 1 (relativistic flux weight)."""
    from numpy.polynomial.legendre import leggauss

    # int_{v3>0} vhat3 mu dv = (2 pi)^{-3/2} * pi * int_0^inf r^3 e^{-r^2/2}/sqrt(1+r^2) dr
    xr, wr = leggauss(n_quad)
    rmax = 12.0
    r = 0.5 * rmax * (xr + 1.0)
    w = 0.5 * rmax * wr
    integral = np.sum(w * r ** 3 * np.exp(-0.5 * r ** 2) / np.sqrt(1.0 + r ** 2))
    return float(1.0 / ((2.0 * np.pi) ** -1.5 * np.pi * integral))


def diffuse_resample(rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw n wall-emission velocities with density prop. to vhat3 exp(-|v|^2/2) on v3 > 0.

    Acceptance-rejection from the classical flux Maxwellian (v3 Rayleigh,
    v_par normal) with acceptance probability 1/<v> <= 1.
    """
    out = np.empty((n, 3))
    filled = 0
    while filled < n:
        m = max(n - filled, 64)
        v = np.empty((m, 3))
        v[:, 0] = rng.normal(size=m)
        v[:, 1] = rng.normal(size=m)
        v[:, 2] = np.sqrt(-2.0 * np.log(rng.uniform(low=np.finfo(float).tiny, size=m)))
        accept = rng.uniform(size=m) < 1.0 / lorentz_gamma(v)
        v = v[accept]
        take = min(len(v), n - filled)
        out[filled : filled + take] = v[:take]
        filled += take
    return out


def _select_fields(field_list, depth):
    """Field evaluator for bounce depth k: iterate ell-1-k, clamped at the oldest."""
    idx = min(depth, len(field_list) - 1)
    return field_list[idx]


@dataclass
class PullbackStats:
    grazing_exits: int = 0
    truncated: int = 0
    wall_events: int = 0


class _Batch:
    """Mutable state of one backward pull-back batch."""

    def __init__(self, t, X, V, out_index, weight, inv_n, depth=None):
        n = len(X)
        self.s = np.full(n, float(t)) if np.isscalar(t) else np.asarray(t, float).copy()
        self.X = np.asarray(X, float).copy()
        self.V = np.asarray(V, float).copy()
        self.out = np.asarray(out_index, np.int64)
        self.w = np.asarray(weight, float).copy()
        self.inv_n = np.asarray(inv_n, float).copy()
        self.depth = (
            np.zeros(n, np.int64) if depth is None else np.asarray(depth, np.int64).copy()
        )


def pull_back_batch(
    t,
    X0,
    V0,
    field_list: Sequence,
    env: Environment,
    closure: BoundaryClosure,
    f0: Callable,
    rng: np.random.Generator = None,
    h_max: float = 1e-2,
    step_scale: float = 1e-2,
    stats: PullbackStats = None,
    max_rounds: int = 200_000,
):
    """Evaluate f at a batch of phase points by backward characteristics.

    ``field_list`` holds the frozen field evaluators indexed by bounce depth
    (element 0 drives the segment before the first wall hit; deeper bounces use
    later list entries, clamped at the last).  For a plain single-field run,
    pass a one-element list.  ``f0`` is the initial condition (x, v) -> value;
    the inflow profile rides on the closure.  Returns the (n,) array of values.
    """
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    V0 = np.atleast_2d(np.asarray(V0, dtype=float))
    n_out = len(X0)
    if stats is None:
        stats = PullbackStats()
    if rng is None:
        rng = np.random.default_rng(0)
    values = np.zeros(n_out)
    batch = _Batch(t, X0, V0, np.arange(n_out), np.ones(n_out), np.ones(n_out))

    # immediate wall starts: x3 = 0 with vhat3 >= 0 sits on the incoming data
    # surface (backward exit time zero); vhat3 < 0 traces into the domain.
    start_exit = _on_wall_mask(batch) & (vhat(batch.V)[:, 2] >= 0.0)
    _handle_wall_events(batch, start_exit, values, field_list, env, closure, f0, rng, stats)

    rounds = 0
    while len(batch.X) and rounds < max_rounds:
        rounds += 1
        batch = _advance(batch, values, field_list, env, closure, f0, rng, stats, h_max, step_scale)
    if len(batch.X):
        raise RuntimeError("pull_back_batch: round budget exhausted (stuck rays)")
    return values


def _on_wall_mask(batch):
    return batch.X[:, 2] <= 0.0


def _finalize_initial(batch, mask, values, f0):
    if not np.any(mask):
        return
    vals = f0(batch.X[mask], batch.V[mask])
    np.add.at(values, batch.out[mask], batch.w[mask] * batch.inv_n[mask] * np.asarray(vals, float))


def _compress(batch, keep):
    batch.s = batch.s[keep]
    batch.X = batch.X[keep]
    batch.V = batch.V[keep]
    batch.out = batch.out[keep]
    batch.w = batch.w[keep]
    batch.inv_n = batch.inv_n[keep]
    batch.depth = batch.depth[keep]


def _advance(batch, values, field_list, env, closure, f0, rng, stats, h_max, step_scale=1e-2):
    """One stepping round: RK4 for every live ray, then event handling."""
    n = len(batch.X)
    if n == 0:
        return batch
    # rays are grouped by depth so each group sees its own frozen field
    Xn = np.empty_like(batch.X)
    Vn = np.empty_like(batch.V)
    h = np.empty(n)
    for d in np.unique(batch.depth):
        sel = batch.depth == d
        fields = _select_fields(field_list, int(d))
        F1 = force_eval(fields, env, batch.s[sel], batch.X[sel], batch.V[sel])
        cap = step_scale * lorentz_gamma(batch.V[sel]) / (1.0 + np.linalg.norm(F1, axis=-1))
        hd = np.minimum(np.minimum(h_max, cap), batch.s[sel])
        hd = np.maximum(hd, 1e-14)
        Xs, Vs = rk4_step(fields, env, batch.s[sel], batch.X[sel], batch.V[sel], -hd, k1v=F1)
        Xn[sel], Vn[sel], h[sel] = Xs, Vs, hd

    crossed = Xn[:, 2] < 0.0
    sn = batch.s - h

    # bisection on the crossing step: refine the wall time to TOL_EXIT
    if np.any(crossed):
        idx = np.nonzero(crossed)[0]

        def _substep(frac):
            Xm = np.empty((len(idx), 3))
            Vm = np.empty((len(idx), 3))
            for d in np.unique(batch.depth[idx]):
                sel = batch.depth[idx] == d
                fields = _select_fields(field_list, int(d))
                Xs, Vs = rk4_step(
                    fields,
                    env,
                    batch.s[idx][sel],
                    batch.X[idx][sel],
                    batch.V[idx][sel],
                    -(frac[sel] * h[idx][sel]),
                )
                Xm[sel], Vm[sel] = Xs, Vs
            return Xm, Vm

        lo = np.zeros(len(idx))          # step fraction still above the wall
        hi = np.ones(len(idx))           # step fraction below the wall
        for _ in range(64):
            if np.all((hi - lo) * h[idx] <= TOL_EXIT):
                break
            mid = 0.5 * (lo + hi)
            Xm, _ = _substep(mid)
            below = Xm[:, 2] < 0.0
            hi = np.where(below, mid, hi)
            lo = np.where(below, lo, mid)
        frac = 0.5 * (lo + hi)
        Xw, Vw = _substep(frac)
        Xw[:, 2] = 0.0
        Xn[idx] = Xw
        Vn[idx] = Vw
        sn[idx] = batch.s[idx] - frac * h[idx]

    batch.s = sn
    batch.X = Xn
    batch.V = Vn

    # terminal: reached t = 0 without crossing
    done = (batch.s <= 1e-14) & ~crossed
    if np.any(done):
        batch.X[done, 2] = np.maximum(batch.X[done, 2], 0.0)
        _finalize_initial(batch, done, values, f0)
        keep = ~done
        _compress(batch, keep)
        crossed = crossed[keep]

    wall = crossed & (batch.s > 1e-14) if len(batch.X) else np.zeros(0, bool)
    # crossing found essentially at t=0: treat as initial-plane hit
    at0 = crossed & (batch.s <= 1e-14) if len(batch.X) else np.zeros(0, bool)
    if np.any(at0):
        batch.X[at0, 2] = 0.0
        _finalize_initial(batch, at0, values, f0)
        keep = ~at0
        _compress(batch, keep)
        wall = wall[keep]

    _handle_wall_events(batch, wall, values, field_list, env, closure, f0, rng, stats)
    return batch


def _handle_wall_events(batch, wall, values, field_list, env, closure, f0, rng, stats):
    """Apply the boundary closure to rays sitting on the wall."""
    if not np.any(wall):
        return
    stats.wall_events += int(np.sum(wall))
    vh3 = vhat(batch.V[wall])[:, 2]
    grazing = np.abs(vh3) < EPS_GRAZE
    stats.grazing_exits += int(np.sum(grazing))

    if closure.kind == "inflow":
        g = closure.inflow_g
        vals = g(batch.s[wall], batch.X[wall], batch.V[wall])
        np.add.at(
            values,
            batch.out[wall],
            batch.w[wall] * batch.inv_n[wall] * np.asarray(vals, float),
        )
        _compress(batch, ~wall)
        return

    over_budget = batch.depth[wall] + 1 > closure.k_max
    if closure.kind == "specular":
        # truncated or grazing rays fall back to the initial datum at the wall state
        fallback = over_budget | grazing
        stats.truncated += int(np.sum(over_budget))
        widx = np.nonzero(wall)[0]
        if np.any(fallback):
            sel = widx[fallback]
            vals = f0(batch.X[sel], batch.V[sel])
            np.add.at(values, batch.out[sel], batch.w[sel] * batch.inv_n[sel] * np.asarray(vals, float))
        cont = widx[~fallback]
        batch.V[cont, 2] *= -1.0
        batch.depth[cont] += 1
        keep = np.ones(len(batch.X), bool)
        keep[widx[fallback]] = False
        _compress(batch, keep)
        return

    # diffuse: spawn n_mc resampled continuations per wall event
    fallback = over_budget | grazing
    stats.truncated += int(np.sum(over_budget))
    widx = np.nonzero(wall)[0]
    # grazing contacts (measure zero) take the initial-datum value, like the
    # specular convention; exhausted bounce budgets contribute the zero tail
    graze_only = grazing & ~over_budget
    if np.any(graze_only):
        sel = widx[graze_only]
        vals = f0(batch.X[sel], batch.V[sel])
        np.add.at(values, batch.out[sel], batch.w[sel] * batch.inv_n[sel] * np.asarray(vals, float))
    spawn = widx[~fallback]          # truncated tails contribute zero
    if len(spawn):
        n_mc = closure.n_mc
        mu_b = maxwellian(batch.V[spawn])
        emitted = diffuse_resample(rng, len(spawn) * n_mc).reshape(len(spawn), n_mc, 3)
        u = emitted.copy()
        u[:, :, 2] *= -1.0           # backward launch goes into the domain
        mu_u = maxwellian(u.reshape(-1, 3)).reshape(len(spawn), n_mc)
        w_new = (batch.w[spawn] * closure.c_mu * mu_b)[:, None] * (1.0 / (closure.c_mu * mu_u))
        child = _Batch(
            np.repeat(batch.s[spawn], n_mc),
            np.repeat(batch.X[spawn], n_mc, axis=0),
            u.reshape(-1, 3),
            np.repeat(batch.out[spawn], n_mc),
            w_new.reshape(-1),
            np.repeat(batch.inv_n[spawn] / n_mc, n_mc),
            depth=np.repeat(batch.depth[spawn] + 1, n_mc),
        )
        keep = np.ones(len(batch.X), bool)
        keep[widx] = False
        _compress(batch, keep)
        for name in ("s", "X", "V", "out", "w", "inv_n", "depth"):
            setattr(
                batch,
                name,
                np.concatenate([getattr(batch, name), getattr(child, name)], axis=0),
            )
    else:
        _compress(batch, ~wall)
