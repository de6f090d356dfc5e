"""Public characteristic-flow operations: exit detection, wall closures, f evaluation.

Built on the batched tracer in :mod:`trace`; these are the single-point /
small-batch entry points used by tests, audits, and the probe machinery.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .core import Environment, lorentz_gamma, vhat
from .trace import (
    EPS_GRAZE,
    TOL_EXIT,
    BoundaryClosure,
    CycleRecord,
    ExitEvent,
    PullbackStats,
    diffuse_resample,
    flux_normalization,
    integrate,
    maxwellian,
    pull_back_batch,
    rk4_step,
    step_size,
)

__all__ = [
    "BoundaryClosure",
    "CycleRecord",
    "ExitEvent",
    "integrate",
    "backward_exit",
    "specular_flow",
    "diffuse_resample",
    "flux_normalization",
    "maxwellian",
    "evaluate_f",
    "derived_rng",
    "tb_bound_audit",
    "specular_jacobian_audit",
]


def _march_to_wall(t, x, v, fields, env, h_max, max_steps=200_000):
    """March one trajectory backward until X3 crosses zero or s reaches 0.

    Returns (s_end, X, V, crossed).  The crossing time is bisected to TOL_EXIT.
    """
    s = float(t)
    X = np.asarray(x, dtype=float).copy()
    V = np.asarray(v, dtype=float).copy()
    for _ in range(max_steps):
        if s <= 1e-14:
            return 0.0, X, V, False
        h = float(min(step_size(env, V, fields, s, X, h_max), s))
        h = max(h, 1e-14)
        Xn, Vn = rk4_step(fields, env, s, X, V, -h)
        if Xn[2] < 0.0:
            lo, hi = 0.0, 1.0
            for _ in range(64):
                if (hi - lo) * h <= TOL_EXIT:
                    break
                mid = 0.5 * (lo + hi)
                Xm, _ = rk4_step(fields, env, s, X, V, -(mid * h))
                if Xm[2] < 0.0:
                    hi = mid
                else:
                    lo = mid
            frac = 0.5 * (lo + hi)
            Xw, Vw = rk4_step(fields, env, s, X, V, -(frac * h))
            Xw[2] = 0.0
            return s - frac * h, Xw, Vw, True
        X, V, s = Xn, Vn, s - h
    raise RuntimeError("backward march exceeded its step budget")


def backward_exit(t, x, v, fields, env: Environment, h_max: float = 1e-2) -> ExitEvent:
    """Backward exit time and exit state of the characteristic through (t, x, v).

    If the trace reaches s = 0 inside the domain, ``reached_initial_time`` is
    set and (X(0), V(0)) fill the exit slots.  A wall contact with
    |vhat_b3| < EPS_GRAZE is flagged grazing; the caller decides its fate.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if x[2] <= 0.0:
        vh3 = float(vhat(v)[2])
        if vh3 >= 0.0:
            return ExitEvent(0.0, x.copy(), v.copy(), False, grazing=abs(vh3) < EPS_GRAZE)
    s_end, X, V, crossed = _march_to_wall(t, x, v, fields, env, h_max)
    if not crossed:
        return ExitEvent(float(t), X, V, True)
    vh3 = float(vhat(V)[2])
    return ExitEvent(float(t) - s_end, X, V, False, grazing=abs(vh3) < EPS_GRAZE)


def specular_flow(t, x, v, s_target, fields, env: Environment, k_max: int = 64, h_max=1e-2):
    """Generalized specular characteristic: flow to s_target with wall reflections.

    Returns (X, V, record): the phase point at s_target and the CycleRecord of
    bounces.  v3 flips sign exactly at each wall hit; |v| is continuous there.
    """
    record = CycleRecord()
    s = float(t)
    X = np.asarray(x, dtype=float).copy()
    V = np.asarray(v, dtype=float).copy()
    backward = s_target < t
    if not backward:
        raise NotImplementedError("forward specular flow is not needed by the artifact")
    while s > s_target + 1e-14:
        s_end, Xw, Vw, crossed = _march_to_wall_target(s, X, V, s_target, fields, env, h_max)
        if not crossed:
            return Xw, Vw, record
        if record.n_bounces >= k_max:
            record.truncated = True
            return Xw, Vw, record
        Vr = Vw.copy()
        Vr[2] = -Vr[2]
        record.add(s_end, Xw, Vr, v_in=Vw)
        if abs(vhat(Vr)[2]) < EPS_GRAZE:
            record.truncated = True
            return Xw, Vr, record
        X, V, s = Xw, Vr, s_end
    return X, V, record


def _march_to_wall_target(t, x, v, s_target, fields, env, h_max, max_steps=200_000):
    """Like _march_to_wall but stops at s_target instead of 0."""
    s = float(t)
    X = np.asarray(x, dtype=float).copy()
    V = np.asarray(v, dtype=float).copy()
    for _ in range(max_steps):
        if s <= s_target + 1e-14:
            return s_target, X, V, False
        h = float(min(step_size(env, V, fields, s, X, h_max), s - s_target))
        h = max(h, 1e-14)
        Xn, Vn = rk4_step(fields, env, s, X, V, -h)
        if Xn[2] < 0.0:
            lo, hi = 0.0, 1.0
            for _ in range(64):
                if (hi - lo) * h <= TOL_EXIT:
                    break
                mid = 0.5 * (lo + hi)
                Xm, _ = rk4_step(fields, env, s, X, V, -(mid * h))
                if Xm[2] < 0.0:
                    hi = mid
                else:
                    lo = mid
            frac = 0.5 * (lo + hi)
            Xw, Vw = rk4_step(fields, env, s, X, V, -(frac * h))
            Xw[2] = 0.0
            return s - frac * h, Xw, Vw, True
        X, V, s = Xn, Vn, s - h
    raise RuntimeError("backward march exceeded its step budget")


def derived_rng(seed: int, t, x, v) -> np.random.Generator:
    """Reproducible per-call generator keyed on (seed, t, x, v)."""
    x = np.asarray(x, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    payload = struct.pack("<d3d3d", float(t), *x[:3], *v[:3])
    words = np.frombuffer(payload, dtype=np.uint32)
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *map(int, words)])
    return np.random.default_rng(ss)


def evaluate_f(
    t,
    x,
    v,
    fields,
    closure: BoundaryClosure,
    f0,
    env: Environment,
    seed: int = 0,
    h_max: float = 1e-2,
    stats: PullbackStats = None,
):
    """Density value f(t, x, v) by backward characteristics with the wall closure.

    ``fields`` is either one evaluator or a list indexed by bounce depth
    (Picard coupling to earlier iterates).  Diffuse closures average
    ``closure.n_mc`` stochastic cycles with a per-call generator derived from
    (seed, t, x, v), so results do not depend on scheduling.
    """
    field_list = fields if isinstance(fields, (list, tuple)) else [fields]
    rng = derived_rng(seed, t, x, v)
    vals = pull_back_batch(
        t,
        np.asarray(x, float)[None, :],
        np.asarray(v, float)[None, :],
        field_list,
        env,
        closure,
        f0,
        rng=rng,
        h_max=h_max,
        stats=stats,
    )
    return float(vals[0])


@dataclass
class TbBoundReport:
    max_ratio: float
    n_samples: int
    n_exits: int
    c0: float


def tb_bound_audit(samples, fields, env: Environment, c0: float, h_max=1e-2) -> TbBoundReport:
    """Measure sup over exits of [t_b / sup_s <V(s)>] / vhat_b3 (finite under the sign condition).

    ``samples`` is an iterable of (t, x, v).  The sign condition margin c0 must
    be positive: with a repellent or neutral wall force the bound has no
    content and the audit refuses to run.
    """
    if not c0 > 0.0:
        raise ValueError("tb_bound_audit requires a positive sign-condition margin c0")
    worst = 0.0
    n_exit = 0
    for (t, x, v) in samples:
        ev = backward_exit(t, x, v, fields, env, h_max=h_max)
        if ev.reached_initial_time or ev.grazing:
            continue
        n_exit += 1
        # sup <V> along the segment, sampled at a handful of intermediate times
        ts = np.linspace(t - ev.t_b, t, 9)
        gmax = 0.0
        for s in ts:
            _, V = integrate(t, x, v, s, fields, env, h_max=h_max)
            gmax = max(gmax, float(lorentz_gamma(V)))
        vb3 = float(vhat(ev.v_b)[2])
        ratio = (ev.t_b / gmax) / vb3
        worst = max(worst, ratio)
    if not np.isfinite(worst):
        raise RuntimeError("tb bound audit produced a non-finite ratio")
    return TbBoundReport(max_ratio=worst, n_samples=len(samples), n_exits=n_exit, c0=c0)


@dataclass
class JacobianReport:
    max_entry: float
    ratio_to_bound: float
    n_bounces: int
    skipped: bool


def specular_jacobian_audit(
    t, x, v, fields, env: Environment, h: float = 1e-5, alpha_gamma: float = None, K: float = 1.0
) -> JacobianReport:
    """Central-difference Jacobian of the specular flow at s = 0 versus its growth bound.

    Perturbs each of the six phase coordinates; a bounce landing within the
    differencing stencil of the grazing set makes the sample meaningless, so it
    is skipped (and reported).  ``alpha_gamma`` is alpha(t,x,v)*<v> used in the
    reference envelope <v> * exp(K / sqrt(alpha <v>)).
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    base_X, base_V, rec = specular_flow(t, x, v, 0.0, fields, env)
    cols = []
    for comp in range(6):
        dx = np.zeros(3)
        dv = np.zeros(3)
        if comp < 3:
            dx[comp] = h
        else:
            dv[comp - 3] = h
        Xp, Vp, rp = specular_flow(t, x + dx, v + dv, 0.0, fields, env)
        Xm, Vm, rm = specular_flow(t, x - dx, v - dv, 0.0, fields, env)
        if rp.n_bounces != rec.n_bounces or rm.n_bounces != rec.n_bounces:
            return JacobianReport(np.nan, np.nan, rec.n_bounces, skipped=True)
        cols.append(np.concatenate([(Xp - Xm), (Vp - Vm)]) / (2 * h))
    J = np.stack(cols, axis=1)
    max_entry = float(np.max(np.abs(J)))
    gamma = float(lorentz_gamma(v))
    if alpha_gamma is None:
        ratio = np.nan
    else:
        bound = gamma * np.exp(K / np.sqrt(max(alpha_gamma, 1e-300)))
        ratio = max_entry / bound
    return JacobianReport(max_entry, ratio, rec.n_bounces, skipped=False)
