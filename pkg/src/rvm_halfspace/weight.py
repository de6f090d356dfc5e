"""Kinetic weight: alpha(t, x, v), its boundary-field context, and audits.

alpha^2 = x3^2 + vhat3^2 - 2*F3(t, x_par, 0, v) * x3/<v>, with F3 the vertical
Lorentz force evaluated at the wall footprint of x.  Under the attractive-wall
sign condition the radicand is nonnegative, alpha vanishes exactly on the
grazing set, and alpha equals |vhat3| on the wall.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import Environment, lorentz_gamma, vhat


class SignConditionError(ValueError):
    """Raised when the attractive-wall margin fails and alpha is undefined."""


def _zero_trace(t, x_par):
    return np.zeros(np.broadcast(np.asarray(t), np.asarray(x_par)[..., 0]).shape)


@dataclass(frozen=True)
class WeightContext:
    """Boundary traces feeding alpha: E3 and (B1, B2) at x3 = 0, plus the ambient env.

    Traces are callables (t, x_par) -> scalar with x_par of shape (..., 2).
    Defaults are identically-zero traces (constant-ambient context).
    """

    env: Environment = field(default_factory=Environment)
    boundary_E3: Callable = None
    boundary_B1: Callable = None
    boundary_B2: Callable = None

    def traces(self, t, x_par):
        e3 = self.boundary_E3(t, x_par) if self.boundary_E3 else _zero_trace(t, x_par)
        b1 = self.boundary_B1(t, x_par) if self.boundary_B1 else _zero_trace(t, x_par)
        b2 = self.boundary_B2(t, x_par) if self.boundary_B2 else _zero_trace(t, x_par)
        return np.asarray(e3, float), np.asarray(b1, float), np.asarray(b2, float)

    def wall_force3(self, t, x_par, v):
        """F3(t, x_par, 0, v) = E3 + Ee + vhat1*B2 - vhat2*B1 - g at the wall."""
        e3, b1, b2 = self.traces(t, x_par)
        vh = vhat(v)
        return e3 + self.env.Ee + vh[..., 0] * b2 - vh[..., 1] * b1 - self.env.g


def alpha_squared(t, x, v, ctx: WeightContext) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    x3 = x[..., 2]
    vh3 = vhat(v)[..., 2]
    gamma = lorentz_gamma(v)
    f3 = ctx.wall_force3(t, x[..., :2], v)
    return x3 * x3 + vh3 * vh3 - 2.0 * f3 * x3 / gamma


def alpha(t, x, v, ctx: WeightContext) -> np.ndarray:
    """Kinetic weight; zero exactly on the grazing set, |vhat3| on the wall.

    Raises SignConditionError when the radicand goes negative beyond roundoff,
    which signals a violated attractive-wall condition at (t, x_par).
    """
    rad = alpha_squared(t, x, v, ctx)
    bad = rad < -1e-13
    if np.any(bad):
        worst = float(np.min(rad))
        raise SignConditionError(
            "alpha radicand negative (min %.3e): wall sign condition "
            "g - Ee - E3 - (vhat x B)_3 > 0 is violated at the sample" % worst
        )
    return np.sqrt(np.maximum(rad, 0.0))


def _clenshaw_sphere_rule(n_r, n_mu, n_phi, r_max):
    """Product rule on the ball |v| <= r_max: GL in radius and polar cosine, trapezoid in azimuth."""
    xr, wr = np.polynomial.legendre.leggauss(n_r)
    r = 0.5 * r_max * (xr + 1.0)
    wr = 0.5 * r_max * wr
    xmu, wmu = np.polynomial.legendre.leggauss(n_mu)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    wphi = np.full(n_phi, 2.0 * np.pi / n_phi)
    R, MU, PH = np.meshgrid(r, xmu, phi, indexing="ij")
    WT = (wr[:, None, None] * (R ** 2)) * wmu[None, :, None] * wphi[None, None, :]
    sin_t = np.sqrt(np.maximum(1.0 - MU ** 2, 0.0))
    pts = np.stack(
        [R * sin_t * np.cos(PH), R * sin_t * np.sin(PH), R * MU], axis=-1
    )
    return pts.reshape(-1, 3), WT.ravel()


@dataclass
class BallIntegralResult:
    value: float
    weighted: bool
    n_refinements: int
    rel_change: float
    floor_hits: int


def alpha_ball_integral(
    x3: float,
    M: float,
    ctx: WeightContext,
    t: float = 0.0,
    x_par=(0.0, 0.0),
    weighted: bool = False,
    rel_tol: float = 1e-2,
    max_refine: int = 6,
    alpha_floor: float = 1e-8,
) -> BallIntegralResult:
    """Quadrature of int_{|v|<=M} dv / alpha (optionally with <v>^-(4+delta) weight).

    Refines the spherical product rule until successive estimates agree to
    ``rel_tol``; raises if the refinement never settles.  Nodes where alpha
    falls below ``alpha_floor`` are clamped and counted.
    """
    if x3 <= 0 or M <= 0:
        raise ValueError("alpha_ball_integral needs x3 > 0 and M > 0")
    x_par = np.asarray(x_par, dtype=float)
    delta = ctx.env.delta

    prev = None
    n_r, n_mu, n_phi = 8, 16, 8
    for it in range(max_refine):
        pts, wts = _clenshaw_sphere_rule(n_r, n_mu, n_phi, M)
        x = np.zeros((len(pts), 3))
        x[:, :2] = x_par
        x[:, 2] = x3
        a = alpha(t, x, pts, ctx)
        floor_hits = int(np.sum(a < alpha_floor))
        a = np.maximum(a, alpha_floor)
        integrand = 1.0 / a
        if weighted:
            integrand = integrand / (1.0 + np.sum(pts * pts, axis=-1) ** (0.5 * (4.0 + delta)))
        val = float(np.sum(wts * integrand))
        if prev is not None:
            rel = abs(val - prev) / max(abs(val), 1e-300)
            if rel < rel_tol:
                return BallIntegralResult(val, weighted, it, rel, floor_hits)
        prev = val
        n_r, n_mu = n_r + 8, n_mu + 16
    raise RuntimeError(
        f"alpha_ball_integral did not converge (last estimate {prev:.6g}); "
        "the polar rule may be under-resolving the 1/alpha ridge"
    )


@dataclass
class VelocityLemmaReport:
    max_log_slope: float
    implied_C: float
    n_samples: int
    degenerate: bool
    alpha_min: float


def velocity_lemma_audit(
    times: np.ndarray,
    positions: np.ndarray,
    velocities: np.ndarray,
    ctx: WeightContext,
    c0: float,
) -> VelocityLemmaReport:
    """Measure sup |d log alpha / ds| along a sampled trajectory.

    ``times`` must be monotone with matching (n, 3) position/velocity samples.
    The implied constant is reported on the 20*C/c0 convention, i.e.
    implied_C = max_log_slope * c0 / 20, directly comparable with field norms.
    Trajectories pinned to the grazing set are reported degenerate and skipped.
    """
    times = np.asarray(times, dtype=float)
    a = alpha(times, positions, velocities, ctx)
    if np.all(a < 1e-14):
        return VelocityLemmaReport(0.0, 0.0, len(times), True, 0.0)
    if np.any(a < 1e-14):
        raise RuntimeError(
            "alpha hit zero along a non-grazing trajectory: trajectory and "
            "field context are inconsistent"
        )
    dlog = np.diff(np.log(a))
    ds = np.diff(times)
    slopes = np.abs(dlog / ds)
    max_slope = float(np.max(slopes))
    if not np.isfinite(max_slope):
        raise RuntimeError("velocity-lemma audit produced a non-finite slope")
    return VelocityLemmaReport(
        max_log_slope=max_slope,
        implied_C=max_slope * c0 / 20.0,
        n_samples=len(times),
        degenerate=False,
        alpha_min=float(np.min(a)),
    )
