"""Physical constants, phase-space primitives, and the Lorentz force.

Everything here is vectorized: velocity arguments may be a single 3-vector or
an (..., 3) array, and all functions are pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

E3_UNIT = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class Environment:
    """Ambient parameters: gravity g, vertical fields E_e, B_e, weight exponent delta.

    Units fix c = mass = charge = 1 (one-species normalization), so the class
    only carries the free ambient constants.  ``delta`` is the exponent used by
    the <v>^(4+delta) weighted norms, required in (0, 1].
    """

    g: float = 2.0
    Ee: float = 0.5
    Be: float = 0.5
    delta: float = 0.5

    c: float = 1.0
    mass: float = 1.0
    charge: float = 1.0

    def __post_init__(self):
        if self.g < 0:
            raise ValueError(f"gravity must be >= 0, got g={self.g}")
        if not (0.0 < self.delta <= 1.0):
            raise ValueError(f"delta must lie in (0, 1], got delta={self.delta}")
        if (self.c, self.mass, self.charge) != (1.0, 1.0, 1.0):
            raise ValueError("units are fixed: c = mass = charge = 1")

    @property
    def e_ext(self) -> np.ndarray:
        return self.Ee * E3_UNIT

    @property
    def b_ext(self) -> np.ndarray:
        return self.Be * E3_UNIT


# boundary strata at x3 = 0, classified by the sign of v3
GAMMA_MINUS = "gamma-"   # incoming, v3 > 0
GAMMA_PLUS = "gamma+"    # outgoing, v3 < 0
GAMMA_ZERO = "gamma0"    # grazing, v3 = 0


def boundary_stratum(v3, tol: float = 0.0) -> str:
    """Classify a wall phase point by its vertical velocity sign."""
    if v3 > tol:
        return GAMMA_MINUS
    if v3 < -tol:
        return GAMMA_PLUS
    return GAMMA_ZERO


def vhat(v: np.ndarray) -> np.ndarray:
    """Relativistic velocity v / sqrt(1 + |v|^2); always strictly subluminal."""
    v = np.asarray(v, dtype=float)
    gamma = np.sqrt(1.0 + np.sum(v * v, axis=-1, keepdims=True))
    return v / gamma


# spec name, same function
rel_velocity = vhat


def lorentz_gamma(v: np.ndarray) -> np.ndarray:
    """<v> = sqrt(1 + |v|^2)."""
    v = np.asarray(v, dtype=float)
    return np.sqrt(1.0 + np.sum(v * v, axis=-1))


def lorentz_force(E, B, v, env: Environment) -> np.ndarray:
    """Total acceleration E + E_ext + vhat x (B + B_ext) - g e3.

    Divergence-free in v: the only v-dependence enters through vhat x B_tot.
    Broadcasts over leading axes of E, B, v.
    """
    E = np.asarray(E, dtype=float)
    B = np.asarray(B, dtype=float)
    vh = vhat(v)
    b_tot = B + env.b_ext
    force = E + env.e_ext + np.cross(vh, b_tot)
    force = force - env.g * E3_UNIT
    return force


def pr_margin_samples(env: Environment, e3_wall, b1_wall, b2_wall, v_samples) -> np.ndarray:
    """g - Ee - E3 - (vhat x B)_3 at wall samples; positive means attractive wall force.

    ``e3_wall``, ``b1_wall``, ``b2_wall`` are arrays over wall sample points;
    ``v_samples`` is an (nv, 3) array.  Returns the (n_wall, nv) margin table.
    """
    e3_wall = np.atleast_1d(np.asarray(e3_wall, dtype=float))
    b1_wall = np.atleast_1d(np.asarray(b1_wall, dtype=float))
    b2_wall = np.atleast_1d(np.asarray(b2_wall, dtype=float))
    vh = vhat(np.atleast_2d(v_samples))
    # (vhat x B)_3 = vhat1*B2 - vhat2*B1 ; B_ext is vertical so it drops out
    cross3 = np.outer(b2_wall, vh[:, 0]) - np.outer(b1_wall, vh[:, 1])
    return env.g - env.Ee - e3_wall[:, None] - cross3


@dataclass
class MarginReport:
    margin: float
    violated: bool
    worst_index: tuple
    n_samples: int

    def __bool__(self):
        return not self.violated


def pr_condition_check(env: Environment, e3_wall, b1_wall, b2_wall, v_samples) -> MarginReport:
    """Empirical sign-condition margin c0 over sampled wall traces and velocities.

    The returned margin is inf over samples of g - Ee - E3 - (vhat x B)_3 at
    x3 = 0.  A nonpositive margin makes the kinetic weight unusable, so callers
    of weighted diagnostics must abort when ``violated`` is set.
    """
    table = pr_margin_samples(env, e3_wall, b1_wall, b2_wall, v_samples)
    idx = np.unravel_index(np.argmin(table), table.shape)
    margin = float(table[idx])
    return MarginReport(
        margin=margin,
        violated=not margin > 0.0,
        worst_index=idx,
        n_samples=table.size,
    )
