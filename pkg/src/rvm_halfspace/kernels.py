"""Velocity-direction kernels of the retarded field representation.

Every kernel takes velocities v of shape (..., 3) and unit directions omega of
shape (..., 3) broadcastable against each other; components are vectorized so
the contraction tables can be built with single matmuls.

Geometry conventions: omega = (y - x)/|y - x|; the mirror direction is
omega_bar = (omega1, omega2, -omega3); the parity signs are
iota = (+1, +1, -1).  Image-side integrands reduce to these same kernels
evaluated on cones centered at the reflected observation point, so no separate
"lower half" kernels exist in code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import lorentz_gamma, vhat

IOTA = np.array([1.0, 1.0, -1.0])


def reflect3(w: np.ndarray) -> np.ndarray:
    out = np.array(w, dtype=float, copy=True)
    out[..., 2] = -out[..., 2]
    return out


def _den(vh, omega):
    return 1.0 + np.sum(vh * omega, axis=-1)


def bulk_E(v, omega) -> np.ndarray:
    """(|vhat|^2 - 1)(vhat_i + omega_i) / (1 + vhat.omega)^2, shape (..., 3)."""
    vh = vhat(v)
    den = _den(vh, omega)
    vh2 = np.sum(vh * vh, axis=-1)
    return ((vh2 - 1.0) / den ** 2)[..., None] * (vh + omega)


def bulk_B(v, omega) -> np.ndarray:
    """(omega x vhat)_i (1 - |vhat|^2) / (1 + vhat.omega)^2."""
    vh = vhat(v)
    den = _den(vh, omega)
    vh2 = np.sum(vh * vh, axis=-1)
    return ((1.0 - vh2) / den ** 2)[..., None] * np.cross(omega, vh)


def s_kernel_E(v, omega) -> np.ndarray:
    """(omega_i + vhat_i)/(1 + vhat.omega): the pre-integration S-term weight."""
    vh = vhat(v)
    return (omega + vh) / _den(vh, omega)[..., None]


def s_kernel_B(v, omega) -> np.ndarray:
    """(omega x vhat)_i / (1 + vhat.omega)."""
    vh = vhat(v)
    return np.cross(omega, vh) / _den(vh, omega)[..., None]


def grad_s_kernel_E(v, omega) -> np.ndarray:
    """S^E_i = grad_v[(omega_i + vhat_i)/(1 + vhat.omega)], shape (..., 3, 3).

    Index [..., i, m] = d/dv_m of component i:
    [(e_i - vhat_i vhat)(1 + vhat.omega) - (omega_i + vhat_i)(omega - (omega.vhat)vhat)]
      / (<v> (1 + vhat.omega)^2).
    """
    vh = vhat(v)
    gamma = lorentz_gamma(v)
    den = _den(vh, omega)
    odotv = np.sum(omega * vh, axis=-1)
    eye = np.eye(3)
    term1 = (eye - vh[..., :, None] * vh[..., None, :]) * den[..., None, None]
    rad = omega - odotv[..., None] * vh
    term2 = (omega + vh)[..., :, None] * rad[..., None, :]
    return (term1 - term2) / (gamma * den ** 2)[..., None, None]


def grad_s_kernel_B(v, omega) -> np.ndarray:
    """S^B_i = grad_v[(omega x vhat)_i/(1 + vhat.omega)], shape (..., 3, 3).

    grad_v[(omega x v)_i] is the constant matrix with rows
    (0, -w3, w2), (w3, 0, -w1), (-w2, w1, 0).
    """
    v = np.asarray(v, dtype=float)
    omega = np.asarray(omega, dtype=float)
    vh = vhat(v)
    gamma = lorentz_gamma(v)
    den = _den(vh, omega)
    oxv = np.cross(omega, v)
    w1, w2, w3 = omega[..., 0], omega[..., 1], omega[..., 2]
    zeros = np.zeros_like(w1)
    grad_cross = np.stack(
        [
            np.stack([zeros, -w3, w2], axis=-1),
            np.stack([w3, zeros, -w1], axis=-1),
            np.stack([-w2, w1, zeros], axis=-1),
        ],
        axis=-2,
    )
    denom = (gamma * den)[..., None, None]
    term1 = grad_cross / denom
    term2 = oxv[..., :, None] * (vh + omega)[..., None, :] / denom ** 2
    return term1 - term2


def boundary_disk_E(v, omega) -> np.ndarray:
    """delta_{i3} - (omega_i + vhat_i) vhat3 / (1 + vhat.omega)."""
    vh = vhat(v)
    out = -(omega + vh) * (vh[..., 2] / _den(vh, omega))[..., None]
    out[..., 2] += 1.0
    return out


def boundary_disk_B(v, omega) -> np.ndarray:
    """-(e3 x vhat)_i + (omega x vhat)_i vhat3 / (1 + vhat.omega)."""
    vh = vhat(v)
    e3xv = np.zeros_like(vh)
    e3xv[..., 0] = -vh[..., 1]
    e3xv[..., 1] = vh[..., 0]
    return -e3xv + np.cross(omega, vh) * (vh[..., 2] / _den(vh, omega))[..., None]


def initial_sphere_E(v, omega) -> np.ndarray:
    """sum_j omega_j (delta_ij - (omega_i + vhat_i) vhat_j / (1 + vhat.omega))."""
    vh = vhat(v)
    odotv = np.sum(omega * vh, axis=-1)
    return omega - (omega + vh) * (odotv / _den(vh, omega))[..., None]


def initial_sphere_B(v, omega) -> np.ndarray:
    return s_kernel_B(v, omega)


# ---------------------------------------------------------------------------
# stated bounds and their audit


def _sample_unit_vectors(rng, n):
    w = rng.normal(size=(n, 3))
    return w / np.linalg.norm(w, axis=1, keepdims=True)


@dataclass
class KernelBoundReport:
    n_samples: int
    violations: int
    worst: dict

    @property
    def passed(self) -> bool:
        return self.violations == 0


def kernel_bound_audit(n_samples: int = 100_000, seed: int = 0, v_scale: float = 20.0) -> KernelBoundReport:
    """Check every stated kernel inequality on random (v, omega) pairs.

    Bounds checked (gamma = sqrt(1 + |v|^2)):
      1/(1 + vhat.omega)        <= 2 gamma^2 / (1 + |v x omega|^2) <= 2 gamma^2
      |omega + vhat|^2          <= 2 (1 + vhat.omega)
      |bulk_E|                  <= 4 gamma      (componentwise)
      |bulk_B|                  <= 8 gamma
      |s_kernel_E|, |s_kernel_B| <= 2 gamma
      |grad_s_kernel_E|, |grad_s_kernel_B| <= 12 gamma  (row euclidean norm)

    A mix of isotropic and adversarial (omega near -vhat) samples is used;
    any violation is fatal for the caller and the worst witness is returned.
    """
    rng = np.random.default_rng(seed)
    n_adv = n_samples // 4
    v = rng.normal(size=(n_samples, 3)) * rng.uniform(0.1, v_scale, size=(n_samples, 1))
    omega = _sample_unit_vectors(rng, n_samples)
    # adversarial block: omega almost opposite to vhat
    vh_adv = vhat(v[:n_adv])
    speed = np.linalg.norm(vh_adv, axis=1, keepdims=True)
    anti = -vh_adv / np.maximum(speed, 1e-12)
    jitter = rng.normal(size=(n_adv, 3)) * 1e-3
    w = anti + jitter
    omega[:n_adv] = w / np.linalg.norm(w, axis=1, keepdims=True)

    gamma = lorentz_gamma(v)
    vh = vhat(v)
    den = _den(vh, omega)
    vxo = np.cross(v, omega)
    checks = {}

    mid = 2.0 * gamma ** 2 / (1.0 + np.sum(vxo * vxo, axis=-1))
    checks["inv_den_vs_cross"] = mid - 1.0 / den
    checks["inv_den_vs_gamma2"] = 2.0 * gamma ** 2 - mid
    checks["omega_plus_vhat"] = 2.0 * den - np.sum((omega + vh) ** 2, axis=-1)
    checks["bulk_E"] = 4.0 * gamma - np.max(np.abs(bulk_E(v, omega)), axis=-1)
    checks["bulk_B"] = 8.0 * gamma - np.max(np.abs(bulk_B(v, omega)), axis=-1)
    checks["s_kernel_E"] = 2.0 * gamma - np.max(np.abs(s_kernel_E(v, omega)), axis=-1)
    checks["s_kernel_B"] = 2.0 * gamma - np.max(np.abs(s_kernel_B(v, omega)), axis=-1)
    gse = np.linalg.norm(grad_s_kernel_E(v, omega), axis=-1)
    checks["grad_s_kernel_E"] = 12.0 * gamma - np.max(gse, axis=-1)
    gsb = np.linalg.norm(grad_s_kernel_B(v, omega), axis=-1)
    checks["grad_s_kernel_B"] = 12.0 * gamma - np.max(gsb, axis=-1)

    violations = 0
    worst = {}
    for name, slack in checks.items():
        bad = int(np.sum(slack < 0))
        violations += bad
        k = int(np.argmin(slack))
        worst[name] = {
            "slack": float(slack[k]),
            "v": v[k].tolist(),
            "omega": omega[k].tolist(),
        }
    return KernelBoundReport(n_samples=n_samples, violations=violations, worst=worst)


def s_term_ibp_pair(f_of_v, force_of_v, v_nodes, v_weights, omega, dv_step=1e-5):
    """Return (ibp, direct) values of the S contraction for one direction.

    ibp_i    = - sum_v w S^E_i(v,omega) . F(v) f(v)
    direct_i = + sum_v w s_kernel_E_i(v,omega) (F(v) . grad_v f(v))  [central FD]

    The two must agree (integration by parts in v with div_v F = 0); this is
    the identity behind replacing transport derivatives by kernel weights.
    Returns a pair of (..., 3)-shaped arrays for E plus the same for B.
    """
    v_nodes = np.asarray(v_nodes, dtype=float)
    w = np.asarray(v_weights, dtype=float)
    f = f_of_v(v_nodes)
    F = force_of_v(v_nodes)

    gse = grad_s_kernel_E(v_nodes, omega)
    gsb = grad_s_kernel_B(v_nodes, omega)
    ibp_E = -np.einsum("n,nim,nm,n->i", w, gse, F, f)
    ibp_B = np.einsum("n,nim,nm,n->i", w, gsb, F, f)

    grad_f = np.zeros_like(v_nodes)
    for m in range(3):
        dv = np.zeros(3)
        dv[m] = dv_step
        grad_f[:, m] = (f_of_v(v_nodes + dv) - f_of_v(v_nodes - dv)) / (2 * dv_step)
    fdotgrad = np.sum(F * grad_f, axis=-1)
    direct_E = np.einsum("n,ni,n->i", w, s_kernel_E(v_nodes, omega), fdotgrad)
    direct_B = -np.einsum("n,ni,n->i", w, s_kernel_B(v_nodes, omega), fdotgrad)
    return (ibp_E, direct_E), (ibp_B, direct_B)
