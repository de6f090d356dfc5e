"""Relativistic Vlasov-Maxwell system on the half space x3 > 0.

One-species plasma over a perfect conductor: distribution transported along
relativistic characteristics with inflow / diffuse / specular wall closures,
electromagnetic fields rebuilt from retarded light-cone integrals with image
extensions, and an outer Picard iteration tying the two together.  Units are
c = m = e = 1 throughout.
"""

from .core import Environment, rel_velocity, lorentz_force, pr_condition_check
from .weight import WeightContext, alpha

__all__ = [
    "Environment",
    "rel_velocity",
    "lorentz_force",
    "pr_condition_check",
    "WeightContext",
    "alpha",
]
