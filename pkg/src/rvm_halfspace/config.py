"""Run configuration: JSON schema, validation, and scenario presets."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from .core import Environment
from .grids import SpatialGrid
from .moments import VelocityGrid
from .fields import GSQuadrature
from .picard import PicardSettings
from .trace import BoundaryClosure
from . import presets as P


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    domain: dict = field(default_factory=lambda: {"Lx": 1.5, "Lz": 1.25, "nx": 12, "ny": 12, "nz": 10})
    velocity: dict = field(default_factory=lambda: {"vmax": 6.0, "nv": 16})
    time: dict = field(default_factory=lambda: {"T": 0.1, "n_levels": 32})
    env: dict = field(default_factory=lambda: {"g": 2.0, "Ee": 0.5, "Be": 0.5, "delta": 0.5})
    bc: dict = field(default_factory=lambda: {"kind": "inflow", "preset": "inflow-gaussian", "params": {}})
    init: dict = field(default_factory=lambda: {"preset": "inflow-gaussian", "params": {}})
    picard: dict = field(default_factory=lambda: {"max_iter": 8, "tol": 1e-4, "n_mc": 8, "k_max": 16, "h_max": 0.02, "step_scale": 0.01})
    quadrature: dict = field(default_factory=lambda: {"radial_order": 5, "angular_order": 6, "disk_radial_order": 6})
    seed: int = 0
    threads: int = 0
    output: dict = field(default_factory=lambda: {"dir": "out", "snapshot_stride": 4})

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


_ALLOWED_TOP = {
    "domain", "velocity", "time", "env", "bc", "init", "picard",
    "quadrature", "seed", "threads", "output",
}


def load_config(path_or_dict) -> RunConfig:
    """Parse and validate a config document; every failure names the field."""
    if isinstance(path_or_dict, (str,)):
        with open(path_or_dict, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    else:
        doc = dict(path_or_dict)
    unknown = set(doc) - _ALLOWED_TOP
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = RunConfig()
    for key in _ALLOWED_TOP:
        if key in doc:
            base = getattr(cfg, key)
            if isinstance(base, dict):
                val = doc[key]
                if not isinstance(val, dict):
                    raise ConfigError(f"config field '{key}' must be an object")
                extra = set(val) - set(base)
                if extra:
                    raise ConfigError(f"unknown keys in '{key}': {sorted(extra)}")
                base.update(val)
            else:
                setattr(cfg, key, doc[key])
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    d, t, v = cfg.domain, cfg.time, cfg.velocity
    if t["T"] > 0.5:
        raise ConfigError(f"time.T = {t['T']} violates the short-horizon invariant T <= 0.5")
    if t["T"] <= 0:
        raise ConfigError("time.T must be positive")
    if t["n_levels"] < 3:
        raise ConfigError("time.n_levels must be >= 3 (centered time differences)")
    if v["nv"] % 2:
        raise ConfigError(f"velocity.nv = {v['nv']} must be even")
    if cfg.bc["kind"] not in ("inflow", "diffuse", "specular"):
        raise ConfigError(f"bc.kind = {cfg.bc['kind']!r} unknown")
    if cfg.init["preset"] not in PRESETS:
        raise ConfigError(f"init.preset = {cfg.init['preset']!r} unknown; see `presets`")
    spec = PRESETS[cfg.init["preset"]]
    support_xy, support_z = spec.support_extent(cfg)
    need_Lx = support_xy + t["T"]
    need_Lz = support_z + t["T"]
    if d["Lx"] < need_Lx - 1e-12:
        raise ConfigError(
            f"domain.Lx = {d['Lx']} too small: light cones over the data support "
            f"need Lx >= {need_Lx:.4g}"
        )
    if d["Lz"] < need_Lz - 1e-12:
        raise ConfigError(
            f"domain.Lz = {d['Lz']} too small for T = {t['T']}: need Lz >= {need_Lz:.4g}"
        )
    for key in ("nx", "ny", "nz"):
        if d[key] < 4:
            raise ConfigError(f"domain.{key} must be >= 4")
    env = cfg.env
    if env["g"] < 0 or not (0 < env["delta"] <= 1):
        raise ConfigError("env.g must be >= 0 and env.delta in (0, 1]")


# ---------------------------------------------------------------------------
# scenario presets


@dataclass
class PresetSpec:
    name: str
    summary: str
    params: dict                       # name -> (default, docstring)
    builder: callable                  # (cfg, params) -> scenario dict
    source_free: bool = False          # no kinetic sources: no light-cone support

    def describe(self):
        return {
            "name": self.name,
            "summary": self.summary,
            "params": {k: {"default": v[0], "doc": v[1]} for k, v in self.params.items()},
        }

    def merged_params(self, cfg: RunConfig):
        out = {k: v[0] for k, v in self.params.items()}
        out.update(cfg.init.get("params", {}))
        out.update(cfg.bc.get("params", {}))
        return out

    def support_extent(self, cfg: RunConfig):
        if self.source_free:
            return (0.0, 0.0)
        p = self.merged_params(cfg)
        sigma = p.get("sigma", 0.25)
        center = p.get("center", (0.0, 0.0, 0.45))
        # effective support at the 3-sigma level (tails ~ 1e-2 of peak are
        # below the desk-scale quadrature floor; documented per preset)
        pad = 3.0 * sigma
        return (max(abs(center[0]), abs(center[1])) + pad, center[2] + pad)


def _gaussian_pieces(p):
    center = np.asarray(p["center"], dtype=float)
    f0 = P.SeparableF0(
        [P.SeparableTerm(P.gaussian_profile(center, p["sigma"], p["amplitude"]), P.gaussian_velocity(p["sigma_v"]))]
    )
    # rho0 integrates the velocity profile: the electrostatic part must carry
    # the same mass so that div E0 = 4 pi rho0 holds
    v_mass = (2.0 * np.pi) ** 1.5 * p["sigma_v"] ** 3
    init = P._add_field_data(
        P.image_charge_field(p["amplitude"] * v_mass, center, p["sigma"]),
        P.magnetic_pulse_field(p["amplitude_B"], center + np.array([0.05, 0.0, 0.0]), p["sigma_B"]),
    )
    return f0, init


_GAUSS_PARAMS = {
    "amplitude": (1e-2, "peak phase-space density of the initial Gaussian"),
    "center": ((0.0, 0.0, 0.45), "center of the spatial profile"),
    "sigma": (0.22, "spatial standard deviation"),
    "sigma_v": (1.0, "velocity standard deviation"),
    "amplitude_B": (1e-2, "initial magnetic pulse amplitude"),
    "sigma_B": (0.3, "magnetic pulse width"),
}


def _build_inflow(cfg, p):
    f0, init = _gaussian_pieces(p)
    g_in = P.InflowProfile(amplitude=p["inflow_amplitude"], sigma_par=p["inflow_sigma_par"],
                           ramp_rate=p["inflow_ramp_rate"])
    closure = BoundaryClosure(kind="inflow", inflow_g=g_in,
                              k_max=cfg.picard.get("k_max", 16))
    return {"f0": f0, "f0_separable": f0, "init_data": init, "closure": closure}


def _build_diffuse(cfg, p):
    f0, init = _gaussian_pieces(p)
    closure = BoundaryClosure(kind="diffuse", n_mc=cfg.picard.get("n_mc", 8),
                              k_max=cfg.picard.get("k_max", 16))
    return {"f0": f0, "f0_separable": f0, "init_data": init, "closure": closure}


def _build_specular(cfg, p):
    base, init = _gaussian_pieces(p)
    env = Environment(**cfg.env)
    damped = P.grazing_damped_f0(base, env, p["gamma0_decay"])
    closure = BoundaryClosure(kind="specular", k_max=cfg.picard.get("k_max", 16))
    # the damping breaks separability; the field assembler integrates f0 directly
    return {"f0": damped, "f0_separable": None, "init_data": init, "closure": closure}


def _build_vacuum(cfg, p):
    k = np.pi * p["mode"] / cfg.domain["Lz"]
    init = P.standing_wave_field(p["amplitude"], k)
    zero_f0 = P.SeparableF0([])
    closure = BoundaryClosure(kind="specular")
    return {"f0": (lambda X, V: np.zeros(np.shape(np.asarray(X)[..., 0]))),
            "f0_separable": zero_f0, "init_data": init, "closure": closure,
            "analytic_solution": P.standing_wave_solution(p["amplitude"], k)}


def _build_free_stream(cfg, p):
    f0, _ = _gaussian_pieces(p)
    closure = BoundaryClosure(
        kind="inflow", inflow_g=lambda t, x, v: np.zeros(np.shape(np.asarray(x)[..., 0]))
    )
    # transport oracle: fields intentionally decoupled, so the Maxwell
    # compatibility check does not apply
    return {"f0": f0, "f0_separable": f0, "init_data": P.zero_field_data(),
            "closure": closure, "check_compatibility": False}


def _build_manufactured(cfg, p):
    sc = P.ManufacturedPulse(amp_f=p["amplitude"], sigma=p["sigma"],
                             amp_B=p["amplitude_B"], sigma_B=p["sigma_B"])
    closure = BoundaryClosure(
        kind="inflow", inflow_g=lambda t, x, v: np.zeros(np.shape(np.asarray(x)[..., 0]))
    )
    return {"f0": (lambda X, V: sc.f0(X, V)), "f0_separable": sc.f0,
            "init_data": sc.field_data, "closure": closure, "scenario": sc}


PRESETS = {
    "inflow-gaussian": PresetSpec(
        "inflow-gaussian",
        "Gaussian interior pulse with smooth time-ramped boundary influx (weighted-smooth data class)",
        dict(
            _GAUSS_PARAMS,
            inflow_amplitude=(1e-2, "peak of the boundary influx profile"),
            inflow_sigma_par=(0.4, "tangential width of the influx"),
            inflow_ramp_rate=(10.0, "initial time-ramp rate of the influx"),
        ),
        _build_inflow,
    ),
    "diffuse-relax": PresetSpec(
        "diffuse-relax",
        "Gaussian pulse relaxing against an isothermal (T_w = 1) diffusely re-emitting wall",
        dict(_GAUSS_PARAMS),
        _build_diffuse,
    ),
    "specular-billiard": PresetSpec(
        "specular-billiard",
        "Specularly reflecting wall; initial data damped toward the grazing set",
        dict(
            _GAUSS_PARAMS,
            gamma0_decay=(
                0.05,
                "gamma0-decay constant c: f0 is multiplied by exp(-c / sqrt(alpha <v>)), "
                "vanishing toward the grazing set as the specular data class requires",
            ),
        ),
        _build_specular,
    ),
    "vacuum-wave": PresetSpec(
        "vacuum-wave",
        "Field-only standing slab mode (f = 0): oracle scenario with a closed-form solution",
        {"amplitude": (0.5, "mode amplitude"), "mode": (1, "vertical mode number")},
        _build_vacuum,
        source_free=True,
    ),
    "free-stream": PresetSpec(
        "free-stream",
        "Force-free transport of a Gaussian pulse (oracle scenario, fields decoupled)",
        dict(_GAUSS_PARAMS),
        _build_free_stream,
    ),
    "manufactured-pulse": PresetSpec(
        "manufactured-pulse",
        "Free-streaming charge pulse with compatible initial fields; drives the FDTD cross-check",
        {
            "amplitude": (0.4, "charge pulse amplitude"),
            "sigma": (0.25, "charge pulse width"),
            "amplitude_B": (0.6, "magnetic pulse amplitude"),
            "sigma_B": (0.3, "magnetic pulse width"),
        },
        _build_manufactured,
    ),
}


def list_presets():
    return sorted(PRESETS)


def describe_preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; known: {', '.join(sorted(PRESETS))}")
    return PRESETS[name].describe()


@dataclass
class Scenario:
    """Everything a run needs, assembled from a validated config."""

    cfg: RunConfig
    env: Environment
    grid: SpatialGrid
    vgrid: VelocityGrid
    closure: BoundaryClosure
    f0: callable
    f0_separable: Optional[P.SeparableF0]
    init_data: P.InitialFieldData
    settings: PicardSettings
    gs_quad: GSQuadrature
    extras: dict


def build_scenario(cfg: RunConfig) -> Scenario:
    preset = PRESETS[cfg.init["preset"]]
    params = preset.merged_params(cfg)
    pieces = preset.builder(cfg, params)
    env_kwargs = dict(cfg.env)
    if cfg.init["preset"] in ("free-stream", "manufactured-pulse", "vacuum-wave"):
        env_kwargs.update({"g": 0.0, "Ee": 0.0, "Be": 0.0})
    env = Environment(**env_kwargs)
    grid = SpatialGrid(
        Lx=cfg.domain["Lx"], Lz=cfg.domain["Lz"],
        nx=cfg.domain["nx"], ny=cfg.domain["ny"], nz=cfg.domain["nz"],
    )
    vgrid = VelocityGrid(vmax=cfg.velocity["vmax"], n_v=cfg.velocity["nv"])
    settings = PicardSettings(
        T=cfg.time["T"],
        n_levels=cfg.time["n_levels"],
        max_iter=cfg.picard["max_iter"],
        tol=cfg.picard["tol"],
        h_max=cfg.picard.get("h_max", 0.02),
        step_scale=cfg.picard.get("step_scale", 0.01),
        n_mc_pipeline=cfg.picard.get("n_mc", 8),
        seed=cfg.seed,
        check_compatibility=pieces.get("check_compatibility", True),
    )
    q = cfg.quadrature
    gs_quad = GSQuadrature(
        n_r=q["radial_order"], n_mu=q["angular_order"],
        n_phi=q["angular_order"], n_disk_r=q["disk_radial_order"],
    )
    extras = {k: v for k, v in pieces.items() if k not in ("f0", "f0_separable", "init_data", "closure")}
    return Scenario(
        cfg=cfg,
        env=env,
        grid=grid,
        vgrid=vgrid,
        closure=pieces["closure"],
        f0=pieces["f0"],
        f0_separable=pieces["f0_separable"],
        init_data=pieces["init_data"],
        settings=settings,
        gs_quad=gs_quad,
        extras=extras,
    )
