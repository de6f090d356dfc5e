"""Outer fixed-point iteration: freeze fields, transport f, rebuild fields.

One sweep takes the previous iterate's fields, tabulates the transported f on
(time levels x grid nodes x velocity nodes) by exact backward characteristics,
forms moments and wall traces, and rebuilds E, B from the retarded-integral
representation.  Convergence is monitored through grid sup-differences of the
fields and a weighted sup-difference of f on a fixed probe set.

Wall closures couple to earlier iterates exactly as the construction
prescribes: bounce depth k of iterate ell flows under the fields of iterate
ell-1-k (clamped at the initial iterate, whose f is the time-frozen f0).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import Environment, lorentz_gamma
from .fields import (
    ChannelKernels,
    ContractionTable,
    DirectionSet,
    GSAssembler,
    GSConfig,
    GSQuadrature,
)
from .grids import FieldEvaluator, FieldState, SpatialGrid
from .moments import SourceHistory, VelocityGrid, moment_tables
from .presets import InitialFieldData, SeparableF0
from .trace import BoundaryClosure, PullbackStats, pull_back_batch


@dataclass
class PicardSettings:
    T: float = 0.1
    n_levels: int = 32
    max_iter: int = 8
    tol: float = 1e-4
    h_max: float = 1e-2
    step_scale: float = 1e-2
    n_probes: int = 512
    n_mc_pipeline: int = 8
    seed: int = 0
    divergence_patience: int = 3
    check_compatibility: bool = True


@dataclass
class IterationState:
    ell: int
    field_history: list            # FieldState per iterate, index = iterate
    f_table: Optional[np.ndarray]  # (n_t, n_nodes, n_v) float32 of iterate ell
    hist: Optional[SourceHistory]
    norms: list = field(default_factory=list)   # dicts per sweep
    stats: PullbackStats = field(default_factory=PullbackStats)


@dataclass
class ConvergenceReport:
    iterations: int
    dE_sup: list
    dB_sup: list
    df_probe_sup: list
    ratios: list
    stop_reason: str
    wall_seconds: float

    def as_records(self):
        recs = []
        for i in range(self.iterations):
            recs.append(
                {
                    "iter": i + 1,
                    "dE_sup": self.dE_sup[i],
                    "dB_sup": self.dB_sup[i],
                    "df_probe_sup": self.df_probe_sup[i],
                }
            )
        return recs


class PicardDivergence(RuntimeError):
    pass


def probe_set(grid: SpatialGrid, n: int, seed: int, v_extent: float = 3.0, margin: float = 0.2):
    """Fixed quasi-random phase probes for the f sup-difference surrogate."""
    from scipy.stats import qmc

    sampler = qmc.Halton(d=6, scramble=True, seed=seed)
    u = sampler.random(n)
    X = np.empty((n, 3))
    X[:, 0] = (2 * u[:, 0] - 1) * (grid.Lx - margin)
    X[:, 1] = (2 * u[:, 1] - 1) * (grid.Lx - margin)
    X[:, 2] = 0.02 + u[:, 2] * (grid.Lz - margin - 0.02)
    V = (2 * u[:, 3:] - 1) * v_extent
    return X, V


class PicardRunner:
    """Owns the static inputs of a run and produces iterates."""

    def __init__(
        self,
        env: Environment,
        grid: SpatialGrid,
        vgrid: VelocityGrid,
        closure: BoundaryClosure,
        f0: Callable,
        init_data: InitialFieldData,
        settings: PicardSettings,
        gs_quad: GSQuadrature = None,
        f0_separable: Optional[SeparableF0] = None,
        source_margin: float = 0.3,
    ):
        self.env = env
        self.grid = grid
        self.vgrid = vgrid
        self.closure = closure
        self.f0 = f0
        self.init_data = init_data
        self.st = settings
        self.times = np.linspace(0.0, settings.T, settings.n_levels)
        self.gs_quad = gs_quad or GSQuadrature(n_r=5, n_mu=6, n_phi=6, n_disk_r=6)
        self.dirset = DirectionSet(self.gs_quad.n_mu, self.gs_quad.n_phi)
        self.kernels = ChannelKernels(vgrid, self.dirset)
        self.f0_separable = f0_separable
        self.source_margin = source_margin
        self.nodes = grid.nodes()
        self.probe_X, self.probe_V = probe_set(grid, settings.n_probes, settings.seed)
        self._closure_pipeline = BoundaryClosure(
            kind=closure.kind,
            inflow_g=closure.inflow_g,
            c_mu=closure.c_mu,
            n_mc=settings.n_mc_pipeline if closure.kind == "diffuse" else closure.n_mc,
            k_max=closure.k_max,
        )

    # -- building blocks ----------------------------------------------------

    def initial_state(self) -> IterationState:
        fs0 = FieldState.from_analytic(
            self.grid, self.times, lambda t, x: self.init_data.E0(x), lambda t, x: self.init_data.B0(x)
        )
        return IterationState(ell=0, field_history=[fs0], f_table=None, hist=None)

    def _field_eval_list(self, state: IterationState):
        """Depth-indexed frozen fields: depth k of iterate ell+1 uses iterate ell-k."""
        evs = [FieldEvaluator(fs) for fs in reversed(state.field_history)]
        return evs

    def build_f_table(self, field_list, stats: PullbackStats) -> np.ndarray:
        n_nodes = len(self.nodes)
        n_v = len(self.vgrid.nodes)
        out = np.empty((len(self.times), n_nodes, n_v), dtype=np.float32)
        X0 = np.repeat(self.nodes, n_v, axis=0)
        V0 = np.tile(self.vgrid.nodes, (n_nodes, 1))
        for k, t in enumerate(self.times):
            if t == 0.0:
                out[0] = np.asarray(self.f0(X0, V0), dtype=np.float32).reshape(n_nodes, n_v)
                continue
            rng = np.random.default_rng(np.random.SeedSequence([self.st.seed, k]))
            vals = pull_back_batch(
                float(t),
                X0,
                V0,
                field_list,
                self.env,
                self._closure_pipeline,
                self.f0,
                rng=rng,
                h_max=self.st.h_max,
                step_scale=self.st.step_scale,
                stats=stats,
            )
            out[k] = vals.reshape(n_nodes, n_v).astype(np.float32)
        return out

    def moments_from_table(self, f_table) -> SourceHistory:
        rho, J, ke = moment_tables(f_table.astype(np.float64), self.vgrid)
        shape = (len(self.times),) + self.grid.shape
        return SourceHistory(
            self.grid,
            self.times,
            rho.reshape(shape),
            J.reshape(shape + (3,)),
            ke.reshape(shape),
        )

    def rebuild_fields(self, f_table, hist, frozen: FieldEvaluator) -> FieldState:
        table = ContractionTable(self.grid, self.times, self.kernels, f_table)
        cfg = GSConfig(self.gs_quad, source_margin=self.source_margin)
        asm = GSAssembler(
            self.env,
            self.grid,
            self.init_data,
            table,
            hist,
            frozen,
            self.kernels,
            cfg,
            f0_separable=self.f0_separable,
            f0_general=None if self.f0_separable is not None else self._f0_general,
        )
        return asm.eval_state(self.times)

    def _f0_general(self, X, v_nodes):
        X = np.asarray(X, dtype=float)
        v_nodes = np.asarray(v_nodes, dtype=float)
        return np.asarray(
            self.f0(X[:, None, :], v_nodes[None, :, :]), dtype=float
        ).reshape(len(X), len(v_nodes))

    def probe_values(self, field_list) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence([self.st.seed, 999_983]))
        return pull_back_batch(
            self.st.T,
            self.probe_X,
            self.probe_V,
            field_list,
            self.env,
            self._closure_pipeline,
            self.f0,
            rng=rng,
            h_max=self.st.h_max,
            step_scale=self.st.step_scale,
        )

    # -- the sweep -----------------------------------------------------------

    def iterate_once(self, state: IterationState) -> IterationState:
        field_list = self._field_eval_list(state)
        stats = PullbackStats()
        f_table = self.build_f_table(field_list, stats)
        hist = self.moments_from_table(f_table)
        frozen = field_list[0]
        new_fields = self.rebuild_fields(f_table, hist, frozen)

        prev_fields = state.field_history[-1]
        dE, dB = new_fields.sup_diff(prev_fields)
        w_probe = lorentz_gamma(self.probe_V) ** (4.0 + self.env.delta)
        f_new = self.probe_values(field_list)
        if state.f_table is None:
            # iterate 0 is the time-frozen initial datum
            f_prev = self.f0(self.probe_X, self.probe_V)
        else:
            prev_list = [FieldEvaluator(fs) for fs in reversed(state.field_history[:-1])]
            f_prev = self.probe_values(prev_list)
        df = float(np.max(w_probe * np.abs(np.asarray(f_new) - np.asarray(f_prev))))

        norms = list(state.norms) + [{"dE_sup": dE, "dB_sup": dB, "df_probe_sup": df}]
        return IterationState(
            ell=state.ell + 1,
            field_history=state.field_history + [new_fields],
            f_table=f_table,
            hist=hist,
            norms=norms,
            stats=stats,
        )

    def check_initial_compatibility(self):
        """Discrete load-time check of div E0 = 4 pi rho0, div B0 = 0, wall traces.

        rho0 is integrated on a dedicated fine velocity rule so the check
        isolates data inconsistency from the run's velocity resolution.
        """
        from .diagnostics import compatibility_check

        fine = VelocityGrid(vmax=max(self.vgrid.vmax, 8.0), n_v=24)
        rho0 = (
            np.asarray(
                self.f0(
                    np.repeat(self.nodes, len(fine.nodes), axis=0),
                    np.tile(fine.nodes, (len(self.nodes), 1)),
                ),
                dtype=float,
            ).reshape(len(self.nodes), -1)
            @ fine.weights
        ).reshape(self.grid.shape)
        return compatibility_check(self.init_data, rho0, self.grid)

    def run(self) -> tuple:
        """Iterate to tolerance; returns (final_state, ConvergenceReport)."""
        t_start = time.time()
        if self.st.check_compatibility:
            compat = self.check_initial_compatibility()
            if compat.passed is False:
                raise ValueError(
                    "initial data violates the compatibility conditions beyond "
                    f"the discrete tolerance: {compat.residuals}"
                )
        state = self.initial_state()
        scaleE = max(float(np.max(np.abs(state.field_history[0].E))), 1e-12)
        scaleB = max(float(np.max(np.abs(state.field_history[0].B))), 1e-12)
        scalef = max(
            float(np.max(np.abs(self.f0(self.probe_X, self.probe_V)))), 1e-12
        )
        stop = "max_iter"
        rising = 0
        for _ in range(self.st.max_iter):
            state = self.iterate_once(state)
            n = state.norms[-1]
            rel = max(n["dE_sup"] / scaleE, n["dB_sup"] / scaleB, n["df_probe_sup"] / scalef)
            if len(state.norms) >= 2:
                prev = state.norms[-2]
                prev_rel = max(
                    prev["dE_sup"] / scaleE, prev["dB_sup"] / scaleB, prev["df_probe_sup"] / scalef
                )
                rising = rising + 1 if rel > prev_rel and prev_rel > self.st.tol else 0
                if rising >= self.st.divergence_patience:
                    raise PicardDivergence(
                        f"sup differences grew for {rising} consecutive sweeps "
                        f"(last {rel:.3e}); reduce the horizon T"
                    )
            if rel < self.st.tol:
                stop = "tol"
                break
        dE = [n["dE_sup"] for n in state.norms]
        dB = [n["dB_sup"] for n in state.norms]
        df = [n["df_probe_sup"] for n in state.norms]
        seqs = [max(a / scaleE, b / scaleB, c / scalef) for a, b, c in zip(dE, dB, df)]
        ratios = [seqs[i] / seqs[i - 1] if seqs[i - 1] > 0 else 0.0 for i in range(1, len(seqs))]
        report = ConvergenceReport(
            iterations=len(state.norms),
            dE_sup=dE,
            dB_sup=dB,
            df_probe_sup=df,
            ratios=ratios,
            stop_reason=stop,
            wall_seconds=time.time() - t_start,
        )
        return state, report
