"""Run artifacts: snapshot CSVs, convergence and audit JSONL, state bundles."""

from __future__ import annotations

import json
import os

import numpy as np

from .grids import FieldState, SpatialGrid
from .moments import SourceHistory

SNAP_HEADER = "t,x1,x2,x3,E1,E2,E3,B1,B2,B3,rho,J1,J2,J3"


def _fmt(x: float) -> str:
    return np.format_float_scientific(x, precision=16, unique=False)


def write_snapshot(path, t, nodes, E, B, rho, J):
    """One CSV per time level, rows lexicographic in (x1, x2, x3), 17 significant digits."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(SNAP_HEADER + "\n")
        for i in range(len(nodes)):
            row = [t, *nodes[i], *E[i], *B[i], rho[i], *J[i]]
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_run_outputs(out_dir, fields: FieldState, hist: SourceHistory, report, audits, stride=4):
    os.makedirs(out_dir, exist_ok=True)
    grid = fields.grid
    nodes = grid.nodes()
    n_nodes = len(nodes)
    for k in range(0, len(fields.times), max(stride, 1)):
        write_snapshot(
            os.path.join(out_dir, f"snap_{k:03d}.csv"),
            float(fields.times[k]),
            nodes,
            fields.E[k].reshape(n_nodes, 3),
            fields.B[k].reshape(n_nodes, 3),
            hist.rho[k].reshape(n_nodes),
            hist.J[k].reshape(n_nodes, 3),
        )
    with open(os.path.join(out_dir, "convergence.jsonl"), "w", encoding="utf-8") as fh:
        for rec in report.as_records():
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    write_audits(out_dir, audits)


def write_audits(out_dir, audits):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "audits.jsonl"), "w", encoding="utf-8") as fh:
        for a in audits:
            fh.write(json.dumps(a.record(), sort_keys=True, default=float) + "\n")


def save_state(out_dir, fields: FieldState, hist: SourceHistory, cfg_json: str):
    os.makedirs(out_dir, exist_ok=True)
    np.savez_compressed(
        os.path.join(out_dir, "run_state.npz"),
        times=fields.times,
        E=fields.E,
        B=fields.B,
        rho=hist.rho,
        J=hist.J,
        kinetic=hist.kinetic if hist.kinetic is not None else np.zeros_like(hist.rho),
        grid=np.array([fields.grid.Lx, fields.grid.Lz, fields.grid.nx, fields.grid.ny, fields.grid.nz]),
    )
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
        fh.write(cfg_json)


def load_state(run_dir):
    data = np.load(os.path.join(run_dir, "run_state.npz"))
    Lx, Lz, nx, ny, nz = data["grid"]
    grid = SpatialGrid(Lx=float(Lx), Lz=float(Lz), nx=int(nx), ny=int(ny), nz=int(nz))
    fields = FieldState(grid, data["times"], data["E"], data["B"])
    hist = SourceHistory(grid, data["times"], data["rho"], data["J"], data["kinetic"])
    with open(os.path.join(run_dir, "config.json"), "r", encoding="utf-8") as fh:
        cfg_doc = json.load(fh)
    return fields, hist, cfg_doc
