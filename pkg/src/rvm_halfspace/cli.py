"""Batch command-line interface: run scenarios, audit run outputs, list presets."""

from __future__ import annotations

import argparse
import json
import os
import sys


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="rvm-halfspace",
        description="Half-space relativistic Vlasov-Maxwell runs and audits",
    )
    parser.add_argument("--threads", type=int, default=None, help="worker thread cap (0 = auto)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario from a JSON config")
    p_run.add_argument("config", help="path to the config document")
    p_run.add_argument("--seed", type=int, default=None, help="override config seed")
    p_run.add_argument("--out", default=None, help="override output directory")

    p_audit = sub.add_parser("audit", help="re-run the audit suite on a finished run directory")
    p_audit.add_argument("run_dir")

    sub.add_parser("presets", help="list scenario presets")
    p_desc = sub.add_parser("describe", help="describe one preset")
    p_desc.add_argument("name")

    args = parser.parse_args(argv)
    if args.threads is not None and args.threads > 0:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)

    if args.command == "presets":
        from .config import list_presets

        for name in list_presets():
            print(name)
        return 0
    if args.command == "describe":
        from .config import describe_preset, ConfigError

        try:
            print(json.dumps(describe_preset(args.name), indent=2, sort_keys=True))
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        return 0
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "audit":
        return _cmd_audit(args)
    return 2


def _cmd_run(args):
    from .config import ConfigError, load_config

    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.output["dir"] = args.out
    try:
        run_scenario(cfg)
    except Exception as exc:  # surfaces the first failing stage by name
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def _cmd_audit(args):
    from .runio import load_state, write_audits

    try:
        fields, hist, cfg_doc = load_state(args.run_dir)
    except OSError as exc:
        print(f"audit failed: cannot load run dir: {exc}", file=sys.stderr)
        return 2
    audits = standard_audits(fields, hist, cfg_doc)
    write_audits(args.run_dir, audits)
    for a in audits:
        print(json.dumps(a.record(), sort_keys=True, default=float))
    return 0


def standard_audits(fields, hist, cfg_doc):
    from .core import Environment
    from .diagnostics import (
        conductor_bc_residuals,
        energy_balance,
        mass_flux_audit,
        maxwell_residuals,
    )
    from .moments import continuity_residual
    from .diagnostics import AuditReport

    env = Environment(**cfg_doc["env"]) if "env" in cfg_doc else Environment()
    kind = cfg_doc.get("bc", {}).get("kind", "inflow")
    audits = []
    audits.extend(maxwell_residuals(fields, hist))
    audits.append(conductor_bc_residuals(fields, hist))
    audits.append(energy_balance(fields, hist, env, kind))
    audits.append(mass_flux_audit(hist, kind))
    cont = continuity_residual(hist)
    audits.append(
        AuditReport(
            name="continuity",
            residuals={"sup": cont.sup, "l2": cont.l2},
            tolerance=None,
            passed=None,
        )
    )
    return audits


def run_scenario(cfg):
    """Drive a full run: Picard iteration, snapshots, convergence log, audits."""
    from .config import build_scenario
    from .picard import PicardRunner
    from .runio import save_state, write_run_outputs

    scen = build_scenario(cfg)
    runner = PicardRunner(
        scen.env,
        scen.grid,
        scen.vgrid,
        scen.closure,
        scen.f0,
        scen.init_data,
        scen.settings,
        gs_quad=scen.gs_quad,
        f0_separable=scen.f0_separable,
    )
    state, report = runner.run()
    fields = state.field_history[-1]
    audits = standard_audits(
        fields,
        state.hist,
        {"env": cfg.env, "bc": cfg.bc},
    )
    out_dir = cfg.output["dir"]
    write_run_outputs(out_dir, fields, state.hist, report, audits, stride=cfg.output["snapshot_stride"])
    save_state(out_dir, fields, state.hist, cfg.to_json())
    return state, report


if __name__ == "__main__":
    raise SystemExit(main())
