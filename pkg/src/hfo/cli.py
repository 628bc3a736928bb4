"""Command-line frontend: simulate scenarios, verify the convergence theory
against simulated arcs, and run robustness sweeps.

Exit codes: 0 success, 1 verification failure, 2 input or validation error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, analysis, hybrid
from .config import ConfigError, ScenarioConfig, config_to_dict, parse_config
from .model import HybridFOModel, validate
from .robustness import robustness_sweep

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_BAD_INPUT = 2


def _load(config_path: str) -> ScenarioConfig:
    config = parse_config(config_path)
    seed_env = os.environ.get("HFO_SEED")
    if seed_env is not None:
        config.policy = dataclasses.replace(config.policy, seed=int(seed_env))
    return config


def _validated(config: ScenarioConfig):
    zeta0 = config.initial_state()
    diag = validate(config.params, zeta0, mode=config.init_mode)
    if not diag.ok:
        lines = [f"  {c.name}: {c.detail}" for c in diag.failures()]
        raise ConfigError("validation failed:\n" + "\n".join(lines))
    return zeta0, diag


def _run(config: ScenarioConfig):
    zeta0, diag = _validated(config)
    model = HybridFOModel.nominal(config.params)
    arc = hybrid.simulate(model, zeta0, config.policy, config.horizon,
                          config.sample_dt)
    consts = analysis.constants(config.params, r_scale=config.r_scale)
    return arc, consts, diag


def _csv_header(params) -> list:
    plant = params.plant
    return (
        ["t", "j", "case"]
        + [f"x_{i}" for i in range(plant.n)]
        + [f"u_{i}" for i in range(plant.m)]
        + [f"ys_{i}" for i in range(plant.p)]
        + [f"z_{i}" for i in range(plant.m)]
        + ["tau_c", "tau_g", "dist_to_A"]
    )


def _state_row(t, j, case, state, consts) -> list:
    return (
        [repr(float(t)), j, case]
        + [repr(float(v)) for v in state.x]
        + [repr(float(v)) for v in state.u]
        + [repr(float(v)) for v in state.y_s]
        + [repr(float(v)) for v in state.z]
        + [repr(state.tau_c), repr(state.tau_g),
           repr(analysis.dist_to_A(state, consts))]
    )


def write_trajectory_csv(path: Path, arc, consts, params):
    """Flow samples plus a pre/post row pair for every jump."""
    jump_iter = iter(arc.jumps)
    pending = next(jump_iter, None)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_csv_header(params))
        for seg in arc.segments:
            for t, state in zip(seg.times, seg.states):
                writer.writerow(_state_row(t, seg.j, "", state, consts))
            while pending is not None and pending.time.j == seg.j:
                writer.writerow(_state_row(
                    pending.time.t, pending.time.j, f"{pending.case}:pre",
                    pending.state_before, consts))
                writer.writerow(_state_row(
                    pending.time.t, pending.time.j + 1, f"{pending.case}:post",
                    pending.state_after, consts))
                pending = next(jump_iter, None)


def _base_report(config, consts, diag) -> dict:
    return {
        "tool_version": __version__,
        "config": config_to_dict(config),
        "constants": consts.as_dict(),
        "validation": [dataclasses.asdict(c) for c in diag.checks],
    }


def cmd_simulate(args) -> int:
    config = _load(args.config)
    arc, consts, diag = _run(config)
    stats = hybrid.jump_stats(arc)
    zeno = hybrid.check_non_zeno(arc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(out / "trajectory.csv", arc, consts, config.params)
    report = _base_report(config, consts, diag)
    report.update({
        "t_end": arc.t_end,
        "jumps": arc.jump_count,
        "alpha": stats.alpha,
        "alpha_bar": stats.alpha_bar,
        "non_zeno": {
            "passed": zeno.passed,
            "violations": zeno.violations,
            "max_jumps_per_instant": zeno.max_jumps_per_instant,
        },
    })
    (out / "report.json").write_text(json.dumps(report, indent=2))
    print(f"wrote {out / 'trajectory.csv'} and {out / 'report.json'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    config = _load(args.config)
    arc, consts, diag = _run(config)
    params = config.params
    checks = {}

    strict_ok = all(
        c.status == "pass" for c in diag.checks if c.name == "init_restricted"
    ) and config.init_mode == "strict"
    if strict_ok:
        thm1 = analysis.check_bound(arc, consts, params, "thm1")
        checks["bound_thm1"] = {
            "passed": thm1.passed,
            "max_violation": thm1.max_violation,
            "first_entry_time": thm1.first_entry_time,
        }
    else:
        checks["bound_thm1"] = {
            "passed": None,
            "skipped": "restricted initialization not satisfied",
        }
    thm2 = analysis.check_bound(arc, consts, params, "thm2")
    checks["bound_thm2"] = {
        "passed": thm2.passed,
        "max_violation": thm2.max_violation,
        "first_entry_time": thm2.first_entry_time,
    }

    rates = analysis.rate_check(arc, params)
    checks["contraction"] = {
        "passed": rates.passed,
        "periods": len(rates.periods),
        "worst_step_margin": max(
            (p.worst_step_margin for p in rates.periods), default=None),
    }
    recon = analysis.reconstruct_x(arc, params)
    checks["reconstruction"] = {
        "passed": recon.max_deviation <= 1e-8,
        "max_deviation": recon.max_deviation,
    }
    zeno = hybrid.check_non_zeno(arc)
    checks["non_zeno"] = {"passed": zeno.passed, "violations": zeno.violations}

    report = _base_report(config, consts, diag)
    report["checks"] = checks
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "verify_report.json").write_text(json.dumps(report, indent=2))

    failed = [name for name, c in checks.items() if c["passed"] is False]
    for name, c in checks.items():
        status = {True: "PASS", False: "FAIL", None: "SKIP"}[c["passed"]]
        print(f"{status} {name}")
    if failed:
        print(f"verification failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_VERIFY_FAILED
    return EXIT_OK


def cmd_robustness(args) -> int:
    config = _load(args.config)
    if config.perturbation is None:
        raise ConfigError("config has no perturbation block")
    zeta0, diag = _validated(config)
    deltas = [float(v) for v in args.deltas.split(",")] if args.deltas else [
        1e-1, 1e-2, 1e-3]
    sweep = robustness_sweep(config.params, config.perturbation, deltas,
                             args.tau, config.policy, zeta0, config.sample_dt)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "robustness.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["delta", "epsilon", "witness_t", "witness_j"])
        for row in sweep.rows:
            writer.writerow([row.delta, row.epsilon, row.witness_t, row.witness_j])
    consts = analysis.constants(config.params, r_scale=config.r_scale)
    report = _base_report(config, consts, diag)
    report["sweep"] = {
        "tau": sweep.tau,
        "rows": [dataclasses.asdict(row) for row in sweep.rows],
        "nonincreasing": sweep.nonincreasing,
    }
    (out / "robustness_report.json").write_text(json.dumps(report, indent=2))
    trend = "nonincreasing" if sweep.nonincreasing else "NOT nonincreasing"
    print(f"epsilon trend over decreasing delta: {trend}")
    for row in sweep.rows:
        print(f"delta={row.delta:g} epsilon={row.epsilon:g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hfo",
        description="Sampled-data feedback-optimization simulator and verifier",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario, emit CSV + report")
    sim.add_argument("config")
    sim.add_argument("--out", default=".", help="output directory")
    sim.set_defaults(func=cmd_simulate)

    ver = sub.add_parser("verify", help="run convergence/structure checks")
    ver.add_argument("config")
    ver.add_argument("--out", default=".")
    ver.set_defaults(func=cmd_verify)

    rob = sub.add_parser("robustness", help="perturbation sweep")
    rob.add_argument("config")
    rob.add_argument("--out", default=".")
    rob.add_argument("--deltas", default=None,
                     help="comma-separated perturbation scales")
    rob.add_argument("--tau", type=float, default=10.0,
                     help="hybrid-time horizon t + j for closeness")
    rob.set_defaults(func=cmd_robustness)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
