"""Command-line front end.

Subcommands: ``simulate``, ``verify``, ``control {invariance|time-optimal|
stabilize}``, ``resolvent``, ``steady-state``.  Exit codes: 0 success,
1 failed checks or missed control objectives, 2 invalid configuration,
3 runtime failure (blow-up, non-convergence).  ``CBF_THREADS`` caps the
worker count of the verify runner.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .checks import CheckReport
from .config import ConfigError, ExperimentConfig, load_config, serialize_config
from .control import (
    ControlFailure,
    run_invariance,
    run_stabilization,
    run_time_optimal,
    solve_steady_state,
)
from .evolution import BlowUpError, simulate
from .operators import QuantizationLevel
from .potentials import EnstrophyIndicator
from .spectral import h_norm, zero_field
from .stationary import (
    AccretivityShift,
    ConvergenceError,
    apriori_bound_check,
    quantized_stationary_solve,
    solve_stationary,
)
from .storage import (
    read_checkpoint,
    write_checkpoint,
    write_jsonl,
    write_trajectory_csv,
    write_trajectory_jsonl,
)
from .verify import run_suites, suite_names


def _out_dir(cfg: ExperimentConfig, override: str | None) -> Path:
    out = Path(override or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_traj(out: Path, traj, fmt: str, stem: str = "trajectory") -> None:
    if fmt in ("csv", "both"):
        write_trajectory_csv(out / f"{stem}.csv", traj)
    if fmt in ("jsonl", "both"):
        write_trajectory_jsonl(out / f"{stem}.jsonl", traj)
    for i, (t, state) in enumerate(zip(traj.times, traj.states)):
        write_checkpoint(out / f"{stem}_{i:06d}.cbf", state, scalars=[float(t)])


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(cfg, args.out)
    (out / "config.json").write_text(serialize_config(cfg))
    if args.resume:
        y0, scalars = read_checkpoint(args.resume, cfg.grid.dealias_fraction)
        t0 = scalars[0] if scalars else 0.0
    else:
        y0, t0 = cfg.initial_state(), 0.0
    try:
        traj = simulate(y0, cfg.forcing(), cfg.params, cfg.potential(), cfg.stepper, t0=t0)
    except BlowUpError as exc:
        print(f"blow-up at t = {exc.t}", file=sys.stderr)
        return 3
    _write_traj(out, traj, args.format)
    summary = {
        "terminal_time": float(traj.times[-1]),
        "terminal_h_norm": traj.norm_series[-1].h_norm,
        "terminal_enstrophy": traj.norm_series[-1].enstrophy,
        "max_ledger_residual": traj.max_step_residual,
        "samples": len(traj.times),
    }
    write_jsonl(out / "summary.jsonl", [summary])
    print(f"wrote {len(traj.times)} samples to {out}")
    return 0


def cmd_verify(args) -> int:
    suites = args.suite.split(",") if args.suite else ["all"]
    try:
        reports = run_suites(suites, seed=args.seed, mutate=args.mutate)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for rep in reports:
        print(rep.to_json())
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        write_jsonl(outdir / "checks.jsonl", reports)
    failed = [r for r in reports if not r.passed]
    print(
        f"# {len(reports) - len(failed)}/{len(reports)} checks passed",
        file=sys.stderr,
    )
    return 1 if failed else 0


def _control_report_row(rep) -> dict:
    return {
        "constraint_violation_max": rep.constraint_violation_max,
        "hit_time": rep.hit_time,
        "extinction_bound": rep.extinction_bound,
        "decay_rate": rep.decay_rate,
        "control_norm_max": float(np.max(rep.control_norm_series)),
        "success": rep.success,
        **{k: v for k, v in (rep.details or {}).items() if np.isscalar(v)},
    }


def cmd_control(args) -> int:
    cfg = load_config(args.config)
    if cfg.control_app not in (None, args.app):
        print(
            f"config is for app {cfg.control_app!r}, requested {args.app!r}",
            file=sys.stderr,
        )
        return 2
    out = _out_dir(cfg, args.out)
    try:
        if args.app == "invariance":
            cfg.control.require("varpi")
            rep = run_invariance(
                cfg.initial_state(), cfg.forcing(), cfg.params, cfg.control, cfg.stepper
            )
        elif args.app == "time-optimal":
            cfg.control.require("kappa_c")
            target_spec = cfg.raw.get("control", {})
            target = (
                read_checkpoint(target_spec["target"][5:], cfg.grid.dealias_fraction)[0]
                if str(target_spec.get("target", "zero")).startswith("file:")
                else zero_field(cfg.grid)
            )
            rep = run_time_optimal(
                cfg.initial_state(), target, cfg.params, cfg.control, cfg.stepper,
                tol_hit=float(target_spec.get("tol_hit", 1e-6)),
            )
        else:
            cfg.control.require("theta", "varpi")
            eq_spec = cfg.raw.get("equilibrium", {"kind": "zero"})
            if eq_spec.get("kind") == "file":
                y_e, _ = read_checkpoint(eq_spec["file"], cfg.grid.dealias_fraction)
            elif eq_spec.get("kind") == "solve":
                f_e = cfg.forcing()
                base = f_e(0.0) if f_e is not None else zero_field(cfg.grid)
                y_e = solve_steady_state(base, cfg.params)
            else:
                y_e = zero_field(cfg.grid)
            rep = run_stabilization(
                cfg.initial_state(), y_e, cfg.params, cfg.control,
                EnstrophyIndicator(cfg.control.varpi), cfg.stepper,
            )
    except ControlFailure as exc:
        print(f"control failure: {exc}", file=sys.stderr)
        detail = exc.details.get("report")
        if isinstance(detail, CheckReport):
            print(detail.to_json(), file=sys.stderr)
        return 1
    except (BlowUpError, ConvergenceError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3
    _write_traj(out, rep.trajectory, args.format)
    write_jsonl(out / "report.jsonl", [_control_report_row(rep)])
    print(f"{args.app} run complete; report in {out}")
    return 0 if rep.success else 1


def cmd_resolvent(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(cfg, args.out)
    spec = cfg.raw.get("resolvent", {})
    kappa = float(spec.get("kappa", 1.0))
    tol = float(spec.get("tol", 1e-11))
    forcing = cfg.forcing()
    f = forcing(0.0) if forcing is not None else zero_field(cfg.grid)
    shift = AccretivityShift(kappa=kappa)
    try:
        if spec.get("quantized", False):
            rep = quantized_stationary_solve(
                f, cfg.params, QuantizationLevel(float(spec.get("level", 1.0))),
                cfg.potential(), cfg.stepper.lam, shift, tol=tol,
            )
        else:
            rep = solve_stationary(
                f, cfg.params, cfg.potential(), cfg.stepper.lam, shift, tol=tol
            )
    except ConvergenceError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        for i, r in enumerate(exc.history[-10:]):
            print(f"  residual[-{10 - i}] = {r:.6e}", file=sys.stderr)
        return 3
    write_checkpoint(out / "stationary.cbf", rep.solution)
    bound = apriori_bound_check(rep, f, cfg.params, shift)
    rows = [
        {
            "iterations": rep.iterations,
            "final_residual": rep.final_residual,
            "uniqueness_gap": rep.uniqueness_gap,
            **{k: v for k, v in rep.details.items()},
        }
    ]
    write_jsonl(out / "report.jsonl", rows + [])
    print(bound.to_json())
    print(f"stationary solve: residual {rep.final_residual:.3e} in {rep.iterations} iterations")
    return 0


def cmd_steady_state(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(cfg, args.out)
    forcing = cfg.forcing()
    f_e = forcing(0.0) if forcing is not None else zero_field(cfg.grid)
    try:
        y_e = solve_steady_state(f_e, cfg.params, tol=float(cfg.raw.get("steady", {}).get("tol", 1e-11)))
    except ControlFailure as exc:
        print(f"continuation stalled: {exc}", file=sys.stderr)
        return 3
    write_checkpoint(out / "steady_state.cbf", y_e)
    write_jsonl(out / "report.jsonl", [{"h_norm": h_norm(y_e)}])
    print(f"steady state written to {out / 'steady_state.cbf'}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="cbfsim",
        description="pseudo-spectral damped Navier-Stokes suite with monotone "
        "potentials and feedback control",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="JSON config path")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--format", choices=["csv", "jsonl", "both"], default="csv")

    p_sim = sub.add_parser("simulate", help="integrate the evolution problem")
    common(p_sim)
    p_sim.add_argument("--resume", default=None, help="checkpoint to resume from")
    p_sim.set_defaults(fn=cmd_simulate)

    p_ver = sub.add_parser("verify", help="run property-check suites")
    p_ver.add_argument("--suite", default="all",
                       help=f"comma list from {suite_names()} or 'all'")
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.add_argument("--out", default=None)
    p_ver.add_argument("--mutate", default=None,
                       help="inject a named defect (CI self-test), e.g. c-sign")
    p_ver.set_defaults(fn=cmd_verify)

    p_ctl = sub.add_parser("control", help="run a feedback-control application")
    p_ctl.add_argument("app", choices=["invariance", "time-optimal", "stabilize"])
    common(p_ctl)
    p_ctl.set_defaults(fn=cmd_control)

    p_res = sub.add_parser("resolvent", help="solve the regularized stationary problem")
    common(p_res)
    p_res.set_defaults(fn=cmd_resolvent)

    p_ss = sub.add_parser("steady-state", help="solve the unregularized steady balance")
    common(p_ss)
    p_ss.set_defaults(fn=cmd_steady_state)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        for line in exc.errors:
            print(f"config error: {line}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
