"""Batch experiment runner.

Subcommands: run, compare, report, list-presets.  Exit codes: 0 all enabled
checks pass, 2 check failure, 3 config error, 4 run left the admissible
region.  The default output directory is ./runs, overridable with --out or
the TRACKSPLIT_OUT environment variable.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from .config import PRESETS, ConfigError, SolverConfig, load_config, preset_config, validate_config
from .diagnostics import linear_rate_fit, run_all_checks
from .outer import run_single_loop
from .trace import IterateTrace, read_trace_csv, write_trace_csv

PRESET_NOTES = {
    "bq1_single_loop": "scalar quadratic bilevel, one inner/adjoint sweep per outer step",
    "bq1_certified": "scalar quadratic bilevel with enough sweeps for a linear-rate certificate",
    "bq1_baseline": "scalar quadratic bilevel, exact inner/adjoint solves every step",
    "poisson_single_loop": "1-D diffusion coefficients, Jacobi sweeps, sampled constants",
    "poisson_baseline": "1-D diffusion coefficients, exact solves every step",
    "pdps_saddle_1d": "scalar saddle problem, exact primal-dual splitting",
    "pdps_mismatch_small": "scalar saddle problem with a 1% adjoint mismatch",
}


def _out_dir(args, cfg=None) -> Path:
    """--out beats TRACKSPLIT_OUT beats the config's out_dir beats ./runs."""
    if getattr(args, "out", None):
        return Path(args.out)
    env = os.environ.get("TRACKSPLIT_OUT")
    if env:
        return Path(env)
    if cfg is not None and cfg.out_dir:
        return Path(cfg.out_dir)
    return Path("runs")


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: _jsonable(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def _resolve_config(args) -> SolverConfig:
    if getattr(args, "preset", None):
        cfg = preset_config(args.preset)
    elif getattr(args, "config", None):
        cfg = load_config(args.config)
    else:
        raise ConfigError("config", "provide --config PATH or --preset NAME")
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "budget", None) is not None:
        cfg.budget = args.budget
    validate_config(cfg)
    return cfg


def _execute(cfg: SolverConfig, out_root: Path, enabled_checks=None) -> tuple[IterateTrace, list, Path]:
    from .config import build_instance

    instance = build_instance(cfg)
    trace = run_single_loop(instance, cfg)
    checks = run_all_checks(trace, enabled=enabled_checks or cfg.checks)

    run_dir = out_root / cfg.name
    run_dir.mkdir(parents=True, exist_ok=True)
    write_trace_csv(trace, run_dir / "trace.csv")
    with open(run_dir / "config.json", "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
    with open(run_dir / "checks.json", "w") as fh:
        json.dump([c.to_dict() for c in checks], fh, indent=2)

    fit = (
        linear_rate_fit(trace, trace.xbar, window=min(100, max(trace.n_iterations - 1, 2)))
        if trace.xbar is not None and trace.n_iterations >= 3
        else None
    )
    summary = {
        "name": cfg.name,
        "method": trace.method,
        "status": trace.status,
        "iterations": trace.n_iterations,
        "final_residual": float(trace.scalars["residual"][-1]) if trace.n_iterations else None,
        "p_est": fit.p_est if fit else None,
        "rate_fit_status": fit.status if fit else None,
        "certificate": _jsonable(trace.certificates),
        "counters": trace.counters,
        "wall_time_s": trace.wall_time,
        "config_hash": trace.config_hash,
        "checks_passed": all(c.passed for c in checks),
    }
    with open(run_dir / "summary.json", "w") as fh:
        json.dump(_jsonable(summary), fh, indent=2)
    return trace, checks, run_dir


def cmd_run(args) -> int:
    try:
        cfg = _resolve_config(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    enabled = args.check.split(",") if args.check else None
    trace, checks, run_dir = _execute(cfg, _out_dir(args, cfg), enabled)
    for c in checks:
        state = "pass" if c.passed else "FAIL"
        print(f"{state}  {c.name:<28} min-slack {c.min_slack: .3e}  [{c.citation}]")
    print(f"status={trace.status}  iterations={trace.n_iterations}  outputs in {run_dir}")
    if trace.status == "left-omega":
        return 4
    if not all(c.passed for c in checks):
        return 2
    return 0


def cmd_compare(args) -> int:
    try:
        cfg_a = load_config(args.config_a) if Path(args.config_a).exists() else preset_config(args.config_a)
        cfg_b = load_config(args.config_b) if Path(args.config_b).exists() else preset_config(args.config_b)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    if (cfg_a.instance_kind, cfg_a.instance_params) != (cfg_b.instance_kind, cfg_b.instance_params):
        print("error: compare requires the same instance in both configs", file=sys.stderr)
        return 3
    out = _out_dir(args)
    trace_a, _, _ = _execute(cfg_a, out)
    trace_b, _, _ = _execute(cfg_b, out)

    cmp_dir = out / f"compare_{cfg_a.name}_vs_{cfg_b.name}"
    cmp_dir.mkdir(parents=True, exist_ok=True)
    n = max(trace_a.n_iterations, trace_b.n_iterations)

    def dist_curve(tr):
        d = tr.scalars["dist_to_xbar_M"]
        return np.pad(d, (0, n - d.size), constant_values=d[-1] if d.size else 0.0)

    curves = np.column_stack([np.arange(n), dist_curve(trace_a), dist_curve(trace_b)])
    header = f"k,dist_{cfg_a.name},dist_{cfg_b.name}"
    lines = [header] + [",".join(f"{v:.17g}" for v in row) for row in curves]
    (cmp_dir / "curves.csv").write_text("\n".join(lines) + "\n")

    def solve_count(tr):
        c = tr.counters
        return (
            c["inner_splitting_steps"] + c["inner_direct_solves"],
            c["adjoint_splitting_steps"] + c["adjoint_direct_solves"],
        )

    ia, aa = solve_count(trace_a)
    ib, ab = solve_count(trace_b)
    result = {
        "a": {"name": cfg_a.name, "inner_solves": ia, "adjoint_solves": aa,
              "iterations": trace_a.n_iterations, "wall_time_s": trace_a.wall_time,
              "final_dist": float(trace_a.scalars["dist_to_xbar_M"][-1])},
        "b": {"name": cfg_b.name, "inner_solves": ib, "adjoint_solves": ab,
              "iterations": trace_b.n_iterations, "wall_time_s": trace_b.wall_time,
              "final_dist": float(trace_b.scalars["dist_to_xbar_M"][-1])},
        "speedup_wall": trace_b.wall_time / trace_a.wall_time if trace_a.wall_time > 0 else None,
        "limit_gap": float(np.linalg.norm(trace_a.xs[-1] - trace_b.xs[-1])),
    }
    with open(cmp_dir / "comparison.json", "w") as fh:
        json.dump(result, fh, indent=2)
    print(json.dumps(result, indent=2))
    print(f"comparison written to {cmp_dir}")
    return 0


def _render_figures(run_dir: Path, data: dict) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    made = []
    ks = data["k"]
    fig, ax = plt.subplots(figsize=(6.0, 3.8))
    if np.any(data["dist_to_xbar_M"] > 0):
        ax.semilogy(ks, np.maximum(data["dist_to_xbar_M"], 1e-300), label="distance to solution (M-seminorm)")
    ax.semilogy(ks, np.maximum(data["residual"], 1e-300), label="optimality residual")
    ax.set_xlabel("outer iteration k")
    ax.legend(loc="best", fontsize=8)
    ax.set_title(run_dir.name)
    fig.tight_layout()
    p = run_dir / "convergence.png"
    fig.savefig(p, dpi=130)
    plt.close(fig)
    made.append(p)

    fig, ax = plt.subplots(figsize=(6.0, 3.8))
    for col, label in (("grad_err", "gradient estimate error"),
                       ("step_norm_M", "step length (M-seminorm)"),
                       ("e_pk", "ledger error term |e_pk|")):
        vals = np.abs(data[col])
        if np.any(vals > 0):
            ax.semilogy(ks, np.maximum(vals, 1e-300), label=label)
    ax.set_xlabel("outer iteration k")
    ax.legend(loc="best", fontsize=8)
    ax.set_title(f"{run_dir.name}: error ledger")
    fig.tight_layout()
    p = run_dir / "errors.png"
    fig.savefig(p, dpi=130)
    plt.close(fig)
    made.append(p)
    return made


def cmd_report(args) -> int:
    run_dir = Path(args.trace)
    csv_path = run_dir / "trace.csv" if run_dir.is_dir() else run_dir
    run_dir = csv_path.parent
    if not csv_path.exists():
        print(f"error: no trace at {csv_path}", file=sys.stderr)
        return 3
    try:
        data = read_trace_csv(csv_path)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3

    checks = []
    checks_path = run_dir / "checks.json"
    if checks_path.exists():
        checks = json.loads(checks_path.read_text())
    summary = {}
    summary_path = run_dir / "summary.json"
    if summary_path.exists():
        summary = json.loads(summary_path.read_text())

    lines = [f"run report: {run_dir}"]
    if summary:
        lines.append(
            f"  method={summary.get('method')}  status={summary.get('status')}  "
            f"iterations={summary.get('iterations')}  final residual={summary.get('final_residual')}"
        )
        cert = summary.get("certificate") or {}
        if cert:
            lines.append(
                f"  certificate: regime={cert.get('regime')}  p={cert.get('p')}  theta={cert.get('theta')}"
            )
        if summary.get("p_est") is not None:
            lines.append(f"  fitted rate p_est={summary['p_est']:.6g}")
    if checks:
        lines.append(f"  {'check':<30} {'result':<6} {'min slack':<12} citation")
        for c in checks:
            lines.append(
                f"  {c['name']:<30} {'pass' if c['pass'] else 'FAIL':<6} {c['min_slack']: .3e}  {c['citation']}"
            )
    report_text = "\n".join(lines) + "\n"
    print(report_text, end="")
    (run_dir / "report.txt").write_text(report_text)

    table = ["name,pass,min_slack,citation"] + [
        f"{c['name']},{int(c['pass'])},{c['min_slack']:.17g},{c['citation']}" for c in checks
    ]
    (run_dir / "checks.csv").write_text("\n".join(table) + "\n")

    if not args.no_figures:
        for p in _render_figures(run_dir, data):
            print(f"figure written: {p}")
    return 0 if all(c["pass"] for c in checks) else 2


def cmd_list_presets(_args) -> int:
    for name in PRESETS:
        print(f"{name:<24} {PRESET_NOTES.get(name, '')}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tracksplit", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="execute one configured experiment")
    runp.add_argument("--config", help="path to a JSON config")
    runp.add_argument("--preset", help="name of a shipped preset")
    runp.add_argument("--out", help="output directory")
    runp.add_argument("--seed", type=int, help="override the config seed")
    runp.add_argument("--budget", type=int, help="override the iteration budget")
    runp.add_argument("--check", help="comma-separated subset of checks to enable")
    runp.set_defaults(func=cmd_run)

    cmp = sub.add_parser("compare", help="run two configs on the same instance and compare")
    cmp.add_argument("config_a", help="config path or preset name")
    cmp.add_argument("config_b", help="config path or preset name")
    cmp.add_argument("--out", help="output directory")
    cmp.set_defaults(func=cmd_compare)

    rep = sub.add_parser("report", help="summarize a finished run directory")
    rep.add_argument("trace", help="run directory or trace.csv path")
    rep.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    rep.set_defaults(func=cmd_report)

    lp = sub.add_parser("list-presets", help="list shipped experiment presets")
    lp.set_defaults(func=cmd_list_presets)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
