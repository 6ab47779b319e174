"""Command-line front end: run, check-condition, validate-model, sweep.

Artifacts are CSV and JSON-lines with deterministic bodies; the only
nondeterministic byte in any output is the `# generated <timestamp>`
comment line at the top of CSV files, so reruns on identical configs can
be diffed directly. Exit codes: 0 success/pass, 1 configuration or
runtime error, 2 audit or validation failure, 3 condition fails, 4
condition inconclusive.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .config import (
    ConfigError,
    default_config,
    make_grid,
    make_initial,
    make_model,
    make_sampling,
    make_scheme,
    parse_config,
    serialize_config,
)
from .diagnostics import audit, decay_summary
from .kinetic import check_condition
from .model import ModelError, validate_model
from .quadrature import QuadratureError
from .solver import BlowUpError, ConfigurationError, run

__all__ = [
    "main",
    "app",
    "cmd_run",
    "cmd_check_condition",
    "cmd_validate_model",
    "cmd_sweep",
    "read_trajectory_csv",
]

_EXIT_BY_VERDICT = {"pass": 0, "fail": 3, "inconclusive": 4}


def _timestamp():
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _fmt(x):
    # repr of a builtin float is the shortest round-tripping form; numpy
    # scalars must be converted first or their type name leaks into the CSV.
    return repr(float(x))


def _write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _write_csv(path, header, rows, comment=None):
    lines = [f"# generated {_timestamp()}"]
    if comment is not None:
        lines.append(comment)
    lines.append(header)
    lines.extend(rows)
    _write_text(path, "\n".join(lines) + "\n")


def _write_jsonl(path, records):
    lines = [json.dumps(rec, sort_keys=True) for rec in records]
    _write_text(path, "\n".join(lines) + "\n")


def write_trajectory_csv(path, traj):
    header = "t,mean,l1_to_mean,l2_energy,linf,dissipation_resolved,dissipation_budget"
    rows = [
        ",".join(_fmt(v) for v in (r.t, r.mean, r.l1_to_mean, r.l2_energy,
                                   r.linf, r.dissipation_resolved,
                                   r.dissipation_budget))
        for r in traj.rows
    ]
    _write_csv(path, header, rows)


def write_snapshot_csv(path, snap, grid):
    lines = [f"# t={_fmt(snap.time)}"]
    if grid.dimension == 1:
        lines.append("x,u")
        xs = grid.centers(0)
        for j in range(grid.cells[0]):
            lines.append(f"{_fmt(xs[j])},{_fmt(snap.values[j])}")
    else:
        lines.append("x,y,u")
        xs = grid.centers(0)
        ys = grid.centers(1)
        for i in range(grid.cells[0]):
            for j in range(grid.cells[1]):
                lines.append(f"{_fmt(xs[i])},{_fmt(ys[j])},{_fmt(snap.values[i, j])}")
    _write_text(path, "\n".join(lines) + "\n")


def write_condition_csv(path, report, dimension):
    header = "lambda,omega,tau_witness," + ",".join(
        f"kappa_witness_{c + 1}" for c in range(dimension))
    rows = []
    for lam, om, fp in zip(report.lambdas, report.omegas, report.witnesses):
        cells = [_fmt(lam), _fmt(om), _fmt(fp.tau)] + [_fmt(c) for c in fp.kappa]
        rows.append(",".join(cells))
    _write_csv(path, header, rows)


def read_trajectory_csv(path):
    """Columns of a trajectory CSV as a dict of arrays."""
    body = [line for line in Path(path).read_text(encoding="utf-8").splitlines()
            if line and not line.startswith("#")]
    if not body:
        raise ValueError(f"{path}: no header line")
    names = body[0].split(",")
    data = np.array([[float(v) for v in line.split(",")] for line in body[1:]])
    if data.size == 0:
        data = data.reshape(0, len(names))
    return {name: data[:, k] for k, name in enumerate(names)}


def cmd_run(cfg, out_dir, quiet=False):
    """Integrate, audit, summarize decay; write all artifacts."""
    model = make_model(cfg)
    grid = make_grid(cfg, model.dimension)
    scheme = make_scheme(cfg)
    fld = make_initial(cfg, grid)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_text(out / "config.txt", serialize_config(cfg))

    try:
        traj = run(model, grid, fld, scheme)
    except BlowUpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.trajectory is not None:
            write_trajectory_csv(out / "trajectory.csv", exc.trajectory)
        return 1

    write_trajectory_csv(out / "trajectory.csv", traj)
    for k, snap in enumerate(traj.snapshots):
        write_snapshot_csv(out / "snapshots" / f"snap-{k:04d}.csv", snap, grid)

    report = audit(traj)
    summary = decay_summary(traj)
    _write_jsonl(out / "audit.jsonl", [report.as_dict()])
    _write_text(out / "audit.txt", "\n".join(report.lines()) + "\n")
    _write_jsonl(out / "decay.jsonl", summary.as_dicts())
    _write_text(out / "decay.txt", "\n".join(summary.lines()) + "\n")

    if not quiet:
        print(f"model {model.name}: {traj.stats.steps} steps to t={scheme.t_end:g}")
        print("\n".join(report.lines()))
        print("\n".join(summary.lines()))
        print(f"artifacts in {out}")
    return 0 if report.passed else 2


def cmd_check_condition(cfg, out_dir, quiet=False):
    """Sample the nondegeneracy functional and grade the verdict."""
    model = make_model(cfg)
    # A configured grid supplies the lattice periods, including the 1.0
    # per-axis default applied when only cells are given.
    grid = make_grid(cfg, model.dimension) if cfg.cells is not None else None
    sampling = make_sampling(cfg, grid=grid)
    report = check_condition(model, delta=cfg.delta, lambdas=list(cfg.lambdas),
                             sampling=sampling)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_condition_csv(out / "condition.csv", report, model.dimension)
    _write_text(out / "condition.txt", "\n".join(report.lines()) + "\n")
    if not quiet:
        print("\n".join(report.lines()))
    return _EXIT_BY_VERDICT[report.verdict]


def cmd_validate_model(cfg, out_dir, quiet=False):
    """Run the structural checks on the configured model."""
    model = make_model(cfg)
    report = validate_model(model)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = [
        {"check": name, "residual": c.residual, "tolerance": c.tolerance,
         "passed": c.passed}
        for name, c in sorted(report.checks.items())
    ]
    records.append({"model": report.model_name, "samples": report.samples,
                    "passed": report.overall_pass})
    _write_jsonl(out / "validation.jsonl", records)
    _write_text(out / "validation.txt", "\n".join(report.lines()) + "\n")
    if not quiet:
        print(f"validate {report.model_name}:")
        print("\n".join(report.lines()))
    return 0 if report.overall_pass else 2


def _worker_count(n_jobs):
    env = os.environ.get("ANISO_THREADS")
    if env is not None:
        try:
            workers = int(env)
        except ValueError:
            raise ValueError(f"ANISO_THREADS must be an integer, got {env!r}") from None
        if workers < 1:
            raise ValueError(f"ANISO_THREADS must be positive, got {workers}")
    else:
        workers = min(4, os.cpu_count() or 1)
    return max(1, min(workers, n_jobs))


def _sweep_run_one(cfg, axis, value, out):
    sub = replace(cfg)
    if axis == "cells":
        n = int(value)
        dim = make_model(cfg).dimension
        sub.cells = (n,) * dim
        tag = f"cells-{n}"
    elif axis == "cfl":
        sub.cfl = float(value)
        tag = f"cfl-{float(value):g}"
    else:
        sub.amplitude = float(value)
        tag = f"amplitude-{float(value):g}"

    sub_dir = out / tag
    row = {"value": value, "status": "ok",
           "l1_initial": float("nan"), "l1_final": float("nan"),
           "mean_drift": float("nan"), "max_principle_violation": float("nan"),
           "audit_pass": False}
    code = cmd_run(sub, sub_dir, quiet=True)
    if code == 1:
        row["status"] = "blow-up"
        return row
    cols = read_trajectory_csv(sub_dir / "trajectory.csv")
    report = json.loads((sub_dir / "audit.jsonl").read_text(encoding="utf-8"))
    row["l1_initial"] = float(cols["l1_to_mean"][0])
    row["l1_final"] = float(cols["l1_to_mean"][-1])
    row["mean_drift"] = report["mean_drift"]
    row["max_principle_violation"] = report["max_principle_violation"]
    row["audit_pass"] = bool(report["passed"])
    return row


def _sweep_condition_one(cfg, floor, out):
    lams = [l for l in cfg.lambdas if l > floor * (1.0 + 1e-12)] + [float(floor)]
    sub = replace(cfg, lambdas=tuple(lams))
    tag = f"lambda_floor-{float(floor):g}"
    model = make_model(sub)
    grid = make_grid(sub, model.dimension) if sub.cells is not None else None
    report = check_condition(model, delta=sub.delta, lambdas=list(sub.lambdas),
                             sampling=make_sampling(sub, grid=grid))
    sub_dir = out / tag
    sub_dir.mkdir(parents=True, exist_ok=True)
    write_condition_csv(sub_dir / "condition.csv", report, model.dimension)
    _write_text(sub_dir / "condition.txt", "\n".join(report.lines()) + "\n")
    return {"value": floor, "omega_final": report.omegas[-1],
            "threshold": report.pass_threshold, "verdict": report.verdict}


def cmd_sweep(cfg, out_dir, quiet=False, axis=None, values=None):
    """Repeat one experiment along a numeric axis; one CSV row per value.

    Rows keep the order of the requested values whatever the worker
    scheduling does. Exit 2 flags rows that blew up or failed their audit;
    condition verdicts are findings, not failures.
    """
    axis = axis if axis is not None else cfg.sweep_axis
    values = values if values is not None else cfg.sweep_values
    if axis is None or axis not in ("cells", "cfl", "amplitude", "lambda_floor"):
        raise ConfigError([f"sweep axis must be cells, cfl, amplitude or "
                           f"lambda_floor, got {axis!r}"])
    values = list(values)
    if not values:
        raise ConfigError(["sweep needs a non-empty value list"])
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    if axis == "lambda_floor":
        worker = lambda v: _sweep_condition_one(cfg, float(v), out)
    else:
        worker = lambda v: _sweep_run_one(cfg, axis, v, out)

    with ThreadPoolExecutor(max_workers=_worker_count(len(values))) as pool:
        rows = list(pool.map(worker, values))

    if axis == "lambda_floor":
        header = "value,omega_final,threshold,verdict"
        body = [",".join([_fmt(r["value"]), _fmt(r["omega_final"]),
                          _fmt(r["threshold"]), r["verdict"]]) for r in rows]
        failed = False
    else:
        header = ("value,status,l1_initial,l1_final,mean_drift,"
                  "max_principle_violation,audit_pass")
        body = []
        for r in rows:
            val = str(int(r["value"])) if axis == "cells" else _fmt(r["value"])
            body.append(",".join([
                val, r["status"], _fmt(r["l1_initial"]), _fmt(r["l1_final"]),
                _fmt(r["mean_drift"]), _fmt(r["max_principle_violation"]),
                "true" if r["audit_pass"] else "false"]))
        failed = any(r["status"] != "ok" or not r["audit_pass"] for r in rows)

    _write_csv(out / "sweep.csv", header, body, comment=f"# axis {axis}")
    if not quiet:
        print(f"sweep over {axis}: {len(rows)} row(s)")
        print(header)
        print("\n".join(body))
        print(f"artifacts in {out}")
    return 2 if failed else 0


def _load_config(args):
    command = args.command
    if args.config is None and args.model is None:
        raise ConfigError(["need --config FILE or --model PRESET"])
    if args.config is not None:
        required = ("model",)
        if command == "run":
            required = ("model", "grid", "scheme")
        elif command == "sweep":
            required = ("model", "sweep")
        cfg = parse_config(Path(args.config).read_text(encoding="utf-8"),
                           required_sections=required)
        if args.model is not None:
            cfg.preset = args.model
            cfg.dimension = None
            cfg.flux_coeffs = None
            cfg.diffusion_coeffs = None
    else:
        cfg = default_config(args.model)
    if args.lattice:
        cfg.lattice = True
    return cfg


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="anisolab",
        description="Simulation laboratory for degenerate convection-diffusion "
                    "on periodic boxes.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
            ("run", "integrate one configuration and audit the trajectory"),
            ("check-condition", "sample the nondegeneracy functional"),
            ("validate-model", "check the structural model contracts"),
            ("sweep", "repeat an experiment along one parameter axis")):
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("--config", metavar="PATH", help="experiment config file")
        cmd.add_argument("--model", metavar="PRESET",
                         help="preset name; with --config it overrides [model]")
        cmd.add_argument("--out", metavar="DIR", help="artifact directory")
        cmd.add_argument("--lattice", action="store_true",
                         help="snap condition sampling to the grid wave lattice")
        cmd.add_argument("--quiet", action="store_true",
                         help="suppress stdout reports")
    args = parser.parse_args(argv)

    try:
        cfg = _load_config(args)
        out_dir = args.out or cfg.directory or "anisolab-out"
        if args.command == "run":
            return cmd_run(cfg, out_dir, quiet=args.quiet)
        if args.command == "check-condition":
            return cmd_check_condition(cfg, out_dir, quiet=args.quiet)
        if args.command == "validate-model":
            return cmd_validate_model(cfg, out_dir, quiet=args.quiet)
        return cmd_sweep(cfg, out_dir, quiet=args.quiet)
    except ConfigError as exc:
        for line in exc.errors:
            print(f"config error: {line}", file=sys.stderr)
        return 1
    except (ConfigurationError, ModelError, QuadratureError, ValueError,
            KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def app():
    raise SystemExit(main())


if __name__ == "__main__":
    app()
