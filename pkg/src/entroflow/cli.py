"""Command-line front end.

Exit codes: 0 success, 1 check failure, 2 config error, 3 numerical
divergence, 4 I/O error.
"""

import argparse
import csv
import io
import json
import os
import sys
import tempfile

import numpy as np

from .config import build_model, format_config, initial_theta, load_config
from .diagnostics import Bench, radial_probe, resolve_suite, run_suite, _jsonable
from .errors import ConfigError, DivergedFlow, EntroflowError, InsufficientData, StepFailure
from .evaluation import soft_optimal
from .gradflow import convergence_fit, integrate_flow, trajectory_to_csv
from .svg import line_chart

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 1, 2, 3, 4


class OutputError(Exception):
    pass


def _err(msg):
    print(f"entroflow: {msg}", file=sys.stderr)


def _load(path):
    try:
        return load_config(path)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc


def _build(cfg):
    try:
        return build_model(cfg)
    except ConfigError:
        raise
    except (ValueError, EntroflowError) as exc:
        raise ConfigError(f"model/basis: {exc}") from exc


def output_dir(cfg):
    return os.environ.get("ENTROFLOW_OUT") or cfg["output"]["directory"]


def write_outputs(directory, files):
    """Atomically write ``{name: text}`` into ``directory`` (temp file + rename)."""
    try:
        os.makedirs(directory, exist_ok=True)
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(dir=directory, prefix=f".{name}.", suffix=".tmp")
            try:
                with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                    fh.write(text)
                os.replace(tmp, os.path.join(directory, name))
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise
    except OSError as exc:
        raise OutputError(f"cannot write to {directory}: {exc.strerror or exc}") from exc


def _dump(obj):
    return json.dumps(_jsonable(obj), indent=2) + "\n"


def run_flow(cfg):
    """Integrate the configured flow; returns (trajectory, summary dict)."""
    m = _build(cfg)
    so = soft_optimal(m)
    theta0 = initial_theta(cfg, m.p, so)
    fl = cfg["flow"]
    traj = integrate_flow(
        m, theta0, fl["t_end"], fl["log_every"], scheme=fl["integrator"], h=fl["h"],
        tol=fl["tolerance"], gap_tol=fl["gap_tol"], soft_opt=so, h0=fl["h0"],
    )
    gaps = traj.column("gap")
    summary = {
        "termination": traj.termination,
        "records": len(traj),
        "steps": traj.steps,
        "initial_gap": float(gaps[0]),
        "final_gap": float(gaps[-1]),
        "sup_C_R": float(np.max(traj.column("C_R"))),
        "sup_log_C_R": float(np.max(traj.column("log_C_R"))),
        "objective_star": so.objective_star,
        "theta_final": traj.records[-1].theta,
    }
    try:
        fit = convergence_fit(traj, 0.5)
        summary.update(rate=fit.rate, r_squared=fit.r_squared, fit_points=fit.n_points)
    except InsufficientData:
        summary.update(rate=None, r_squared=None, fit_points=0)
    return traj, summary


def cmd_run_flow(args):
    cfg = _load(args.config)
    try:
        traj, summary = run_flow(cfg)
    except (DivergedFlow, StepFailure) as exc:
        _err(f"flow failed: {exc}")
        return EXIT_DIVERGED
    files = {}
    formats = cfg["output"]["formats"]
    if "csv" in formats:
        files["trajectory.csv"] = trajectory_to_csv(traj)
    if "json" in formats:
        files["summary.json"] = _dump(summary)
    if "svg" in formats:
        files["convergence.svg"] = line_chart(
            [("gap", traj.column("t"), traj.column("gap"))],
            title="suboptimality gap along the flow", xlabel="t", ylabel="gap", log_y=True)
    write_outputs(output_dir(cfg), files)
    r2 = summary["r_squared"]
    print(f"{summary['termination']}: gap {summary['initial_gap']:.3e} -> {summary['final_gap']:.3e}"
          + (f", rate {summary['rate']:.4g}, r^2 {r2:.6f}" if r2 is not None else ""))
    return EXIT_OK


def make_bench(cfg, model=None):
    d = cfg["diagnostics"]
    return Bench(
        model if model is not None else _build(cfg), seed=d["seed"], counts=dict(d["counts"]),
        probe_directions=[list(v) for v in d["probe_directions"]] or None,
        probe_radii=list(d["probe_radii"]) or None, max_norm=d["max_norm"],
    )


def cmd_verify(args):
    cfg = _load(args.config)
    names = args.suite or list(cfg["diagnostics"]["checks"])
    try:
        names = resolve_suite(names)
    except KeyError as exc:
        raise ConfigError(exc.args[0]) from exc
    suite = run_suite(make_bench(cfg), names, tolerance=args.tolerance)
    files = {f"check_{name}.json": rep.to_json(indent=2) + "\n" for name, rep in suite.reports.items()}
    files["verify_summary.json"] = _dump(suite.to_dict())
    write_outputs(output_dir(cfg), files)
    for name, rep in suite.reports.items():
        status = "pass" if rep.passed else "FAIL"
        extra = f" plateau={rep.flags['plateau_directions']}" if "plateau_directions" in rep.flags else ""
        print(f"{status} {name}: instances={rep.instances} skipped={rep.skipped} "
              f"worst_violation={rep.worst_violation:.3e}{extra}")
    return EXIT_OK if suite.passed else EXIT_CHECK


def read_direction_file(path, p):
    rows = []
    try:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.split("#", 1)[0].strip()
                if line:
                    rows.append([float(t) for t in line.replace(",", " ").split()])
    except OSError as exc:
        raise ConfigError(f"cannot read direction file {path}: {exc.strerror or exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"direction file {path}: {exc}") from exc
    if not rows or any(len(r) != p for r in rows):
        raise ConfigError(f"direction file {path}: every row needs {p} numbers")
    return rows


def probe_table_csv(table):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["direction_index", "r", "kl"])
    for i, r, kl in table.rows():
        w.writerow([i, format(r, ".17g"), format(kl, ".17g")])
    return buf.getvalue()


def cmd_probe_kl(args):
    cfg = _load(args.config)
    m = _build(cfg)
    d = cfg["diagnostics"]
    if args.direction_file:
        dirs = read_direction_file(args.direction_file, m.p)
    elif args.directions is None and d["probe_directions"]:
        dirs = [list(v) for v in d["probe_directions"]]
    else:
        rng = np.random.default_rng([d["seed"], 101])
        dirs = [rng.normal(size=m.p) for _ in range(args.directions or 8)]
    if args.r_max is not None:
        if not args.r_max > 0 or args.r_steps < 1:
            raise ConfigError("--r-max must be positive and --r-steps at least 1")
        radii = np.linspace(args.r_max / args.r_steps, args.r_max, args.r_steps)
    elif d["probe_radii"]:
        radii = np.asarray(d["probe_radii"])
    else:
        radii = np.linspace(5.0, 50.0, 10)
    try:
        table = radial_probe(m, d["probe_state"], dirs, radii)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    files = {"kl_probe.csv": probe_table_csv(table)}
    if "svg" in cfg["output"]["formats"]:
        series = [(f"direction {i}", table.radii, table.kl[i]) for i in range(table.kl.shape[0])]
        files["kl_probe.svg"] = line_chart(series, title="KL to the reference measure along rays",
                                           xlabel="r", ylabel="KL")
    write_outputs(output_dir(cfg), files)
    for i in range(table.kl.shape[0]):
        g = table.decade_growth[i]
        print(f"direction {i}: terminal kl {table.kl[i, -1]:.6f}, increasing={table.increasing[i]}, "
              f"decade growth {'n/a' if g is None else f'{g:.3e}'}, plateau={table.plateau[i]}")
    return EXIT_OK


def cmd_print_config(args):
    sys.stdout.write(format_config(_load(args.config)))
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="entroflow", description="Entropy-regularized policy-gradient flow laboratory.")
    ap.add_argument("--print-config", metavar="CFG", help="print the canonical form of a config and exit")
    sub = ap.add_subparsers(dest="command")

    p = sub.add_parser("run-flow", help="integrate the gradient flow and write trajectory artifacts")
    p.add_argument("config")
    p.set_defaults(func=cmd_run_flow)

    p = sub.add_parser("verify", help="run diagnostic checks")
    p.add_argument("config")
    p.add_argument("--suite", nargs="+", metavar="CHECK", help="check names, or 'all'")
    p.add_argument("--tolerance", type=float, default=None, help="override every check's tolerance")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("probe-kl", help="tabulate KL to the reference measure along rays")
    p.add_argument("config")
    p.add_argument("--directions", type=int, default=None, help="number of random directions")
    p.add_argument("--r-max", type=float, default=None)
    p.add_argument("--r-steps", type=int, default=20)
    p.add_argument("--direction-file", default=None, help="text file with one direction per row")
    p.set_defaults(func=cmd_probe_kl)

    p = sub.add_parser("print-config", help="print the canonical form of a config")
    p.add_argument("config")
    p.set_defaults(func=cmd_print_config)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.print_config:
            args.config = args.print_config
            return cmd_print_config(args)
        if not getattr(args, "command", None):
            ap.print_help(sys.stderr)
            return EXIT_CONFIG
        return args.func(args)
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    except OutputError as exc:
        _err(str(exc))
        return EXIT_IO
    except (DivergedFlow, StepFailure, FloatingPointError) as exc:
        _err(f"numerical divergence: {exc}")
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
