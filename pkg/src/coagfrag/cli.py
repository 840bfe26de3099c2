"""Batch command line: ``python -m coagfrag <command> --config PATH [--out DIR]``.

Exit codes: 0 ok, 1 check violation, 2 configuration error, 3 runtime failure.
"""

import argparse
import csv
import io
import json
import os
import platform
import sys

import numpy as np
import scipy

from . import __version__
from .analysis import (contraction_check, gronwall_constant_psi, mass_conservation_report,
                       trajectory_norm, truncation_convergence, uniqueness_distance)
from .config import eta, load_config
from .errors import CoagFragError, ConfigError, InputError
from .kernels import check_admissibility
from .moments import envelope_report, envelope_table, moment
from .solver import default_threads, initial_state, run

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

MANIFEST = "manifest.json"


def fmt(x):
    """17 significant digits, enough to round-trip a double."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def write_csv(path, header, rows, config_hash):
    buf = io.StringIO()
    buf.write(f"# manifest={MANIFEST} config_hash={config_hash}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def write_manifest(out, payload):
    payload = dict(payload)
    payload["versions"] = {"coagfrag": __version__, "numpy": np.__version__,
                           "scipy": scipy.__version__, "python": platform.python_version()}
    with open(os.path.join(out, MANIFEST), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(type(obj).__name__)


def _out_dir(args):
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def trajectory_rows(traj):
    names = traj.moment_names()
    header = ["t", "M_minus_omega", "M0", "M1", "M2", "mass_drift", "overflow_mass", "dt"]
    extra = names[4:]
    header += extra
    rows = []
    for k, t in enumerate(traj.times):
        m = traj.moments
        rows.append([t, m["M_minus_omega"][k], m["M0"][k], m["M1"][k], m["M2"][k],
                     traj.mass_drift[k], traj.overflow_mass[k], traj.dt[k]]
                    + [m[e][k] for e in extra])
    return header, rows


def write_trajectory(out, traj, prefix=""):
    header, rows = trajectory_rows(traj)
    write_csv(os.path.join(out, f"{prefix}trajectory.csv"), header, rows, traj.config_hash)
    snap_dir = os.path.join(out, f"{prefix}snapshots")
    os.makedirs(snap_dir, exist_ok=True)
    grid = traj.grid
    for k, state in enumerate(traj.states):
        rows = [(i, grid.pivots[i], grid.widths[i], state.density[i]) for i in range(grid.n_cells)]
        write_csv(os.path.join(snap_dir, f"snapshot_{k:04d}.csv"),
                  ["cell_index", "pivot", "width", "density"], rows, traj.config_hash)


def _envelope_summary(cfg, traj):
    try:
        params = cfg.envelope_params()
    except CoagFragError as exc:
        return {"applicable": False, "reason": str(exc)}, []
    rows = envelope_report(traj, params)
    n = cfg.truncation.n
    worst = {}
    for _, name, _, _, margin in rows:
        worst[name] = min(worst.get(name, float("inf")), margin)
    summary = {
        "applicable": True,
        "grid_covers_truncation_square": traj.grid.covers(1.0 / n, n),
        "dominated": all(r[4] >= 0 for r in rows),
        "worst_margin": worst,
        "T": params.T,
    }
    return summary, rows


def cmd_run(args):
    cfg = load_config(args.config)
    solver_cfg = cfg.solver_config(threads=args.threads)
    g0 = cfg.initial_condition_fn()
    out = _out_dir(args)
    traj = run(solver_cfg, g0)
    write_trajectory(out, traj)
    env_summary, env_rows = _envelope_summary(cfg, traj)
    write_csv(os.path.join(out, "envelopes.csv"), ["t", "quantity", "value", "envelope", "margin"],
              env_rows, traj.config_hash)
    mass = mass_conservation_report(traj, cfg.analysis.mass_tol)
    write_manifest(out, {
        "command": "run",
        "config_hash": traj.config_hash,
        "config": cfg.to_dict(),
        "envelope_summary": env_summary,
        "mass_conservation": {"raw_drift": mass.raw_drift, "adjusted_drift": mass.adjusted_drift,
                              "tolerance": mass.tolerance, "passed": mass.passed},
        "steps": len(traj.dt_history),
        "rejected_steps": traj.rejected_steps,
        "failure": traj.failure,
    })
    print(mass.line())
    if traj.failure:
        print(f"run failed: {traj.failure}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK if mass.passed else EXIT_VIOLATION


def cmd_check_kernels(args):
    cfg = load_config(args.config)
    K, C, B = cfg.build_kernels()
    a = cfg.analysis
    report = check_admissibility(K, C, B, cfg.sample_plan(), a.theta, a.sigma1, a.sigma2)
    for line in report.lines():
        print(line)
    if args.out:
        out = _out_dir(args)
        rows = [(c.name, "pass" if c.passed else "fail", c.worst_ratio, c.detail)
                for c in report.checks]
        write_csv(os.path.join(out, "admissibility.csv"), ["check", "status", "worst_ratio", "detail"],
                  rows, cfg.hash)
    return EXIT_OK if report.passed else EXIT_VIOLATION


def cmd_compare(args):
    if len(args.config) != 2:
        raise ConfigError("compare needs exactly two --config arguments", "--config")
    cfg_g, cfg_h = (load_config(p) for p in args.config)
    sg, sh = (c.solver_config(threads=args.threads) for c in (cfg_g, cfg_h))
    if not sg.grid.same_as(sh.grid):
        raise ConfigError("configurations use different grids", "grid")
    if sg.t_end != sh.t_end or sg.sample_count != sh.sample_count:
        raise ConfigError("configurations use different sample times", "time")
    theta = args.theta if args.theta is not None else cfg_g.analysis.theta_value
    tg = run(sg, cfg_g.initial_condition_fn())
    th = run(sh, cfg_h.initial_condition_fn())
    if tg.failure or th.failure:
        print(f"run failed: {tg.failure or th.failure}", file=sys.stderr)
        return EXIT_RUNTIME
    Q = uniqueness_distance(tg, th, theta)
    a = cfg_g.analysis
    params = cfg_g.envelope_params(sg.breakup)
    psi = gronwall_constant_psi(trajectory_norm(tg, a.sigma1, a.sigma2),
                                trajectory_norm(th, a.sigma1, a.sigma2), params, theta,
                                eta_theta=eta(sg.breakup, theta))
    report = contraction_check(tg.times, Q, psi, a.contraction_tol)
    out = _out_dir(args)
    write_csv(os.path.join(out, "compare.csv"), ["t", "Q", "bound", "margin"], report.rows,
              cfg_g.hash)
    write_manifest(out, {"command": "compare", "config_hash": cfg_g.hash,
                         "other_config_hash": cfg_h.hash, "theta": theta, "psi": psi,
                         "contraction_passed": report.passed,
                         "worst_margin": report.worst_margin})
    print(f"psi={psi:.6g}  max Q={float(np.max(Q)):.6g}")
    print(report.line())
    return EXIT_OK if report.passed else EXIT_VIOLATION


def cmd_convergence(args):
    cfg = load_config(args.config)
    n_list = args.n_list if args.n_list else cfg.analysis.n_list
    if not n_list:
        raise ConfigError("no truncation indices given", "analysis.n_list")
    solver_cfg = cfg.solver_config(threads=args.threads)
    theta = args.theta if args.theta is not None else cfg.analysis.theta_value
    report = truncation_convergence(solver_cfg, n_list, cfg.initial_condition_fn(), theta)
    failed = [n for n, tr in report.trajectories.items() if tr.failure]
    if failed:
        print(f"runs failed for n={failed}", file=sys.stderr)
        return EXIT_RUNTIME
    out = _out_dir(args)
    rows = [(a, b, d) for (a, b), d in zip(zip(n_list, n_list[1:]), report.distances)]
    write_csv(os.path.join(out, "convergence.csv"), ["n_a", "n_b", "sup_Q"], rows, cfg.hash)
    write_manifest(out, {"command": "convergence", "config_hash": cfg.hash,
                         "n_list": list(n_list), "distances": report.distances,
                         "monotone": report.monotone, "theta": theta})
    for a, b, d in rows:
        print(f"n={fmt(a)} vs n={fmt(b)}: sup_t Q = {d:.6g}")
    print("monotone decrease" if report.monotone else "NOT monotone")
    return EXIT_OK if report.monotone else EXIT_VIOLATION


def cmd_envelopes(args):
    cfg = load_config(args.config)
    solver_cfg = cfg.solver_config()
    state = initial_state(solver_cfg, cfg.initial_condition_fn())
    grid = solver_cfg.grid
    params = cfg.envelope_params(solver_cfg.breakup)
    rows = []
    for T in np.linspace(0.0, cfg.time.t_end, cfg.time.sample_count):
        p = params.with_T(float(T))
        tab = envelope_table(p, moment(state, grid, 0), moment(state, grid, 1),
                             moment(state, grid, 2), moment(state, grid, -p.omega),
                             state.density, grid, solver_cfg.breakup.B_tilde)
        rows.append((T, tab.P1, tab.P0, tab.P2, tab.P_neg, tab.E0, tab.S_literal, tab.S_sup))
    header = ["T", "P1", "P0", "P2", "P_minus_omega", "E0", "S_literal", "S_sup"]
    print(" ".join(f"{h:>14}" for h in header))
    for r in rows:
        print(" ".join(f"{v:>14.6g}" for v in r))
    print("note: S_literal uses lambda1^(1-sigma); S_sup = sup_x E(x,T) uses lambda2 * lambda1^(-sigma)")
    if args.out:
        write_csv(os.path.join(_out_dir(args), "envelope_table.csv"), header, rows, cfg.hash)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="coagfrag", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, multi=False):
        if multi:
            p.add_argument("--config", action="append", required=True, metavar="PATH",
                           help="run configuration (give twice)")
        else:
            p.add_argument("--config", required=True, metavar="PATH", help="run configuration")
        p.add_argument("--out", metavar="DIR", help="output directory")
        p.add_argument("--threads", type=int, default=default_threads(), metavar="N",
                       help="worker threads (outputs do not depend on N)")

    common(sub.add_parser("run", help="integrate one configuration"))
    common(sub.add_parser("check-kernels", help="test kernel assumptions"))
    p = sub.add_parser("compare", help="uniqueness distance between two runs")
    common(p, multi=True)
    p.add_argument("--theta", type=float)
    p = sub.add_parser("convergence", help="truncation study over n")
    common(p)
    p.add_argument("--n-list", type=lambda s: [float(x) for x in s.split(",")], metavar="N1,N2,...")
    p.add_argument("--theta", type=float)
    common(sub.add_parser("envelopes", help="print moment envelope tables"))
    return parser


COMMANDS = {"run": cmd_run, "check-kernels": cmd_check_kernels, "compare": cmd_compare,
            "convergence": cmd_convergence, "envelopes": cmd_envelopes}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, InputError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CoagFragError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
