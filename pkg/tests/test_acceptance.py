"""Acceptance checks, one per criterion, each at its stated tolerance.

Run with pytest (a summary line per criterion is printed at the end of the
session) or directly: ``python tests/test_acceptance.py``.
"""

import dataclasses
import filecmp
import math
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from coagfrag import (breakup_moment, check_admissibility, oracle_constant_kernel_M0,
                      oracle_dense_ode, run, uniqueness_distance)
from coagfrag.analysis import (contraction_check, gronwall_constant_psi, mass_conservation_report,
                               relative_l1, trajectory_norm, truncation_convergence)
from coagfrag.config import eta, load_config
from coagfrag.kernels import BreakupKernel
from coagfrag.moments import envelope_report

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
RESULTS = {}


def record(key, title, passed, detail):
    RESULTS[key] = (title, bool(passed), detail)
    return passed


def _traj(name, threads=1, **time_overrides):
    cfg = load_config(CONFIGS / name)
    if time_overrides:
        cfg = dataclasses.replace(cfg, time=dataclasses.replace(cfg.time, **time_overrides))
    t0 = time.perf_counter()
    traj = run(cfg.solver_config(threads), cfg.initial_condition_fn())
    return cfg, traj, time.perf_counter() - t0


def criterion_1():
    _, traj, elapsed = _traj("mass_conservation.json")
    rep = mass_conservation_report(traj, 1e-6)
    ok = traj.failure is None and rep.passed and elapsed <= 60.0
    return record(1, "mass conservation", ok,
                  f"adjusted drift {rep.adjusted_drift:.2e} (tol 1e-6), {elapsed:.1f} s (limit 60 s)")


def criterion_2():
    base = load_config(CONFIGS / "constant_kernel.json")
    errors = {}
    for cells in (40, 80, 160):
        cfg = dataclasses.replace(base, grid=dataclasses.replace(base.grid, n_cells=cells))
        traj = run(cfg.solver_config(1), cfg.initial_condition_fn())
        m0 = traj.moments["M0"]
        exact = oracle_constant_kernel_M0(1.0, m0[0], traj.times[-1])
        errors[cells] = abs(m0[-1] - exact) / exact
    # The integrator tolerance (1e-8) is the floor below which halving is not measurable.
    floor = 1e-8
    halving = all(errors[2 * c] <= max(errors[c] / 2, floor) for c in (40, 80))
    ok = errors[160] <= 0.02 and halving
    detail = ", ".join(f"{c} cells {e:.1e}" for c, e in errors.items())
    return record(2, "constant-kernel oracle", ok, f"relative M0 error: {detail} (tol 2e-2)")


def criterion_3():
    worst = 0.0
    for nu in (0.0, -0.25, -0.5):
        # same daughter distribution, wrapped as a custom kernel so moments go through quadrature
        B = BreakupKernel.from_function(
            lambda x, y, z, nu=nu: (nu + 2.0) / y * (x / y) ** nu, B_tilde=nu + 2.0)
        for y in (1e-2, 1.0, 1e2):
            pairs = [(breakup_moment(B, y, 1.0, 0.0), (nu + 2) / (nu + 1))]
            for p in (1.5, 2.0, 3.0):
                pairs.append((breakup_moment(B, y, 1.0, p) / y ** p, (nu + 2) / (nu + p + 1)))
            for w in (0.0, 0.25, 0.5):
                if w < nu + 1:
                    pairs.append((breakup_moment(B, y, 1.0, -w) * y ** w, (nu + 2) / (nu + 1 - w)))
            for num, exact in pairs:
                worst = max(worst, abs(num - exact) / abs(exact))
    return record(3, "breakup identities", worst <= 1e-10,
                  f"worst relative deviation {worst:.1e} (tol 1e-10)")


def criterion_4():
    cfg, traj, _ = _traj("mass_conservation.json")
    K, C, B = cfg.build_kernels()
    adm = check_admissibility(K, C, B, cfg.sample_plan())
    rows = envelope_report(traj, cfg.envelope_params(B))
    worst = {}
    for _, name, value, env, margin in rows:
        worst[name] = min(worst.get(name, math.inf), margin / env)
    ok = adm.passed and all(m >= 0 for m in worst.values())
    detail = ", ".join(f"{k} min rel margin {v:.3g}" for k, v in worst.items())
    return record(4, "envelope dominance", ok, f"admissible={adm.passed}; {detail}")


def criterion_5():
    cfg = load_config(CONFIGS / "oracle_4cell.json")
    t0 = time.perf_counter()
    sol = run(cfg.solver_config(1), cfg.initial_condition_fn())
    ora = oracle_dense_ode(cfg.solver_config(1), cfg.initial_condition_fn())
    elapsed = time.perf_counter() - t0
    d = relative_l1(sol.states[-1].density, ora.states[-1].density, sol.grid)
    return record(5, "dense-ODE oracle", d <= 1e-5 and elapsed <= 120.0,
                  f"relative L1 {d:.2e} (tol 1e-5), {elapsed:.1f} s (limit 120 s)")


def criterion_6():
    cg, tg, _ = _traj("uniqueness_g.json")
    _, th, _ = _traj("uniqueness_h.json")
    a = cg.analysis_config()
    Q = uniqueness_distance(tg, th, a.theta)
    B = cg.build_kernels()[2]
    params = cg.envelope_params(B)
    psi = gronwall_constant_psi(trajectory_norm(tg, a.sigma1, a.sigma2),
                                trajectory_norm(th, a.sigma1, a.sigma2), params, a.theta,
                                eta_theta=eta(B, a.theta))
    rep = contraction_check(tg.times, Q, psi, a.contraction_tol)
    _, tg2, _ = _traj("uniqueness_g.json")
    Q0 = uniqueness_distance(tg, tg2, a.theta)
    identical = bool(np.all(Q0 == 0.0))
    return record(6, "uniqueness contraction", rep.passed and identical,
                  f"Q(0)={Q[0]:.3e}, psi={psi:.3g}, worst margin {rep.worst_margin:.2e}; "
                  f"identical runs Q==0: {identical}")


def criterion_7():
    cfg = load_config(CONFIGS / "truncation.json")
    rep = truncation_convergence(cfg.solver_config(1), cfg.analysis.n_list,
                                 cfg.initial_condition_fn(), cfg.analysis.theta_value)
    ok = len(rep.distances) >= 2 and rep.strictly_decreasing
    pairs = list(zip(rep.n_list, rep.n_list[1:]))
    detail = ", ".join(f"n={a:g} vs {b:g}: {d:.3e}" for (a, b), d in zip(pairs, rep.distances))
    return record(7, "truncation convergence", ok, f"sup_t Q {detail}")


def _cli_run(out, threads):
    cmd = [sys.executable, "-m", "coagfrag", "run", "--config",
           str(CONFIGS / "mass_conservation.json"), "--out", str(out), "--threads", str(threads)]
    return subprocess.run(cmd, capture_output=True, text=True).returncode


def criterion_8():
    with tempfile.TemporaryDirectory() as tmp:
        a, b = Path(tmp) / "t1", Path(tmp) / "t8"
        codes = (_cli_run(a, 1), _cli_run(b, 8))
        files = sorted(str(p.relative_to(a)) for p in a.rglob("*.csv"))
        match, mismatch, errors = filecmp.cmpfiles(a, b, files, shallow=False)
    ok = codes == (0, 0) and files and not mismatch and not errors
    return record(8, "thread determinism", ok,
                  f"{len(match)}/{len(files)} CSV files byte-identical, exit codes {codes}")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4,
            criterion_5, criterion_6, criterion_7, criterion_8]


@pytest.mark.parametrize("check", CRITERIA, ids=lambda f: f.__name__)
def test_criterion(check):
    assert check(), RESULTS.get(int(check.__name__.rsplit("_", 1)[1]))


def summary_lines():
    return [f"[{'PASS' if ok else 'FAIL'}] criterion {k}: {title}: {detail}"
            for k, (title, ok, detail) in sorted(RESULTS.items())]


if __name__ == "__main__":
    for check in CRITERIA:
        try:
            check()
        except Exception as exc:  # report and keep going
            n = int(check.__name__.rsplit("_", 1)[1])
            record(n, check.__name__, False, f"raised {type(exc).__name__}: {exc}")
        print(summary_lines()[-1] if RESULTS else "", flush=True)
    sys.exit(0 if all(ok for _, ok, _ in RESULTS.values()) else 1)
