"""Q(t) between a run and a perturbed copy, against the Gronwall bound Q(0) exp(psi t)."""

import argparse
from pathlib import Path

from coagfrag import run, uniqueness_distance
from coagfrag.analysis import contraction_check, gronwall_constant_psi, trajectory_norm
from coagfrag.config import eta, load_config

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--g", default=ROOT / "configs" / "uniqueness_g.json")
    ap.add_argument("--h", default=ROOT / "configs" / "uniqueness_h.json")
    args = ap.parse_args()
    cg, ch = load_config(args.g), load_config(args.h)
    tg = run(cg.solver_config(1), cg.initial_condition_fn())
    th = run(ch.solver_config(1), ch.initial_condition_fn())
    a = cg.analysis_config()
    B = cg.build_kernels()[2]
    psi = gronwall_constant_psi(trajectory_norm(tg, a.sigma1, a.sigma2),
                                trajectory_norm(th, a.sigma1, a.sigma2),
                                cg.envelope_params(B), a.theta, eta_theta=eta(B, a.theta))
    Q = uniqueness_distance(tg, th, a.theta)
    rep = contraction_check(tg.times, Q, psi, a.contraction_tol)
    print(f"psi = {psi:.6g}")
    for t, q, bound, _ in rep.rows:
        print(f"t={t:5.2f}  Q={q:.6e}  bound={bound:.6e}  Q/Q0={q / Q[0]:.4f}")
    print(rep.line())


if __name__ == "__main__":
    main()
