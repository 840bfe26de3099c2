"""Distance between runs at successive truncation indices n."""

import argparse
from pathlib import Path

from coagfrag.analysis import truncation_convergence
from coagfrag.config import load_config

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=ROOT / "configs" / "truncation.json")
    ap.add_argument("--n-list", type=float, nargs="+")
    args = ap.parse_args()
    cfg = load_config(args.config)
    n_list = args.n_list or cfg.analysis.n_list
    rep = truncation_convergence(cfg.solver_config(1), n_list, cfg.initial_condition_fn(),
                                 cfg.analysis.theta_value)
    for (a, b), d in zip(zip(n_list, n_list[1:]), rep.distances):
        print(f"n={a:g} vs n={b:g}: sup_t Q = {d:.6e}")
    print("strictly decreasing" if rep.strictly_decreasing else "NOT decreasing")


if __name__ == "__main__":
    main()
