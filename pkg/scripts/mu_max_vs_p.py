"""Predicted step-size limit against the empirically measured one, across network sizes."""

import argparse
import csv
import sys

from dl0cs import experiments as ex
from dl0cs import stability as st


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ps", default="1,5,10,20")
    ap.add_argument("--runs-per-point", type=int, default=3)
    ap.add_argument("--iterations", type=int, default=8000,
                    help="budget at P=10; scaled by 10/P since small networks converge slower")
    ap.add_argument("--workers", type=int, default=4)
    ap.add_argument("--mode", choices=("success", "no-divergence"), default="success")
    args = ap.parse_args()

    writer = csv.writer(sys.stdout)
    writer.writerow(["p", "mu_lower", "mu_upper", "mu_exact", "mu_empirical"])
    for p in (int(v) for v in args.ps.split(",")):
        cfg = ex.ExperimentConfig(p=p, use_stop_criterion=False, max_iterations=max(args.iterations, args.iterations * 10 // p),
                                  workers=args.workers)
        weights = ex.build_weights(cfg)
        search = st.mu_exact(ex.combination_matrix(weights), weights.s_matrix, cfg.n, cfg.m)
        lo, hi = search.bracket
        emp = ex.empirical_mu_max(cfg, args.runs_per_point, (0.25 * search.value, 3 * search.value),
                                  args.mode)
        writer.writerow([p, repr(lo), repr(hi), repr(search.value),
                         repr(emp.value) if emp.found else "nan"])
        sys.stdout.flush()


if __name__ == "__main__":
    main()
