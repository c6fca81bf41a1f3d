"""Averaged learning curves for a P-node network and the single-node baseline.

Writes one CSV per setting into --out-dir and prints the iteration at which each
curve first falls below -20 dB.
"""

import argparse
from pathlib import Path

from dl0cs import experiments as ex


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="results/learning_curves")
    ap.add_argument("--runs", type=int, default=20)
    ap.add_argument("--workers", type=int, default=4)
    ap.add_argument("--p", type=int, default=20)
    ap.add_argument("--iterations", type=int, default=40000,
                    help="fixed budget for the single-node run; the network gets a tenth")
    args = ap.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = ex.ExperimentConfig(runs=args.runs, workers=args.workers, use_stop_criterion=False)
    for p, budget in ((args.p, args.iterations // 10), (1, args.iterations)):
        cfg = base.replace(p=p, max_iterations=budget)
        res = ex.monte_carlo(cfg)
        path = out / f"p{p}.csv"
        path.write_text(ex.mc_curve_csv(res))
        print(f"P={p:3d} mu={res.mu:.4g} final={res.final_msd_db:.1f} dB "
              f"-20 dB at {res.iterations_to(-20.0)} -> {path}")


if __name__ == "__main__":
    main()
