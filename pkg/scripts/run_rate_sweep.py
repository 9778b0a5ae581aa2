"""Tail probabilities over a density sweep and the fitted exponential rate.

Prints one line per density, then the least-squares line through log p_hat.
The defaults reproduce the decay-direction acceptance run on the open window.
"""

import argparse

import numpy as np

from raresir.ldp import SweepPoint, fit_rate_linear, rate_curve
from raresir.rare import run_sweep
from raresir.scenario import generate_synthetic, load_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", help="scenario dir (default: 100 x 100 m open window, alpha 3)")
    ap.add_argument("--tau-db", type=float, default=-40.0)
    ap.add_argument("--eps", type=float, default=0.02)
    ap.add_argument("--lambdas", default="0.2,0.4,0.6,0.8,1.0")
    ap.add_argument("--n-mean", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--threads", type=int, default=4)
    args = ap.parse_args()

    scn = load_scenario(args.scenario) if args.scenario else generate_synthetic(100, 100, 1.0, alpha=3.0)
    lams = [float(x) for x in args.lambdas.split(",")]
    results = run_sweep(scn, lams, args.tau_db, args.eps, n_mean=args.n_mean,
                        master_seed=args.seed, threads=args.threads)
    pts = [SweepPoint(r.config.lam, r.tail.p_hat, r.tail.std_err, r.tail.n) for r in results]
    for r in results:
        t = r.tail
        log_p = np.log(t.p_hat) if t.hits else float("nan")
        print(f"lambda={r.config.lam:<5g} mean_L={r.mean:10.3f} b={t.b:10.3f} "
              f"hits={t.hits:5d}/{t.n:<5d} log p={log_p:.3f}")
    fit = fit_rate_linear(pts)
    print(f"log p = {fit.p1:.4f} lambda + {fit.p2:.4f}   R^2 = {fit.r_squared:.4f}")
    for (lam, point), (_, curve) in zip(*rate_curve(pts, fit)):
        print(f"  -log p / lambda at {lam:g}: {point:.3f} (fit {curve:.3f})")


if __name__ == "__main__":
    main()
