"""Conditional user density given an atypically large number of disconnected users.

Writes mean_counts.asc and ratio.asc, then prints how the extra mass splits
between tiles near the base station and the rest of the window.
"""

import argparse
from pathlib import Path

import numpy as np

from raresir.ldp import relative_entropy
from raresir.rare import CampaignConfig, run_campaign
from raresir.scenario import city_block_window, load_scenario, write_ascii_grid


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", help="scenario dir (default: synthetic city-block window)")
    ap.add_argument("--lam", type=float, default=2.0**-12)
    ap.add_argument("--tau-db", type=float, default=-50.0)
    ap.add_argument("--eps", type=float, default=0.3)
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--n-mean", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=4)
    ap.add_argument("--out-dir", default="heatmap")
    args = ap.parse_args()

    scn = load_scenario(args.scenario) if args.scenario else city_block_window()
    cfg = CampaignConfig(args.lam, args.tau_db, args.eps, args.n_mean, args.n, args.seed)
    res = run_campaign(scn, cfg, heatmap=True, threads=args.threads)
    heat = res.heatmap
    print(f"b={res.b:.4g}, atypical {heat.n_atypical}/{args.n}")
    if heat.empty:
        return
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, grid in (("mean_counts.asc", heat.mean_counts), ("ratio.asc", heat.ratio)):
        with open(out / name, "w") as fh:
            write_ascii_grid(fh, scn.geometry, grid, heat.blocked)

    prior = args.lam * scn.intensity.mass_per_tile
    ell = scn.pathloss.linear
    near = np.where(heat.blocked, False, ell >= np.nanquantile(ell[~heat.blocked], 0.99))
    print(f"relative entropy to the prior: {relative_entropy(heat.mean_counts, prior):.4g}")
    print(f"strongest 1% of tiles: {heat.mean_counts[near].sum():.4g} users vs {prior[near].sum():.4g} expected")
    print(f"elsewhere: {heat.mean_counts[~near].sum():.4g} users vs {prior[~near].sum():.4g} expected")


if __name__ == "__main__":
    main()
