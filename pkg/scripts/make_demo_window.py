"""Write the synthetic city-block window and a plain open window to disk.

    python3 scripts/make_demo_window.py --out data/
"""

import argparse
from pathlib import Path

from raresir.pathloss import linear_to_db
from raresir.scenario import calibrated_tau, city_block_window, generate_synthetic, save_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="data")
    ap.add_argument("--alpha", type=float, default=3.0)
    args = ap.parse_args()

    out = Path(args.out)
    for name, scn in [
        ("city_blocks", city_block_window(args.alpha)),
        ("open_100", generate_synthetic(100, 100, 1.0, alpha=args.alpha, name="open_100")),
    ]:
        save_scenario(scn, out / name)
        tau = calibrated_tau(scn.intensity)
        print(f"{name}: free area {scn.intensity.total_mass:g} m^2, calibrated tau {linear_to_db(tau):.2f} dB")


if __name__ == "__main__":
    main()
