"""Noise-aware MAE descent against its noise-blind version, for two noise profiles.

    python3 scripts/mae_descent_vs_snr.py [--dataset sine]
"""

import argparse

from _common import RESULTS, pooled, read_rows, run_or_exit


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dataset", default="sine")
    ap.add_argument("--realizations", default="100")
    args = ap.parse_args()
    for profile in ("equi-variance", "noisier-subset:m=2,a=20"):
        out = RESULTS / f"mae_descent_{args.dataset}_{profile.split(':')[0]}"
        run_or_exit([
            "bagging-sweep-snr", "--dataset", args.dataset, "--methods", "mae-gd,mae-gd-nonrobust",
            "--profile", profile, "--snr-db", "-12:3:18", "--realizations", args.realizations,
            "--output-dir", str(out),
        ])
        mae = pooled(read_rows(out / "results.csv"), "mae", square=False)
        print(f"{profile}\n snr_db   robust  non-robust")
        for snr in sorted({s for _, s in mae}):
            print(f"{snr:7.1f}  {mae[('MAE-GD', snr)]:7.4f}  {mae[('MAE-GD-nonrobust', snr)]:9.4f}")


if __name__ == "__main__":
    main()
