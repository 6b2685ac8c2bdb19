"""TEM versus GEM on bagged trees across SNR, with the percent MSE reduction.

    python3 scripts/tem_gain_vs_snr.py [--dataset sine] [--realizations 100]
"""

import argparse

from _common import RESULTS, read_rows, run_or_exit


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dataset", default="sine")
    ap.add_argument("--realizations", default="100")
    ap.add_argument("--seed", default="0")
    args = ap.parse_args()
    out = RESULTS / f"tem_gain_{args.dataset}"
    run_or_exit([
        "bagging-sweep-snr", "--dataset", args.dataset, "--methods", "gem,tem",
        "--profile", "noisier-subset:m=2,a=20", "--snr-db", "-12:3:18",
        "--realizations", args.realizations, "--seed", args.seed, "--output-dir", str(out),
    ])
    print("snr_db  mse_reduction_pct")
    for row in read_rows(out / "err_gain.csv"):
        print(f"{float(row['snr_db']):6.1f}  {float(row['mse_reduction_pct']):10.1f}")


if __name__ == "__main__":
    main()
