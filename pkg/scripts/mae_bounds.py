"""Lower bound, optimised expected MAE and upper bound across SNR.

    python3 scripts/mae_bounds.py [--dataset sine]
"""

import argparse

from _common import RESULTS, pooled, read_rows, run_or_exit


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dataset", default="sine")
    args = ap.parse_args()
    out = RESULTS / f"mae_bounds_{args.dataset}"
    run_or_exit(["mae-bounds", "--dataset", args.dataset, "--snr-db", "-12:3:18", "--output-dir", str(out)])
    mae = pooled(read_rows(out / "results.csv"), "mae", square=False)
    print(" snr_db    lower  optimum    upper")
    for snr in sorted({s for _, s in mae}):
        lo, opt, up = (mae[(m, snr)] for m in ("MAE-lower", "MAE-GD", "MAE-upper"))
        print(f"{snr:7.1f}  {lo:7.4f}  {opt:7.4f}  {up:7.4f}")


if __name__ == "__main__":
    main()
