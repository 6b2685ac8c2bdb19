"""Expected test RMSE of plain and noise-aware gradient boosting against the ensemble size.

    python3 scripts/boosting_size_sweep.py [--dataset sine] [--snr-db 18] [--residual-targets]
"""

import argparse

from _common import RESULTS, pooled, read_rows, run_or_exit


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dataset", default="sine")
    ap.add_argument("--snr-db", default="18")
    ap.add_argument("--residual-targets", action="store_true")
    args = ap.parse_args()
    suffix = "_residual" if args.residual_targets else ""
    out = RESULTS / f"boosting_size_{args.dataset}{suffix}"
    argv = ["gb-size-sweep", "--dataset", args.dataset, "--snr-db", args.snr_db,
            "--T-grid", "4,8,16,32,64", "--output-dir", str(out)]
    if args.residual_targets:
        argv.append("--residual-targets")
    run_or_exit(argv)
    rmse = pooled(read_rows(out / "results.csv"))
    print("   T      GB     RGB  GB-noiseless")
    for T in (4, 8, 16, 32, 64):
        snr = float(args.snr_db)
        print(f"{T:4d}  {rmse[(f'GB@T={T}', snr)]:.4f}  {rmse[(f'RGB@T={T}', snr)]:.4f}  "
              f"{rmse[(f'GB-noiseless@T={T}', snr)]:.4f}")


if __name__ == "__main__":
    main()
