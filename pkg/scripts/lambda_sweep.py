"""TEM error against lambda when only half of the inference instances are noisy.

    python3 scripts/lambda_sweep.py [--dataset sine] [--snr-db -6]
"""

import argparse

from _common import RESULTS, pooled, read_rows, run_or_exit


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dataset", default="sine")
    ap.add_argument("--snr-db", default="-6")
    args = ap.parse_args()
    out = RESULTS / f"lambda_sweep_{args.dataset}"
    run_or_exit([
        "tem-lambda-sweep", "--dataset", args.dataset, "--noisy-fraction", "0.5",
        "--snr-db", args.snr_db, "--lambda", "0:0.1:1", "--output-dir", str(out),
    ])
    rmse = pooled(read_rows(out / "results.csv"))
    best = min(rmse, key=rmse.get)
    for (method, _), value in sorted(rmse.items(), key=lambda kv: float(kv[0][0].split("=")[1])):
        mark = "  <- minimum" if (method, _) == best else ""
        print(f"{method:18s} rmse {value:.4f}{mark}")


if __name__ == "__main__":
    main()
