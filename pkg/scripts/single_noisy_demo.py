"""Averaged bagging ensemble with one very noisy channel: metrics and a prediction trace.

    python3 scripts/single_noisy_demo.py
"""

from _common import RESULTS, read_rows, run_or_exit


def main():
    out = RESULTS / "single_noisy_demo"
    run_or_exit(["demo-motivation", "--output-dir", str(out)])
    for row in read_rows(out / "results.csv"):
        print(f"{row['profile']:18s} snr {row['snr_db']:>4s}  rmse {float(row['rmse']):.4f}")
    print(f"prediction trace: {out / 'predictions.csv'}")


if __name__ == "__main__":
    main()
