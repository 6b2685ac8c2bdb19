"""Shared helpers for the experiment scripts."""

import csv
import math
import sys
from collections import defaultdict
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from noisy_ensembles.cli import run  # noqa: E402

RESULTS = Path(__file__).resolve().parents[1] / "results"


def run_or_exit(argv):
    code = run(argv)
    if code != 0:
        sys.exit(code)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def pooled(rows, column="rmse", square=True):
    """(method, snr) -> value pooled over folds; RMSE pools the squares."""
    groups = defaultdict(list)
    for r in rows:
        groups[(r["method"], float(r["snr_db"]))].append(float(r[column]))
    if square:
        return {k: math.sqrt(sum(v * v for v in vals) / len(vals)) for k, vals in groups.items()}
    return {k: sum(vals) / len(vals) for k, vals in groups.items()}
