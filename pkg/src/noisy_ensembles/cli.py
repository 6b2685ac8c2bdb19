"""Command-line front end: data generation, sweeps, bounds and evaluation runs."""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness
from .harness import ConfigError, DataFormatError, ExperimentConfig, config_from_dict

log = logging.getLogger("noisy_ensembles")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
GRID_TOL = 1e-9


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # one-line diagnostic instead of the full usage block
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def parse_grid(text: str, cast=float) -> tuple:
    """``start:step:stop`` (stop included when on the lattice), a comma list, or one value."""
    text = str(text).strip()
    if not text:
        raise ConfigError("grid: empty grid")
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"grid: expected start:step:stop, got {text!r}")
        try:
            start, step, stop = (float(p) for p in parts)
        except ValueError as exc:
            raise ConfigError(f"grid: non-numeric entry in {text!r}") from exc
        if step == 0 or (stop - start) / step < -GRID_TOL:
            raise ConfigError(f"grid: step {step:g} never reaches {stop:g} from {start:g}")
        count = int(math.floor((stop - start) / step + GRID_TOL)) + 1
        values = [round(start + i * step, 12) for i in range(count)]
    else:
        try:
            values = [float(p) for p in text.split(",") if p.strip()]
        except ValueError as exc:
            raise ConfigError(f"grid: non-numeric entry in {text!r}") from exc
    if cast is int:
        if any(v != round(v) for v in values):
            raise ConfigError(f"grid: {text!r} must contain integers")
        values = [int(round(v)) for v in values]
    if not values:
        raise ConfigError(f"grid: {text!r} is empty")
    return tuple(values)


def parse_config(path) -> ExperimentConfig:
    """Strict JSON config; unknown keys, type mismatches and syntax errors raise ConfigError."""
    return config_from_dict(_read_json(path))


def _read_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: {path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


# ---------------------------------------------------------------- subcommand defaults

COMMAND_DEFAULTS = {
    "gen-data": {},
    "bagging-sweep-snr": {
        "methods": ["GEM", "TEM"],
        "profile": "noisier-subset:m=2,a=20",
        "snr_db": list(parse_grid("-12:3:18")),
        "T": 32,
        "max_depth": 4,
    },
    "tem-lambda-sweep": {
        "methods": ["TEM"],
        "profile": "equi-variance",
        "snr_db": [-6.0],
        "noisy_fraction": 0.5,
        "lambdas": list(parse_grid("0:0.1:1")),
        "T": 32,
        "max_depth": 4,
    },
    "mae-bounds": {
        "methods": ["MAE-GD"],
        "profile": "noisier-subset:m=2,a=20",
        "snr_db": list(parse_grid("-12:3:18")),
        "T": 8,
        "max_depth": 4,
    },
    "gb-size-sweep": {
        "methods": ["GB", "RGB"],
        "ensemble": "gradboost",
        "profile": "equi-variance",
        "snr_db": [18.0],
        "T_grid": [4, 8, 16, 32, 64],
        "max_depth": 1,
    },
    "demo-motivation": {
        "methods": ["BEM"],
        "profile": "single-noisy:a=20",
        "snr_db": [-6.0],
        "T": 5,
        "max_depth": 8,
        "k": 5,
    },
    "eval": {
        "methods": ["BEM", "GEM", "TEM"],
        "profile": "equi-variance",
        "snr_db": [0.0],
    },
}

COMMAND_HELP = {
    "gen-data": "generate a synthetic dataset and write it as CSV",
    "bagging-sweep-snr": "k-fold noisy evaluation of bagging aggregation methods over an SNR grid",
    "tem-lambda-sweep": "TEM error as a function of lambda, optionally with partially noisy inference",
    "mae-bounds": "MAE lower bound, optimised expected MAE and upper bound over an SNR grid",
    "gb-size-sweep": "analytic expected error of GB and robust GB against the ensemble size",
    "demo-motivation": "BEM ensemble with a single noisy channel: metrics and prediction traces",
    "eval": "evaluate chosen methods for one configuration (bagging or gradient boosting)",
}

# flag name -> (config key, parser, help); dataset.* keys go into the nested spec
DATASET_FLAGS = {
    "--dataset": ("dataset.kind", str, "dataset: sine, hyperplane, or a path to a CSV file (last column is the target)"),
    "--n-samples": ("dataset.n_samples", int, "number of synthetic samples"),
    "--data-seed": ("dataset.seed", int, "seed of the synthetic data generator"),
    "--noise-var": ("dataset.noise_var", float, "variance of the synthetic measurement noise"),
    "--n-features": ("dataset.n_features", int, "hyperplane input dimension"),
}
EXPERIMENT_FLAGS = {
    "--seed": ("seed", int, "master seed for folds, bagging subsamples and channel noise"),
    "--k": ("k", int, "number of cross-validation folds"),
    "--realizations": ("R", int, "noise realizations per fold"),
    "--threads": ("threads", int, "maximum worker threads (results do not depend on it)"),
    "--per-fold-standardize": ("per_fold_standardize", "flag", "standardize with training-fold statistics instead of the whole dataset"),
}
MODEL_FLAGS = {
    "--methods": ("methods", "methods", "comma-separated methods: BEM, GEM, TEM, MAE-GD, MAE-GD-nonrobust, GB, RGB"),
    "--profile": ("profile", str, "noise profile, e.g. equi-variance, noisier-subset:m=2,a=20, single-noisy:a=20, none"),
    "--snr-db": ("snr_db", "grid", "SNR grid in dB: start:step:stop, a comma list or one value"),
    "--T": ("T", int, "ensemble size"),
    "--max-depth": ("max_depth", int, "maximum tree depth"),
    "--min-leaf": ("min_leaf", int, "minimum training rows per leaf"),
    "--sample-fraction": ("sample_fraction", float, "bagging subsample fraction (without replacement)"),
    "--noisy-fraction": ("noisy_fraction", float, "fraction of test instances whose channels are noisy"),
}
EXTRA_FLAGS = {
    "tem-lambda-sweep": {"--lambda": ("lambdas", "grid", "lambda grid: start:step:stop, a comma list or one value")},
    "gb-size-sweep": {
        "--T-grid": ("T_grid", "intgrid", "ensemble sizes: start:step:stop or a comma list"),
        "--loss": ("loss", str, "boosting loss: mse or mae"),
        "--residual-targets": ("residual_targets", "flag", "fit MSE stages to y - f instead of 2 (y - f)"),
    },
    "eval": {
        "--ensemble": ("ensemble", str, "base ensemble: bagging or gradboost"),
        "--loss": ("loss", str, "boosting loss: mse or mae"),
        "--lambda": ("lambdas", "grid", "TEM lambda (first value is used)"),
        "--residual-targets": ("residual_targets", "flag", "fit MSE stages to y - f instead of 2 (y - f)"),
    },
}


def _flag_table(command: str) -> dict:
    table = dict(DATASET_FLAGS)
    if command != "gen-data":
        table.update(EXPERIMENT_FLAGS)
        table.update(MODEL_FLAGS)
    table.update(EXTRA_FLAGS.get(command, {}))
    return table


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="noisy-ensembles", description="Regression ensembles under additive Gaussian channel noise.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    for command, help_text in COMMAND_HELP.items():
        p = sub.add_parser(command, help=help_text, description=help_text)
        p.add_argument("--config", help="JSON experiment config; flags override its values")
        p.add_argument("--output-dir", help="output directory (default: $NE_OUTPUT_DIR/<command> or results/<command>)")
        for flag, (key, kind, help_) in _flag_table(command).items():
            dest = "opt:" + key
            if kind == "flag":
                p.add_argument(flag, dest=dest, action="store_true", default=None, help=help_)
            else:
                p.add_argument(flag, dest=dest, default=None, metavar=key.split(".")[-1].upper(), help=help_)
    return parser


def _convert(kind, raw: str, flag: str):
    try:
        if kind == "flag":
            return bool(raw)
        if kind == "grid":
            return list(parse_grid(raw, float))
        if kind == "intgrid":
            return list(parse_grid(raw, int))
        if kind == "methods":
            return [m.strip().upper().replace("NONROBUST", "nonrobust") for m in raw.split(",") if m.strip()]
        return kind(raw)
    except ConfigError as exc:
        raise ConfigError(f"{flag}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"{flag}: cannot parse {raw!r}") from exc


def resolve_config(command: str, args: argparse.Namespace) -> ExperimentConfig:
    """Subcommand defaults, then the config file, then explicit flags."""
    cfg = config_from_dict(COMMAND_DEFAULTS[command])
    if args.config:
        cfg = config_from_dict(_read_json(args.config), base=cfg)
    overrides: dict = {}
    for flag, (key, kind, _) in _flag_table(command).items():
        raw = getattr(args, "opt:" + key, None)
        if raw is None:
            continue
        value = _convert(kind, raw, flag)
        if key == "dataset.kind" and value not in harness.DATASET_KINDS:
            overrides.setdefault("dataset", {}).update(kind="csv", path=value)
        elif key.startswith("dataset."):
            overrides.setdefault("dataset", {})[key.split(".", 1)[1]] = value
        else:
            overrides[key] = value
    if overrides:
        cfg = config_from_dict(overrides, base=cfg)
    return cfg


def _output_dir(command: str, args) -> Path:
    if args.output_dir:
        out = Path(args.output_dir)
    else:
        out = Path(os.environ.get("NE_OUTPUT_DIR", "results")) / command
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"--output-dir: cannot create {out}: {exc.strerror}") from exc
    return out


def _write_config(cfg: ExperimentConfig, out: Path) -> None:
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")


def _execute(command: str, cfg: ExperimentConfig, out: Path) -> None:
    if command == "gen-data":
        data = harness.load_or_generate_dataset(cfg.dataset)
        harness.write_csv_dataset(data, out / "data.csv")
        return
    if command == "bagging-sweep-snr":
        rows = harness.run_evaluation(replace(cfg, ensemble="bagging"))
        # reference rows go to their own file so results.csv is exactly methods x SNRs x folds
        harness.write_metrics_csv([r for r in rows if math.isinf(r.snr_db)], out / "noiseless.csv")
        if {"GEM", "TEM"} <= set(cfg.methods):
            with (out / "err_gain.csv").open("w") as fh:
                fh.write("snr_db,mse_reduction_pct\n")
                for snr, gain in harness.err_gain_table(rows).items():
                    fh.write(f"{snr:.9g},{gain:.9g}\n")
        rows = [r for r in rows if not math.isinf(r.snr_db)]
    elif command == "tem-lambda-sweep":
        rows = harness.run_lambda_sweep(cfg)
    elif command == "mae-bounds":
        rows = harness.run_mae_bounds(cfg)
    elif command == "gb-size-sweep":
        rows = harness.run_gb_size_sweep(cfg)
    elif command == "demo-motivation":
        rows, samples = harness.run_demo_motivation(cfg)
        with (out / "predictions.csv").open("w") as fh:
            fh.write("x,y,noiseless,noisy\n")
            for rec in samples:
                fh.write(",".join(f"{v:.9g}" for v in rec) + "\n")
    elif command == "eval":
        if cfg.ensemble == "gradboost":
            cfg = replace(cfg, methods=tuple(m for m in cfg.methods if m in harness.GB_METHODS) or harness.GB_METHODS)
        rows = harness.run_evaluation(cfg)
    else:  # pragma: no cover - argparse restricts the choices
        raise ConfigError(f"unknown command {command!r}")
    harness.write_metrics_csv(rows, out / "results.csv")


def _glue_negative_values(argv: list[str]) -> list[str]:
    """Turn ``--snr-db -12:3:18`` into ``--snr-db=-12:3:18`` so argparse does not read a flag."""
    out: list[str] = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        nxt = argv[i + 1] if i + 1 < len(argv) else ""
        if tok.startswith("--") and "=" not in tok and len(nxt) > 1 and nxt[0] == "-" and (nxt[1].isdigit() or nxt[1] == "."):
            out.append(f"{tok}={nxt}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def run(argv=None) -> int:
    """Parse ``argv``, run the subcommand, return the exit code."""
    parser = build_parser()
    argv = _glue_negative_values(list(sys.argv[1:] if argv is None else argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    command = args.command
    try:
        cfg = resolve_config(command, args)
        out = _output_dir(command, args)
        _write_config(cfg, out)
        _execute(command, cfg, out)
    except (ConfigError, DataFormatError) as exc:
        print(f"noisy-ensembles {command}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (np.linalg.LinAlgError, ArithmeticError, RuntimeError) as exc:
        print(f"noisy-ensembles {command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"wrote {out}")
    return EXIT_OK


def main() -> None:
    sys.exit(run())
