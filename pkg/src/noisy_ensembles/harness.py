"""Datasets, k-fold protocol, Monte-Carlo noisy evaluation and the experiment runners."""

from __future__ import annotations

import csv
import math
import typing
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .aggregate_mae import (
    MaeGdConfig,
    expected_mae,
    mae_bounds,
    noiseless_mae,
    optimize_weights_gd,
)
from .aggregate_mse import bem_weights, expected_mse, gem_weights, tem_weights
from .core import AggregationWeights, Dataset, DimensionError, EnsembleModel, PredictionMatrix, as_cov, build_prediction_matrix
from .gradboost import GradBoostModel, TreeParams, expected_stage_mse, fit_gradboost
from .noise import NoiseProfileSpec, build_noise_profile, format_profile, parse_profile, snr_from_db
from .numerics import psd_sqrt
from .trees import BaggingConfig, fit_bagging, stream_rng

# stream tags keep the per-purpose RNG streams apart
STREAM_DATA, STREAM_FOLDS, STREAM_BAGGING, STREAM_NOISE, STREAM_DEMO = 1, 2, 3, 4, 5

DATASET_KINDS = ("sine", "hyperplane", "csv")
BAGGING_METHODS = ("BEM", "GEM", "TEM", "MAE-GD", "MAE-GD-nonrobust")
GB_METHODS = ("GB", "RGB")
# aggregation methods whose weights ignore the noise covariance
NOISE_BLIND = ("BEM", "GEM", "MAE-GD-nonrobust")
CSV_COLUMNS = ("dataset", "method", "profile", "snr_db", "fold", "rmse", "mae", "rmse_se", "mae_se")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class DataFormatError(ValueError):
    """Malformed dataset file."""


# ---------------------------------------------------------------- datasets


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "sine"
    n_samples: int = 1000
    seed: int = 0
    path: str | None = None
    noise_var: float = 0.01
    n_features: int = 3

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ConfigError(f"dataset.kind: unknown kind {self.kind!r}; expected one of {DATASET_KINDS}")
        if self.kind == "csv" and not self.path:
            raise ConfigError("dataset.path: csv datasets need a path")
        if self.n_samples < 1:
            raise ConfigError(f"dataset.n_samples: must be >= 1, got {self.n_samples}")
        if self.noise_var < 0:
            raise ConfigError(f"dataset.noise_var: must be >= 0, got {self.noise_var}")
        if self.n_features < 1:
            raise ConfigError(f"dataset.n_features: must be >= 1, got {self.n_features}")

    @property
    def name(self) -> str:
        return Path(self.path).stem if self.kind == "csv" else self.kind


def sine_target(x):
    x = np.asarray(x, dtype=np.float64)
    return np.sin(x) + np.sin(6.0 * x)


def hyperplane_coefficients(n_features: int, seed: int) -> np.ndarray:
    return stream_rng(seed, STREAM_DATA, 1).standard_normal(n_features)


def read_csv_dataset(path, name: str | None = None) -> Dataset:
    """Header row, numeric columns, last column is the target."""
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc.strerror}") from exc
    rows = []
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise DataFormatError(f"{path}: line 1: need a header with at least two columns")
        width = len(header)
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != width:
                raise DataFormatError(f"{path}: line {line}: expected {width} fields, got {len(row)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise DataFormatError(f"{path}: line {line}: {exc}") from exc
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    arr = np.array(rows)
    if not np.all(np.isfinite(arr)):
        raise DataFormatError(f"{path}: non-finite values present")
    return Dataset(arr[:, :-1], arr[:, -1], name or path.stem)


def write_csv_dataset(dataset: Dataset, path) -> None:
    """Write with repr-exact floats so a read back is bit-identical."""
    u = dataset.n_features
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{j}" for j in range(u)] + ["y"])
        for xrow, yv in zip(dataset.features, dataset.targets):
            w.writerow([repr(float(v)) for v in xrow] + [repr(float(yv))])


def load_or_generate_dataset(spec: DatasetSpec) -> Dataset:
    if spec.kind == "csv":
        return read_csv_dataset(spec.path)
    rng = stream_rng(spec.seed, STREAM_DATA)
    n = spec.n_samples
    eps = rng.normal(0.0, math.sqrt(spec.noise_var), n) if spec.noise_var > 0 else np.zeros(n)
    if spec.kind == "sine":
        x = rng.uniform(0.0, 6.0, n)
        return Dataset(x[:, None], sine_target(x) + eps, "sine")
    c = hyperplane_coefficients(spec.n_features, spec.seed)
    X = rng.uniform(-1.0, 1.0, (n, spec.n_features))
    return Dataset(X, X @ c + eps, "hyperplane")


@dataclass(frozen=True)
class StandardizeTransform:
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    target_mean: float
    target_scale: float

    def apply(self, dataset: Dataset) -> Dataset:
        X = (dataset.features - self.feature_mean) / self.feature_scale
        y = (dataset.targets - self.target_mean) / self.target_scale
        return Dataset(X, y, dataset.name)

    def invert_targets(self, y):
        return np.asarray(y) * self.target_scale + self.target_mean


def _scale(std: np.ndarray) -> np.ndarray:
    # constant columns pass through unscaled
    return np.where(std > 0, std, 1.0)


def fit_standardize(dataset: Dataset) -> StandardizeTransform:
    X, y = dataset.features, dataset.targets
    return StandardizeTransform(
        feature_mean=X.mean(axis=0),
        feature_scale=_scale(X.std(axis=0)),
        target_mean=float(y.mean()),
        target_scale=float(_scale(np.array([y.std()]))[0]),
    )


def standardize(dataset: Dataset) -> tuple[Dataset, StandardizeTransform]:
    """Zero mean and unit population standard deviation per column, target included."""
    tf = fit_standardize(dataset)
    return tf.apply(dataset), tf


def kfold_split(dataset_or_n, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Seeded shuffle, then k contiguous test blocks whose sizes differ by at most one."""
    n = dataset_or_n.n_samples if isinstance(dataset_or_n, Dataset) else int(dataset_or_n)
    if k < 2 and k != n:
        raise ConfigError(f"k: need k >= 2, got {k}")
    if k > n:
        raise ConfigError(f"k: k={k} exceeds the number of samples {n}")
    perm = stream_rng(seed, STREAM_FOLDS).permutation(n)
    out = []
    for block in np.array_split(perm, k):
        test = np.sort(block)
        mask = np.ones(n, dtype=bool)
        mask[test] = False
        out.append((np.flatnonzero(mask), test))
    return out


# ---------------------------------------------------------------- evaluation


@dataclass(frozen=True)
class NoisyMetrics:
    rmse: float
    mae: float
    rmse_se: float
    mae_se: float


@dataclass(frozen=True)
class MetricsRow:
    dataset: str
    method: str
    profile: str
    snr_db: float
    fold: int
    rmse: float
    mae: float
    rmse_se: float = 0.0
    mae_se: float = 0.0
    expected_mse: float | None = None
    expected_mae: float | None = None

    def __post_init__(self):
        # nan marks a metric that does not apply to the row
        for name in ("rmse", "mae", "rmse_se", "mae_se"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)}")

    def csv_fields(self) -> list[str]:
        return [
            self.dataset,
            self.method,
            self.profile,
            _fmt(self.snr_db),
            str(self.fold),
            _fmt(self.rmse),
            _fmt(self.mae),
            _fmt(self.rmse_se),
            _fmt(self.mae_se),
        ]


def _fmt(v: float) -> str:
    return f"{v:.9g}"


def write_metrics_csv(rows, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in rows:
            w.writerow(row.csv_fields())


def _test_matrix(model, test: Dataset) -> np.ndarray:
    if isinstance(model, PredictionMatrix):
        return model.values
    if isinstance(model, GradBoostModel):
        return model.prediction_matrix(test).values
    if isinstance(model, EnsembleModel):
        return build_prediction_matrix(model, test).values
    return np.atleast_2d(np.asarray(model, dtype=np.float64))


def evaluate_noisy(model, weights, Sigma, test: Dataset, R: int, noisy_fraction: float = 1.0, rng=None) -> NoisyMetrics:
    """Monte-Carlo RMSE and MAE of the aggregated prediction under channel noise.

    ``model`` is an EnsembleModel, a GradBoostModel (``weights`` may then be
    None) or a precomputed prediction matrix. ``rng`` is a Generator or an
    integer key tuple; with a key, realization r draws from stream (key, r),
    so different weight vectors see the same noise.
    """
    if R < 1:
        raise ConfigError(f"R: need at least one realization, got {R}")
    if not 0.0 <= noisy_fraction <= 1.0:
        raise ConfigError(f"noisy_fraction: must lie in [0, 1], got {noisy_fraction}")
    P = _test_matrix(model, test)
    if weights is None:
        if not isinstance(model, GradBoostModel):
            raise ValueError("weights are required unless the model is a GradBoostModel")
        alpha = model.alphas
    else:
        alpha = weights.alpha if isinstance(weights, AggregationWeights) else np.asarray(weights, float)
    S = as_cov(Sigma)
    N, T = P.shape
    if alpha.size != T or S.shape != (T, T) or test.n_samples != N:
        raise DimensionError(f"alpha {alpha.shape}, Phi {P.shape}, Sigma {S.shape}, test N={test.n_samples}")
    y = test.targets
    base = P @ alpha
    n_noisy = int(round(noisy_fraction * N))
    if n_noisy == 0 or not np.any(S):
        r = base - y
        mse, mae = float(np.mean(r * r)), float(np.mean(np.abs(r)))
        return NoisyMetrics(math.sqrt(mse), mae, 0.0, 0.0)

    # aggregated noise alpha^T L z with z standard normal
    proj = psd_sqrt(S).T @ alpha
    if rng is None:
        rng = stream_rng(0, STREAM_NOISE)
    keyed = not isinstance(rng, np.random.Generator)
    mses, maes = np.empty(R), np.empty(R)
    for r in range(R):
        g = stream_rng(*rng, r) if keyed else rng
        z = g.standard_normal((N, T))
        agg = z @ proj
        if n_noisy < N:
            mask = np.zeros(N)
            mask[g.permutation(N)[:n_noisy]] = 1.0
            agg = agg * mask
        res = base + agg - y
        mses[r] = np.mean(res * res)
        maes[r] = np.mean(np.abs(res))
    mse = float(mses.mean())
    rmse = math.sqrt(mse)
    if R > 1:
        mse_se = float(mses.std(ddof=1)) / math.sqrt(R)
        mae_se = float(maes.std(ddof=1)) / math.sqrt(R)
    else:
        mse_se = mae_se = 0.0
    # delta method: se(sqrt(m)) = se(m) / (2 sqrt(m))
    rmse_se = mse_se / (2.0 * rmse) if rmse > 0 else 0.0
    return NoisyMetrics(rmse, float(maes.mean()), rmse_se, mae_se)


def mse_reduction(gem_noisy_rmse: float, tem_noisy_rmse: float, gem_noiseless_rmse: float) -> float:
    """Percent improvement of TEM over GEM, relative to the noiseless GEM error."""
    if gem_noiseless_rmse == 0:
        raise ZeroDivisionError("noiseless GEM RMSE is zero")
    return 100.0 * (gem_noisy_rmse - tem_noisy_rmse) / gem_noiseless_rmse


def pooled_rmse(rows, method: str, snr_db: float | None = None) -> float:
    """sqrt of the fold-averaged MSE for one method (and SNR)."""
    sel = [r for r in rows if r.method == method and (snr_db is None or _same(r.snr_db, snr_db))]
    if not sel:
        raise KeyError(f"no rows for method {method!r} at snr {snr_db}")
    return math.sqrt(float(np.mean([r.rmse**2 for r in sel])))


def _same(a: float, b: float) -> bool:
    return a == b or (math.isinf(a) and math.isinf(b))


# ---------------------------------------------------------------- configuration


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    methods: tuple = ("GEM", "TEM")
    profile: str = "equi-variance"
    snr_db: tuple = (0.0,)
    k: int = 5
    R: int = 100
    noisy_fraction: float = 1.0
    lambdas: tuple = (1.0,)
    T_grid: tuple = (4, 16, 64)
    T: int = 32
    max_depth: int = 4
    min_leaf: int = 2
    sample_fraction: float = 0.6
    ensemble: str = "bagging"
    loss: str = "mse"
    residual_targets: bool = False
    per_fold_standardize: bool = False
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.k < 2:
            raise ConfigError(f"k: need k >= 2, got {self.k}")
        if self.R < 1:
            raise ConfigError(f"R: need R >= 1, got {self.R}")
        if not 0.0 <= self.noisy_fraction <= 1.0:
            raise ConfigError(f"noisy_fraction: must lie in [0, 1], got {self.noisy_fraction}")
        for name in ("methods", "snr_db", "lambdas", "T_grid"):
            if len(getattr(self, name)) == 0:
                raise ConfigError(f"{name}: grid must be non-empty")
        known = BAGGING_METHODS + GB_METHODS
        for m in self.methods:
            if m not in known:
                raise ConfigError(f"methods: unknown method {m!r}; expected some of {known}")
        if any(l < 0 for l in self.lambdas):
            raise ConfigError("lambdas: values must be non-negative")
        if any(t < 1 for t in self.T_grid) or self.T < 1:
            raise ConfigError("T: ensemble sizes must be >= 1")
        if self.ensemble not in ("bagging", "gradboost"):
            raise ConfigError(f"ensemble: expected 'bagging' or 'gradboost', got {self.ensemble!r}")
        if self.loss not in ("mse", "mae"):
            raise ConfigError(f"loss: expected 'mse' or 'mae', got {self.loss!r}")
        if self.threads < 1:
            raise ConfigError(f"threads: must be >= 1, got {self.threads}")
        if self.max_depth < 0 or self.min_leaf < 1:
            raise ConfigError("max_depth/min_leaf: invalid tree parameters")
        if not 0.0 < self.sample_fraction <= 1.0:
            raise ConfigError(f"sample_fraction: must lie in (0, 1], got {self.sample_fraction}")
        try:
            parse_profile(self.profile)
        except ValueError as exc:
            raise ConfigError(f"profile: {exc}") from exc

    def noise_spec(self) -> NoiseProfileSpec:
        return parse_profile(self.profile)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "dataset":
                v = {g.name: getattr(v, g.name) for g in fields(v)}
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out


def _coerce(value, tp, name: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected a boolean, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{name}: expected a string, got {value!r}")
        return value
    if origin is typing.Union or (origin is not None and type(None) in args):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], name)
    raise ConfigError(f"{name}: unsupported field type {tp}")


_TUPLE_ITEM = {"methods": str, "snr_db": float, "lambdas": float, "T_grid": int}


def _strict_build(cls, data: dict, prefix: str = ""):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix.rstrip('.') or 'config'}: expected a JSON object")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"{prefix}{key}: unknown configuration key")
    kwargs = {}
    for key, value in data.items():
        name = prefix + key
        if key == "dataset" and cls is ExperimentConfig:
            kwargs[key] = _strict_build(DatasetSpec, value, "dataset.")
        elif key in _TUPLE_ITEM and cls is ExperimentConfig:
            if not isinstance(value, list):
                raise ConfigError(f"{name}: expected a list")
            kwargs[key] = tuple(_coerce(v, _TUPLE_ITEM[key], f"{name}[{i}]") for i, v in enumerate(value))
        else:
            kwargs[key] = _coerce(value, hints[key], name)
    return cls(**kwargs)


def config_from_dict(data: dict, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Strict construction: unknown keys and type mismatches raise ConfigError.

    Keys absent from ``data`` keep the values of ``base`` (or the defaults).
    """
    merged = (base or ExperimentConfig()).to_dict()
    if not isinstance(data, dict):
        raise ConfigError("config: expected a JSON object")
    for key, value in data.items():
        if key == "dataset" and isinstance(value, dict):
            unknown = set(value) - set(merged["dataset"])
            if unknown:
                raise ConfigError(f"dataset.{sorted(unknown)[0]}: unknown configuration key")
            merged["dataset"] = {**merged["dataset"], **value}
        else:
            merged[key] = value
    return _strict_build(ExperimentConfig, merged)


# ---------------------------------------------------------------- experiment runners


@dataclass(frozen=True)
class FoldData:
    index: int
    train: Dataset
    test: Dataset


def prepare_folds(cfg: ExperimentConfig) -> list[FoldData]:
    raw = load_or_generate_dataset(cfg.dataset)
    data = raw if cfg.per_fold_standardize else standardize(raw)[0]
    out = []
    for f, (tr, te) in enumerate(kfold_split(data, cfg.k, cfg.seed)):
        train, test = data.subset(tr), data.subset(te)
        if cfg.per_fold_standardize:
            tf = fit_standardize(train)
            train, test = tf.apply(train), tf.apply(test)
        out.append(FoldData(f, train, test))
    return out


def _derived_seed(*key: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in key]).generate_state(1, np.uint64)[0])


def _map_folds(cfg: ExperimentConfig, fn, folds):
    """Run fn over folds, optionally threaded; results keep fold order."""
    if cfg.threads > 1 and len(folds) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as ex:
            parts = list(ex.map(fn, folds))
    else:
        parts = [fn(f) for f in folds]
    return [row for part in parts for row in part]


def _noise_model(cfg: ExperimentConfig, snr: float, T: int, eps_y: float):
    spec = cfg.noise_spec()
    if spec.kind == "none":
        return build_noise_profile(spec, T)
    return build_noise_profile(replace(spec, snr=snr_from_db(snr), eps_y=eps_y), T)


def _profile_label(cfg: ExperimentConfig) -> str:
    return format_profile(cfg.noise_spec())


def _bagging_weights(method: str, P, y, S, lam: float = 1.0) -> AggregationWeights:
    if method == "BEM":
        return bem_weights(P.shape[1])
    if method == "GEM":
        return gem_weights(P, y)
    if method == "TEM":
        return tem_weights(P, y, S, lam)
    if method == "MAE-GD":
        return optimize_weights_gd(P, y, S, MaeGdConfig(robust=True))
    if method == "MAE-GD-nonrobust":
        return optimize_weights_gd(P, y, S, MaeGdConfig(robust=False))
    raise ConfigError(f"methods: {method!r} is not a bagging aggregation method")


def _fit_bagging_fold(cfg: ExperimentConfig, fold: FoldData) -> EnsembleModel:
    bc = BaggingConfig(
        T=cfg.T,
        sample_fraction=cfg.sample_fraction,
        max_depth=cfg.max_depth,
        min_leaf=cfg.min_leaf,
        seed=_derived_seed(cfg.seed, STREAM_BAGGING, fold.index),
    )
    return fit_bagging(fold.train, bc)


def _row(cfg, method, snr, fold, m: NoisyMetrics, **extra) -> MetricsRow:
    return MetricsRow(
        dataset=cfg.dataset.name,
        method=method,
        profile=extra.pop("profile", _profile_label(cfg)),
        snr_db=snr,
        fold=fold,
        rmse=m.rmse,
        mae=m.mae,
        rmse_se=m.rmse_se,
        mae_se=m.mae_se,
        **extra,
    )


def run_evaluation(cfg: ExperimentConfig) -> list[MetricsRow]:
    """Noisy k-fold evaluation of every method at every SNR.

    Each method also gets one noiseless row per fold (profile ``none``,
    snr_db ``inf``). Bagging methods reuse one ensemble per fold; GB/RGB
    fit a boosted model of size T per fold and SNR.
    """
    folds = prepare_folds(cfg)
    bag_methods = [m for m in cfg.methods if m in BAGGING_METHODS]
    gb_methods = [m for m in cfg.methods if m in GB_METHODS]
    noiseless_only = cfg.noise_spec().kind == "none"

    def per_fold(fold: FoldData):
        rows = []
        key = (cfg.seed, STREAM_NOISE, fold.index)
        eps_y = fold.train.eps_y
        if bag_methods:
            ens = _fit_bagging_fold(cfg, fold)
            P_tr = build_prediction_matrix(ens, fold.train).values
            P_te = build_prediction_matrix(ens, fold.test).values
            zero = np.zeros((cfg.T, cfg.T))
            for method in bag_methods:
                w0 = _bagging_weights(method, P_tr, fold.train.targets, zero)
                m0 = evaluate_noisy(P_te, w0, zero, fold.test, cfg.R, cfg.noisy_fraction, key)
                rows.append(_row(cfg, method, math.inf, fold.index, m0, profile="none"))
            if not noiseless_only:
                fixed = {m: _bagging_weights(m, P_tr, fold.train.targets, zero) for m in bag_methods if m in NOISE_BLIND}
                for snr in cfg.snr_db:
                    S = _noise_model(cfg, snr, cfg.T, eps_y).cov
                    for method in bag_methods:
                        w = fixed.get(method) or _bagging_weights(method, P_tr, fold.train.targets, S, cfg.lambdas[0])
                        m = evaluate_noisy(P_te, w, S, fold.test, cfg.R, cfg.noisy_fraction, key)
                        rows.append(_row(cfg, method, snr, fold.index, m))
        for method in gb_methods:
            snrs = [math.inf] + ([] if noiseless_only else list(cfg.snr_db))
            for snr in snrs:
                S = np.zeros((cfg.T, cfg.T)) if math.isinf(snr) else _noise_model(cfg, snr, cfg.T, eps_y).cov
                model = fit_gradboost(
                    fold.train, cfg.T, S, cfg.loss, TreeParams(cfg.max_depth, cfg.min_leaf),
                    robust=(method == "RGB"), residual_targets=cfg.residual_targets,
                )
                m = evaluate_noisy(model, None, S, fold.test, cfg.R, cfg.noisy_fraction, key)
                rows.append(_row(cfg, method, snr, fold.index, m, profile="none" if math.isinf(snr) else _profile_label(cfg)))
        return rows

    return _map_folds(cfg, per_fold, folds)


def err_gain_table(rows) -> dict[float, float]:
    """SNR -> percent MSE reduction of TEM over GEM, pooled over folds."""
    gem0 = pooled_rmse(rows, "GEM", math.inf)
    snrs = sorted({r.snr_db for r in rows if not math.isinf(r.snr_db)})
    return {s: mse_reduction(pooled_rmse(rows, "GEM", s), pooled_rmse(rows, "TEM", s), gem0) for s in snrs}


def run_lambda_sweep(cfg: ExperimentConfig) -> list[MetricsRow]:
    """TEM error against lambda; rows are labelled ``TEM@lambda=<value>``."""
    folds = prepare_folds(cfg)

    def per_fold(fold: FoldData):
        rows = []
        key = (cfg.seed, STREAM_NOISE, fold.index)
        ens = _fit_bagging_fold(cfg, fold)
        P_tr = build_prediction_matrix(ens, fold.train).values
        P_te = build_prediction_matrix(ens, fold.test).values
        for snr in cfg.snr_db:
            S = _noise_model(cfg, snr, cfg.T, fold.train.eps_y).cov
            for lam in cfg.lambdas:
                w = tem_weights(P_tr, fold.train.targets, S, lam)
                m = evaluate_noisy(P_te, w, S, fold.test, cfg.R, cfg.noisy_fraction, key)
                exp_mse = expected_mse(w, P_te, fold.test.targets, S, 1.0)[0]
                rows.append(_row(cfg, f"TEM@lambda={lam:g}", snr, fold.index, m, expected_mse=exp_mse))
        return rows

    return _map_folds(cfg, per_fold, folds)


def run_mae_bounds(cfg: ExperimentConfig) -> list[MetricsRow]:
    """Lower bound, optimised expected MAE and upper bound on each fold's training set.

    Rows ``MAE-lower``, ``MAE-GD`` and ``MAE-upper`` carry the value in the
    ``mae`` column; ``rmse`` is nan for the bound rows.
    """
    folds = prepare_folds(cfg)
    nan = float("nan")

    def per_fold(fold: FoldData):
        rows = []
        ens = _fit_bagging_fold(cfg, fold)
        P = build_prediction_matrix(ens, fold.train).values
        y = fold.train.targets
        zero = np.zeros((cfg.T, cfg.T))
        a_dag = optimize_weights_gd(P, y, zero, MaeGdConfig(robust=False))
        for snr in cfg.snr_db:
            S = _noise_model(cfg, snr, cfg.T, fold.train.eps_y).cov
            rep = mae_bounds(P, y, S, a_dag)
            w = optimize_weights_gd(P, y, S, MaeGdConfig(robust=True))
            opt = expected_mae(w, P, y, S)
            for method, val in (("MAE-lower", rep.lower), ("MAE-GD", opt), ("MAE-upper", rep.upper)):
                rows.append(_row(cfg, method, snr, fold.index, NoisyMetrics(nan, val, nan, nan), expected_mae=val))
        return rows

    return _map_folds(cfg, per_fold, folds)


def run_gb_size_sweep(cfg: ExperimentConfig) -> list[MetricsRow]:
    """Analytic expected test error of GB and RGB for every T in the grid.

    ``rmse`` is sqrt(mean residual^2 + a^T Sigma a) on the test fold and
    ``mae`` the folded-normal expected MAE; no sampling is involved.
    Method labels are ``<GB|RGB>@T=<T>``; ``-noiseless`` marks the same
    models evaluated with Sigma = 0.
    """
    folds = prepare_folds(cfg)
    methods = [m for m in cfg.methods if m in GB_METHODS] or list(GB_METHODS)
    params = TreeParams(cfg.max_depth, cfg.min_leaf)

    def per_fold(fold: FoldData):
        rows = []
        for snr in cfg.snr_db:
            for T in cfg.T_grid:
                S = _noise_model(cfg, snr, T, fold.train.eps_y).cov
                for method in methods:
                    model = fit_gradboost(
                        fold.train, T, S, cfg.loss, params, robust=(method == "RGB"), residual_targets=cfg.residual_targets
                    )
                    P = model.prediction_matrix(fold.test).values
                    yt = fold.test.targets
                    for label, cov in ((method, S), (method + "-noiseless", np.zeros_like(S))):
                        e_mse = expected_stage_mse(model.alphas, P, yt, cov)
                        e_mae = expected_mae(model.alphas, P, yt, cov)
                        rows.append(
                            _row(cfg, f"{label}@T={T}", snr, fold.index, NoisyMetrics(math.sqrt(e_mse), e_mae, 0.0, 0.0),
                                 expected_mse=e_mse, expected_mae=e_mae)
                        )
        return rows

    return _map_folds(cfg, per_fold, folds)


def run_demo_motivation(cfg: ExperimentConfig) -> tuple[list[MetricsRow], list[tuple[float, float, float, float]]]:
    """BEM-averaged bagging ensemble with one noisy channel.

    Uses the first fold as the test set. Returns metric rows (noiseless and
    noisy) and per-test-sample (x0, y, noiseless prediction, one noisy
    prediction) tuples sorted by x0.
    """
    fold = prepare_folds(cfg)[0]
    ens = _fit_bagging_fold(cfg, fold)
    P = build_prediction_matrix(ens, fold.test).values
    w = bem_weights(cfg.T)
    S = _noise_model(cfg, cfg.snr_db[0], cfg.T, fold.train.eps_y).cov
    key = (cfg.seed, STREAM_NOISE, fold.index)
    zero = np.zeros_like(S)
    rows = [
        _row(cfg, "BEM", math.inf, 0, evaluate_noisy(P, w, zero, fold.test, 1, 1.0, key), profile="none"),
        _row(cfg, "BEM", cfg.snr_db[0], 0, evaluate_noisy(P, w, S, fold.test, cfg.R, cfg.noisy_fraction, key)),
    ]
    noise = stream_rng(cfg.seed, STREAM_DEMO).standard_normal(P.shape) @ psd_sqrt(S).T
    clean = P @ w.alpha
    noisy = (P + noise) @ w.alpha
    x0 = fold.test.features[:, 0]
    order = np.argsort(x0, kind="stable")
    samples = [(float(x0[i]), float(fold.test.targets[i]), float(clean[i]), float(noisy[i])) for i in order]
    return rows, samples
