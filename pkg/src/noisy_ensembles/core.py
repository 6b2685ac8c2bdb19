"""Domain types shared across the package and the elementary prediction operations."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Protocol, Sequence

import numpy as np

AGGREGATION_METHODS = ("BEM", "GEM", "TEM", "MAE-GD", "MAE-GD-nonrobust", "GB", "RGB")


class DimensionError(ValueError):
    """Raised when array shapes are inconsistent."""


class Regressor(Protocol):
    n_features: int

    def predict(self, X: np.ndarray) -> np.ndarray: ...


def _frozen_array(a, ndim: int, name: str) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise DimensionError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    targets: np.ndarray
    name: str = "dataset"

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64, copy=True)
        if X.ndim == 1:
            X = X[:, None]
        X = _frozen_array(X, 2, "features")
        y = _frozen_array(self.targets, 1, "targets")
        if X.shape[0] != y.shape[0]:
            raise DimensionError(
                f"feature rows ({X.shape[0]}) != target count ({y.shape[0]})"
            )
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise DimensionError(f"dataset needs N_s >= 1 and u >= 1, got {X.shape}")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", y)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.features[idx], self.targets[idx], self.name)

    @property
    def eps_y(self) -> float:
        """Mean of the squared targets."""
        return float(np.mean(self.targets**2))


@dataclass(frozen=True)
class PredictionMatrix:
    """N_s x T matrix whose column t holds regressor t evaluated on every row."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values, 2, "values"))

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class AggregationWeights:
    alpha: np.ndarray
    method: str = "custom"

    def __post_init__(self):
        a = _frozen_array(np.atleast_1d(self.alpha), 1, "alpha")
        if a.size < 1:
            raise DimensionError("alpha must have at least one entry")
        if not np.all(np.isfinite(a)):
            raise ValueError("aggregation weights must be finite")
        object.__setattr__(self, "alpha", a)

    @property
    def T(self) -> int:
        return self.alpha.size


@dataclass(frozen=True)
class NoiseModel:
    """Covariance of the additive channel noise plus the profile that produced it."""

    cov: np.ndarray
    profile: dict[str, Any] = field(default_factory=lambda: {"kind": "custom"})

    def __post_init__(self):
        S = _frozen_array(np.atleast_2d(self.cov), 2, "cov")
        if S.shape[0] != S.shape[1]:
            raise DimensionError(f"covariance must be square, got {S.shape}")
        if not np.allclose(S, S.T, atol=1e-12, rtol=0):
            raise ValueError("covariance must be symmetric")
        if np.any(np.diag(S) < 0):
            raise ValueError("covariance diagonal must be non-negative")
        if S.size and np.linalg.eigvalsh(S).min() < -1e-10:
            raise ValueError("covariance must be positive semidefinite")
        object.__setattr__(self, "cov", S)

    @property
    def T(self) -> int:
        return self.cov.shape[0]

    @classmethod
    def zeros(cls, T: int) -> "NoiseModel":
        return cls(np.zeros((T, T)), {"kind": "none"})

    def leading(self, t: int) -> "NoiseModel":
        """Noise model of the first ``t`` channels."""
        return NoiseModel(self.cov[:t, :t], dict(self.profile))


@dataclass(frozen=True)
class EnsembleModel:
    trees: tuple
    kind: str = "bagging"

    def __post_init__(self):
        trees = tuple(self.trees)
        if len(trees) < 1:
            raise ValueError("an ensemble needs at least one regressor")
        widths = {t.n_features for t in trees}
        if len(widths) != 1:
            raise DimensionError(f"regressors disagree on input width: {sorted(widths)}")
        if self.kind not in ("bagging", "gradboost"):
            raise ValueError(f"unknown ensemble kind {self.kind!r}")
        object.__setattr__(self, "trees", trees)

    @property
    def T(self) -> int:
        return len(self.trees)

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features


def build_prediction_matrix(ensemble: EnsembleModel, dataset: Dataset) -> PredictionMatrix:
    if dataset.n_features != ensemble.n_features:
        raise DimensionError(
            f"dataset has {dataset.n_features} features, ensemble expects {ensemble.n_features}"
        )
    cols = [tree.predict(dataset.features) for tree in ensemble.trees]
    return PredictionMatrix(np.column_stack(cols))


def noisy_predict(weights: AggregationWeights | Sequence[float], base_outputs, noise_draw) -> float:
    """Aggregate one noisy channel vector: alpha^T (phi + n)."""
    alpha = weights.alpha if isinstance(weights, AggregationWeights) else np.asarray(weights, float)
    phi = np.asarray(base_outputs, dtype=np.float64)
    n = np.asarray(noise_draw, dtype=np.float64)
    if not (alpha.shape == phi.shape == n.shape) or alpha.ndim != 1:
        raise DimensionError(
            f"length mismatch: alpha {alpha.shape}, outputs {phi.shape}, noise {n.shape}"
        )
    return float(alpha @ (phi + n))


def as_alpha(weights) -> np.ndarray:
    if isinstance(weights, AggregationWeights):
        return weights.alpha
    return np.atleast_1d(np.asarray(weights, dtype=np.float64))


def as_matrix(Phi) -> np.ndarray:
    if isinstance(Phi, PredictionMatrix):
        return Phi.values
    return np.atleast_2d(np.asarray(Phi, dtype=np.float64))


def as_cov(Sigma) -> np.ndarray:
    if isinstance(Sigma, NoiseModel):
        return Sigma.cov
    return np.atleast_2d(np.asarray(Sigma, dtype=np.float64))
