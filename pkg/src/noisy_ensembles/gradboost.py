"""Gradient boosting whose stage coefficients minimise the noise-expected loss."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .core import Dataset, DimensionError, NoiseModel, PredictionMatrix, as_cov
from .numerics import SQRT_2_OVER_PI, norm_cdf, norm_pdf
from .trees import RegressionTree, fit_tree

LOSSES = ("mse", "mae")
FORMAT_VERSION = 1
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
MAX_DOUBLINGS = 60


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 1
    min_leaf: int = 2

    def __post_init__(self):
        if self.max_depth < 0 or self.min_leaf < 1:
            raise ValueError(f"invalid tree parameters {self}")


def _check_loss(loss: str) -> None:
    if loss not in LOSSES:
        raise ValueError(f"unknown loss {loss!r}; expected one of {LOSSES}")


def negative_gradient(loss: str, y, f_hat) -> np.ndarray:
    _check_loss(loss)
    y = np.asarray(y, dtype=np.float64)
    f_hat = np.asarray(f_hat, dtype=np.float64)
    if y.shape != f_hat.shape:
        raise DimensionError(f"y has shape {y.shape}, f_hat has shape {f_hat.shape}")
    r = y - f_hat
    return 2.0 * r if loss == "mse" else np.sign(r)


def _stage_inputs(phi_t, y, f_hat_prev, Sigma, alpha_prefix, t):
    if t < 1:
        raise ValueError(f"stage index must be >= 1, got {t}")
    phi = np.asarray(phi_t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    f_prev = np.asarray(f_hat_prev, dtype=np.float64)
    if not phi.shape == y.shape == f_prev.shape:
        raise DimensionError(f"shape mismatch: phi {phi.shape}, y {y.shape}, f_hat {f_prev.shape}")
    S = as_cov(Sigma)
    if S.shape[0] < t or S.shape[1] < t:
        raise DimensionError(f"Sigma is {S.shape}, stage {t} needs at least {t}x{t}")
    prefix = np.asarray(alpha_prefix, dtype=np.float64).reshape(-1)
    if prefix.size != t - 1:
        raise DimensionError(f"stage {t} needs {t - 1} previous coefficients, got {prefix.size}")
    return phi, y, f_prev, S, prefix


def robust_alpha_mse(phi_t, y, f_hat_prev, Sigma, alpha_prefix, t: int) -> float:
    """Exact minimiser of the expected squared loss over the stage-t coefficient.

    Stages are 1-indexed. The cross-covariance with earlier stages enters with
    a negative sign: a positive correlation is cancelled by shrinking alpha_t.
    """
    phi, y, f_prev, S, prefix = _stage_inputs(phi_t, y, f_hat_prev, Sigma, alpha_prefix, t)
    var_t = S[t - 1, t - 1]
    denom = var_t + float(np.mean(phi * phi))
    if denom <= 0.0:
        raise ZeroDivisionError(f"stage {t}: regressor is identically zero and its channel is noiseless")
    cross = float(S[t - 1, : t - 1] @ prefix) if t > 1 else 0.0
    return (float(np.mean(phi * (y - f_prev))) - cross) / denom


def stage_expected_mae(alpha: float, phi, omega, sigma_t: float) -> float:
    """mean_i E|omega_i - alpha (phi_i + n_t)| with n_t ~ N(0, sigma_t^2)."""
    mu = alpha * np.asarray(phi) - np.asarray(omega)
    s = abs(alpha) * sigma_t
    if s < 1e-12:
        return float(np.mean(np.abs(mu)))
    r = mu / s
    return float(np.mean(SQRT_2_OVER_PI * s * np.exp(-0.5 * r * r) + mu * (2.0 * norm_cdf(r) - 1.0)))


def stage_expected_mae_derivative(alpha: float, phi, omega, sigma_t: float) -> float:
    phi = np.asarray(phi)
    mu = alpha * phi - np.asarray(omega)
    s = abs(alpha) * sigma_t
    if s < 1e-12:
        return float(np.mean(phi * np.sign(mu)))
    r = mu / s
    return float(np.mean(phi * (2.0 * norm_cdf(r) - 1.0) + sigma_t * math.copysign(1.0, alpha) * 2.0 * norm_pdf(r)))


def _bracket(deriv, lo: float, hi: float) -> tuple[float, float]:
    """Widen [lo, hi] until deriv(lo) <= 0 <= deriv(hi)."""
    width = max(hi - lo, 1.0)
    for _ in range(MAX_DOUBLINGS):
        if deriv(lo) <= 0.0:
            break
        lo -= width
        width *= 2.0
    else:
        raise RuntimeError("could not bracket the stage minimiser from below")
    width = max(hi - lo, 1.0)
    for _ in range(MAX_DOUBLINGS):
        if deriv(hi) >= 0.0:
            break
        hi += width
        width *= 2.0
    else:
        raise RuntimeError("could not bracket the stage minimiser from above")
    return lo, hi


def _scalar_minimise(f, deriv, lo: float, hi: float) -> float:
    """Golden-section search on [lo, hi] followed by bisection on the derivative."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    tol = 1e-6 * max(1.0, abs(a), abs(b))
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    # the golden bracket may have lost the sign change when f is flat; keep the outer one then
    if not (deriv(a) <= 0.0 <= deriv(b)):
        a, b = lo, hi
    for _ in range(200):
        mid = 0.5 * (a + b)
        if b - a <= 1e-13 * max(1.0, abs(mid)):
            break
        if deriv(mid) > 0.0:
            b = mid
        else:
            a = mid
    return 0.5 * (a + b)


def robust_alpha_mae(phi_t, y, f_hat_prev, Sigma, alpha_prefix, t: int) -> float:
    """Minimiser of the stage expected MAE.

    Earlier stages enter through their noise-free outputs only, so the
    residual omega is deterministic and the objective is a mean of
    folded-normal means in alpha. The objective is convex.
    """
    phi, y, f_prev, S, _ = _stage_inputs(phi_t, y, f_hat_prev, Sigma, alpha_prefix, t)
    sigma_t = math.sqrt(max(S[t - 1, t - 1], 0.0))
    omega = y - f_prev
    if not np.any(phi) and sigma_t == 0.0:
        return 0.0
    f = lambda a: stage_expected_mae(a, phi, omega, sigma_t)
    deriv = lambda a: stage_expected_mae_derivative(a, phi, omega, sigma_t)
    if t == 1:
        lo, hi = float(omega.min()), float(omega.max())
    else:
        denom = float(phi @ phi)
        guess = float(phi @ omega) / denom if denom > 0 else 0.0
        spread = max(1.0, abs(guess))
        lo, hi = guess - spread, guess + spread
    if hi <= lo:
        hi = lo + 1.0
    lo, hi = _bracket(deriv, lo, hi)
    return _scalar_minimise(f, deriv, lo, hi)


@dataclass(frozen=True)
class GradBoostModel:
    trees: tuple
    alphas: np.ndarray
    loss: str
    sigma: NoiseModel
    robust: bool = True

    def __post_init__(self):
        _check_loss(self.loss)
        a = np.array(self.alphas, dtype=np.float64).reshape(-1)
        if a.size != len(self.trees):
            raise DimensionError(f"{len(self.trees)} stages but {a.size} coefficients")
        if not np.all(np.isfinite(a)):
            raise ValueError("stage coefficients must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "alphas", a)
        object.__setattr__(self, "trees", tuple(self.trees))

    @property
    def T(self) -> int:
        return len(self.trees)

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features

    @property
    def stages(self) -> list:
        return list(zip(self.trees, self.alphas.tolist()))

    def prediction_matrix(self, dataset: Dataset) -> PredictionMatrix:
        return PredictionMatrix(np.column_stack([tr.predict(dataset.features) for tr in self.trees]))

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return np.column_stack([tr.predict(X) for tr in self.trees]) @ self.alphas

    def truncated(self, t: int) -> "GradBoostModel":
        """The first ``t`` stages."""
        if not 1 <= t <= self.T:
            raise ValueError(f"t must lie in [1, {self.T}], got {t}")
        return GradBoostModel(self.trees[:t], self.alphas[:t], self.loss, self.sigma.leading(t), self.robust)

    def to_json(self) -> str:
        doc = {
            "format_version": FORMAT_VERSION,
            "loss": self.loss,
            "robust": self.robust,
            "n_features": self.n_features,
            "sigma": self.sigma.cov.tolist(),
            "stages": [
                {"alpha": float(a), "max_depth": tr.max_depth, "min_leaf": tr.min_leaf, "nodes": tr.to_records()}
                for tr, a in self.stages
            ],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "GradBoostModel":
        doc = json.loads(text)
        version = doc.get("format_version")
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {version!r}")
        u = int(doc["n_features"])
        trees = tuple(
            RegressionTree.from_records(st["nodes"], u, st["max_depth"], st["min_leaf"]) for st in doc["stages"]
        )
        alphas = [st["alpha"] for st in doc["stages"]]
        return cls(trees, alphas, doc["loss"], NoiseModel(np.array(doc["sigma"])), bool(doc["robust"]))


def fit_gradboost(
    dataset: Dataset,
    T: int,
    Sigma=None,
    loss: str = "mse",
    tree_params: TreeParams = TreeParams(),
    robust: bool = True,
    residual_targets: bool = False,
) -> GradBoostModel:
    """Stage 1 is the constant-1 regressor; stage t > 1 fits a tree to the negative gradient.

    With ``robust=False`` the coefficients are those of the noiseless problem,
    which is the same as passing Sigma = 0. ``residual_targets=True`` fits the
    MSE stages to y - f_hat instead of 2 (y - f_hat); this halves the tree
    outputs, doubles alpha_t and so changes how much channel noise each stage
    lets through.
    """
    _check_loss(loss)
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if robust:
        if Sigma is None:
            raise ValueError("robust boosting needs a noise covariance")
        S = as_cov(Sigma)
        if S.shape[0] < T or S.shape[1] < T:
            raise DimensionError(f"Sigma is {S.shape}, need at least {T}x{T}")
        S = S[:T, :T]
    else:
        S = np.zeros((T, T))
    noise = Sigma if isinstance(Sigma, NoiseModel) and robust else None
    sigma_model = noise.leading(T) if noise is not None else NoiseModel(S, {"kind": "custom" if robust else "none"})

    stage_alpha = robust_alpha_mse if loss == "mse" else robust_alpha_mae
    y = dataset.targets
    n = y.size
    trees = [RegressionTree.constant(1.0, dataset.n_features)]
    ones = np.ones(n)
    alphas = [stage_alpha(ones, y, np.zeros(n), S, [], 1)]
    f_hat = alphas[0] * ones
    for t in range(2, T + 1):
        grad = negative_gradient(loss, y, f_hat)
        if residual_targets and loss == "mse":
            grad = 0.5 * grad
        tree = fit_tree(Dataset(dataset.features, grad, dataset.name), tree_params.max_depth, tree_params.min_leaf)
        phi = tree.predict(dataset.features)
        if not np.any(phi) and S[t - 1, t - 1] == 0.0:
            # perfect fit already: the stage is inert and any coefficient is optimal
            a_t = 0.0
        else:
            a_t = stage_alpha(phi, y, f_hat, S, alphas, t)
        trees.append(tree)
        alphas.append(a_t)
        f_hat = f_hat + a_t * phi
    return GradBoostModel(tuple(trees), np.array(alphas), loss, sigma_model, robust)


def expected_stage_mse(alpha_vec, Phi, y, Sigma) -> float:
    """mean (y - Phi a)^2 + a^T Sigma a for a stage-coefficient vector."""
    X = np.asarray(Phi.values if isinstance(Phi, PredictionMatrix) else Phi, dtype=np.float64)
    a = np.asarray(alpha_vec, dtype=np.float64)
    S = as_cov(Sigma)[: a.size, : a.size]
    r = np.asarray(y) - X @ a
    return float(np.mean(r * r) + a @ S @ a)
