"""Expected MAE under Gaussian channel noise: loss, gradient, optimizer and bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import AggregationWeights, as_alpha, as_cov, as_matrix
from .numerics import SQRT_2_OVER_PI, min_constrained_quadratic, norm_cdf, norm_pdf

SIGMA_FLOOR = 1e-12


@dataclass(frozen=True)
class MaeGdConfig:
    i_min: int = 100
    i_max: int = 5000
    eta: float = 0.05
    gamma: float = 0.9
    tau: float = 1e-9
    eps: float = 1e-8
    robust: bool = True

    def __post_init__(self):
        if not 0 <= self.i_min <= self.i_max:
            raise ValueError(f"need 0 <= i_min <= i_max, got {self.i_min}, {self.i_max}")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if self.tau < 0:
            raise ValueError("tau must be non-negative")
        if not self.eps > 0:
            raise ValueError("eps must be positive")


@dataclass(frozen=True)
class MaeBoundReport:
    lower: float
    upper: float
    lower_source: str
    upper_source: str

    def __post_init__(self):
        if self.lower > self.upper + 1e-12:
            raise AssertionError(f"MAE lower bound {self.lower} exceeds upper bound {self.upper}")


def _prepare(alpha, Phi, y, Sigma):
    a = as_alpha(alpha)
    X = as_matrix(Phi)
    S = as_cov(Sigma)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[1] != a.size or S.shape != (a.size, a.size) or X.shape[0] != y.size:
        raise ValueError(
            f"dimension mismatch: alpha {a.shape}, Phi {X.shape}, y {y.shape}, Sigma {S.shape}"
        )
    return a, X, S, y


def folded_normal_mean(mu, sigma):
    """E|Z| for Z ~ N(mu, sigma^2); sigma = 0 gives |mu|."""
    mu = np.asarray(mu, dtype=np.float64)
    if sigma < SIGMA_FLOOR:
        return np.abs(mu)
    r = mu / sigma
    return SQRT_2_OVER_PI * sigma * np.exp(-0.5 * r * r) + mu * (2.0 * norm_cdf(r) - 1.0)


def noiseless_mae(alpha, Phi, y) -> float:
    a = as_alpha(alpha)
    X = as_matrix(Phi)
    return float(np.mean(np.abs(X @ a - np.asarray(y, dtype=np.float64))))


def expected_mae(alpha, Phi, y, Sigma) -> float:
    a, X, S, y = _prepare(alpha, Phi, y, Sigma)
    var = float(a @ S @ a)
    if var < -1e-12:
        raise ValueError("Sigma is not positive semidefinite along alpha")
    mu = X @ a - y
    return float(np.mean(folded_normal_mean(mu, math.sqrt(max(var, 0.0)))))


def noiseless_mae_gradient(alpha, Phi, y) -> np.ndarray:
    a = as_alpha(alpha)
    X = as_matrix(Phi)
    s = np.sign(X @ a - np.asarray(y, dtype=np.float64))
    return X.T @ s / X.shape[0]


def expected_mae_gradient(alpha, Phi, y, Sigma) -> np.ndarray:
    """Gradient of :func:`expected_mae` with respect to alpha.

    Assembled term by term from mu_i' = phi(x_i), sigma' = Sigma a / sigma and
    rho_i' = (sigma phi(x_i) - mu_i sigma') / sigma^2. Falls back to the
    noiseless subgradient when sigma(a) < 1e-12.
    """
    a, X, S, y = _prepare(alpha, Phi, y, Sigma)
    Sa = S @ a
    var = float(a @ Sa)
    if var < SIGMA_FLOOR**2:
        return noiseless_mae_gradient(a, X, y)
    sigma = math.sqrt(var)
    mu = X @ a - y
    rho = mu / sigma
    dsigma = Sa / sigma
    drho = (sigma * X - np.outer(mu, dsigma)) / var
    expo = np.exp(-0.5 * rho * rho)
    terms = (
        SQRT_2_OVER_PI * expo[:, None] * (dsigma[None, :] - (sigma * rho)[:, None] * drho)
        + X * (2.0 * norm_cdf(rho) - 1.0)[:, None]
        + 2.0 * (mu * norm_pdf(rho))[:, None] * drho
    )
    return terms.mean(axis=0)


def optimize_weights_gd(Phi, y, Sigma, config: MaeGdConfig = MaeGdConfig()) -> AggregationWeights:
    """Momentum descent with accumulated-gradient normalisation, started from BEM weights.

    The normaliser accumulates squared gradients componentwise. Returns the
    visited iterate with the smallest objective.
    """
    X = as_matrix(Phi)
    S = as_cov(Sigma)
    y = np.asarray(y, dtype=np.float64)
    T = X.shape[1]
    if config.robust:
        objective = lambda a: expected_mae(a, X, y, S)
        gradient = lambda a: expected_mae_gradient(a, X, y, S)
        method = "MAE-GD"
    else:
        objective = lambda a: noiseless_mae(a, X, y)
        gradient = lambda a: noiseless_mae_gradient(a, X, y)
        method = "MAE-GD-nonrobust"

    alpha = np.full(T, 1.0 / T)
    delta = np.zeros(T)
    grad_sq = np.zeros(T)
    best_alpha, best_obj = alpha.copy(), objective(alpha)
    prev_obj = math.inf
    obj = best_obj
    for i in range(config.i_max + 1):
        if i >= config.i_min and abs(obj - prev_obj) <= config.tau:
            break
        g = gradient(alpha)
        grad_sq += g * g
        delta = config.gamma * delta - config.eta * g / np.sqrt(grad_sq + config.eps)
        alpha = alpha + delta
        prev_obj, obj = obj, objective(alpha)
        if not math.isfinite(obj):
            raise FloatingPointError(f"non-finite objective at iteration {i}: alpha={alpha}")
        if obj < best_obj:
            best_alpha, best_obj = alpha.copy(), obj
    return AggregationWeights(best_alpha, method)


def mae_upper_bound(Phi, y, Sigma, mode: str = "combined", alpha=None) -> float:
    """Noiseless MAE of a chosen weight vector plus its expected aggregated-noise magnitude.

    Modes: ``generic`` (supplied ``alpha``), ``bem`` (uniform weights),
    ``mineig`` (weights minimising the aggregated noise power under
    sum(a) = 1) and ``combined`` (the smaller of ``bem`` and ``mineig``).
    """
    X = as_matrix(Phi)
    S = as_cov(Sigma)
    T = X.shape[1]
    if mode == "generic":
        if alpha is None:
            raise ValueError("generic mode needs alpha")
        a = as_alpha(alpha)
        return noiseless_mae(a, X, y) + math.sqrt(max(2.0 / math.pi * float(a @ S @ a), 0.0))
    if mode == "bem":
        ones = np.full(T, 1.0 / T)
        return noiseless_mae(ones, X, y) + math.sqrt(max(2.0 / math.pi * S.sum(), 0.0)) / T
    if mode == "mineig":
        res = min_constrained_quadratic(S)
        return noiseless_mae(res.vector, X, y) + math.sqrt(2.0 / math.pi * res.value)
    if mode == "combined":
        return min(mae_upper_bound(X, y, S, "bem"), mae_upper_bound(X, y, S, "mineig"))
    raise ValueError(f"unknown upper-bound mode {mode!r}")


def _noise_dominated_term(Phi, y, Sigma) -> float:
    X = as_matrix(Phi)
    S = as_cov(Sigma)
    y = np.asarray(y, dtype=np.float64)
    mu_bar = np.max(np.abs(X - y[:, None]), axis=1)
    sigma_bar = math.sqrt(min_constrained_quadratic(S).value)
    delta = SQRT_2_OVER_PI * sigma_bar - mu_bar
    pos = delta >= 0
    out = delta.copy()
    if sigma_bar > 0:
        out[pos] = delta[pos] * np.exp(-(mu_bar[pos] ** 2) / (2.0 * sigma_bar**2))
    # with sigma_bar = 0, delta >= 0 only when mu_bar = 0, where the term is 0
    return float(out.mean())


def mae_lower_bound(Phi, y, Sigma, alpha_dagger) -> float:
    """max(J1(a_dagger), J1(a_dagger) + noise-dominated correction)."""
    j1 = noiseless_mae(alpha_dagger, Phi, y)
    return max(j1, j1 + _noise_dominated_term(Phi, y, Sigma))


def mae_bounds(Phi, y, Sigma, alpha_dagger) -> MaeBoundReport:
    X = as_matrix(Phi)
    S = as_cov(Sigma)
    j1 = noiseless_mae(alpha_dagger, X, y)
    nd = j1 + _noise_dominated_term(X, y, S)
    lower, lower_src = (nd, "noise_dominated") if nd > j1 else (j1, "simple")
    bem = mae_upper_bound(X, y, S, "bem")
    mineig = mae_upper_bound(X, y, S, "mineig")
    upper, upper_src = (bem, "bem") if bem <= mineig else (mineig, "mineig")
    return MaeBoundReport(lower=lower, upper=upper, lower_source=lower_src, upper_source=upper_src)
