"""MSE-optimal aggregation of a fixed ensemble under additive channel noise."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .core import AggregationWeights, as_alpha, as_cov, as_matrix
from .numerics import SingularMatrixError, cho_factor_spd, lambda_polynomial, quadratic_roots, solve_spd

log = logging.getLogger(__name__)

BISECTION_MAX_STEPS = 200
# reject a quadratic root whose estimated error exceeds this fraction of it
NEWTON_SCREEN = 0.05


class MonotonicityError(RuntimeError):
    """Aggregated-noise power increased with lambda; bisection would be unsound."""


@dataclass(frozen=True)
class TemSolution:
    weights: AggregationWeights
    lam: float
    constraint_value: float
    active: bool


def bem_weights(T: int) -> AggregationWeights:
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    return AggregationWeights(np.full(T, 1.0 / T), "BEM")


def _duplicate_groups(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Representative column indices and, per column, its representative's position."""
    _, first, inverse = np.unique(X.T, axis=0, return_index=True, return_inverse=True)
    return first, inverse.ravel()


def _solve_normal(G: np.ndarray, rhs: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Solve G a = rhs; on failure drop duplicate columns of X and share their weight."""
    try:
        return solve_spd(G, rhs)
    except SingularMatrixError:
        first, inverse = _duplicate_groups(X)
        if first.size == X.shape[1]:
            raise
        log.info("dropping %d duplicate prediction columns", X.shape[1] - first.size)
        reduced = solve_spd(G[np.ix_(first, first)], rhs[first])
        counts = np.bincount(inverse, minlength=first.size)
        return reduced[inverse] / counts[inverse]


def gem_weights(Phi, y) -> AggregationWeights:
    """argmin ||Phi a - y||^2 subject to sum(a) = 1.

    The KKT system is solved by its Schur complement:
    a = a_ls + G^{-1} 1 (1 - 1^T a_ls) / (1^T G^{-1} 1).
    """
    X = as_matrix(Phi)
    y = np.asarray(y, dtype=np.float64)
    T = X.shape[1]
    if T == 1:
        return AggregationWeights(np.ones(1), "GEM")
    G = X.T @ X
    rhs = np.column_stack([X.T @ y, np.ones(T)])
    sol = _solve_normal(G, rhs, X)
    a_ls, g1 = sol[:, 0], sol[:, 1]
    alpha = a_ls + g1 * (1.0 - a_ls.sum()) / g1.sum()
    alpha = alpha / alpha.sum()
    return AggregationWeights(alpha, "GEM")


def tem_weights(Phi, y, Sigma, lam: float = 1.0) -> AggregationWeights:
    """(Phi^T Phi + lam N_s Sigma)^{-1} Phi^T y."""
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    X = as_matrix(Phi)
    S = as_cov(Sigma)
    y = np.asarray(y, dtype=np.float64)
    if S.shape != (X.shape[1], X.shape[1]):
        raise ValueError(f"Sigma shape {S.shape} does not match T={X.shape[1]}")
    A = X.T @ X + lam * X.shape[0] * S
    return AggregationWeights(_solve_normal(A, X.T @ y, X), "TEM")


def _noise_power(alpha: np.ndarray, S: np.ndarray) -> float:
    return float(alpha @ S @ alpha)


def solve_lambda_for_constraint(Phi, y, Sigma, C: float) -> TemSolution:
    """Minimise the noiseless MSE subject to alpha^T Sigma alpha <= C."""
    if not C > 0:
        raise ValueError(f"C must be positive, got {C}")
    S = as_cov(Sigma)
    # relative, so lambda stays accurate when C is tiny; implies |g - C| <= 1e-6 max(1, C)
    tol = 1e-10 * C

    def g(lam):
        w = tem_weights(Phi, y, S, lam)
        return w, _noise_power(w.alpha, S)

    w0, g0 = g(0.0)
    if g0 <= C:
        return TemSolution(w0, 0.0, g0, active=False)

    lo, g_lo = 0.0, g0
    hi = 1.0
    w_hi, g_hi = g(hi)
    steps = 0
    while g_hi > C:
        if g_hi > g_lo * (1 + 1e-9) + 1e-15:
            raise MonotonicityError(f"noise power rose from {g_lo:.6g} to {g_hi:.6g} at lambda={hi:.6g}")
        lo, g_lo = hi, g_hi
        hi *= 2.0
        w_hi, g_hi = g(hi)
        steps += 1
        if steps > BISECTION_MAX_STEPS:
            raise RuntimeError(f"could not bracket lambda for C={C}")
    if abs(g_hi - C) <= tol:
        return TemSolution(w_hi, hi, g_hi, active=True)

    for _ in range(BISECTION_MAX_STEPS):
        mid = 0.5 * (lo + hi)
        w_mid, g_mid = g(mid)
        if g_mid > g_lo * (1 + 1e-9) + 1e-15 or g_mid < g_hi * (1 - 1e-9) - 1e-15:
            raise MonotonicityError(f"noise power not monotone near lambda={mid:.6g}")
        if abs(g_mid - C) <= tol:
            return TemSolution(w_mid, mid, g_mid, active=True)
        if g_mid > C:
            lo, g_lo = mid, g_mid
        else:
            hi, g_hi, w_hi = mid, g_mid, w_mid
        if hi - lo <= 1e-14 * hi:
            # interval exhausted at double precision; g_hi <= C is feasible
            if abs(g_hi - C) <= 1e-6 * max(1.0, C):
                return TemSolution(w_hi, hi, g_hi, active=True)
            break
    raise RuntimeError(f"bisection on lambda did not converge within {BISECTION_MAX_STEPS} steps")


def approx_lambda(Phi, y, Sigma, C: float) -> float | None:
    """Closed-form lambda from a first-order Neumann approximation of the TEM inverse.

    Substituting (G + l N_s Sigma)^{-1} ~ (I - l N_s G^{-1} Sigma) G^{-1} turns the
    constraint into the quadratic of :func:`lambda_polynomial` in the variable
    k = -l N_s. Returns the smallest admissible non-negative root, or ``None``
    when no root is admissible (the caller should then bisect).
    """
    X = as_matrix(Phi)
    S = as_cov(Sigma)
    n = X.shape[0]
    if not np.any(S):
        return None
    q = lambda_polynomial(X, S, y, C)
    try:
        roots_k = quadratic_roots(q)
    except ValueError:
        return None
    G = X.T @ X
    for lam in sorted(-k / n for k in roots_k):
        if lam < 0:
            continue
        # Neumann series converges only for spectral radius < 1
        M = np.linalg.solve(G, lam * n * S)
        if np.max(np.abs(np.linalg.eigvals(M))) >= 1.0:
            continue
        value = _noise_power(tem_weights(X, y, S, lam).alpha, S)
        if abs(value - C) <= 0.25 * C and _newton_step(X, y, S, C, lam) <= NEWTON_SCREEN * lam:
            return float(lam)
    return None


def _newton_step(X, y, S, C: float, lam: float) -> float:
    """|Newton correction| to lam on the exact constraint, an estimate of the root's error."""
    n = X.shape[0]
    A = X.T @ X + lam * n * S
    fac = cho_factor_spd(A)
    a = sla.cho_solve(fac, X.T @ y)
    Sa = S @ a
    slope = -2.0 * n * float(Sa @ sla.cho_solve(fac, Sa))
    if slope == 0.0:
        return math.inf
    return abs((C - float(a @ Sa)) / slope)


def expected_mse(alpha, Phi, y, Sigma, lam: float = 1.0) -> tuple[float, float, float]:
    """(total, model term, noise term) with total = model + lam * noise."""
    a = as_alpha(alpha)
    X = as_matrix(Phi)
    S = as_cov(Sigma)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[1] != a.size or S.shape != (a.size, a.size) or X.shape[0] != y.size:
        raise ValueError(
            f"dimension mismatch: alpha {a.shape}, Phi {X.shape}, y {y.shape}, Sigma {S.shape}"
        )
    resid = X @ a - y
    model = float(resid @ resid) / y.size
    noise = _noise_power(a, S)
    return model + lam * noise, model, noise
