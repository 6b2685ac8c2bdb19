"""Small dense linear algebra and normal-distribution helpers.

Inverses are never formed explicitly; everything goes through a Cholesky
factor with a single diagonal-jitter retry.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla
from scipy import special

from .core import as_cov, as_matrix

log = logging.getLogger(__name__)

JITTER_SCALE = 1e-10
SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


class SingularMatrixError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class QuadraticCoeffs:
    a: float
    b: float
    c: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.a, self.b, self.c)):
            raise ValueError(f"non-finite quadratic coefficients {self}")

    def __call__(self, x):
        return (self.a * x + self.b) * x + self.c


@dataclass(frozen=True)
class GenEigResult:
    value: float
    vector: np.ndarray


def cho_factor_spd(A: np.ndarray):
    """Cholesky factor of a symmetric positive-definite matrix, with one jitter retry."""
    A = np.asarray(A, dtype=np.float64)
    try:
        return sla.cho_factor(A, lower=True, check_finite=True)
    except np.linalg.LinAlgError:
        pass
    T = A.shape[0]
    jitter = JITTER_SCALE * max(np.trace(A), 0.0) / T
    if jitter <= 0:
        jitter = JITTER_SCALE
    try:
        return sla.cho_factor(A + jitter * np.eye(T), lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(
            f"matrix is not positive definite even after jitter {jitter:.3g}"
        ) from exc


def solve_spd(A, b) -> np.ndarray:
    """Solve A x = b for symmetric positive-definite A."""
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
        raise ValueError(f"incompatible shapes {A.shape} and {b.shape}")
    return sla.cho_solve(cho_factor_spd(A), b)


def min_constrained_quadratic(S) -> GenEigResult:
    """Minimise v^T S v subject to sum(v) = 1.

    The minimum is the smallest generalized eigenvalue of the pair (S, 11^T).
    Solved through the KKT system; a singular S falls back to the
    pseudo-inverse (minimum-norm) solution.
    """
    S = as_cov(S)
    if not np.allclose(S, S.T, atol=1e-10, rtol=0):
        raise ValueError("S must be symmetric")
    T = S.shape[0]
    ones = np.ones(T)
    K = np.zeros((T + 1, T + 1))
    K[:T, :T] = S
    K[:T, T] = ones
    K[T, :T] = ones
    rhs = np.zeros(T + 1)
    rhs[T] = 1.0
    sol = None
    if np.linalg.cond(K) < 1e12:
        sol = np.linalg.solve(K, rhs)
    if sol is None or not np.all(np.isfinite(sol)):
        sol = np.linalg.pinv(K, rcond=1e-13) @ rhs
    v = sol[:T]
    v = v / v.sum()
    value = float(v @ S @ v)
    return GenEigResult(value=max(value, 0.0), vector=v)


def lambda_polynomial(Phi, Sigma, y, C: float) -> QuadraticCoeffs:
    """Coefficients of a*l^2 + b*l + c obtained by expanding

        y^T Phi Z^T Sigma Z Phi^T y = C,   Z = (I + l G^{-1} Sigma) G^{-1},   G = Phi^T Phi.

    With w = G^{-1} Phi^T y and u = G^{-1} Sigma w, the left-hand side is
    w^T S w + 2 l w^T S u + l^2 u^T S u.
    """
    X = as_matrix(Phi)
    S = as_cov(Sigma)
    y = np.asarray(y, dtype=np.float64)
    G = X.T @ X
    try:
        fac = sla.cho_factor(G, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("Phi^T Phi is singular") from exc
    w = sla.cho_solve(fac, X.T @ y)
    Sw = S @ w
    u = sla.cho_solve(fac, Sw)
    coeffs = QuadraticCoeffs(a=float(u @ S @ u), b=float(2.0 * (Sw @ u)), c=float(w @ Sw) - C)
    if log.isEnabledFor(logging.DEBUG):
        printed = _printed_lambda_coeffs(X, S, y, C, fac)
        log.debug(
            "lambda polynomial: expanded (a=%.6g, b=%.6g, c=%.6g) vs printed form (a=%.6g, b=%.6g, c=%.6g)",
            coeffs.a, coeffs.b, coeffs.c, printed.a, printed.b, printed.c,
        )
    return coeffs


def _printed_lambda_coeffs(X, S, y, C, fac) -> QuadraticCoeffs:
    # Coefficients in the form they are usually quoted, which drops the outer
    # G^{-1} factors. Kept only for the debug comparison above.
    p = S @ (X.T @ y)
    Ginv_p = sla.cho_solve(fac, p)
    a = float(Ginv_p @ S @ Ginv_p)
    b = float(2.0 * (p @ Ginv_p))
    c = float((X.T @ y) @ p) - C
    return QuadraticCoeffs(a, b, c)


def quadratic_roots(q: QuadraticCoeffs) -> tuple[float, ...]:
    """Real roots of a x^2 + b x + c in ascending order."""
    a, b, c = q.a, q.b, q.c
    scale = max(abs(a), abs(b), abs(c))
    if scale == 0.0:
        return ()
    if abs(a) <= 1e-14 * scale:
        if abs(b) <= 1e-14 * scale:
            raise ValueError("degenerate polynomial a = b = 0 with c != 0 has no root")
        return (-c / b,)
    disc = b * b - 4.0 * a * c
    if disc < 0:
        return ()
    if disc == 0:
        return (-b / (2.0 * a),)
    # numerically stable pair
    s = math.sqrt(disc)
    qq = -0.5 * (b + math.copysign(s, b))
    r1 = qq / a
    r2 = c / qq if qq != 0 else -r1
    return tuple(sorted((r1, r2)))


def normal_funcs(t: float) -> tuple[float, float]:
    """Standard normal (pdf, cdf) at t."""
    t = float(t)
    pdf = math.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)
    cdf = 0.5 * math.erfc(-t / math.sqrt(2.0))
    return pdf, cdf


def norm_pdf(t):
    return np.exp(-0.5 * np.square(t)) / math.sqrt(2.0 * math.pi)


def norm_cdf(t):
    return special.ndtr(t)


def psd_sqrt(S) -> np.ndarray:
    """A factor L with L L^T = S, valid for singular PSD S."""
    S = as_cov(S)
    if np.count_nonzero(S - np.diag(np.diagonal(S))) == 0:
        return np.diag(np.sqrt(np.clip(np.diagonal(S), 0.0, None)))
    w, V = np.linalg.eigh(S)
    if w.min() < -1e-10 * max(1.0, abs(w).max()):
        raise ValueError("covariance is not positive semidefinite")
    return V * np.sqrt(np.clip(w, 0.0, None))
