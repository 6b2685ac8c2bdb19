import numpy as np
import pytest

from noisy_ensembles.aggregate_mse import (
    MonotonicityError,
    approx_lambda,
    bem_weights,
    expected_mse,
    gem_weights,
    solve_lambda_for_constraint,
    tem_weights,
)

from conftest import random_instance, random_psd


def test_bem():
    assert bem_weights(5).alpha.tolist() == [0.2] * 5
    assert bem_weights(1).alpha.tolist() == [1.0]
    assert bem_weights(7).alpha.sum() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        bem_weights(0)


def test_gem_examples(rng):
    assert np.allclose(gem_weights(np.eye(2), [1.0, 0.0]).alpha, [1.0, 0.0])
    assert np.allclose(gem_weights(np.eye(2), [1.0, 1.0]).alpha, [0.5, 0.5])
    assert gem_weights(rng.standard_normal((6, 1)), rng.standard_normal(6)).alpha.tolist() == [1.0]


def test_gem_is_constrained_minimiser(rng):
    X = rng.standard_normal((40, 4))
    y = rng.standard_normal(40)
    a = gem_weights(X, y).alpha
    assert abs(a.sum() - 1.0) <= 1e-10
    base = np.sum((X @ a - y) ** 2)
    for _ in range(200):
        d = rng.standard_normal(4)
        d -= d.mean()
        assert np.sum((X @ (a + 1e-3 * d) - y) ** 2) >= base - 1e-12


def test_gem_duplicate_columns(rng):
    X = rng.standard_normal((20, 2))
    X = np.column_stack([X, X[:, 0]])
    a = gem_weights(X, rng.standard_normal(20)).alpha
    assert abs(a.sum() - 1.0) <= 1e-10
    assert a[0] == pytest.approx(a[2], abs=1e-6)


def test_tem_examples():
    assert np.allclose(tem_weights(np.eye(2), [2.0, 3.0], np.zeros((2, 2)), 0.7).alpha, [2.0, 3.0])
    assert np.allclose(tem_weights(np.eye(2), [1.0, 1.0], np.eye(2), 1.0).alpha, [1 / 3, 1 / 3])
    with pytest.raises(ValueError):
        tem_weights(np.eye(2), [1.0, 1.0], np.eye(2), -1.0)


def test_tem_lambda_zero_is_least_squares(rng):
    X = rng.standard_normal((30, 4))
    y = rng.standard_normal(30)
    ls = np.linalg.lstsq(X, y, rcond=None)[0]
    assert np.allclose(tem_weights(X, y, random_psd(rng, 4), 0.0).alpha, ls)


def test_tem_beats_alternatives_on_expected_mse(rng):
    for _ in range(20):
        _, X, y, S = random_instance(rng, T=5, N=30)
        best = expected_mse(tem_weights(X, y, S, 1.0), X, y, S)[0]
        others = [bem_weights(5), gem_weights(X, y)] + [tem_weights(X, y, S, l) for l in (0.0, 0.5, 2.0)]
        for w in others:
            assert best <= expected_mse(w, X, y, S)[0] + 1e-12


def test_constraint_identity_instance():
    sol = solve_lambda_for_constraint(np.eye(2), [1.0, 1.0], np.eye(2), 0.5)
    assert sol.active
    assert sol.lam == pytest.approx(0.5, rel=1e-5)
    assert sol.constraint_value == pytest.approx(0.5, abs=1e-6)


def test_constraint_inactive_returns_least_squares(rng):
    X = rng.standard_normal((30, 3))
    y = rng.standard_normal(30)
    S = random_psd(rng, 3, 0.1)
    ls = np.linalg.lstsq(X, y, rcond=None)[0]
    C = 2.0 * float(ls @ S @ ls)
    sol = solve_lambda_for_constraint(X, y, S, C)
    assert not sol.active and sol.lam == 0.0
    assert np.allclose(sol.weights.alpha, ls)
    with pytest.raises(ValueError):
        solve_lambda_for_constraint(X, y, S, 0.0)


def test_constraint_lambda_satisfies_equation(rng):
    for _ in range(10):
        _, X, y, S = random_instance(rng, T=4, N=40)
        ls = np.linalg.lstsq(X, y, rcond=None)[0]
        C = 0.3 * float(ls @ S @ ls)
        sol = solve_lambda_for_constraint(X, y, S, C)
        a = tem_weights(X, y, S, sol.lam).alpha
        assert abs(float(a @ S @ a) - C) <= 1e-6 * max(1.0, C)


def test_noise_power_non_increasing_in_lambda(rng):
    for _ in range(10):
        _, X, y, S = random_instance(rng, T=5, N=30)
        vals = [float(a @ S @ a) for a in (tem_weights(X, y, S, l).alpha for l in np.linspace(0, 5, 30))]
        assert all(b <= a * (1 + 1e-9) + 1e-15 for a, b in zip(vals, vals[1:]))


def test_monotonicity_error_type():
    assert issubclass(MonotonicityError, RuntimeError)


def test_approx_lambda_identity_instance_falls_back():
    # the first-order expansion gives roots 0.25 and 0.75 here, neither within
    # 25% of the target once evaluated exactly, so the caller must bisect
    assert approx_lambda(np.eye(2), [1.0, 1.0], np.eye(2), 0.5) is None


def test_approx_lambda_zero_noise_falls_back():
    assert approx_lambda(np.eye(2), [1.0, 1.0], np.zeros((2, 2)), 0.5) is None


def test_approx_lambda_close_to_bisection_on_small_noise(rng):
    X = rng.standard_normal((50, 3))
    y = X @ np.array([0.5, 0.3, 0.2]) + 0.1 * rng.standard_normal(50)
    S = 0.01 * np.eye(3)
    ls = np.linalg.lstsq(X, y, rcond=None)[0]
    C = 0.95 * float(ls @ S @ ls)
    lam = approx_lambda(X, y, S, C)
    ref = solve_lambda_for_constraint(X, y, S, C).lam
    assert lam is not None
    assert abs(lam - ref) <= 0.1 * ref


def test_expected_mse_examples():
    assert expected_mse([1.0], [[1.0]], [1.0], [[4.0]], 1.0) == (4.0, 0.0, 4.0)
    X = np.array([[1.0, 2.0], [0.0, 1.0]])
    total, model, noise = expected_mse([0.5, 0.5], X, [1.0, 1.0], np.zeros((2, 2)))
    assert total == model == pytest.approx(((1.5 - 1) ** 2 + (0.5 - 1) ** 2) / 2)
    assert expected_mse([1.0, 1.0], np.eye(2), [0.0, 0.0], np.eye(2), lam=0.5)[0] == pytest.approx(1.0 + 1.0)


def test_expected_mse_monte_carlo(rng):
    alpha, X, y, S = random_instance(rng, T=4, N=20)
    L = np.linalg.cholesky(S + 1e-12 * np.eye(4))
    R = 100_000
    agg = rng.standard_normal((R, 4)) @ L.T @ alpha
    base = X @ alpha - y
    # per-draw empirical MSE, one noise vector per draw shared by the samples
    per = np.mean((base[None, :] + agg[:, None]) ** 2, axis=1)
    total = expected_mse(alpha, X, y, S)[0]
    assert abs(per.mean() - total) <= 3 * per.std() / np.sqrt(R)


def test_expected_mse_dimension_mismatch():
    with pytest.raises(ValueError):
        expected_mse([1.0, 1.0], np.eye(3), np.zeros(3), np.eye(3))
