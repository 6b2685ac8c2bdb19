import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from noisy_ensembles.aggregate_mae import (
    MaeBoundReport,
    MaeGdConfig,
    expected_mae,
    expected_mae_gradient,
    mae_bounds,
    mae_lower_bound,
    mae_upper_bound,
    noiseless_mae,
    noiseless_mae_gradient,
    optimize_weights_gd,
)

from conftest import random_instance

SQ = math.sqrt(2.0 / math.pi)


def central_diff(f, a, h=1e-6):
    g = np.zeros_like(a)
    for k in range(a.size):
        e = np.zeros_like(a)
        e[k] = h
        g[k] = (f(a + e) - f(a - e)) / (2 * h)
    return g


def test_expected_mae_examples():
    assert expected_mae([1.0], [[0.0]], [0.0], [[1.0]]) == pytest.approx(0.797885, abs=1e-6)
    assert expected_mae([1.0], [[1.0]], [0.0], [[1.0]]) == pytest.approx(1.16664, abs=1e-5)
    X = np.array([[1.0, 2.0], [3.0, -1.0], [0.0, 0.5]])
    y = np.array([0.3, 1.0, -2.0])
    assert expected_mae([0.4, 0.6], X, y, np.zeros((2, 2))) == noiseless_mae([0.4, 0.6], X, y)


def test_expected_mae_rejects_indefinite_direction():
    with pytest.raises(ValueError):
        expected_mae([1.0, 1.0], np.eye(2), [0.0, 0.0], [[0.0, -1.0], [-1.0, 0.0]])


def test_expected_mae_monte_carlo(rng):
    alpha, X, y, S = random_instance(rng, T=3, N=10)
    L = np.linalg.cholesky(S + 1e-12 * np.eye(3))
    R = 200_000
    agg = rng.standard_normal((R, 3)) @ L.T @ alpha
    draws = np.abs((X @ alpha - y)[None, :] + agg[:, None]).mean(axis=1)
    assert abs(draws.mean() - expected_mae(alpha, X, y, S)) <= 3 * draws.std() / math.sqrt(R)


def test_gradient_all_mu_zero():
    S = np.array([[2.0, 0.3], [0.3, 1.0]])
    a = np.array([0.7, -0.2])
    X = np.array([[1.0, 2.0], [-1.0, 0.5]])
    y = X @ a
    expect = SQ * S @ a / math.sqrt(a @ S @ a)
    assert np.allclose(expected_mae_gradient(a, X, y, S), expect, rtol=1e-12)


def test_gradient_finite_differences(rng):
    for _ in range(30):
        alpha, X, y, S = random_instance(rng)
        if math.sqrt(alpha @ S @ alpha) < 1e-3:
            continue
        g = expected_mae_gradient(alpha, X, y, S)
        fd = central_diff(lambda a: expected_mae(a, X, y, S), alpha)
        assert np.max(np.abs(g - fd)) <= 1e-5 * max(1.0, np.max(np.abs(fd)))


def test_gradient_small_noise_limit():
    X = np.array([[1.0, 2.0], [0.5, -1.0], [2.0, 0.0]])
    y = np.array([5.0, -3.0, 1.0])
    a = np.array([0.5, 0.5])
    g = expected_mae_gradient(a, X, y, 1e-14 * np.eye(2))
    assert np.allclose(g, noiseless_mae_gradient(a, X, y), atol=1e-8)
    assert np.array_equal(expected_mae_gradient(a, X, y, np.zeros((2, 2))), noiseless_mae_gradient(a, X, y))


def test_noiseless_gradient_examples(rng):
    X = np.array([[1.0, 2.0]])
    assert noiseless_mae_gradient([1.0, 1.0], X, [0.0]).tolist() == [1.0, 2.0]
    assert noiseless_mae_gradient([1.0, 1.0], X, [3.0]).tolist() == [0.0, 0.0]
    alpha, X, y, _ = random_instance(rng, T=3, N=20)
    fd = central_diff(lambda a: noiseless_mae(a, X, y), alpha)
    assert np.allclose(noiseless_mae_gradient(alpha, X, y), fd, atol=1e-6)


def test_gd_median():
    w = optimize_weights_gd(np.ones((3, 1)), [0.0, 0.0, 10.0], np.zeros((1, 1)))
    assert abs(w.alpha[0]) <= 1e-3


def test_gd_never_worse_than_start(rng):
    for robust in (True, False):
        cfg = MaeGdConfig(i_max=300, robust=robust)
        for _ in range(5):
            _, X, y, S = random_instance(rng)
            T = X.shape[1]
            a = optimize_weights_gd(X, y, S, cfg).alpha
            f = (lambda b: expected_mae(b, X, y, S)) if robust else (lambda b: noiseless_mae(b, X, y))
            assert f(a) <= f(np.full(T, 1.0 / T)) + 1e-15


def test_gd_close_to_grid_oracle(rng):
    _, X, y, _ = random_instance(rng, T=3, N=25)
    S = 0.1 * np.eye(3)
    w = optimize_weights_gd(X, y, S)
    f = lambda a: expected_mae(a, X, y, S)
    # coordinate descent with shrinking steps as a grid oracle
    a = np.full(3, 1 / 3)
    for step in (0.5, 0.1, 0.02, 0.004, 0.0008, 0.00016):
        for _ in range(20):
            for k in range(3):
                cands = [a + d * step * np.eye(3)[k] for d in range(-5, 6)]
                a = min(cands, key=f)
    assert f(w.alpha) <= 1.01 * f(a)
    assert w.method == "MAE-GD"


def test_gd_config_validation():
    with pytest.raises(ValueError):
        MaeGdConfig(i_min=10, i_max=5)
    with pytest.raises(ValueError):
        MaeGdConfig(gamma=1.0)
    with pytest.raises(ValueError):
        MaeGdConfig(eps=0.0)


def test_upper_bound_examples():
    X = np.array([[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]])
    y = np.array([0.5, 1.0, 2.0])
    Z = np.zeros((2, 2))
    assert mae_upper_bound(X, y, Z, "bem") == pytest.approx(noiseless_mae([0.5, 0.5], X, y))
    assert mae_upper_bound(X, y, Z, "generic", alpha=[0.2, 0.8]) == pytest.approx(noiseless_mae([0.2, 0.8], X, y))
    X1 = np.array([[1.0], [2.0]])
    y1 = np.array([0.0, 1.0])
    assert mae_upper_bound(X1, y1, [[1.0]], "bem") == pytest.approx(noiseless_mae([1.0], X1, y1) + SQ)
    s2, T = 0.7, 4
    Xt = np.ones((3, T))
    yt = np.zeros(3)
    noise = mae_upper_bound(Xt, yt, s2 * np.eye(T), "mineig") - noiseless_mae(np.full(T, 1 / T), Xt, yt)
    assert noise == pytest.approx(math.sqrt(2 * s2 / (math.pi * T)))
    with pytest.raises(ValueError):
        mae_upper_bound(X, y, Z, "generic")
    with pytest.raises(ValueError):
        mae_upper_bound(X, y, Z, "loose")


def test_lower_bound_examples():
    X = np.array([[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]])
    y = np.array([0.5, 1.0, 2.0])
    ad = np.array([0.3, 0.6])
    assert mae_lower_bound(X, y, np.zeros((2, 2)), ad) == pytest.approx(noiseless_mae(ad, X, y))
    # perfect regressors
    y = np.array([1.0, 2.0, 3.0])
    X = np.column_stack([y, y, y])
    S = np.diag([1.0, 2.0, 3.0])
    sigma_bar = math.sqrt(1.0 / (1 + 0.5 + 1 / 3))
    assert mae_lower_bound(X, y, S, np.full(3, 1 / 3)) == pytest.approx(SQ * sigma_bar)


def test_bound_report_invariant():
    with pytest.raises(AssertionError):
        MaeBoundReport(lower=2.0, upper=1.0, lower_source="simple", upper_source="bem")


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31))
def test_sandwich(seed):
    rng = np.random.default_rng(seed)
    _, X, y, S = random_instance(rng, T=int(rng.integers(2, 6)), N=30)
    cfg = MaeGdConfig(i_max=400)
    ad = optimize_weights_gd(X, y, np.zeros_like(S), MaeGdConfig(i_max=400, robust=False)).alpha
    opt = expected_mae(optimize_weights_gd(X, y, S, cfg).alpha, X, y, S)
    rep = mae_bounds(X, y, S, ad)
    assert rep.lower <= rep.upper
    assert rep.upper >= opt - 1e-9
    assert rep.upper == pytest.approx(mae_upper_bound(X, y, S))
