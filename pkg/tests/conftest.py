import numpy as np
import pytest

CRITERIA = {
    1: "expected-MSE decomposition vs Monte Carlo",
    2: "analytic expected MAE vs Monte Carlo",
    3: "expected-MAE gradient vs finite differences",
    4: "constrained TEM: KKT and grid oracle",
    5: "approximate lambda vs bisection",
    6: "TEM over GEM gain trend (sine, noisier subset)",
    7: "robust vs non-robust MAE descent",
    8: "MAE bound sandwich and collapse",
    9: "boosting error vs ensemble size at 18 dB",
    10: "boosting stage coefficient vs grid",
    11: "CLI determinism",
}

_outcomes: dict[int, str] = {}


def pytest_runtest_logreport(report):
    n = getattr(report, "criterion", None)
    if n is None:
        return
    if report.when == "call" or report.failed:
        if report.failed:
            _outcomes[n] = "FAIL"
        else:
            _outcomes.setdefault(n, "PASS")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        rep.criterion = marker.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        status = _outcomes.get(n, "NOT RUN")
        terminalreporter.write_line(f"criterion {n:2d} [{status}] {CRITERIA[n]}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_psd(rng, T, scale=1.0, rank=None):
    rank = T if rank is None else rank
    A = rng.standard_normal((T, rank))
    return scale * (A @ A.T) / rank


def random_instance(rng, T=None, N=None, noise_scale=None):
    T = T or int(rng.integers(1, 9))
    N = N or int(rng.integers(4, 65))
    Phi = rng.standard_normal((N, T))
    y = Phi @ rng.dirichlet(np.ones(T)) + 0.3 * rng.standard_normal(N)
    scale = noise_scale if noise_scale is not None else float(rng.uniform(0.05, 1.0))
    Sigma = random_psd(rng, T, scale)
    alpha = rng.standard_normal(T) / np.sqrt(T)
    return alpha, Phi, y, Sigma
