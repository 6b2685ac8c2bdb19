import math

import numpy as np
import pytest

from noisy_ensembles.aggregate_mse import expected_mse, tem_weights
from noisy_ensembles.core import Dataset, PredictionMatrix
from noisy_ensembles.harness import (
    CSV_COLUMNS,
    ConfigError,
    DataFormatError,
    DatasetSpec,
    ExperimentConfig,
    MetricsRow,
    config_from_dict,
    evaluate_noisy,
    kfold_split,
    load_or_generate_dataset,
    mse_reduction,
    read_csv_dataset,
    run_evaluation,
    sine_target,
    standardize,
    write_csv_dataset,
    write_metrics_csv,
)

from conftest import random_psd


def test_sine_target_value():
    assert sine_target(2.0) == pytest.approx(math.sin(2.0) + math.sin(12.0), abs=1e-15)
    assert sine_target(2.0) == pytest.approx(0.37271, abs=1e-4)


def test_sine_generator():
    d = load_or_generate_dataset(DatasetSpec("sine", n_samples=500, seed=3))
    x = d.features[:, 0]
    assert d.n_samples == 500 and d.n_features == 1
    assert x.min() >= 0 and x.max() <= 6
    resid = d.targets - sine_target(x)
    assert 0.08 <= resid.std() <= 0.12
    exact = load_or_generate_dataset(DatasetSpec("sine", n_samples=50, seed=3, noise_var=0.0))
    assert np.array_equal(exact.targets, sine_target(exact.features[:, 0]))


def test_hyperplane_generator():
    d = load_or_generate_dataset(DatasetSpec("hyperplane", n_samples=200, seed=1, noise_var=0.0))
    assert d.n_features == 3
    c, *_ = np.linalg.lstsq(d.features, d.targets, rcond=None)
    assert np.allclose(d.features @ c, d.targets)
    assert np.dot([1.0, 0.0, 0.0], [3.0, 5.0, 7.0]) == 3.0


def test_csv_roundtrip(tmp_path):
    p = tmp_path / "tiny.csv"
    p.write_text("a,b,y\n1,2,3\n4,5,6\n")
    d = read_csv_dataset(p)
    assert d.n_features == 2 and d.n_samples == 2
    assert d.targets.tolist() == [3.0, 6.0]
    rng = np.random.default_rng(0)
    e = Dataset(rng.standard_normal((7, 3)), rng.standard_normal(7))
    q = tmp_path / "rt.csv"
    write_csv_dataset(e, q)
    back = read_csv_dataset(q)
    assert np.array_equal(back.features, e.features) and np.array_equal(back.targets, e.targets)


def test_csv_errors_name_the_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,y\n1,2\n3,oops\n")
    with pytest.raises(DataFormatError, match="line 3"):
        read_csv_dataset(p)
    p.write_text("a,y\n1,2\n1,2,3\n")
    with pytest.raises(DataFormatError, match="line 3"):
        read_csv_dataset(p)
    with pytest.raises(DataFormatError):
        read_csv_dataset(tmp_path / "missing.csv")


def test_standardize():
    d, tf = standardize(Dataset([[1.0], [3.0]], [0.0, 2.0]))
    assert d.targets.tolist() == [-1.0, 1.0]
    assert d.eps_y == pytest.approx(1.0, abs=1e-9)
    again, _ = standardize(d)
    assert np.allclose(again.features, d.features, atol=1e-12)
    assert np.allclose(tf.invert_targets(d.targets), [0.0, 2.0])
    rng = np.random.default_rng(1)
    wide = Dataset(rng.normal(5.0, 3.0, (100, 12)), rng.normal(-2.0, 9.0, 100))
    s, _ = standardize(wide)
    assert np.all(np.abs(s.features.mean(axis=0)) < 1e-9)
    assert np.allclose(s.features.std(axis=0), 1.0)
    const, _ = standardize(Dataset(np.ones((4, 1)), [1.0, 2.0, 3.0, 4.0]))
    assert np.all(const.features == 0.0)


def test_kfold():
    folds = kfold_split(10, 5, seed=0)
    tests = [te for _, te in folds]
    assert [t.size for t in tests] == [2] * 5
    assert sorted(np.concatenate(tests).tolist()) == list(range(10))
    for tr, te in folds:
        assert not set(tr) & set(te)
    assert all(te.size == 1 for _, te in kfold_split(6, 6, seed=1))
    sizes = [te.size for _, te in kfold_split(11, 3, seed=2)]
    assert max(sizes) - min(sizes) <= 1
    a, b = kfold_split(20, 4, seed=3), kfold_split(20, 4, seed=3)
    assert all(np.array_equal(x[1], y[1]) for x, y in zip(a, b))
    with pytest.raises(ConfigError):
        kfold_split(3, 5, seed=0)


def _instance(seed=0, N=40, T=3):
    rng = np.random.default_rng(seed)
    P = rng.standard_normal((N, T))
    y = P @ np.full(T, 1.0 / T) + 0.2 * rng.standard_normal(N)
    return PredictionMatrix(P), Dataset(np.zeros((N, 1)), y), rng


def test_evaluate_zero_noise_is_deterministic():
    P, test, _ = _instance()
    w = np.array([0.2, 0.3, 0.5])
    res = P.values @ w - test.targets
    for R in (1, 7):
        m = evaluate_noisy(P, w, np.zeros((3, 3)), test, R)
        assert m.rmse == math.sqrt(np.mean(res**2)) and m.mae == np.mean(np.abs(res))
    m0 = evaluate_noisy(P, w, np.eye(3), test, 5, noisy_fraction=0.0)
    assert m0 == evaluate_noisy(P, w, np.zeros((3, 3)), test, 5)


def test_evaluate_matches_expected_mse():
    P, test, rng = _instance(1)
    S = random_psd(rng, 3, 0.5)
    w = tem_weights(P.values, test.targets, S, 1.0)
    m = evaluate_noisy(P, w, S, test, 10_000, rng=(11, 4))
    mse_se = m.rmse_se * 2 * m.rmse
    assert abs(m.rmse**2 - expected_mse(w, P.values, test.targets, S)[0]) <= 3 * mse_se


def test_evaluate_partial_noise_scales_noise_power():
    P, test, rng = _instance(2, N=50)
    S = np.eye(3)
    w = np.full(3, 1 / 3)
    model_mse = float(np.mean((P.values @ w - test.targets) ** 2))
    m = evaluate_noisy(P, w, S, test, 4000, noisy_fraction=0.5, rng=(3,))
    assert m.rmse**2 - model_mse == pytest.approx(0.5 * float(w @ S @ w), rel=0.1)


def test_standard_error_scaling():
    P, test, _ = _instance(3)
    w = np.full(3, 1 / 3)
    a = evaluate_noisy(P, w, np.eye(3), test, 100, rng=(1,))
    b = evaluate_noisy(P, w, np.eye(3), test, 10_000, rng=(2,))
    assert a.rmse_se / b.rmse_se == pytest.approx(10.0, rel=0.2)


def test_evaluate_keyed_streams_are_reproducible():
    P, test, _ = _instance(4)
    w = np.full(3, 1 / 3)
    assert evaluate_noisy(P, w, np.eye(3), test, 20, rng=(5, 4)) == evaluate_noisy(P, w, np.eye(3), test, 20, rng=(5, 4))
    with pytest.raises(ConfigError):
        evaluate_noisy(P, w, np.eye(3), test, 0)


def test_mse_reduction():
    assert mse_reduction(2.0, 1.0, 0.5) == pytest.approx(200.0)
    assert mse_reduction(1.0, 1.0, 0.5) == 0.0
    assert mse_reduction(1.0, 1.5, 0.5) < 0
    with pytest.raises(ZeroDivisionError):
        mse_reduction(1.0, 1.0, 0.0)


def test_metrics_row_and_csv(tmp_path):
    with pytest.raises(ValueError):
        MetricsRow("sine", "GEM", "none", 0.0, 0, rmse=-1.0, mae=0.0)
    row = MetricsRow("sine", "GEM", "equi-variance", -6.0, 2, rmse=1 / 3, mae=0.25)
    p = tmp_path / "m.csv"
    write_metrics_csv([row], p)
    lines = p.read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert lines[1] == "sine,GEM,equi-variance,-6,2,0.333333333,0.25,0,0"


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(k=1)
    with pytest.raises(ConfigError):
        ExperimentConfig(snr_db=())
    with pytest.raises(ConfigError):
        ExperimentConfig(methods=("XYZ",))
    with pytest.raises(ConfigError, match="snr_dbb"):
        config_from_dict({"snr_dbb": [0.0]})
    cfg = config_from_dict({"dataset": {"kind": "sine", "n_samples": 100}})
    assert (cfg.k, cfg.R, cfg.noisy_fraction) == (5, 100, 1.0)
    assert config_from_dict(cfg.to_dict()) == cfg


def test_pipeline_determinism():
    cfg = ExperimentConfig(
        dataset=DatasetSpec("sine", n_samples=120, seed=2),
        methods=("BEM", "GEM", "TEM"),
        snr_db=(0.0,),
        k=3,
        R=5,
        T=4,
        max_depth=2,
    )
    a = run_evaluation(cfg)
    b = run_evaluation(cfg)
    assert [r.csv_fields() for r in a] == [r.csv_fields() for r in b]
    threaded = run_evaluation(config_from_dict({"threads": 2}, base=cfg))
    assert [r.csv_fields() for r in threaded] == [r.csv_fields() for r in a]
