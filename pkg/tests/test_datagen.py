import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hpsplit import datagen as dg

# Committed regression baseline: estimate_constants() at its defaults
# (1e6 samples, seed DEFAULT_MC_SEED).
BASELINE_V = 0.3835698934328941
BASELINE_MU = 3.648131659947687


def test_sigma2_table_matches_r2():
    for r2, s2 in dg.LINEAR_SIGMA2.items():
        assert dg.sigma2_for_r2(dg.LINEAR_SIGNAL_VARIANCE, r2) == pytest.approx(s2)


def test_linear_signal_variance_is_quadratic_form():
    beta, omega = dg.LINEAR_BETA, dg.linear_covariance()
    assert beta @ omega @ beta == pytest.approx(3.0)


def test_linear_true_mean_at_unit_vector():
    assert np.array([1.0, 0, 0, 0, 0]) @ dg.LINEAR_BETA == 1.0


def test_linear_moments():
    ds = dg.gen_linear(100_000, 1.0, seed=1)
    n = len(ds)
    assert np.all(np.abs(ds.inputs.mean(axis=0)) < 3 / math.sqrt(n))
    cov = np.cov(ds.inputs.T)
    off = cov[~np.eye(5, dtype=bool)]
    # sd of a sample covariance of unit-variance, 0.5-correlated normals: sqrt((1 + 0.25) / n)
    assert np.all(np.abs(off - 0.5) < 3 * math.sqrt(1.25 / n))
    assert abs(ds.true_mean.var(ddof=1) - 3.0) < 0.1
    np.testing.assert_allclose(ds.true_mean, ds.inputs @ dg.LINEAR_BETA)


def test_linear_noise_variance():
    ds = dg.gen_linear(100_000, 3.0, seed=2)
    assert abs((ds.targets - ds.true_mean).var() - 3.0) < 0.05


def test_noise_seed_leaves_true_mean_unchanged():
    for gen, arg in ((dg.gen_linear, 1.0), (dg.gen_nonlinear, 1.0), (dg.gen_classification, 3.6)):
        a = gen(200, arg, 5, noise_seed=1)
        b = gen(200, arg, 5, noise_seed=2)
        np.testing.assert_array_equal(a.true_mean, b.true_mean)
        np.testing.assert_array_equal(a.inputs, b.inputs)
        assert not np.array_equal(a.targets, b.targets)


@pytest.mark.parametrize("gen,arg", [(dg.gen_linear, 1.0), (dg.gen_nonlinear, 0.5),
                                     (dg.gen_classification, 3.6)])
def test_generators_are_seeded(gen, arg):
    a, b = gen(50, arg, 9), gen(50, arg, 9)
    np.testing.assert_array_equal(a.targets, b.targets)


def test_sinc_zeros_and_limit():
    x = np.zeros((2, 5))
    x[0, 0] = math.pi
    x[1] = 0.0
    np.testing.assert_allclose(dg.sinc_signal(x), [0.0, 10.0], atol=1e-14)
    x_pi = np.full((1, 5), math.pi / math.sqrt(5))
    assert abs(dg.sinc_signal(x_pi)[0]) < 1e-13


def test_nonlinear_inputs_centered():
    ds = dg.gen_nonlinear(100_000, 1.0, seed=3)
    se = 20 / math.sqrt(12) / math.sqrt(len(ds))
    assert np.all(np.abs(ds.inputs.mean(axis=0)) < 3 * se)
    assert ds.inputs.min() >= -10 and ds.inputs.max() <= 10


def test_h_at_half_matches_independent_formula():
    x = [0.5] * 10
    x1, x2, x3, x4, x5, x6, x7, x8 = x[:8]
    by_hand = (12 * x1 * (x2 - 0.5) ** 2
               - 16 * (x3 * (x5 - 0.2)) ** 4
               + 2 * math.log(3 - 4 * (x4 - 0.3) ** 2 + x5 + math.exp(-x6 * x7 + x5))
               + 2 * math.tan(4 * (x1 * (x8 - 0.5)) ** 2 + 0.1))
    assert dg.h_classification(np.array(x))[0] == pytest.approx(by_hand, rel=1e-14)


def test_h_ignores_last_two_inputs():
    x = np.random.default_rng(0).uniform(size=(10, 10))
    y = x.copy()
    y[:, 8:] = np.random.default_rng(1).uniform(size=(10, 2))
    np.testing.assert_array_equal(dg.h_classification(x), dg.h_classification(y))


def test_g_is_half_at_mu():
    x = np.full((1, 10), 0.3)
    mu = dg.h_classification(x)[0]
    assert dg.g_classification(x, mu)[0] == 0.5


def test_classification_dataset_contract():
    ds = dg.gen_classification(10_000, BASELINE_MU, seed=4)
    assert set(np.unique(ds.targets)) <= {0.0, 1.0}
    assert np.all((ds.true_mean > 0.5) & (ds.true_mean <= 1))
    assert abs(ds.inputs.mean() - 0.5) < 3 * math.sqrt(1 / 12 / ds.inputs.size) * 3


def test_classification_calibration_bucket():
    ds = dg.gen_classification(100_000, BASELINE_MU, seed=6)
    mask = (ds.true_mean >= 0.7) & (ds.true_mean <= 0.8)
    assert mask.sum() > 1000
    assert abs(ds.targets[mask].mean() - ds.true_mean[mask].mean()) <= 0.02


def test_timeseries_fixed_point():
    # zero initial values and no noise: the linear recursion stays at zero
    y = np.zeros(20)
    for t in range(3, 20):
        y[t] = dg.ts_linear_mean(y[t - 1], y[t - 2], y[t - 3])
    assert not y.any()


@pytest.mark.parametrize("kind", ["linear", "nonlinear"])
def test_timeseries_true_mean_recomputed_from_series(kind):
    y, mean = dg.gen_timeseries(kind, 200, 1.0, seed=8)
    lags = 3 if kind == "linear" else 2
    for t in range(lags, 200):
        if kind == "linear":
            m = 0.6 * y[t - 1] + 0.3 * y[t - 2] - 0.1 * y[t - 3]
        else:
            lg = 1 / (1 + math.exp(-10 * y[t - 1]))
            m = 0.3 * y[t - 1] + 0.6 * y[t - 2] + (0.1 - 0.9 * y[t - 1] + 0.8 * y[t - 2]) * lg
        assert mean[t] == pytest.approx(m, abs=1e-12)
    assert np.all(np.abs(y[:lags]) <= 6) and not mean[:lags].any()


def test_nonlinear_mean_with_zero_lag():
    y2 = 1.7
    assert dg.ts_nonlinear_mean(0.0, y2) == pytest.approx(0.6 * y2 + (0.1 + 0.8 * y2) * 0.5)


def test_timeseries_too_short():
    with pytest.raises(ValueError):
        dg.gen_timeseries("linear", 3, 1.0, 0)
    dg.gen_timeseries("nonlinear", 3, 1.0, 0)


def test_sliding_window_examples():
    s = np.arange(10.0)
    ds = dg.sliding_window(s, 3)
    assert len(ds) == 7
    np.testing.assert_array_equal(ds.inputs[0], [0, 1, 2])
    assert ds.targets[0] == 3
    assert len(dg.sliding_window(s, 9)) == 1
    with pytest.raises(ValueError):
        dg.sliding_window(s, 10)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 300).flatmap(lambda T: st.tuples(st.just(T), st.integers(1, T - 1))))
def test_sliding_window_counts_and_overlap(tp):
    T, p = tp
    y = np.random.default_rng(T).normal(size=T)
    mean = np.random.default_rng(p).normal(size=T)
    ds = dg.sliding_window(y, p, mean)
    assert len(ds) == T - p
    np.testing.assert_array_equal(ds.inputs[1:, :-1], ds.inputs[:-1, 1:])
    np.testing.assert_array_equal(ds.true_mean, mean[p:])


def test_estimate_constants_needs_enough_samples():
    with pytest.raises(ValueError):
        dg.estimate_constants(mc_samples=99_999)


def test_estimate_constants_deterministic_and_consistent():
    a = dg.estimate_constants(200_000, mc_seed=5)
    b = dg.estimate_constants(200_000, mc_seed=5)
    assert a == b
    c = dg.estimate_constants(400_000, mc_seed=5)
    assert abs(c.nonlinear_signal_variance - a.nonlinear_signal_variance) < 3 * a.nonlinear_signal_variance_se
    assert np.isfinite(a.classification_mu)
    x = np.random.default_rng(1).uniform(size=(100_000, 10))
    g = dg.g_classification(x, a.classification_mu)
    # float64 rounds g to 1.0 once (h - mu)^2 passes ~37, so the upper bound
    # is checked on the exact complement 1 - g = e^-d / (1 + e^-d)
    d = (dg.h_classification(x) - a.classification_mu) ** 2
    assert np.all(g > 0.5) and np.all(np.exp(-d) / (1 + np.exp(-d)) > 0)


@pytest.mark.slow
def test_constants_regression_baseline():
    est = dg.estimate_constants()
    assert est.nonlinear_signal_variance == pytest.approx(BASELINE_V, rel=1e-12)
    assert est.classification_mu == pytest.approx(BASELINE_MU, rel=1e-12)


def test_nonlinear_sigma_for_r2_0_9():
    assert math.sqrt(dg.sigma2_for_r2(BASELINE_V, 0.9)) == pytest.approx(math.sqrt(BASELINE_V / 9))


def test_scenario_spec_validation():
    with pytest.raises(ValueError):
        dg.ScenarioSpec("linear", sigma2=0)
    with pytest.raises(ValueError):
        dg.ScenarioSpec("classification")
    with pytest.raises(ValueError):
        dg.ScenarioSpec("quadratic")


def test_dataset_length_mismatch_rejected():
    with pytest.raises(ValueError):
        dg.Dataset(np.zeros((3, 2)), np.zeros(3), np.zeros(2))
