"""Synthetic data-generating processes with known conditional means.

Every generator draws inputs and noise from two independent substreams of
its seed, so the conditional means depend only on the input stream.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

INPUT_STREAM, NOISE_STREAM = 2, 3

LINEAR_BETA = np.array([1.0, 1.0, 1.0, -1.0, -1.0])
LINEAR_SIGNAL_VARIANCE = 3.0  # beta' Omega beta
# R^2 -> noise variance for the linear scenario
LINEAR_SIGMA2 = {0.9: 1.0 / 3.0, 0.75: 1.0, 0.5: 3.0}


DEFAULT_MC_SEED = 20240101

SCENARIO_KINDS = ("linear", "nonlinear", "classification", "ts_linear", "ts_nonlinear")


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScenarioSpec:
    """One data-generating process.

    ``sigma2`` is the noise variance (regression and time series), ``mu``
    the centring constant of the classification score.
    """

    kind: str
    sigma2: float = 1.0
    mu: float | None = None
    window_length: int | None = None

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        if self.kind == "classification" and (self.mu is None or not np.isfinite(self.mu)):
            raise ValueError("classification needs a finite mu")


@dataclass
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray
    true_mean: np.ndarray
    scenario_tag: str = ""

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        self.true_mean = np.asarray(self.true_mean, dtype=float)
        n = self.inputs.shape[0]
        if self.targets.shape != (n,) or self.true_mean.shape != (n,):
            raise ValueError("inputs, targets and true_mean must share length n")

    def __len__(self):
        return self.inputs.shape[0]

    def subset(self, idx):
        return Dataset(self.inputs[idx], self.targets[idx], self.true_mean[idx],
                       self.scenario_tag)


@dataclass(frozen=True)
class ConstantEstimates:
    nonlinear_signal_variance: float
    nonlinear_signal_variance_se: float
    classification_mu: float
    classification_mu_se: float
    mc_samples: int
    mc_seed: int


def _streams(seed, noise_seed=None):
    inputs = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(INPUT_STREAM,)))
    nseed = np.random.SeedSequence(int(seed), spawn_key=(NOISE_STREAM,)) if noise_seed is None \
        else np.random.SeedSequence(int(noise_seed), spawn_key=(NOISE_STREAM,))
    return inputs, np.random.default_rng(nseed)


def sigma2_for_r2(signal_variance, r2):
    """Noise variance giving population R^2 = var(signal) / (var(signal) + sigma^2)."""
    if not 0.0 < r2 < 1.0:
        raise ValueError("R^2 must lie in (0, 1)")
    return signal_variance * (1.0 - r2) / r2


def linear_covariance(p=5, rho=0.5):
    return np.full((p, p), rho) + (1.0 - rho) * np.eye(p)


def gen_linear(n, sigma2, seed, *, noise_seed=None):
    """Y = X'beta + eps with X ~ N(0, Omega), unit variances, 0.5 correlations."""
    if n < 1 or sigma2 <= 0:
        raise ValueError("need n >= 1 and sigma2 > 0")
    rin, rnoise = _streams(seed, noise_seed)
    chol = np.linalg.cholesky(linear_covariance())
    x = rin.standard_normal((n, 5)) @ chol.T
    mean = x @ LINEAR_BETA
    y = mean + rnoise.normal(0.0, np.sqrt(sigma2), n)
    return Dataset(x, y, mean, "linear")


def sinc_signal(x):
    """10 sin(||x||) / ||x||, with the r -> 0 limit 10."""
    r = np.linalg.norm(np.atleast_2d(x), axis=1)
    out = np.full(r.shape, 10.0)
    big = r >= 1e-12
    out[big] = 10.0 * np.sin(r[big]) / r[big]
    return out


def gen_nonlinear(n, sigma2, seed, *, noise_seed=None):
    if n < 1 or sigma2 <= 0:
        raise ValueError("need n >= 1 and sigma2 > 0")
    rin, rnoise = _streams(seed, noise_seed)
    x = rin.uniform(-10.0, 10.0, (n, 5))
    mean = sinc_signal(x)
    y = mean + rnoise.normal(0.0, np.sqrt(sigma2), n)
    return Dataset(x, y, mean, "nonlinear")


def h_classification(x):
    """The ten-input score; inputs 9 and 10 do not enter."""
    x = np.atleast_2d(x)
    x1, x2, x3, x4, x5, x6, x7, x8 = (x[:, i] for i in range(8))
    log_arg = 3.0 - 4.0 * (x4 - 0.3) ** 2 + x5 + np.exp(-x6 * x7 + x5)
    tan_arg = 4.0 * (x1 * (x8 - 0.5)) ** 2 + 0.1
    if np.any(log_arg <= 0) or np.any(np.abs(tan_arg) >= np.pi / 2):
        raise GenerationError("input outside the domain of the classification score")
    return (12.0 * x1 * (x2 - 0.5) ** 2 - 16.0 * (x3 * (x5 - 0.2)) ** 4
            + 2.0 * np.log(log_arg) + 2.0 * np.tan(tan_arg))


def g_classification(x, mu):
    """P(Y=1 | x) = 1 / (1 + exp(-(h(x) - mu)^2)); always in [0.5, 1)."""
    return 1.0 / (1.0 + np.exp(-(h_classification(x) - mu) ** 2))


def gen_classification(n, mu, seed, *, noise_seed=None):
    if n < 1 or not np.isfinite(mu):
        raise ValueError("need n >= 1 and finite mu")
    rin, rnoise = _streams(seed, noise_seed)
    x = rin.uniform(0.0, 1.0, (n, 10))
    prob = g_classification(x, mu)
    y = (rnoise.random(n) < prob).astype(float)
    return Dataset(x, y, prob, "classification")


def ts_linear_mean(prev1, prev2, prev3):
    return 0.6 * prev1 + 0.3 * prev2 - 0.1 * prev3


def ts_nonlinear_mean(prev1, prev2):
    # 1 / (1 + exp(-10 y)) written through tanh to avoid overflow warnings
    logistic = 0.5 * (1.0 + np.tanh(5.0 * prev1))
    return 0.3 * prev1 + 0.6 * prev2 + (0.1 - 0.9 * prev1 + 0.8 * prev2) * logistic


def gen_timeseries(kind, T, sigma2, seed, *, noise_seed=None):
    """Simulate one autoregressive path.

    Returns ``(series, true_mean)``. Initial values are Uniform(-6, 6); their
    true_mean entry is 0, the mean of that law. Later entries hold the
    deterministic part of the recursion at the realized lags.
    """
    lags = {"linear": 3, "nonlinear": 2}.get(kind)
    if lags is None:
        raise ValueError(f"unknown time-series kind {kind!r}")
    if T < lags + 1:
        raise ValueError(f"T must be >= {lags + 1} for the {kind} recursion")
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    rin, rnoise = _streams(seed, noise_seed)
    y = np.empty(T)
    mean = np.zeros(T)
    y[:lags] = rin.uniform(-6.0, 6.0, lags)
    eps = rnoise.normal(0.0, np.sqrt(sigma2), T) if sigma2 > 0 else np.zeros(T)
    for t in range(lags, T):
        if kind == "linear":
            m = ts_linear_mean(y[t - 1], y[t - 2], y[t - 3])
        else:
            m = ts_nonlinear_mean(y[t - 1], y[t - 2])
        mean[t] = m
        y[t] = m + eps[t]
    if not np.all(np.isfinite(y)):
        raise GenerationError(f"{kind} series became non-finite")
    return y, mean


def sliding_window(series, p, true_mean=None, tag="timeseries"):
    """T - p samples: inputs y[j:j+p], target y[j+p]."""
    y = np.asarray(series, dtype=float)
    if p < 1:
        raise ValueError("window length must be >= 1")
    T = y.size
    if T <= p:
        raise ValueError(f"series of length {T} yields no windows of length {p}")
    inputs = np.lib.stride_tricks.sliding_window_view(y, p)[:T - p].copy()
    mean = np.zeros(T) if true_mean is None else np.asarray(true_mean, dtype=float)
    return Dataset(inputs, y[p:].copy(), mean[p:].copy(), tag)


def estimate_constants(mc_samples=1_000_000, mc_seed=DEFAULT_MC_SEED, chunk=200_000):
    """Monte-Carlo estimates of var(10 sin||X||/||X||) and E h(X).

    Inputs follow the nonlinear (Uniform(-10, 10)^5) and classification
    (Uniform(0, 1)^10) laws respectively. Standard errors are the usual
    delta-free ones: sd/sqrt(N) for the mean, and for the variance the sd of
    the centred squares over sqrt(N).
    """
    if mc_samples < 100_000:
        raise ValueError("mc_samples must be >= 1e5")
    rng_nl, rng_cl = (np.random.default_rng(np.random.SeedSequence(int(mc_seed), spawn_key=(k,)))
                      for k in (0, 1))
    s_vals, h_vals = [], []
    left = mc_samples
    while left > 0:
        m = min(chunk, left)
        s_vals.append(sinc_signal(rng_nl.uniform(-10.0, 10.0, (m, 5))))
        h_vals.append(h_classification(rng_cl.uniform(0.0, 1.0, (m, 10))))
        left -= m
    s = np.concatenate(s_vals)
    h = np.concatenate(h_vals)
    var = s.var(ddof=1)
    sq = (s - s.mean()) ** 2
    return ConstantEstimates(
        nonlinear_signal_variance=float(var),
        nonlinear_signal_variance_se=float(sq.std(ddof=1) / np.sqrt(mc_samples)),
        classification_mu=float(h.mean()),
        classification_mu_se=float(h.std(ddof=1) / np.sqrt(mc_samples)),
        mc_samples=int(mc_samples),
        mc_seed=int(mc_seed),
    )
