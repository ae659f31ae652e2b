"""Seeded synthetic datasets used by the test suites, benchmarks and CLI examples."""
import numpy as np

from .core import Dataset


def linear_planted(seed=0, N=50, P=10, causal=(0, 1, 2), effects=(1.0, -0.6, 0.25), sigma=0.5,
                   rho=0.0):
    """Linear data with ``causal`` columns carrying ``effects`` and noise sd ``sigma``.

    ``rho`` > 0 adds a shared factor so neighbouring covariates are correlated.
    """
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((N, P))
    if rho > 0:
        X = np.sqrt(1.0 - rho) * X + np.sqrt(rho) * rng.standard_normal((N, 1))
    beta = np.zeros(P)
    beta[list(causal)] = effects
    Y = X @ beta + sigma * rng.standard_normal(N)
    return Dataset.linear(X, Y)


def binomial_pair(seed=0, N=60, C=10, effect=0.35, bias=-0.5):
    """P = 2 binomial data; the first covariate carries ``effect`` on the logit scale."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((N, 2))
    counts = np.full(N, float(C))
    psi = effect * X[:, 0] + bias
    Y = rng.binomial(C, 1.0 / (1.0 + np.exp(-psi))).astype(np.float64)
    return Dataset.binomial(X, Y, counts)


def correlated_duo(seed=0, N=32, P=32, C=10, noise_sd=0.01):
    """Two near-identical copies of the causal signal z in columns 0 and 1; logits ψ = z."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((N, P))
    z = rng.standard_normal(N)
    X[:, 0] = z + noise_sd * rng.standard_normal(N)
    X[:, 1] = z + noise_sd * rng.standard_normal(N)
    counts = np.full(N, float(C))
    Y = rng.binomial(C, 1.0 / (1.0 + np.exp(-z))).astype(np.float64)
    return Dataset.binomial(X, Y, counts)


def negbin_binary_effect(seed=0, N=1000, P=100, effect=0.6, nu=5.0, log_mean=1.5):
    """Column 0 is a binary covariate with ``effect``; the other P − 1 are standard normal noise."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((N, P))
    X[:, 0] = rng.integers(0, 2, N).astype(np.float64)
    mean = np.exp(log_mean + effect * X[:, 0])
    # NB(ν, p) with mean μ as a gamma-Poisson mixture
    Y = rng.poisson(rng.gamma(nu, mean / nu)).astype(np.float64)
    return Dataset.negative_binomial(X, Y)


def sparse_linear(seed=0, N=400, P=300, n_causal=2, effect_range=(0.1, 0.3), sigma=1.0):
    """Linear data with ``n_causal`` planted effects of random sign and magnitude."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((N, P))
    beta = np.zeros(P)
    idx = rng.choice(P, n_causal, replace=False)
    beta[idx] = rng.uniform(*effect_range, n_causal) * rng.choice([-1.0, 1.0], n_causal)
    Y = X @ beta + sigma * rng.standard_normal(N)
    return Dataset.linear(X, Y)
