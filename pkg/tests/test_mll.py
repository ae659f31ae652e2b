import math

import numpy as np
import pytest
from scipy import integrate, stats

from bvselect import Dataset, GammaState, NumericalError
from bvselect.mll import (Design, build_factorization, conditional_pips, flip_logliks, kappa_z,
                          loglik_add, loglik_drop, marginal_loglik_dense, neighbourhood)
from bvselect.oracle import enumerate_linear
from bvselect.pg import pg_draw_vector
from bvselect.pg_chain import negbin_loglik_terms

from conftest import needs_compiled


def _random_gamma(rng, P, p_on=0.2):
    return GammaState(rng.random(P) < p_on)


def _instance(kind, rng, N=64, P=32):
    X = rng.standard_normal((N, P))
    if kind == "linear":
        return Dataset.linear(X, X[:, :3] @ [1.0, -0.5, 0.3] + rng.standard_normal(N)), None, None
    if kind == "binomial":
        C = rng.integers(1, 6, N).astype(float)
        Y = rng.binomial(C.astype(int), 0.4).astype(float)
        ds = Dataset.binomial(X, Y, C)
        return ds, pg_draw_vector(C, rng.normal(size=N), rng), None
    Y = rng.poisson(3.0, N).astype(float)
    ds = Dataset.negative_binomial(X, Y)
    nu = 2.5
    return ds, pg_draw_vector(Y + nu, rng.normal(size=N), rng), nu


def test_empty_linear_model():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((12, 3))
    Y = rng.standard_normal(12)
    ds = Dataset.linear(X, Y)
    N = 12
    expected = -0.5 * N * math.log(Y @ Y) + math.lgamma(N / 2) - 0.5 * N * math.log(math.pi)
    assert marginal_loglik_dense(ds, np.zeros(3, bool)) == pytest.approx(expected, rel=1e-14)
    design = Design(ds, 0.01)
    fact = build_factorization(design, GammaState.empty(3), kappa_z(design))
    assert fact.base_loglik == pytest.approx(expected, rel=1e-14)


def test_binomial_two_by_two_by_hand():
    X = np.array([[0.5, -1.0], [1.5, 0.2], [-0.7, 0.9]])
    Y = np.array([1.0, 3.0, 0.0])
    C = np.array([2.0, 4.0, 1.0])
    omega = np.ones(3)
    tau = 0.5
    ds = Dataset.binomial(X, Y, C)
    # active: x1 and the intercept
    kappa = Y - C / 2
    x = X[:, 0]
    a, b, d = x @ x + tau, x.sum(), 3.0 + tau
    det = a * d - b * b
    z1, z0 = x @ kappa, kappa.sum()
    quad = (d * z1 * z1 - 2 * b * z1 * z0 + a * z0 * z0) / det
    expected = 0.5 * quad - 0.5 * math.log(det) + math.log(tau)
    got = marginal_loglik_dense(ds, [True, False], omega, tau=tau)
    assert got == pytest.approx(expected, rel=1e-13)
    assert got == pytest.approx(-1.3737649629807471, rel=1e-12)
    design = Design(ds, tau)
    fact = build_factorization(design, GammaState([True, False]), kappa_z(design, omega))
    assert fact.base_loglik == pytest.approx(expected, rel=1e-12)


def test_negbin_matches_naive_sum():
    rng = np.random.default_rng(4)
    N, P = 9, 3
    X = rng.standard_normal((N, P))
    Y = rng.poisson(4.0, N).astype(float)
    ds = Dataset.negative_binomial(X, Y, psi0=1.1)
    nu, tau = 3.0, 0.2
    omega = rng.uniform(0.2, 2.0, N)
    off = 1.1 - math.log(nu)
    cols = np.column_stack([X[:, 0], X[:, 2], np.ones(N)])
    total = 0.0
    for n in range(N):
        kap = 0.5 * (Y[n] - nu)
        total += (math.lgamma(Y[n] + nu) - math.lgamma(nu) - nu * math.log(2.0)
                  + kap * off - 0.5 * omega[n] * off * off)
    resid = [0.5 * (Y[n] - nu) - omega[n] * off for n in range(N)]
    A = np.zeros((3, 3))
    z = np.zeros(3)
    for n in range(N):
        A += omega[n] * np.outer(cols[n], cols[n])
        z += cols[n] * resid[n]
    A += tau * np.eye(3)
    total += 0.5 * z @ np.linalg.inv(A) @ z - 0.5 * math.log(np.linalg.det(A)) + 1.5 * math.log(tau)
    got = negbin_loglik_terms(ds, [True, False, True], omega, nu, tau=tau)
    assert got == pytest.approx(total, rel=1e-12)


def test_negbin_zero_offset_is_adjusted_binomial_form():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((7, 2))
    Y = rng.poisson(2.0, 7).astype(float)
    nu = 2.0
    ds = Dataset.negative_binomial(X, Y, psi0=math.log(nu))
    omega = rng.uniform(0.5, 1.5, 7)
    kappa = 0.5 * (Y - nu)
    Xa = np.column_stack([X[:, 1], np.ones(7)])
    A = Xa.T @ (omega[:, None] * Xa) + 0.01 * np.eye(2)
    z = Xa.T @ kappa
    gamma_terms = sum(math.lgamma(y + nu) - math.lgamma(nu) - nu * math.log(2) for y in Y)
    expected = (0.5 * z @ np.linalg.solve(A, z) - 0.5 * np.linalg.slogdet(A)[1] + math.log(0.01)
                + gamma_terms)
    assert negbin_loglik_terms(ds, [False, True], omega, nu) == pytest.approx(expected, rel=1e-12)


def test_linear_evidence_against_numerical_integral():
    # one covariate, no intercept: integrate β and log σ² numerically
    rng = np.random.default_rng(2)
    N, tau = 6, 0.7
    x = rng.standard_normal(N)
    Y = 0.8 * x + 0.5 * rng.standard_normal(N)
    ds = Dataset.linear(x[:, None], Y)

    def integrand(beta, s):
        sig2 = math.exp(s)
        r = Y - beta * x
        ll = stats.norm.logpdf(r, scale=math.sqrt(sig2)).sum()
        lp = stats.norm.logpdf(beta, scale=math.sqrt(sig2 / tau))
        # p(σ²) ∝ 1/σ², and dσ² = σ² ds
        return math.exp(ll + lp)

    val, _ = integrate.dblquad(integrand, -8.0, 6.0, -10.0, 10.0, epsabs=0, epsrel=1e-10)
    assert marginal_loglik_dense(ds, [True], tau=tau) == pytest.approx(math.log(val), abs=1e-7)


def test_factorization_invariants():
    rng = np.random.default_rng(6)
    ds, omega, nu = _instance("binomial", rng, N=50, P=12)
    for tau in (0.01, 0.02):
        design = Design(ds, tau)
        kz = kappa_z(design, omega, nu)
        gamma = GammaState(np.isin(np.arange(12), [0, 3, 4, 8, 10]))
        fact = build_factorization(design, gamma, kz)
        XI = design.Xb[:, fact.active_idx] * np.sqrt(omega)[:, None]
        G = XI.T @ XI + tau * np.eye(6)
        np.testing.assert_allclose(fact.L @ fact.L.T, G, rtol=1e-10)
        np.testing.assert_allclose(fact.Finv @ G, np.eye(6), atol=1e-8)
        np.testing.assert_allclose(fact.beta, np.linalg.solve(G, kz.Z[fact.active_idx]), rtol=1e-9)
        dense = marginal_loglik_dense(ds, gamma, omega, nu, tau)
        assert fact.base_loglik == pytest.approx(dense, rel=1e-10)


def test_count_empty_gamma_is_scalar():
    rng = np.random.default_rng(7)
    ds, omega, _ = _instance("binomial", rng, N=20, P=4)
    design = Design(ds, 0.01)
    fact = build_factorization(design, GammaState.empty(4), kappa_z(design, omega))
    assert fact.L.shape == (1, 1)
    assert fact.active_idx.tolist() == [4]


def test_add_to_empty_linear():
    rng = np.random.default_rng(8)
    ds, _, _ = _instance("linear", rng, N=40, P=6)
    design = Design(ds, 0.01)
    fact = build_factorization(design, GammaState.empty(6), kappa_z(design))
    bits = np.zeros(6, bool)
    bits[2] = True
    assert loglik_add(fact, 2) == pytest.approx(marginal_loglik_dense(ds, bits), rel=1e-12)


def test_duplicate_column_is_finite():
    rng = np.random.default_rng(9)
    X = rng.standard_normal((30, 3))
    X[:, 2] = X[:, 0]
    ds = Dataset.linear(X, X[:, 0] + 0.1 * rng.standard_normal(30))
    design = Design(ds, 1e-4)
    fact = build_factorization(design, GammaState([True, False, False]), kappa_z(design))
    assert np.isfinite(loglik_add(fact, 2))


def test_drop_only_active_gives_null():
    rng = np.random.default_rng(10)
    ds, _, _ = _instance("linear", rng, N=40, P=5)
    design = Design(ds, 0.01)
    fact = build_factorization(design, GammaState([False, False, False, True, False]), kappa_z(design))
    null = marginal_loglik_dense(ds, np.zeros(5, bool))
    assert loglik_drop(fact, 3) == pytest.approx(null, rel=1e-10)


@pytest.mark.parametrize("kind", ["linear", "binomial", "negbin"])
def test_add_drop_round_trip(kind):
    rng = np.random.default_rng(11)
    ds, omega, nu = _instance(kind, rng)
    design = Design(ds, 0.01)
    kz = kappa_z(design, omega, nu)
    for _ in range(20):
        gamma = _random_gamma(rng, ds.P)
        k = int(rng.choice(np.flatnonzero(~gamma.bits)))
        base = build_factorization(design, gamma, kz).base_loglik
        bigger = build_factorization(design, gamma.flipped(k), kz)
        assert loglik_drop(bigger, k) == pytest.approx(base, rel=1e-8)


@pytest.mark.parametrize("kind", ["linear", "binomial", "negbin"])
def test_rank_one_sweep_against_dense(kind):
    rng = np.random.default_rng(12)
    ds, omega, nu = _instance(kind, rng)
    design = Design(ds, 0.01)
    kz = kappa_z(design, omega, nu)
    worst = 0.0
    for _ in range(150):
        gamma = _random_gamma(rng, ds.P, rng.uniform(0.05, 0.5))
        k = int(rng.integers(ds.P))
        fact = build_factorization(design, gamma, kz)
        got = loglik_drop(fact, k) if gamma.bits[k] else loglik_add(fact, k)
        dense = marginal_loglik_dense(ds, gamma.flipped(k), omega, nu, 0.01)
        worst = max(worst, abs(got - dense) / abs(dense))
    assert worst <= 1e-8


@pytest.mark.parametrize("kind", ["linear", "binomial", "negbin"])
def test_neighbourhood_matches_factorization(kind):
    rng = np.random.default_rng(13)
    ds, omega, nu = _instance(kind, rng, N=48, P=20)
    design = Design(ds, 0.01)
    kz = kappa_z(design, omega, nu)
    gamma = _random_gamma(rng, ds.P, 0.3)
    fact = build_factorization(design, gamma, kz)
    nb = neighbourhood(design, gamma, kz, 0.2)
    np.testing.assert_allclose(nb.flipped, flip_logliks(fact), rtol=1e-10)
    np.testing.assert_allclose(nb.pips, conditional_pips(fact, 0.2), rtol=1e-8, atol=1e-12)
    np.testing.assert_allclose(nb.beta, fact.beta, rtol=1e-9, atol=1e-12)
    sub = np.array([1, 5, 7])
    part = neighbourhood(design, gamma, kz, 0.2, indices=sub)
    np.testing.assert_allclose(part.pips, nb.pips[sub], rtol=1e-10)


def test_gram_path_agrees():
    rng = np.random.default_rng(14)
    ds, _, _ = _instance("linear", rng, N=40, P=15)
    kz = None
    gamma = _random_gamma(rng, 15, 0.3)
    a = Design(ds, 0.01)
    b = Design(ds, 0.01, precompute_gram=True)
    kz = kappa_z(a)
    np.testing.assert_allclose(neighbourhood(a, gamma, kz, 0.1).pips,
                               neighbourhood(b, gamma, kappa_z(b), 0.1).pips, rtol=1e-9)


@needs_compiled
@pytest.mark.parametrize("kind", ["linear", "binomial", "negbin"])
def test_compiled_neighbour_kernel_matches_python(kind):
    rng = np.random.default_rng(15)
    ds, omega, nu = _instance(kind, rng)
    design = Design(ds, 0.01)
    kz = kappa_z(design, omega, nu)
    gamma = _random_gamma(rng, ds.P, 0.25)
    fast = neighbourhood(design, gamma, kz, 0.1, implementation="compiled")
    slow = neighbourhood(design, gamma, kz, 0.1, implementation="python")
    np.testing.assert_allclose(fast.flipped, slow.flipped, rtol=1e-12)
    np.testing.assert_allclose(fast.pips, slow.pips, rtol=1e-10, atol=1e-14)


def test_orthogonal_covariate_pip_half():
    N = 16
    x1 = np.tile([1.0, -1.0], N // 2)
    x2 = np.repeat([1.0, -1.0], N // 2)
    Y = 2.0 * x1 + 0.01 * np.tile([1.0, 1.0, -1.0, -1.0], N // 4) * np.repeat([1, -1], N // 2)
    # x2 is orthogonal to x1 and to Y
    assert abs(x2 @ Y) < 1e-12 and abs(x1 @ x2) < 1e-12
    ds = Dataset.linear(np.column_stack([x1, x2]), Y)
    design = Design(ds, 1e4)
    nb = neighbourhood(design, GammaState([True, False]), kappa_z(design), 0.5)
    assert nb.pips[1] == pytest.approx(0.5, abs=0.01)


def test_conditional_matches_enumeration():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((8, 2))
    ds = Dataset.linear(X, X[:, 0] + rng.standard_normal(8))
    post = enumerate_linear(ds, 0.3, 0.01)
    design = Design(ds, 0.01)
    nb = neighbourhood(design, GammaState([False, False]), kappa_z(design), 0.3)
    # p(γ_1 = 1 | γ_2 = 0)
    exact = 1 / (1 + math.exp(post.model_log_probs[0] - post.model_log_probs[1]))
    assert nb.pips[0] == pytest.approx(exact, rel=1e-10)
    np.testing.assert_allclose(nb.pips, post.conditional_pips([False, False]), rtol=1e-10)


def test_conditional_pip_increases_with_h():
    rng = np.random.default_rng(16)
    ds, _, _ = _instance("linear", rng, N=40, P=10)
    design = Design(ds, 0.01)
    kz = kappa_z(design)
    gamma = _random_gamma(rng, 10, 0.3)
    prev = None
    for h in (0.01, 0.1, 0.3, 0.7):
        pips = neighbourhood(design, gamma, kz, h).pips
        if prev is not None:
            assert np.all(pips >= prev)
        prev = pips


def test_perfect_fit_is_numerical_error():
    X = np.random.default_rng(0).standard_normal((10, 2))
    ds = Dataset.linear(X, X[:, 0].copy())
    design = Design(ds, 1e-14)
    with pytest.raises(NumericalError):
        build_factorization(design, GammaState([True, False]), kappa_z(design))
