import math

import numpy as np
import pytest
from scipy import stats
from scipy.special import expit

from bvselect import ConfigError, Dataset, GammaState, SamplerConfig, Variant, run_chain
from bvselect.core import Likelihood
from bvselect.mll import Design, kappa_z, marginal_loglik_dense, neighbourhood
from bvselect.oracle import quadrature_count
from bvselect.pg import pg_draw_vector
from bvselect.pg_chain import (XI_INIT, adapt_xi, metropolized_gibbs_accept, omega_log_acceptance,
                               pg_shape, pg_wtgs_run, phi_pg, sample_i_pg, subset_pg_wtgs_run)
from bvselect.wtgs import ZERO_STATE


def test_metropolized_gibbs_values():
    assert metropolized_gibbs_accept(0.5, False) == 1.0
    assert metropolized_gibbs_accept(0.5, True) == 1.0
    assert metropolized_gibbs_accept(0.25, False) == pytest.approx(1 / 3)
    assert metropolized_gibbs_accept(0.9, True) == pytest.approx(1 / 9)
    assert metropolized_gibbs_accept(0.9, False) == 1.0


def test_xi_defaults_and_fixed_point():
    assert XI_INIT == 5.0
    assert SamplerConfig().f_omega == 0.25
    assert adapt_xi(2.0, 8.0, 0.25, 17) == 2.0
    assert adapt_xi(2.0, 4.0, 0.25, 3) < 2.0
    assert adapt_xi(1e-6, 1e-6 + 1e-9, 0.25, 1) == 1e-6


def test_phi_pg_values(rng):
    P = 40
    assert phi_pg(np.full(P, 1e-12), GammaState.empty(P), None, 1e-9, 5.0) == pytest.approx(5.0, abs=1e-6)
    pips = rng.uniform(0.01, 0.99, P)
    gamma = GammaState(rng.random(P) < 0.3)
    assert 1.0 / phi_pg(pips, gamma, None, 5.0, 0.7) <= 1 / 0.7
    pips3 = np.array([0.1, 0.8, 0.5])
    g3 = GammaState([False, True, True])
    expected = 0.3 + (0.5 * (0.1 + 5 / 3) / 0.9 + 0.5 * (0.8 + 5 / 3) / 0.8
                      + 0.5 * (0.5 + 5 / 3) / 0.5) / 3
    assert phi_pg(pips3, g3, None, 5.0, 0.3) == pytest.approx(expected, rel=1e-14)


def test_sample_i_pg_frequencies(rng):
    pips = np.array([0.2, 0.6, 0.95, 0.05])
    gamma = GammaState([False, True, False, False])
    xi = 0.4
    terms = 0.5 * (pips + 5 / 4) / np.where(gamma.bits, pips, 1 - pips) / 4
    probs = np.append(xi, terms) / (xi + terms.sum())
    n = 200_000
    draws = np.array([sample_i_pg(pips, gamma, None, 5.0, xi, rng) for _ in range(n)])
    freq = np.bincount(np.where(draws == ZERO_STATE, 0, draws + 1), minlength=5) / n
    assert np.all(np.abs(freq - probs) < 3.5 * np.sqrt(probs * (1 - probs) / n))


def test_beta_hat_empty_model():
    rng = np.random.default_rng(3)
    N, tau = 25, 0.01
    C = np.full(N, 3.0)
    Y = rng.binomial(3, 0.3, N).astype(float)
    ds = Dataset.binomial(rng.standard_normal((N, 2)), Y, C)
    design = Design(ds, tau)
    nb = neighbourhood(design, GammaState.empty(2), kappa_z(design, np.ones(N)), 0.5)
    assert nb.beta.tolist() == pytest.approx([(Y - C / 2).sum() / (N + tau)], rel=1e-13)


def test_beta_hat_dense_and_sign(pair):
    omega = pg_draw_vector(pair.C, np.zeros(pair.N), np.random.default_rng(4))
    design = Design(pair, 0.01)
    kz = kappa_z(design, omega)
    nb = neighbourhood(design, GammaState([True, False]), kz, 0.5)
    Xa = np.column_stack([pair.X[:, 0], np.ones(pair.N)])
    A = Xa.T @ (omega[:, None] * Xa) + 0.01 * np.eye(2)
    np.testing.assert_allclose(nb.beta, np.linalg.solve(A, Xa.T @ (pair.Y - pair.C / 2)), rtol=1e-10)
    assert nb.beta[0] > 0


def test_identity_proposal_has_log_ratio_zero(rng):
    omega = rng.uniform(0.1, 1.0, 10)
    b = np.full(10, 4.0)
    c = rng.normal(size=10)
    assert omega_log_acceptance(-3.2, -3.2, omega, omega, b, b, c, c) == 0.0


# -- independent evaluation of the three-ratio acceptance --------------------------
def _beta_hat(ds, cols, omega, nu, tau):
    Xa = np.column_stack([ds.X[:, cols], np.ones(ds.N)])
    if ds.kind is Likelihood.BINOMIAL:
        resid, off = ds.Y - ds.C / 2, 0.0
    else:
        off = ds.psi0 - math.log(nu)
        resid = 0.5 * (ds.Y - nu) - omega * off
    A = Xa.T @ (omega[:, None] * Xa) + tau * np.eye(Xa.shape[1])
    return Xa @ np.linalg.solve(A, Xa.T @ resid) + off


def _log_p_y_given_omega_psi(ds, omega, psi, nu):
    # p(Y | ω, β) without the PG(b, 0) density of ω
    total = 0.0
    for n in range(ds.N):
        if ds.kind is Likelihood.BINOMIAL:
            b = ds.C[n]
            total += math.log(math.comb(int(ds.C[n]), int(ds.Y[n])))
        else:
            b = ds.Y[n] + nu
            total += math.lgamma(ds.Y[n] + nu) - math.lgamma(nu) - math.lgamma(ds.Y[n] + 1)
        kap = ds.Y[n] - 0.5 * b
        total += -b * math.log(2.0) + kap * psi[n] - 0.5 * omega[n] * psi[n] ** 2
    return total


def _log_p_y_given_psi(ds, psi, nu):
    if ds.kind is Likelihood.BINOMIAL:
        return float(stats.binom.logpmf(ds.Y, ds.C.astype(int), expit(psi)).sum())
    return float(stats.nbinom.logpmf(ds.Y, nu, 1 - expit(psi)).sum())


def _independent_log_ratio(ds, cols, omega, omega_p, nu, tau):
    bits = np.isin(np.arange(ds.P), cols)
    psi = _beta_hat(ds, cols, omega, nu, tau)
    psi_p = _beta_hat(ds, cols, omega_p, nu, tau)
    marg = (marginal_loglik_dense(ds, bits, omega_p, nu, tau)
            - marginal_loglik_dense(ds, bits, omega, nu, tau))
    prop = (_log_p_y_given_omega_psi(ds, omega, psi_p, nu) - _log_p_y_given_psi(ds, psi_p, nu)
            - _log_p_y_given_omega_psi(ds, omega_p, psi, nu) + _log_p_y_given_psi(ds, psi, nu))
    return marg + prop


@pytest.mark.parametrize("kind", ["binomial", "negbin"])
def test_log_acceptance_against_independent_routine(kind):
    rng = np.random.default_rng(8)
    N, P, tau, nu = 30, 4, 0.05, 2.5
    X = rng.standard_normal((N, P))
    if kind == "binomial":
        C = rng.integers(1, 8, N).astype(float)
        ds = Dataset.binomial(X, rng.binomial(C.astype(int), 0.4).astype(float), C)
    else:
        ds = Dataset.negative_binomial(X, rng.poisson(3.0, N).astype(float))
    cols = [0, 2]
    bits = np.isin(np.arange(P), cols)
    b = pg_shape(ds, nu if kind == "negbin" else None)
    omega = pg_draw_vector(b, np.zeros(N), rng)
    c_fwd = _beta_hat(ds, cols, omega, nu, tau)
    omega_p = pg_draw_vector(b, c_fwd, rng)
    c_rev = _beta_hat(ds, cols, omega_p, nu, tau)
    nu_arg = nu if kind == "negbin" else None
    got = omega_log_acceptance(marginal_loglik_dense(ds, bits, omega, nu_arg, tau),
                               marginal_loglik_dense(ds, bits, omega_p, nu_arg, tau),
                               omega, omega_p, b, b, c_fwd, c_rev)
    expected = _independent_log_ratio(ds, cols, omega, omega_p, nu_arg, tau)
    assert got == pytest.approx(expected, rel=1e-9, abs=1e-9)


def test_acceptance_rate_on_bernoulli_data():
    rng = np.random.default_rng(0)
    N, P = 500, 16
    X = rng.standard_normal((N, P))
    Y = rng.binomial(1, expit(X[:, :3] @ [1.0, -1.0, 0.5])).astype(float)
    ds = Dataset.binomial(X, Y, np.ones(N))
    out = pg_wtgs_run(ds, SamplerConfig(T=3000, T_burn=500, h=3 / 16, seed=1))
    assert out.omega_accept_rate >= 0.4
    assert np.all(out.pip[:2] > 0.99)


@pytest.fixture(scope="module")
def pair_exact(pair):
    return quadrature_count(pair, 0.5, 0.01).pips


def test_pair_quadrature_reference(pair_exact):
    np.testing.assert_allclose(pair_exact, [0.6338302935697083, 0.08774222458080438], rtol=1e-6)


def test_pg_wtgs_pair(pair, pair_exact):
    out = pg_wtgs_run(pair, SamplerConfig(T=22_000, T_burn=2_000, h=0.5, seed=2))
    assert np.max(np.abs(out.pip - pair_exact)) < 0.03
    assert out.omega_accept_rate >= 0.4


def test_subset_pg_wtgs_pair(pair, pair_exact):
    cfg = SamplerConfig(T=22_000, T_burn=2_000, h=0.5, seed=2, subset_size=2, anchor_size=1)
    out = subset_pg_wtgs_run(pair, cfg)
    assert np.max(np.abs(out.pip - pair_exact)) < 0.04


def test_wgs_variant_on_pair(pair, pair_exact):
    out = run_chain(pair, SamplerConfig(T=22_000, T_burn=2_000, h=0.5, seed=2, variant=Variant.WGS))
    assert np.max(np.abs(out.pip - pair_exact)) < 0.05


def test_negbin_chain_runs():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((120, 5))
    mu = np.exp(1.0 + 0.8 * X[:, 0])
    Y = rng.poisson(rng.gamma(4.0, mu / 4.0)).astype(float)
    ds = Dataset.negative_binomial(X, Y)
    out = pg_wtgs_run(ds, SamplerConfig(T=4000, T_burn=1000, h=0.2, seed=1))
    assert out.pip[0] > 0.9
    assert out.nu_summary()["mean"] > 0
    assert out.omega_accept_rate >= 0.4


def test_entry_point_checks(planted, pair):
    with pytest.raises(ConfigError):
        pg_wtgs_run(planted, SamplerConfig(h=0.1))
    with pytest.raises(ConfigError):
        pg_wtgs_run(pair, SamplerConfig(h=0.1, subset_size=2, anchor_size=1))
    with pytest.raises(ConfigError):
        subset_pg_wtgs_run(pair, SamplerConfig(h=0.1))


def test_no_pg_density_in_acceptance():
    import inspect
    from bvselect import pg_chain
    src = inspect.getsource(pg_chain.omega_log_acceptance) + inspect.getsource(pg_chain.omega_mh_step)
    assert "pg_density" not in src and "pg_logpdf" not in src
