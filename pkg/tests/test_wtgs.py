import numpy as np
import pytest
from scipy import stats

from bvselect import ConfigError, Dataset, GammaState, SamplerConfig, Variant, run_chain
from bvselect.oracle import enumerate_linear
from bvselect.pg_chain import sample_i_pg
from bvselect.wtgs import (ZERO_STATE, draw_h, eta, phi_linear, sample_i_linear, tempering_terms,
                           wtgs_run, wtgs_run_infer_h)


def test_eta_values():
    assert eta(0.0, 5.0, 100) == pytest.approx(0.05)
    assert eta(1.0, 1e-300, 10) == pytest.approx(1.0)
    assert eta(0.3, 5.0, 10) == pytest.approx(0.8)


def test_phi_hand_value():
    assert phi_linear([0.5], GammaState([False]), 0.0) == pytest.approx(0.5)


def test_phi_term_by_term(rng):
    P = 12
    pips = rng.uniform(0.01, 0.99, P)
    gamma = GammaState(rng.random(P) < 0.4)
    expected = 0.0
    for i in range(P):
        p_cur = pips[i] if gamma.bits[i] else 1 - pips[i]
        expected += 0.5 * (pips[i] + 5.0 / P) / p_cur
    assert phi_linear(pips, gamma, 5.0) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_weight_bound(seed):
    rng = np.random.default_rng(seed)
    P = int(rng.integers(1, 50))
    pips = rng.beta(0.3, 0.3, P).clip(1e-12, 1 - 1e-12)
    gamma = GammaState(rng.random(P) < 0.5)
    phi = phi_linear(pips, gamma, 5.0)
    assert phi >= 2.5
    assert 1.0 / phi <= 0.4


def test_variant_terms():
    pips = np.array([0.2, 0.7])
    on = np.array([False, True])
    np.testing.assert_allclose(tempering_terms(pips, on, 0.0, 2, Variant.TGS), [0.5 / 0.8, 0.5 / 0.7])
    np.testing.assert_allclose(tempering_terms(pips, on, 2.0, 2, Variant.WGS), [1.2, 1.7])


def test_near_certain_coordinate_dominates(rng):
    P = 20
    pips = np.full(P, 0.5)
    pips[7] = 1 - 1e-12
    gamma = GammaState.empty(P)
    draws = [sample_i_linear(pips, gamma, 5.0, rng) for _ in range(2000)]
    assert np.mean(np.array(draws) == 7) > 0.99


def test_uniform_draws_chi_square(rng):
    P = 10
    draws = np.array([sample_i_linear(np.full(P, 0.5), GammaState.empty(P), 5.0, rng)
                      for _ in range(100_000)])
    counts = np.bincount(draws, minlength=P)
    assert stats.chisquare(counts).pvalue > 0.001


def test_draw_frequencies_match_weights(rng):
    P = 6
    pips = np.array([0.05, 0.3, 0.5, 0.9, 0.99, 0.2])
    gamma = GammaState([True, False, True, False, True, False])
    terms = tempering_terms(pips, gamma.bits, 5.0, P)
    probs = terms / terms.sum()
    n = 200_000
    draws = np.array([sample_i_linear(pips, gamma, 5.0, rng) for _ in range(n)])
    freq = np.bincount(draws, minlength=P) / n
    se = np.sqrt(probs * (1 - probs) / n)
    assert np.all(np.abs(freq - probs) < 3.5 * se)


def test_tgs_zero_state_rate(rng):
    # all conditionals 1/2 under η ≡ 1: every term is 1/P, so i=0 has probability ξ/(ξ+1)
    P, xi, n = 8, 0.6, 100_000
    gamma = GammaState.empty(P)
    draws = np.array([sample_i_pg(np.full(P, 0.5), gamma, None, 5.0, xi, rng, Variant.TGS)
                      for _ in range(n)])
    frac = np.mean(draws == ZERO_STATE)
    target = xi / (xi + 1)
    assert abs(frac - target) < 4 * np.sqrt(target * (1 - target) / n)


def test_tiny_xi_never_draws_zero_state(rng):
    gamma = GammaState.empty(5)
    draws = [sample_i_pg(np.full(5, 0.5), gamma, None, 5.0, 1e-300, rng) for _ in range(5000)]
    assert ZERO_STATE not in draws


def test_h_update_distribution():
    a = [draw_h(1.0, 9.0, 3, 100, np.random.default_rng(s)) for s in range(5)]
    b = [np.random.default_rng(s).beta(4.0, 106.0) for s in range(5)]
    np.testing.assert_allclose(a, b, rtol=1e-15)


def test_planted_benchmark_recovers_exact_pips(planted):
    exact = enumerate_linear(planted, 0.1, 1e-4).pips
    out = wtgs_run(planted, SamplerConfig(T=22_000, T_burn=2_000, h=0.1, tau=1e-4, seed=3))
    assert np.max(np.abs(out.pip - exact)) < 0.02
    assert out.max_weight <= 0.4


def test_single_retained_sample(planted):
    out = wtgs_run(planted, SamplerConfig(T=51, T_burn=50, h=0.1, tau=1e-4, seed=1))
    assert out.weights.size == 1
    np.testing.assert_allclose(out.normalized_weights, [1.0])


def test_noise_only_small_pips():
    rng = np.random.default_rng(21)
    ds = Dataset.linear(rng.standard_normal((50, 10)), rng.standard_normal(50))
    exact = enumerate_linear(ds, 0.1, 0.01).pips
    out = wtgs_run(ds, SamplerConfig(T=20_000, T_burn=1_000, h=0.1, tau=0.01, seed=2))
    assert np.all(exact < 0.2) and np.all(out.pip < 0.2)


def test_inferred_h_matches_exact(planted):
    post = enumerate_linear(planted, None, 1e-4, h_beta=(1.0, 4.0))
    out = wtgs_run_infer_h(planted, SamplerConfig(T=22_000, T_burn=2_000, h_beta=(1.0, 4.0),
                                                  tau=1e-4, seed=3))
    assert out.h_summary()["mean"] == pytest.approx(post.h_mean, abs=0.01)
    assert np.max(np.abs(out.pip - post.pips)) < 0.03
    assert out.zero_state_fraction == pytest.approx(0.25, abs=0.05)


def test_entry_points_reject_wrong_setup(planted, pair):
    with pytest.raises(ConfigError):
        wtgs_run(pair, SamplerConfig(h=0.1))
    with pytest.raises(ConfigError):
        wtgs_run(planted, SamplerConfig(h_beta=(1, 1)))
    with pytest.raises(ConfigError):
        wtgs_run_infer_h(planted, SamplerConfig(h=0.1))


def test_tgs_and_wgs_variants_run(planted):
    exact = enumerate_linear(planted, 0.1, 1e-4).pips
    for variant in (Variant.TGS, Variant.WGS):
        out = run_chain(planted, SamplerConfig(T=20_000, T_burn=1_000, h=0.1, tau=1e-4, seed=4,
                                               variant=variant))
        assert np.max(np.abs(out.pip - exact)) < 0.05
