"""Weighted tempered Gibbs sampling for linear regression, with optional inference over h.

The chain state is (γ, i). Given γ, the auxiliary index i is drawn with
probability proportional to ½η(γ_{-i}) / p(γ_i | γ_{-i}, D); the chosen
coordinate is then flipped deterministically, and each state is reweighted by
1/φ(γ). With a Beta prior on h an extra untempered state (i = 0 in the
notation of the algorithm, ``ZERO_STATE`` here) carries mass ξ and is where h
is resampled.
"""
import numpy as np

from .core import Likelihood, Variant, ConfigError
from .estimators import ChainOutput

LinearChainOutput = ChainOutput

#: value returned by the index samplers when the untempered state is drawn
ZERO_STATE = -1
H_FLOOR = 1e-12


def eta(cond_pip, epsilon, P):
    """Weighting factor η = p(γ_i = 1 | γ_{-i}) + ε/P."""
    return cond_pip + epsilon / P


def tempering_terms(cond_pips, on, epsilon, P, variant=Variant.WTGS):
    """Per-index masses ½η/p(γ_i | γ_{-i}) (η ≡ 1 for TGS; plain η for WGS)."""
    if variant is Variant.WGS:
        return cond_pips + epsilon / P
    num = 0.5 if variant is Variant.TGS else 0.5 * (cond_pips + epsilon / P)
    return num / np.where(on, cond_pips, 1.0 - cond_pips)


def phi_linear(cond_pips, gamma, epsilon, variant=Variant.WTGS):
    """Inverse importance weight φ(γ) = Σ_i ½η(γ_{-i}) / p(γ_i | γ_{-i}, D)."""
    cond_pips = np.asarray(cond_pips, dtype=np.float64)
    return float(tempering_terms(cond_pips, gamma.bits, epsilon, cond_pips.size, variant).sum())


def categorical(weights, rng):
    """Index drawn with probability proportional to ``weights`` using one uniform."""
    cw = np.cumsum(weights)
    k = int(np.searchsorted(cw, rng.random() * cw[-1], side="right"))
    return min(k, cw.size - 1)


def sample_i_linear(cond_pips, gamma, epsilon, rng, variant=Variant.WTGS):
    """Draw the coordinate to temper, with probability ∝ η(γ_{-i}) / p(γ_i | γ_{-i}, D)."""
    cond_pips = np.asarray(cond_pips, dtype=np.float64)
    return categorical(tempering_terms(cond_pips, gamma.bits, epsilon, cond_pips.size, variant), rng)


def draw_h(alpha, beta, size, P, rng):
    """h | γ ~ Beta(α + |γ|, β + P − |γ|), kept strictly inside (0, 1)."""
    return float(np.clip(rng.beta(alpha + size, beta + P - size), H_FLOOR, 1.0 - H_FLOOR))


def _require_linear(dataset, config):
    if dataset.kind is not Likelihood.LINEAR:
        raise ConfigError("this sampler needs a linear likelihood")
    if config.subset_size is not None:
        raise ConfigError("use subset_wtgs_run for subset sampling")


def wtgs_run(dataset, config, rng=None):
    """wTGS for linear regression with a fixed prior inclusion probability h."""
    from .sampler import run_chain
    _require_linear(dataset, config)
    if config.h is None:
        raise ConfigError("wtgs_run needs a fixed h; use wtgs_run_infer_h for a Beta prior")
    return run_chain(dataset, config, rng)


def wtgs_run_infer_h(dataset, config, rng=None):
    """wTGS for linear regression with h ~ Beta(α_h, β_h) inferred alongside γ."""
    from .sampler import run_chain
    _require_linear(dataset, config)
    if config.h_beta is None:
        raise ConfigError("wtgs_run_infer_h needs h_beta")
    return run_chain(dataset, config, rng)
