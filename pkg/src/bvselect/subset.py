"""Subset wTGS: conditional PIPs are only needed on a random subset 𝒮 of size S.

𝒮 is drawn uniformly among the size-S supersets of 𝒜 ∪ {i}, where the
anchor set 𝒜 holds covariates believed to have high PIPs. Only the ratio of
the two non-zero values of U(𝒮 | i, 𝒜) is ever needed.
"""
import numpy as np

from .core import ConfigError, Likelihood, Variant
from .pg import kernels
from .wtgs import tempering_terms


def u_ratio(P, S, A, in_anchor):
    """Relative weight of U(𝒮 | i, 𝒜): 1 when i ∈ 𝒜, (S − A)/(P − A) otherwise."""
    if in_anchor:
        return 1.0
    return (S - A) / (P - A)


class SubsetState:
    """Anchor set, current subset and the U-ratio for a subset chain.

    :param P: number of covariates
    :param S: subset size
    :param anchor: anchor indices (size A < S)
    """

    def __init__(self, P, S, anchor):
        self.P = P
        self.S = S
        self.mask = np.zeros(P, dtype=np.uint8)
        self.subset = None
        self.set_anchor(anchor)

    def set_anchor(self, anchor):
        self.anchor = np.sort(np.asarray(anchor, dtype=np.int64))
        self.A = self.anchor.size
        if self.A >= self.S:
            raise ConfigError(f"anchor size {self.A} must be below the subset size {self.S}")
        self.anchor_mask = np.zeros(self.P, dtype=bool)
        self.anchor_mask[self.anchor] = True
        self.ratio = u_ratio(self.P, self.S, self.A, False)

    def resample(self, i, rng):
        self.subset = sample_subset(i, self.anchor, self.P, self.S, rng, self.mask)
        return self.subset

    def u_weights(self, subset=None):
        subset = self.subset if subset is None else subset
        return np.where(self.anchor_mask[subset], 1.0, self.ratio)


def sample_subset(i, anchor, P, S, rng, mask=None, implementation=None):
    """Uniform draw of a size-S subset containing ``anchor`` and ``i`` (``i=None``: anchor only)."""
    anchor = np.asarray(anchor, dtype=np.int64)
    if i is None or i < 0:
        forced = np.sort(anchor)
    else:
        forced = np.union1d(anchor, np.array([i], dtype=np.int64))
    n_free = S - forced.size
    if n_free < 0:
        raise ConfigError(f"{forced.size} forced indices do not fit in a subset of size {S}")
    if mask is None:
        mask = np.zeros(P, dtype=np.uint8)
    free = kernels(implementation).sample_free_slots(np.ascontiguousarray(forced), P, n_free,
                                                    mask, rng)
    out = np.concatenate([forced, free])
    out.sort()
    return out


def phi_subset(cond_pips_on_s, gamma, epsilon, state, subset=None, variant=Variant.WTGS):
    """φ(γ, 𝒮) = Σ_{i∈𝒮} ½η(γ_{-i}) / p(γ_i | γ_{-i}, D) · U(𝒮 | i, 𝒜)."""
    subset = state.subset if subset is None else subset
    terms = tempering_terms(np.asarray(cond_pips_on_s, dtype=np.float64), gamma.bits[subset],
                            epsilon, state.P, variant)
    return float((terms * state.u_weights(subset)).sum())


def initial_anchor(X, Y, A):
    """The A covariates with the largest |corr(X_i, Y)|, ties to the lowest index."""
    if A == 0:
        return np.zeros(0, dtype=np.int64)
    Xc = X - X.mean(axis=0)
    Yc = Y - Y.mean()
    norms = np.sqrt((Xc * Xc).sum(axis=0)) * np.sqrt(Yc @ Yc)
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.where(norms > 0, np.abs(Xc.T @ Yc) / norms, 0.0)
    return adapt_anchor(corr, A)


def adapt_anchor(running_pips, A, t=None, T_burn=None):
    """Indices of the A largest running PIP estimates, ties broken by lowest index."""
    if t is not None and T_burn is not None and t > T_burn:
        raise AssertionError("the anchor set is frozen after burn-in")
    running_pips = np.asarray(running_pips, dtype=np.float64)
    order = np.lexsort((np.arange(running_pips.size), -running_pips))
    return np.sort(order[:A]).astype(np.int64)


def subset_wtgs_run(dataset, config, rng=None):
    """Subset wTGS for linear regression; PIPs use the partially Rao-Blackwellized estimator."""
    from .sampler import run_chain
    if dataset.kind is not Likelihood.LINEAR:
        raise ConfigError("subset_wtgs_run needs a linear likelihood")
    if config.subset_size is None:
        raise ConfigError("subset_wtgs_run needs subset_size")
    return run_chain(dataset, config, rng)
