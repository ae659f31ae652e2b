"""PG-wTGS for binomial and negative binomial regression, its subset variant and ablations.

Conditional on Pólya-Gamma variates ω the count likelihoods are Gaussian in
β, so γ moves reuse the linear-algebra machinery of :mod:`bvselect.mll`. The
untempered state (mass ξ) is where ω, the dispersion ν and h are updated. ω
is refreshed by an independence-type Metropolis-Hastings step whose proposal
is PG(b, ψ̂) centred on the conditional posterior mean β̂; the acceptance
ratio only involves marginal likelihoods and closed-form tilting factors.
"""
import math
from dataclasses import dataclass, replace

import numpy as np

from .core import ConfigError, DomainError, Likelihood, Variant
from .estimators import ChainOutput
from .mll import kappa_z, marginal_loglik_dense, nb_offset, neighbourhood
from .pg import pg_draw_vector
from .wtgs import ZERO_STATE, categorical, tempering_terms

CountChainOutput = ChainOutput

LOG2 = math.log(2.0)
XI_FLOOR = 1e-6
XI_INIT = 5.0


@dataclass(frozen=True)
class OmegaProposalContext:
    """Quantities at the current (γ, ω, ν) that the ω proposal is built from."""
    beta_hat: np.ndarray
    psi_hat: np.ndarray
    current_loglik: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.psi_hat)):
            raise DomainError("linear predictor is not finite")


def phi_pg(cond_pips, gamma, omega, epsilon, xi, variant=Variant.WTGS):
    """φ(γ, ω) = ξ + (1/P) Σ_i ½η(γ_{-i}, ω) / p(γ_i | γ_{-i}, ω, D)."""
    cond_pips = np.asarray(cond_pips, dtype=np.float64)
    P = cond_pips.size
    return xi + float(tempering_terms(cond_pips, gamma.bits, epsilon, P, variant).sum()) / P


def sample_i_pg(cond_pips, gamma, omega, epsilon, xi, rng, variant=Variant.WTGS):
    """Draw ``ZERO_STATE`` with probability ξ/φ, otherwise a covariate index."""
    cond_pips = np.asarray(cond_pips, dtype=np.float64)
    P = cond_pips.size
    w = np.empty(P + 1)
    w[0] = xi
    w[1:] = tempering_terms(cond_pips, gamma.bits, epsilon, P, variant) / P
    k = categorical(w, rng)
    return ZERO_STATE if k == 0 else k - 1


def beta_hat(fact, kz=None):
    """Conditional posterior mean of the active coefficients (intercept last).

    ``fact`` is an :class:`~bvselect.mll.ActiveFactorization` or a
    :class:`~bvselect.mll.Neighbourhood`; both were built against ``kz``.
    """
    return fact.beta


def metropolized_gibbs_accept(q, current):
    """Acceptance probability of flipping a binary coordinate whose conditional P(1) is ``q``."""
    if current:
        return min(1.0, (1.0 - q) / q)
    return min(1.0, q / (1.0 - q))


def adapt_xi(xi, phi, f_omega, t):
    """Stochastic-approximation step pushing the untempered visit rate ξ/φ towards f_ω."""
    return max(xi + (f_omega - xi / phi) / math.sqrt(t + 1.0), XI_FLOOR)


def _log_cosh_half(b, c, omega):
    # log of cosh^b(c/2) exp(-ω c²/2), summed
    return float(np.sum(b * (np.logaddexp(0.0, c) - 0.5 * c - LOG2) - 0.5 * omega * c * c))


def omega_log_acceptance(loglik_cur, loglik_prop, omega_cur, omega_prop, b_cur, b_prop,
                         c_fwd, c_rev):
    """Log MH ratio for (ω, ν) → (ω', ν') with ω' ~ PG(b', c_fwd) and reverse ω ~ PG(b, c_rev).

    The PG densities at zero tilt cancel between target and proposal, so only
    the tilting factors cosh^b(c/2) exp(−ωc²/2) remain.
    """
    return (loglik_prop - loglik_cur + _log_cosh_half(b_cur, c_rev, omega_cur)
            - _log_cosh_half(b_prop, c_fwd, omega_prop))


def pg_shape(dataset, nu):
    if dataset.kind is Likelihood.BINOMIAL:
        return dataset.C
    return dataset.Y + nu


def omega_mh_step(ctx, gamma, design, kz, nu, rng, nu_rw_scale=0.03, always_accept=False):
    """One joint update of ω (and ν for the negative binomial).

    Returns ``(omega, nu, kz, accepted, proposal_neighbourhood)``; on
    rejection the inputs are returned unchanged and the neighbourhood is None.
    Draw order: log ν proposal (negative binomial), the PG vector, then the
    acceptance uniform (skipped when ``always_accept``).
    """
    ds = design.dataset
    negbin = ds.kind is Likelihood.NEGBIN
    if negbin:
        nu_prop = nu * math.exp(nu_rw_scale * rng.standard_normal())
        c_fwd = ctx.psi_hat + nb_offset(ds.psi0, nu_prop)
    else:
        nu_prop = None
        c_fwd = ctx.psi_hat
    b_cur = pg_shape(ds, nu)
    b_prop = pg_shape(ds, nu_prop)
    omega_prop = pg_draw_vector(b_prop, c_fwd, rng)
    kz_prop = kappa_z(design, omega_prop, nu_prop, full=kz.full)
    nb_prop = neighbourhood(design, gamma, kz_prop, 0.5, indices=np.zeros(0, dtype=np.int64))
    if always_accept:
        return omega_prop, nu_prop, kz_prop, True, nb_prop
    psi_rev = nb_prop.linear_predictor(design)
    c_rev = psi_rev + nb_offset(ds.psi0, nu) if negbin else psi_rev
    log_r = omega_log_acceptance(ctx.current_loglik, nb_prop.base, kz.omega, omega_prop,
                                 b_cur, b_prop, c_fwd, c_rev)
    if math.log(rng.random()) < log_r:
        return omega_prop, nu_prop, kz_prop, True, nb_prop
    return kz.omega, nu, kz, False, None


def negbin_loglik_terms(dataset, gamma, omega, nu, psi0=None, tau=0.01, tau_bias=None):
    """Augmented negative binomial log marginal likelihood including the ν-dependent terms."""
    if dataset.kind is not Likelihood.NEGBIN:
        raise DomainError("negbin_loglik_terms needs negative binomial data")
    if nu is None or not nu > 0:
        raise DomainError(f"dispersion must be positive, got {nu}")
    if psi0 is not None and psi0 != dataset.psi0:
        dataset = replace(dataset, psi0=float(psi0))
    return marginal_loglik_dense(dataset, gamma, omega, nu, tau, tau_bias)


def _require_count(dataset):
    if not dataset.kind.is_count:
        raise ConfigError("this sampler needs a binomial or negative binomial likelihood")


def pg_wtgs_run(dataset, config, rng=None):
    """PG-wTGS over all P covariates."""
    from .sampler import run_chain
    _require_count(dataset)
    if config.subset_size is not None:
        raise ConfigError("use subset_pg_wtgs_run for subset sampling")
    return run_chain(dataset, config, rng)


def subset_pg_wtgs_run(dataset, config, rng=None):
    """Subset PG-wTGS; the untempered state behaves as a permanent anchor member."""
    from .sampler import run_chain
    _require_count(dataset)
    if config.subset_size is None:
        raise ConfigError("subset_pg_wtgs_run needs subset_size")
    return run_chain(dataset, config, rng)
