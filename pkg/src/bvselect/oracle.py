"""Brute-force references used to check the samplers.

Nothing here shares linear algebra with :mod:`bvselect.mll`: evidences are
computed with plain ``numpy.linalg`` calls (linear model) or by numerical
integration over β (count models), and the Subset wTGS kernel is enumerated
state by state.
"""
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, comb, logsumexp

from .core import DomainError, Likelihood, QuadratureNotConverged, TooLarge

MAX_ENUMERATE_P = 20
MAX_QUADRATURE_P = 3
MAX_BALANCE_P = 4


def _bits_of(mask, P):
    return np.array([(mask >> j) & 1 for j in range(P)], dtype=bool)


def _mask_of(bits):
    return int(sum(1 << int(j) for j in np.flatnonzero(bits)))


@dataclass
class ExactPosterior:
    """Exact posterior over inclusion vectors.

    ``model_log_probs[m]`` is the normalized log posterior of the model whose
    bitmask is ``m`` (bit j set when covariate j is included).

    :param model_log_probs: array of length 2^P indexed by bitmask
    :param pips: exact posterior inclusion probabilities
    :param log_evidence: unnormalized log marginal likelihood of every model
    """
    model_log_probs: np.ndarray
    pips: np.ndarray
    log_evidence: np.ndarray
    h_mean: float = None

    @property
    def P(self):
        return self.pips.size

    def log_prob(self, gamma):
        return float(self.model_log_probs[_mask_of(np.asarray(gamma, dtype=bool))])

    def conditional_pips(self, gamma):
        """p(γ_i = 1 | γ_{-i}, D) for every i at ``gamma``."""
        bits = np.asarray(gamma, dtype=bool)
        m = _mask_of(bits)
        out = np.empty(self.P)
        for i in range(self.P):
            on = self.model_log_probs[m | (1 << i)]
            off = self.model_log_probs[m & ~(1 << i)]
            out[i] = 1.0 / (1.0 + math.exp(off - on))
        return out

    def as_dict(self):
        return {m: float(v) for m, v in enumerate(self.model_log_probs)}


def _posterior(log_evidence, P, h, h_beta=None):
    sizes = np.array([bin(m).count("1") for m in range(1 << P)])
    if h_beta is None:
        lp = log_evidence + sizes * math.log(h) + (P - sizes) * math.log1p(-h)
    else:
        # h integrated out: p(γ) = B(α + |γ|, β + P − |γ|) / B(α, β)
        a, b = h_beta
        lp = log_evidence + betaln(a + sizes, b + P - sizes)
    lp = lp - logsumexp(lp)
    probs = np.exp(lp)
    pips = np.array([probs[(np.arange(1 << P) >> j) & 1 == 1].sum() for j in range(P)])
    h_mean = h if h_beta is None else float(probs @ ((h_beta[0] + sizes) / (sum(h_beta) + P)))
    return ExactPosterior(lp, np.clip(pips, 0.0, 1.0), log_evidence, h_mean)


def _check_h(h, h_beta=None):
    if h_beta is not None:
        if h is not None:
            raise DomainError("give either a fixed h or h_beta, not both")
        if not (h_beta[0] > 0 and h_beta[1] > 0):
            raise DomainError(f"Beta prior parameters must be positive, got {h_beta}")
        return
    if h is None or not 0.0 < h < 1.0:
        raise DomainError(f"h must lie in (0, 1), got {h}")


def linear_log_evidence(X, Y, bits, tau, tau_bias=None, include_bias=False):
    """Log evidence of one linear model, integrating β and σ² (improper 1/σ² prior)."""
    N = X.shape[0]
    cols = [X[:, j] for j in np.flatnonzero(bits)]
    precs = [tau] * len(cols)
    if include_bias:
        cols.append(np.ones(N))
        precs.append(tau if tau_bias is None else tau_bias)
    const = math.lgamma(0.5 * N) - 0.5 * N * math.log(math.pi)
    yty = float(Y @ Y)
    if not cols:
        return const - 0.5 * N * math.log(yty)
    Xa = np.column_stack(cols)
    A = Xa.T @ Xa + np.diag(precs)
    z = Xa.T @ Y
    sign, logdet = np.linalg.slogdet(A)
    if sign <= 0:
        raise DomainError("prior-regularized Gram matrix is not positive definite")
    resid = yty - float(z @ np.linalg.solve(A, z))
    return 0.5 * float(np.sum(np.log(precs))) - 0.5 * logdet - 0.5 * N * math.log(resid) + const


def enumerate_linear(dataset, h, tau, tau_bias=None, include_bias=False, h_beta=None):
    """Exact posterior of a linear model by evaluating all 2^P evidences.

    With ``h_beta = (α, β)`` (and ``h=None``) h is integrated out under a Beta prior.
    """
    if dataset.kind is not Likelihood.LINEAR:
        raise DomainError("enumerate_linear needs a linear likelihood")
    P = dataset.P
    if P > MAX_ENUMERATE_P:
        raise TooLarge(f"enumeration over 2^{P} models exceeds the limit P <= {MAX_ENUMERATE_P}")
    _check_h(h, h_beta)
    le = np.array([linear_log_evidence(dataset.X, dataset.Y, _bits_of(m, P), tau, tau_bias,
                                       include_bias) for m in range(1 << P)])
    return _posterior(le, P, h, h_beta)


# -- count models -----------------------------------------------------------------
def _count_loglik(kind, Y, C, nu, psi):
    # log p(Y | ψ) up to terms free of β; ψ is N x M
    sp = np.logaddexp(0.0, psi)
    if kind is Likelihood.BINOMIAL:
        return (Y[:, None] * psi - C[:, None] * sp).sum(axis=0)
    return (Y[:, None] * psi - (Y + nu)[:, None] * sp).sum(axis=0)


def _laplace(f_grad_hess, d, max_iter=100):
    beta = np.zeros(d)
    for _ in range(max_iter):
        val, g, H = f_grad_hess(beta)
        step = np.linalg.solve(H, g)
        t = 1.0
        while True:
            cand = beta + t * step
            if f_grad_hess(cand)[0] >= val - 1e-12 or t < 1e-8:
                break
            t *= 0.5
        beta = cand
        if np.max(np.abs(t * step)) < 1e-12:
            break
    return beta, f_grad_hess(beta)[2]


def count_log_evidence(dataset, bits, tau, tau_bias=None, nu=None, rtol=1e-6, n_start=8,
                       max_points=2 ** 21):
    """Log evidence of one count model by Gauss-Hermite quadrature centred at the Laplace mode.

    The rule is doubled per dimension until the evidence changes by less than
    ``rtol`` relative.
    """
    kind = dataset.kind
    X, Y, N = dataset.X, dataset.Y, dataset.N
    Xa = np.column_stack([X[:, j] for j in np.flatnonzero(bits)] + [np.ones(N)])
    d = Xa.shape[1]
    prec = np.full(d, tau)
    prec[-1] = tau if tau_bias is None else tau_bias
    if kind is Likelihood.BINOMIAL:
        C, off, shape = dataset.C, 0.0, dataset.C
    else:
        if nu is None or nu <= 0:
            raise DomainError("the negative binomial oracle needs a fixed positive nu")
        C, off, shape = None, dataset.psi0 - math.log(nu), Y + nu
    log_prior_norm = 0.5 * float(np.sum(np.log(prec / (2.0 * math.pi))))

    def log_post(B):
        # B is d x M
        psi = Xa @ B + off
        return _count_loglik(kind, Y, C, nu, psi) - 0.5 * (prec[:, None] * B * B).sum(axis=0) + log_prior_norm

    def f_grad_hess(beta):
        psi = Xa @ beta + off
        p = 1.0 / (1.0 + np.exp(-psi))
        val = float(log_post(beta[:, None])[0])
        g = Xa.T @ (Y - shape * p) - prec * beta
        H = (Xa * (shape * p * (1.0 - p))[:, None]).T @ Xa + np.diag(prec)
        return val, g, H

    mode, H = _laplace(f_grad_hess, d)
    L = np.linalg.cholesky(np.linalg.inv(H))
    log_jac = float(np.sum(np.log(np.diag(L)))) + 0.5 * d * math.log(2.0)
    prev = None
    n = n_start
    while n ** d <= max_points:
        x, w = np.polynomial.hermite.hermgauss(n)
        grid = np.array(list(itertools.product(range(n), repeat=d)))
        Z = x[grid].T
        lw = np.log(w)[grid].sum(axis=1)
        B = mode[:, None] + math.sqrt(2.0) * (L @ Z)
        val = logsumexp(log_post(B) + (Z * Z).sum(axis=0) + lw) + log_jac
        if prev is not None and abs(math.expm1(val - prev)) < rtol:
            return val
        prev = val
        n *= 2
    raise QuadratureNotConverged(f"quadrature over {d} dimensions did not reach rtol {rtol}")


def quadrature_count(dataset, h, tau, tau_bias=None, nu=None, rtol=1e-6):
    """Exact (to quadrature accuracy) posterior of a binomial or fixed-ν negative binomial model."""
    if not dataset.kind.is_count:
        raise DomainError("quadrature_count needs a count likelihood")
    P = dataset.P
    if P > MAX_QUADRATURE_P:
        raise TooLarge(f"quadrature needs P <= {MAX_QUADRATURE_P}, got {P}")
    _check_h(h)
    le = np.array([count_log_evidence(dataset, _bits_of(m, P), tau, tau_bias, nu, rtol)
                   for m in range(1 << P)])
    return _posterior(le, P, h)


# -- detailed balance ---------------------------------------------------------------
def default_eta(i, bits, cond_pip, epsilon, P):
    return cond_pip + epsilon / P


def subset_kernel(dataset, S, A, anchor, h, tau, epsilon=5.0, eta=default_eta):
    """Enumerated Subset wTGS kernel over (γ, 𝒮).

    Returns ``(states, f, K)`` with ``f`` the normalized auxiliary target
    p(γ | D) φ(γ, 𝒮) and ``K`` the row-stochastic transition matrix.
    ``eta(i, bits, cond_pip, epsilon, P)`` supplies the weighting factor.
    """
    P = dataset.P
    if P > MAX_BALANCE_P:
        raise TooLarge(f"kernel enumeration needs P <= {MAX_BALANCE_P}, got {P}")
    anchor = tuple(sorted(int(a) for a in anchor))
    if len(anchor) != A or not A < S <= P:
        raise DomainError("need |anchor| = A < S <= P")
    post = enumerate_linear(dataset, h, tau)
    free = [j for j in range(P) if j not in anchor]
    subsets = [tuple(sorted(anchor + c)) for c in itertools.combinations(free, S - A)]
    states = [(m, s) for m in range(1 << P) for s in subsets]
    index = {st: k for k, st in enumerate(states)}

    def U(sub, i):
        if i not in sub:
            return 0.0
        if i in anchor:
            return 1.0 / comb(P - A, S - A, exact=True)
        return 1.0 / comb(P - A - 1, S - A - 1, exact=True)

    n = len(states)
    f = np.empty(n)
    K = np.zeros((n, n))
    for k, (m, sub) in enumerate(states):
        bits = _bits_of(m, P)
        cp = post.conditional_pips(bits)
        terms = {}
        for i in sub:
            # p(γ_i | γ_{-i}) of the current value, without forming 1 − p
            p_cur = 1.0 / (1.0 + math.exp(post.model_log_probs[m ^ (1 << i)] - post.model_log_probs[m]))
            terms[i] = 0.5 * eta(i, bits, cp[i], epsilon, P) / p_cur * U(sub, i)
        phi = sum(terms.values())
        f[k] = math.exp(post.model_log_probs[m]) * phi
        for i, term in terms.items():
            m2 = m ^ (1 << i)
            for sub2 in subsets:
                u2 = U(sub2, i)
                if u2 > 0.0:
                    K[k, index[(m2, sub2)]] += term / phi * u2
    return states, f / f.sum(), K


def detailed_balance_check(dataset, S, A, anchor, h, tau, epsilon=5.0, eta=default_eta):
    """Largest |f(a)K(a, b) − f(b)K(b, a)| over all pairs of enumerated states."""
    _, f, K = subset_kernel(dataset, S, A, anchor, h, tau, epsilon, eta)
    flow = f[:, None] * K
    return float(np.max(np.abs(flow - flow.T)))
