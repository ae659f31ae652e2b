"""Marginal log likelihoods of inclusion vectors and all conditional PIPs per iteration.

One Cholesky factorization of the active Gram matrix is built per iteration;
the log likelihood of every single-coordinate neighbour of γ is then obtained
from rank-1 formulas: Schur complements for additions and the block-inverse
identity on ``Finv`` for removals.

For count likelihoods the design is weighted by the Pólya-Gamma variates,
``𝒳 = Ω^{1/2} X``, and an intercept column (index ``P``) is always active.
The linear model integrates out β and σ² under the improper noise prior and
only carries an intercept when asked to.
"""
import math

import numpy as np
from scipy.linalg import lapack
from scipy.special import expit, gammaln

from . import pg as _pg
from .core import ConfigError, DomainError, GammaState, Likelihood, NumericalError

PIP_FLOOR = 1e-12
JITTER_SCALE = 1e-10
JITTER_TRIES = 3
# relative size of a Schur complement / residual below which the rank-1 value is not trusted
CANCELLATION_TOL = 1e-10


def cholesky(A):
    """Lower Cholesky factor of ``A``, escalating a diagonal jitter on failure."""
    L, info = lapack.dpotrf(A, lower=1, clean=1, overwrite_a=0)
    if info == 0:
        return L
    dim = A.shape[0]
    jitter = JITTER_SCALE * np.trace(A) / dim
    for _ in range(JITTER_TRIES):
        L, info = lapack.dpotrf(A + jitter * np.eye(dim), lower=1, clean=1, overwrite_a=0)
        if info == 0:
            return L
        jitter *= 10.0
    raise NumericalError(f"Gram matrix of dimension {dim} is not positive definite")


def _solve_lower(L, b):
    x, info = lapack.dtrtrs(L, b, lower=1)
    if info != 0:
        raise NumericalError("singular triangular factor")
    return x


class Design:
    """Dataset-derived quantities reused across iterations.

    :param dataset: the :class:`~bvselect.core.Dataset`
    :param tau: prior precision of the covariate coefficients
    :param tau_bias: prior precision of the intercept (defaults to ``tau``)
    :param include_bias: append an intercept column; forced on for count likelihoods
    :param precompute_gram: cache ``XᵀX`` (linear likelihood only)
    """

    def __init__(self, dataset, tau, tau_bias=None, include_bias=None, precompute_gram=False):
        self.dataset = dataset
        self.kind = dataset.kind
        self.N, self.P = dataset.N, dataset.P
        if include_bias is None:
            include_bias = self.kind.is_count
        if self.kind.is_count and not include_bias:
            raise ConfigError("count likelihoods always include an intercept")
        self.has_bias = bool(include_bias)
        self.tau = float(tau)
        self.tau_bias = float(tau if tau_bias is None else tau_bias)
        X = dataset.X
        if self.has_bias:
            self.Xb = np.ascontiguousarray(np.hstack([X, np.ones((self.N, 1))]))
            self.bias_index = self.P
        else:
            self.Xb = X
            self.bias_index = None
        self.n_cols = self.Xb.shape[1]
        self.prec = np.full(self.n_cols, self.tau)
        if self.has_bias:
            self.prec[self.P] = self.tau_bias
        self.log_prec = np.log(self.prec)
        self.gram = None
        if precompute_gram and self.kind is Likelihood.LINEAR:
            self.gram = self.Xb.T @ self.Xb
        self._xsq = None
        self._xf = None
        self.ones = np.ones(self.N)
        self.all_covariates = np.arange(self.P, dtype=np.int64)
        # kernel scratch: filled with -1 and restored by every call
        self.pos_scratch = np.full(self.n_cols, -1, dtype=np.int64)
        self._bias_tail = np.array([self.P], dtype=np.int64)

    @property
    def Xf(self):
        """Column-major copy of the design used by the neighbour kernel."""
        if self._xf is None:
            self._xf = np.asfortranarray(self.Xb)
        return self._xf

    @property
    def xsq(self):
        if self._xsq is None:
            self._xsq = self.Xb * self.Xb
        return self._xsq

    def active_columns(self, gamma):
        if self.has_bias:
            return np.concatenate((gamma.active, self._bias_tail))
        return gamma.active


class KappaZ:
    """Data summaries that depend on ω and ν but not on γ.

    ``resid`` is the adjusted κ (κ − ω(ψ0 − log ν) for the negative binomial,
    Y for the linear model) so that ``Z = Xᵀ resid``. ``quad_offset_terms``
    collects the additive γ-independent log-likelihood terms.
    """

    def __init__(self, design, kappa, resid, omega, quad_offset_terms, yty=None, nu=None,
                 full=True):
        self.design = design
        self.full = full
        self.nu = nu
        self.kappa = kappa
        self.resid = resid
        self.omega = omega
        self.quad_offset_terms = quad_offset_terms
        self.yty = yty
        self._z = None
        self._col_sq = None
        if full:
            self._z = design.Xb.T @ resid
            if omega is None:
                self._col_sq = np.einsum("ij,ij->j", design.Xb, design.Xb)
            else:
                self._col_sq = design.xsq.T @ omega

    @property
    def Z(self):
        if self._z is None:
            self._z = self.design.Xb.T @ self.resid
        return self._z

    def z_at(self, idx):
        if self._z is not None:
            return self._z[idx]
        return self.design.Xb[:, idx].T @ self.resid

    def col_sq_at(self, idx):
        if self._col_sq is not None:
            return self._col_sq[idx]
        cols = self.design.Xb[:, idx]
        if self.omega is None:
            return np.einsum("ij,ij->j", cols, cols)
        return (cols * cols).T @ self.omega


def nb_offset(psi0, nu):
    return psi0 - math.log(nu)


def kappa_z(design, omega=None, nu=None, full=True):
    """Build :class:`KappaZ` for the current auxiliary variables."""
    ds = design.dataset
    kind = design.kind
    if kind is Likelihood.LINEAR:
        Y = ds.Y
        const = gammaln(0.5 * design.N) - 0.5 * design.N * math.log(math.pi)
        return KappaZ(design, Y, Y, None, const, yty=float(Y @ Y), full=full)
    if omega is None:
        raise DomainError("count likelihoods need Pólya-Gamma variates omega")
    if kind is Likelihood.BINOMIAL:
        kappa = ds.Y - 0.5 * ds.C
        return KappaZ(design, kappa, kappa, omega, 0.0, full=full)
    if nu is None or not nu > 0:
        raise DomainError(f"negative binomial dispersion must be positive, got {nu}")
    kappa = 0.5 * (ds.Y - nu)
    off = nb_offset(ds.psi0, nu)
    resid = kappa - omega * off
    const = negbin_constant(ds.Y, kappa, omega, nu, off)
    return KappaZ(design, kappa, resid, omega, const, nu=nu, full=full)


def negbin_constant(Y, kappa, omega, nu, off):
    return float(np.sum(gammaln(Y + nu)) - Y.size * (gammaln(nu) + nu * math.log(2.0))
                 + off * np.sum(kappa) - 0.5 * off * off * np.sum(omega))


def _loglik_from_parts(design, kz, quad, logdet, sum_log_prec):
    if design.kind is Likelihood.LINEAR:
        resid = kz.yty - quad
        return 0.5 * sum_log_prec - 0.5 * logdet - 0.5 * design.N * np.log(resid) + kz.quad_offset_terms
    return 0.5 * quad - 0.5 * logdet + 0.5 * sum_log_prec + kz.quad_offset_terms


def marginal_loglik_dense(dataset, gamma, omega=None, nu=None, tau=0.01, tau_bias=None,
                          include_bias=None):
    """Log marginal likelihood of ``gamma`` by a direct dense solve (no incremental reuse)."""
    kind = dataset.kind
    if include_bias is None:
        include_bias = kind.is_count
    tau_bias = tau if tau_bias is None else tau_bias
    X, Y, N = dataset.X, dataset.Y, dataset.N
    cols = [X[:, j] for j in np.flatnonzero(np.asarray(gamma.bits if isinstance(gamma, GammaState)
                                                        else gamma))]
    precs = [tau] * len(cols)
    if include_bias:
        cols.append(np.ones(N))
        precs.append(tau_bias)
    Xa = np.column_stack(cols) if cols else np.zeros((N, 0))
    precs = np.asarray(precs, dtype=np.float64)
    if kind is Likelihood.LINEAR:
        w = np.ones(N)
        r = Y
        const = math.lgamma(0.5 * N) - 0.5 * N * math.log(math.pi)
    elif kind is Likelihood.BINOMIAL:
        w = np.asarray(omega, dtype=np.float64)
        r = Y - 0.5 * dataset.C
        const = 0.0
    else:
        if nu is None or nu <= 0:
            raise DomainError("negative binomial dispersion must be positive")
        w = np.asarray(omega, dtype=np.float64)
        kappa = 0.5 * (Y - nu)
        off = dataset.psi0 - math.log(nu)
        r = kappa - w * off
        const = float(sum(math.lgamma(y + nu) - math.lgamma(nu) - nu * math.log(2.0) for y in Y)
                      + off * kappa.sum() - 0.5 * off * off * w.sum())
    A = Xa.T @ (w[:, None] * Xa) + np.diag(precs)
    z = Xa.T @ r
    if A.shape[0]:
        L = cholesky(A)
        quad = float(z @ np.linalg.solve(A, z))
        logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    else:
        quad = logdet = 0.0
    slp = float(np.sum(np.log(precs)))
    if kind is Likelihood.LINEAR:
        resid = float(Y @ Y) - quad
        if resid <= 0:
            raise NumericalError("residual sum of squares is not positive")
        return 0.5 * slp - 0.5 * logdet - 0.5 * N * math.log(resid) + const
    return 0.5 * quad - 0.5 * logdet + 0.5 * slp + const


class ActiveFactorization:
    """Cholesky factorization of the Gram matrix of the active columns.

    ``active_idx`` lists the active covariates followed by the intercept (if
    any). ``L Lᵀ = 𝒳_Iᵀ𝒳_I + diag(prec_I)``, ``Ztil = L⁻¹Z_I``,
    ``Finv = (L Lᵀ)⁻¹`` and ``beta = Finv Z_I`` is the conditional posterior
    mean of the active coefficients.
    """

    def __init__(self, design, kz, gamma, active_idx, L, Linv, Ztil, cross_basis):
        self.design = design
        self.kz = kz
        self.gamma = gamma
        self.active_idx = active_idx
        self.L = L
        self.Linv = Linv
        self.Ztil = Ztil
        self.cross_basis = cross_basis
        self.finv_diag = np.einsum("ij,ij->j", Linv, Linv)
        self.beta = Linv.T @ Ztil
        self.quad = float(Ztil @ Ztil)
        self.logdet = 2.0 * float(np.log(L.diagonal()).sum()) if L.size else 0.0
        self.sum_log_prec = float(design.log_prec[active_idx].sum())
        if design.kind is Likelihood.LINEAR and kz.yty - self.quad <= CANCELLATION_TOL * kz.yty:
            raise NumericalError("residual sum of squares is not positive")
        self.base_loglik = float(_loglik_from_parts(design, kz, self.quad, self.logdet,
                                                    self.sum_log_prec))

    @property
    def Finv(self):
        return self.Linv.T @ self.Linv

    @property
    def Xtil(self):
        """𝒳_I L⁻ᵀ."""
        Xa = self.design.Xb[:, self.active_idx]
        if self.kz.omega is not None:
            Xa = Xa * np.sqrt(self.kz.omega)[:, None]
        return Xa @ self.Linv.T

    def positions(self, idx):
        """Positions of active covariates ``idx`` within ``active_idx``."""
        return np.searchsorted(self.gamma.active, idx)

    def linear_predictor(self):
        """ψ̂ = X_I β̂ (without any offset)."""
        if self.active_idx.size == 0:
            return np.zeros(self.design.N)
        return self.design.Xb[:, self.active_idx] @ self.beta

    def beta_full(self):
        """β̂ scattered to length ``n_cols`` with zeros outside the active set."""
        out = np.zeros(self.design.n_cols)
        out[self.active_idx] = self.beta
        return out


def build_factorization(design, gamma, kz):
    """Factorize the Gram matrix of ``gamma``'s active columns under ``kz``'s weights."""
    I = design.active_columns(gamma)
    m = I.size
    if m == 0:
        empty = np.zeros((0, 0))
        return ActiveFactorization(design, kz, gamma, I, empty, empty, np.zeros(0),
                                   np.zeros((design.N, 0)))
    XI = design.Xb[:, I]
    WI = XI if kz.omega is None else XI * kz.omega[:, None]
    if design.gram is not None:
        G = design.gram[np.ix_(I, I)]
    else:
        G = XI.T @ WI
    G = G + np.diag(design.prec[I])
    L = cholesky(G)
    Linv = _solve_lower(L, np.eye(m))
    Ztil = Linv @ kz.z_at(I)
    cross_basis = None if design.gram is not None else WI @ Linv.T
    return ActiveFactorization(design, kz, gamma, I, L, Linv, Ztil, cross_basis)


def _cross(fact, idx):
    # rows: 𝒳_kᵀ X̃_I for k in idx
    design = fact.design
    if fact.active_idx.size == 0:
        return np.zeros((len(idx), 0))
    if design.gram is not None:
        return design.gram[np.ix_(idx, fact.active_idx)] @ fact.Linv.T
    if len(idx) == design.n_cols:
        return design.Xb.T @ fact.cross_basis
    return design.Xb[:, idx].T @ fact.cross_basis


def _add_parts(fact, idx, cross=None):
    if cross is None:
        cross = _cross(fact, idx)
    design, kz = fact.design, fact.kz
    base = kz.col_sq_at(idx) + design.prec[idx]
    g_inv = base - np.einsum("ij,ij->i", cross, cross)
    w = cross @ fact.Ztil - kz.z_at(idx)
    ok = g_inv > CANCELLATION_TOL * base
    g_safe = np.where(ok, g_inv, 1.0)
    quad = fact.quad + w * w / g_safe
    logdet = fact.logdet + np.log(g_safe)
    slp = fact.sum_log_prec + design.log_prec[idx]
    return quad, logdet, slp, ok


def _drop_parts(fact, idx):
    pos = fact.positions(idx)
    fkk = fact.finv_diag[pos]
    ok = fkk > 0
    f_safe = np.where(ok, fkk, 1.0)
    b = fact.beta[pos]
    quad = fact.quad - b * b / f_safe
    logdet = fact.logdet + np.log(f_safe)
    slp = fact.sum_log_prec - fact.design.log_prec[idx]
    return quad, logdet, slp, ok


def _finish(fact, quad, logdet, slp, ok):
    design, kz = fact.design, fact.kz
    if design.kind is Likelihood.LINEAR:
        ok = ok & (kz.yty - quad > CANCELLATION_TOL * kz.yty)
        quad = np.where(ok, quad, 0.0)
    return _loglik_from_parts(design, kz, quad, logdet, slp), ok


def _dense_flip(fact, k):
    design, kz = fact.design, fact.kz
    ds = design.dataset
    return marginal_loglik_dense(ds, fact.gamma.flipped(int(k)), kz.omega, kz.nu, design.tau,
                                 design.tau_bias, design.has_bias)


def loglik_add(fact, k):
    """Log marginal likelihood of γ ∪ {k} from the factorization of γ."""
    if fact.gamma.bits[k]:
        raise ValueError(f"covariate {k} is already active")
    idx = np.array([k])
    val, ok = _finish(fact, *_add_parts(fact, idx))
    if not ok[0]:
        raise NumericalError(f"Schur complement for covariate {k} is not positive")
    return float(val[0])


def loglik_drop(fact, k):
    """Log marginal likelihood of γ minus {k} from the factorization of γ."""
    if not fact.gamma.bits[k]:
        raise ValueError(f"covariate {k} is not active")
    idx = np.array([k])
    val, ok = _finish(fact, *_drop_parts(fact, idx))
    if not ok[0]:
        raise NumericalError(f"inverse diagonal for covariate {k} is not positive")
    return float(val[0])


def flip_logliks(fact, indices=None):
    """Log marginal likelihoods of γ with each covariate in ``indices`` flipped.

    Entries whose rank-1 evaluation is numerically unreliable are recomputed
    densely.
    """
    design = fact.design
    P = design.P
    if indices is None:
        return _flip_all(fact)
    indices = np.asarray(indices, dtype=np.int64)
    out = np.empty(indices.size)
    on = fact.gamma.bits[indices]
    if np.any(~on):
        off_idx = indices[~on]
        if off_idx.size * 2 > P and design.gram is None and fact.active_idx.size:
            cross = _cross(fact, np.arange(design.n_cols))[off_idx]
        else:
            cross = None
        vals, ok = _finish(fact, *_add_parts(fact, off_idx, cross))
        out[~on] = vals
        _repair(fact, off_idx, ok, out, np.flatnonzero(~on))
    if np.any(on):
        on_idx = indices[on]
        vals, ok = _finish(fact, *_drop_parts(fact, on_idx))
        out[on] = vals
        _repair(fact, on_idx, ok, out, np.flatnonzero(on))
    return out


def _flip_all(fact):
    # every covariate at once: both rank-1 forms evaluated on full-length vectors
    design, kz = fact.design, fact.kz
    P = design.P
    bits = fact.gamma.bits
    act = fact.gamma.active
    n_act = act.size
    col_base = kz.col_sq_at(slice(0, P)) + design.prec[:P]
    if fact.active_idx.size:
        if design.gram is not None:
            cross = design.gram[:P, fact.active_idx] @ fact.Linv.T
        else:
            cross = design.Xb.T[:P] @ fact.cross_basis
        g = col_base - np.einsum("ij,ij->i", cross, cross)
        w = cross @ fact.Ztil - kz.z_at(slice(0, P))
    else:
        g = col_base
        w = -kz.z_at(slice(0, P))
    g[act] = 1.0
    fd = np.ones(P)
    fd[act] = fact.finv_diag[:n_act]
    b = np.zeros(P)
    b[act] = fact.beta[:n_act]
    ok = np.where(bits, fd > 0, g > CANCELLATION_TOL * col_base)
    denom = np.where(bits, fd, g)
    denom[~ok] = 1.0
    quad = np.where(bits, fact.quad - b * b / denom, fact.quad + w * w / denom)
    logdet = fact.logdet + np.log(denom)
    slp = fact.sum_log_prec + np.where(bits, -design.log_prec[:P], design.log_prec[:P])
    out, ok = _finish(fact, quad, logdet, slp, ok)
    _repair(fact, np.arange(P), ok, out, np.arange(P))
    return out


def _repair(fact, idx, ok, out, where):
    if ok.all():
        return
    for q in np.flatnonzero(~ok):
        out[where[q]] = _dense_flip(fact, idx[q])


def conditional_pips(fact, h, indices=None):
    """p(γ_k = 1 | γ_{-k}, ·) for each covariate in ``indices`` (all when ``None``)."""
    flipped = flip_logliks(fact, indices)
    on = fact.gamma.bits if indices is None else fact.gamma.bits[indices]
    return pips_from_logliks(fact.base_loglik, flipped, on, h)


class Neighbourhood:
    """Log likelihoods of γ and of its single-flip neighbours, conditional PIPs and β̂ of γ."""

    __slots__ = ("base", "flipped", "pips", "beta", "finv_diag", "quad", "active_idx", "indices")

    def __init__(self, base, flipped, pips, beta, finv_diag, quad, active_idx, indices):
        self.base = base
        self.flipped = flipped
        self.pips = pips
        self.beta = beta
        self.finv_diag = finv_diag
        self.quad = quad
        self.active_idx = active_idx
        self.indices = indices

    def with_prior(self, gamma, h):
        """Same likelihoods, conditional PIPs recomputed under a new prior inclusion probability."""
        on = gamma.bits if self.indices is None else gamma.bits[self.indices]
        return Neighbourhood(self.base, self.flipped, pips_from_logliks(self.base, self.flipped, on, h),
                             self.beta, self.finv_diag, self.quad, self.active_idx, self.indices)

    def linear_predictor(self, design):
        if self.active_idx.size == 0:
            return np.zeros(design.N)
        return design.Xb[:, self.active_idx] @ self.beta


def pips_from_logliks(base, flipped, on, h):
    log_odds = np.where(on, base - flipped, flipped - base) + math.log(h / (1.0 - h))
    return np.clip(expit(log_odds), PIP_FLOOR, 1.0 - PIP_FLOOR)


def neighbourhood(design, gamma, kz, h, indices=None, implementation=None):
    """Evaluate γ and all its single flips over ``indices`` (all covariates when ``None``).

    Uses the compiled kernel when available. Entries the kernel flags as
    numerically unreliable, and Gram matrices it cannot factor, are handled by
    the jittered factorization and the dense path. With a precomputed Gram
    matrix the BLAS-based factorization path is used instead.
    """
    I = design.active_columns(gamma)
    if design.gram is not None:
        fact = build_factorization(design, gamma, kz)
        flipped = flip_logliks(fact, indices)
        on = gamma.bits if indices is None else gamma.bits[indices]
        return Neighbourhood(fact.base_loglik, flipped,
                             pips_from_logliks(fact.base_loglik, flipped, on, h),
                             fact.beta, fact.finv_diag, fact.quad, I, indices)
    if indices is None:
        idx = design.all_covariates
        z_idx = kz.z_at(slice(0, design.P))
        colsq_idx = kz.col_sq_at(slice(0, design.P))
        on = gamma.bits.view(np.uint8)
    else:
        idx = np.asarray(indices, dtype=np.int64)
        z_idx = kz.z_at(idx)
        colsq_idx = kz.col_sq_at(idx)
        on = gamma.bits[idx].view(np.uint8)
    w = design.ones if kz.omega is None else kz.omega
    linear = design.kind is Likelihood.LINEAR
    yty = kz.yty if linear else 0.0
    pos = design.pos_scratch
    log_prior_odds = math.log(h / (1.0 - h))
    status, base, flipped, ok, beta, pips, finv_diag, quad = _pg.kernels(implementation).neighbour_logliks(
        design.Xf, w, I, design.prec, kz.z_at(I), idx, z_idx, colsq_idx,
        linear, yty, kz.quad_offset_terms, pos, on, log_prior_odds)
    if status != 0:
        fact = build_factorization(design, gamma, kz)
        flipped = flip_logliks(fact, indices)
        return Neighbourhood(fact.base_loglik, flipped,
                             pips_from_logliks(fact.base_loglik, flipped, on.view(bool), h),
                             fact.beta, fact.finv_diag, fact.quad, I, indices)
    if not ok.all():
        fact = build_factorization(design, gamma, kz)
        bad = np.flatnonzero(ok == 0)
        flipped[bad] = flip_logliks(fact, idx[bad])
        pips[bad] = pips_from_logliks(base, flipped[bad], on[bad].view(bool), h)
    return Neighbourhood(base, flipped, pips, beta, finv_diag, quad, I, indices)
