# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled sampling kernels.

Every routine draws from the numpy ``Generator`` it is handed, through the
bit generator's C interface, using the same primitives (and in the same
order) as the pure-Python twin in :mod:`bvselect._kernels_py`. For a given
generator state both implementations return identical values.
"""
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport M_PI, cosh, erfc, exp, fabs, log, sqrt, tanh

import numpy as np

cimport numpy as cnp
from numpy.random cimport bitgen_t
from scipy.linalg.cython_blas cimport dgemm
from numpy.random.c_distributions cimport (
    random_standard_exponential,
    random_standard_gamma,
    random_standard_normal,
    random_standard_uniform,
)

cnp.import_array()

cdef double TRUNC = 0.64
cdef double PISQ = M_PI * M_PI
cdef int GAMMA_SUM_TERMS = 200
cdef int MAX_EXACT_SHAPE = 16
cdef double PIP_FLOOR = 1e-12

IMPLEMENTATION = "compiled"


cdef inline bitgen_t* _bitgen(object rng) except NULL:
    capsule = rng.bit_generator.capsule
    return <bitgen_t*> PyCapsule_GetPointer(capsule, "BitGenerator")


cdef inline double _pnorm(double x) nogil:
    return 0.5 * erfc(-x / sqrt(2.0))


cdef inline double _a_coef(int n, double x) nogil:
    cdef double k = (n + 0.5) * M_PI
    if x > TRUNC:
        return k * exp(-0.5 * k * k * x)
    if x > 0.0:
        return exp(-1.5 * (log(0.5 * M_PI) + log(x)) + log(k) - 2.0 * (n + 0.5) * (n + 0.5) / x)
    return 0.0


cdef inline double _mass_texpon(double z) nogil:
    cdef double fz = 0.125 * PISQ + 0.5 * z * z
    cdef double rt = sqrt(1.0 / TRUNC)
    cdef double b = rt * (TRUNC * z - 1.0)
    cdef double a = -rt * (TRUNC * z + 1.0)
    cdef double x0 = log(fz) + fz * TRUNC
    cdef double xb = x0 - z + log(_pnorm(b))
    cdef double xa = x0 + z + log(_pnorm(a))
    cdef double qdivp = 4.0 / M_PI * (exp(xb) + exp(xa))
    return 1.0 / (1.0 + qdivp)


cdef double _rtigauss(bitgen_t* bg, double z) nogil:
    # inverse Gaussian(mean 1/z, shape 1) truncated to (0, TRUNC)
    cdef double x = TRUNC + 1.0
    cdef double mu, e1, e2, alpha, y
    if z < 1.0 / TRUNC:
        while True:
            while True:
                e1 = random_standard_exponential(bg)
                e2 = random_standard_exponential(bg)
                if e1 * e1 <= 2.0 * e2 / TRUNC:
                    break
            x = TRUNC / ((1.0 + TRUNC * e1) * (1.0 + TRUNC * e1))
            alpha = exp(-0.5 * z * z * x)
            if random_standard_uniform(bg) <= alpha:
                break
    else:
        mu = 1.0 / z
        while x > TRUNC:
            y = random_standard_normal(bg)
            y = y * y
            x = mu + 0.5 * mu * mu * y - 0.5 * mu * sqrt(4.0 * mu * y + (mu * y) * (mu * y))
            if random_standard_uniform(bg) > mu / (mu + x):
                x = mu * mu / x
    return x


cdef double _pg1(bitgen_t* bg, double c) nogil:
    cdef double z = 0.5 * fabs(c)
    cdef double fz = 0.125 * PISQ + 0.5 * z * z
    cdef double p_exp = _mass_texpon(z)
    cdef double x, s, y
    cdef int n
    while True:
        if random_standard_uniform(bg) < p_exp:
            x = TRUNC + random_standard_exponential(bg) / fz
        else:
            x = _rtigauss(bg, z)
        s = _a_coef(0, x)
        y = random_standard_uniform(bg) * s
        n = 0
        while True:
            n += 1
            if n % 2 == 1:
                s -= _a_coef(n, x)
                if y <= s:
                    return 0.25 * x
            else:
                s += _a_coef(n, x)
                if y > s:
                    break


cdef double _unit_mean(double c) nogil:
    # E[PG(1, c)]
    c = fabs(c)
    if c < 1e-8:
        return 0.25
    return tanh(0.5 * c) / (2.0 * c)


cdef double _unit_var(double c) nogil:
    # Var[PG(1, c)] = (sinh c - c) / (4 c^3 cosh^2(c/2))
    cdef double c2, term, acc, ch
    cdef int k
    c = fabs(c)
    ch = cosh(0.5 * c)
    if c < 1.0:
        # (sinh c - c) / c^3 as a power series
        c2 = c * c
        term = 1.0 / 6.0
        acc = term
        for k in range(1, 12):
            term *= c2 / ((2 * k + 2) * (2 * k + 3))
            acc += term
        return acc / (4.0 * ch * ch)
    return (2.0 * tanh(0.5 * c) - c / (ch * ch)) / (4.0 * c * c * c)


cdef double _pg_gamma_sum(bitgen_t* bg, double b, double c) nogil:
    cdef double a2 = (c / (2.0 * M_PI)) * (c / (2.0 * M_PI))
    cdef double s = 0.0, m1 = 0.0, m2 = 0.0, d, tail_m, tail_v
    cdef int k
    for k in range(1, GAMMA_SUM_TERMS + 1):
        d = (k - 0.5) * (k - 0.5) + a2
        s += random_standard_gamma(bg, b) / d
        m1 += 1.0 / d
        m2 += 1.0 / (d * d)
    s /= 2.0 * PISQ
    tail_m = _unit_mean(c) - m1 / (2.0 * PISQ)
    tail_v = _unit_var(c) - m2 / (4.0 * PISQ * PISQ)
    if tail_m > 0.0 and tail_v > 0.0:
        s += (tail_v / tail_m) * random_standard_gamma(bg, b * tail_m * tail_m / tail_v)
    return s


cdef double _pg(bitgen_t* bg, double b, double c) nogil:
    cdef double out = 0.0
    cdef int j, nb
    if b == 1.0:
        return _pg1(bg, c)
    nb = <int> b
    if nb == b and nb <= MAX_EXACT_SHAPE:
        for j in range(nb):
            out += _pg1(bg, c)
        return out
    return _pg_gamma_sum(bg, b, c)


def pg_draw(double b, double c, rng):
    cdef bitgen_t* bg = _bitgen(rng)
    with rng.bit_generator.lock:
        return _pg(bg, b, c)


def pg_draw_vector(const double[::1] b, const double[::1] c, rng):
    cdef Py_ssize_t n = b.shape[0], i
    cdef bitgen_t* bg = _bitgen(rng)
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with rng.bit_generator.lock, nogil:
        for i in range(n):
            o[i] = _pg(bg, b[i], c[i])
    return out


def sample_free_slots(const cnp.int64_t[::1] forced, Py_ssize_t n_total, Py_ssize_t n_free,
                      cnp.uint8_t[::1] mask, rng):
    """Floyd sampling of ``n_free`` distinct indices from ``range(n_total)`` minus ``forced``.

    ``forced`` must be sorted and ``mask`` a zeroed scratch buffer of length
    ``n_total``; it is returned zeroed.
    """
    cdef Py_ssize_t n_pool = n_total - forced.shape[0]
    cdef Py_ssize_t j, r, idx, f, q
    cdef bitgen_t* bg = _bitgen(rng)
    ranks = np.empty(n_free, dtype=np.int64)
    cdef cnp.int64_t[::1] rk = ranks
    with rng.bit_generator.lock, nogil:
        q = 0
        for j in range(n_pool - n_free, n_pool):
            r = <Py_ssize_t> (random_standard_uniform(bg) * (j + 1))
            if mask[r]:
                r = j
            mask[r] = 1
            rk[q] = r
            q += 1
        for q in range(n_free):
            mask[rk[q]] = 0
        # rank within the complement -> covariate index
        for q in range(n_free):
            idx = rk[q]
            for f in range(forced.shape[0]):
                if forced[f] <= idx:
                    idx += 1
                else:
                    break
            rk[q] = idx
    return ranks


cdef double _loglik(bint linear, double quad, double logdet, double slp, double yty,
                    double n, double const) nogil:
    if linear:
        return 0.5 * slp - 0.5 * logdet - 0.5 * n * log(yty - quad) + const
    return 0.5 * quad - 0.5 * logdet + 0.5 * slp + const


cdef inline double _pip(double base, double flipped, bint on, double log_prior_odds) nogil:
    cdef double lo = (base - flipped if on else flipped - base) + log_prior_odds
    cdef double p
    if lo >= 0.0:
        p = 1.0 / (1.0 + exp(-lo))
    else:
        p = exp(lo)
        p = p / (1.0 + p)
    if p < PIP_FLOOR:
        return PIP_FLOOR
    if p > 1.0 - PIP_FLOOR:
        return 1.0 - PIP_FLOOR
    return p


def neighbour_logliks(const double[::1, :] Xf, const double[::1] w, const cnp.int64_t[::1] active,
                      const double[::1] prec, const double[::1] z_active, const cnp.int64_t[::1] idx,
                      const double[::1] z_idx, const double[::1] colsq_idx, bint linear, double yty,
                      double const, cnp.int64_t[::1] pos, cnp.uint8_t[::1] on,
                      double log_prior_odds):
    """Log likelihood of γ and of every single flip ``γ ⊕ e_k`` for ``k`` in ``idx``.

    ``active`` holds the active columns of ``Xf`` (covariates then intercept),
    ``w`` the row weights (ω, or ones), ``pos`` a scratch array of length
    ``Xf.shape[1]`` filled with -1 and returned that way. Returns ``(status,
    base, flipped, ok, beta, pips, finv_diag, quad)``; a nonzero status means the Gram matrix
    did not factor and nothing else is valid. ``ok[q] == 0`` flags an entry
    whose rank-1 evaluation lost too much precision. ``pips`` are the clamped
    conditional inclusion probabilities given the flags ``on = γ[idx]``.
    """
    cdef Py_ssize_t n = Xf.shape[0], m = active.shape[0], nk = idx.shape[0]
    cdef Py_ssize_t a, b, r, q, k, p
    cdef int info = 0
    cdef double acc, quad = 0.0, logdet = 0.0, slp = 0.0, base, g, wv, gbase, fkk, bb
    cdef double tol = 1e-10
    W_arr = np.empty((m, n), dtype=np.float64)
    B_arr = np.zeros((m, n), dtype=np.float64)
    G_arr = np.zeros((m, m), dtype=np.float64)
    cross_arr = np.empty(m, dtype=np.float64)
    ztil_arr = np.empty(m, dtype=np.float64)
    beta = np.zeros(m, dtype=np.float64)
    finv_arr = np.zeros(m, dtype=np.float64)
    flipped = np.empty(nk, dtype=np.float64)
    ok = np.ones(nk, dtype=np.uint8)
    pips = np.empty(nk, dtype=np.float64)
    cdef double[::1] pv = pips
    cdef double[:, ::1] W = W_arr, B = B_arr, G = G_arr
    cdef double[::1] cross = cross_arr, ztil = ztil_arr, bt = beta, fd = finv_arr, fl = flipped
    cdef cnp.uint8_t[::1] okv = ok
    cdef bint contiguous = nk > 0
    cdef double[::1, :] Xg
    cdef double[::1, :] C
    cdef const double* xk
    cdef char trans_t = b'T'
    cdef char trans_n = b'N'
    cdef int bn = <int> n, bm = <int> m, bk = <int> nk
    cdef double one = 1.0, zero = 0.0
    for q in range(1, nk):
        if idx[q] != idx[0] + q:
            contiguous = False
            break
    if nk > 0 and not contiguous:
        Xg_arr = np.empty((n, nk), dtype=np.float64, order="F")
        Xg = Xg_arr
    C_arr = np.empty((max(nk, 1), max(m, 1)), dtype=np.float64, order="F")
    C = C_arr
    with nogil:
        for a in range(m):
            for r in range(n):
                W[a, r] = w[r] * Xf[r, active[a]]
        # G is stored row-major, so its lower triangle here is LAPACK's upper one
        for a in range(m):
            for b in range(a + 1):
                acc = 0.0
                for r in range(n):
                    acc = acc + Xf[r, active[a]] * W[b, r]
                G[a, b] = acc
            G[a, a] += prec[active[a]]
            slp += log(prec[active[a]])
        # in-place Cholesky, lower factor L in G's lower triangle
        for b in range(m):
            acc = G[b, b]
            for a in range(b):
                acc = acc - G[b, a] * G[b, a]
            if acc <= 0.0:
                info = 1
                break
            G[b, b] = sqrt(acc)
            logdet += 2.0 * log(G[b, b])
            for a in range(b + 1, m):
                acc = G[a, b]
                for r in range(b):
                    acc = acc - G[a, r] * G[b, r]
                G[a, b] = acc / G[b, b]
    if info != 0:
        return 1, 0.0, flipped, ok, beta, pips, finv_arr, 0.0
    with nogil:
        # invert L in place (lower triangle)
        for b in range(m):
            G[b, b] = 1.0 / G[b, b]
            for a in range(b + 1, m):
                acc = 0.0
                for r in range(b, a):
                    acc = acc - G[a, r] * G[r, b]
                G[a, b] = acc / G[a, a]
        for a in range(m):
            acc = 0.0
            for b in range(a + 1):
                acc = acc + G[a, b] * z_active[b]
            ztil[a] = acc
            quad += acc * acc
        for b in range(m):
            acc = 0.0
            bb = 0.0
            for a in range(b, m):
                acc = acc + G[a, b] * ztil[a]
                bb = bb + G[a, b] * G[a, b]
            bt[b] = acc
            fd[b] = bb
        # B = (W^T L^-T)^T, row a is (L^-1 W)[a]
        for a in range(m):
            for b in range(a + 1):
                acc = G[a, b]
                for r in range(n):
                    B[a, r] += acc * W[b, r]
        base = _loglik(linear, quad, logdet, slp, yty, n, const)
        # C[q, a] = <X[:, idx[q]], B[a]> for every candidate, as one matrix product
        if nk > 0 and m > 0:
            if contiguous:
                xk = &Xf[0, idx[0]]
            else:
                for q in range(nk):
                    for r in range(n):
                        Xg[r, q] = Xf[r, idx[q]]
                xk = &Xg[0, 0]
            dgemm(&trans_t, &trans_n, &bk, &bm, &bn, &one, <double*> xk, &bn, &B[0, 0], &bn,
                  &zero, &C[0, 0], &bk)
        for a in range(m):
            pos[active[a]] = a
        for q in range(nk):
            k = idx[q]
            p = pos[k]
            if p >= 0:
                fkk = fd[p]
                if fkk <= 0.0:
                    okv[q] = 0
                    fl[q] = 0.0
                    continue
                wv = quad - bt[p] * bt[p] / fkk
                g = logdet + log(fkk)
                if linear and yty - wv <= tol * yty:
                    okv[q] = 0
                    fl[q] = 0.0
                    continue
                fl[q] = _loglik(linear, wv, g, slp - log(prec[k]), yty, n, const)
            else:
                gbase = colsq_idx[q] + prec[k]
                g = gbase
                wv = -z_idx[q]
                for a in range(m):
                    acc = C[q, a]
                    g = g - acc * acc
                    wv = wv + acc * ztil[a]
                if g <= tol * gbase:
                    okv[q] = 0
                    fl[q] = 0.0
                    continue
                acc = quad + wv * wv / g
                if linear and yty - acc <= tol * yty:
                    okv[q] = 0
                    fl[q] = 0.0
                    continue
                fl[q] = _loglik(linear, acc, logdet + log(g), slp + log(prec[k]), yty, n, const)
        for a in range(m):
            pos[active[a]] = -1
        for q in range(nk):
            pv[q] = _pip(base, fl[q], on[q], log_prior_odds)
    return 0, base, flipped, ok, beta, pips, finv_arr, quad


def tempered_cumsum(const double[::1] pips, const cnp.uint8_t[::1] on, double eps_over_p,
                    int variant, const double[::1] u, double scale, double[::1] out):
    """Cumulative tempering masses of every coordinate written to ``out``; returns the total.

    ``variant`` is 0 (wTGS), 1 (TGS) or 2 (wGS). ``u`` (or None) multiplies
    each mass, and ``scale`` multiplies all of them.
    """
    cdef Py_ssize_t n = pips.shape[0], k
    cdef double acc = 0.0, p, m
    cdef bint has_u = u is not None
    for k in range(n):
        p = pips[k]
        if variant == 2:
            m = p + eps_over_p
        else:
            m = 0.5 if variant == 1 else 0.5 * (p + eps_over_p)
            m /= p if on[k] else 1.0 - p
        if has_u:
            m *= u[k]
        acc += m * scale
        out[k] = acc
    return acc
