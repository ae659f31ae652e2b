"""Pure-Python twin of the compiled kernels in ``_kernels.pyx``.

Scalar ``Generator`` methods map one-to-one onto the C primitives used by the
compiled code (``random`` -> next_double, ``standard_exponential``,
``standard_normal`` and ``standard_gamma`` -> the ziggurat/Marsaglia routines
in numpy's distribution library), so for a given generator state both
implementations consume the same stream and return the same numbers.
"""
import math

import numpy as np
from scipy.special import expit

TRUNC = 0.64
PISQ = math.pi * math.pi
GAMMA_SUM_TERMS = 200
MAX_EXACT_SHAPE = 16
PIP_FLOOR = 1e-12

IMPLEMENTATION = "python"


def _pnorm(x):
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def _log(x):
    return math.log(x) if x > 0.0 else -math.inf


def _a_coef(n, x):
    k = (n + 0.5) * math.pi
    if x > TRUNC:
        return k * math.exp(-0.5 * k * k * x)
    if x > 0.0:
        return math.exp(-1.5 * (math.log(0.5 * math.pi) + math.log(x)) + math.log(k)
                        - 2.0 * (n + 0.5) * (n + 0.5) / x)
    return 0.0


def _mass_texpon(z):
    fz = 0.125 * PISQ + 0.5 * z * z
    rt = math.sqrt(1.0 / TRUNC)
    b = rt * (TRUNC * z - 1.0)
    a = -rt * (TRUNC * z + 1.0)
    x0 = math.log(fz) + fz * TRUNC
    xb = x0 - z + _log(_pnorm(b))
    xa = x0 + z + _log(_pnorm(a))
    qdivp = 4.0 / math.pi * (math.exp(xb) + math.exp(xa))
    return 1.0 / (1.0 + qdivp)


def _rtigauss(rng, z):
    x = TRUNC + 1.0
    if z < 1.0 / TRUNC:
        while True:
            while True:
                e1 = rng.standard_exponential()
                e2 = rng.standard_exponential()
                if e1 * e1 <= 2.0 * e2 / TRUNC:
                    break
            x = TRUNC / ((1.0 + TRUNC * e1) * (1.0 + TRUNC * e1))
            alpha = math.exp(-0.5 * z * z * x)
            if rng.random() <= alpha:
                break
    else:
        mu = 1.0 / z
        while x > TRUNC:
            y = rng.standard_normal()
            y = y * y
            x = mu + 0.5 * mu * mu * y - 0.5 * mu * math.sqrt(4.0 * mu * y + (mu * y) * (mu * y))
            if rng.random() > mu / (mu + x):
                x = mu * mu / x
    return x


def _pg1(rng, c):
    z = 0.5 * abs(c)
    fz = 0.125 * PISQ + 0.5 * z * z
    p_exp = _mass_texpon(z)
    while True:
        if rng.random() < p_exp:
            x = TRUNC + rng.standard_exponential() / fz
        else:
            x = _rtigauss(rng, z)
        s = _a_coef(0, x)
        y = rng.random() * s
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


def _unit_mean(c):
    c = abs(c)
    if c < 1e-8:
        return 0.25
    return math.tanh(0.5 * c) / (2.0 * c)


def _unit_var(c):
    c = abs(c)
    ch = math.cosh(0.5 * c)
    if c < 1.0:
        c2 = c * c
        term = 1.0 / 6.0
        acc = term
        for k in range(1, 12):
            term *= c2 / ((2 * k + 2) * (2 * k + 3))
            acc += term
        return acc / (4.0 * ch * ch)
    return (2.0 * math.tanh(0.5 * c) - c / (ch * ch)) / (4.0 * c * c * c)


def _pg_gamma_sum(rng, b, c):
    a2 = (c / (2.0 * math.pi)) * (c / (2.0 * math.pi))
    s = m1 = m2 = 0.0
    for k in range(1, GAMMA_SUM_TERMS + 1):
        d = (k - 0.5) * (k - 0.5) + a2
        s += rng.standard_gamma(b) / d
        m1 += 1.0 / d
        m2 += 1.0 / (d * d)
    s /= 2.0 * PISQ
    tail_m = _unit_mean(c) - m1 / (2.0 * PISQ)
    tail_v = _unit_var(c) - m2 / (4.0 * PISQ * PISQ)
    if tail_m > 0.0 and tail_v > 0.0:
        s += (tail_v / tail_m) * rng.standard_gamma(b * tail_m * tail_m / tail_v)
    return s


def _pg(rng, b, c):
    if b == 1.0:
        return _pg1(rng, c)
    nb = int(b)
    if nb == b and nb <= MAX_EXACT_SHAPE:
        out = 0.0
        for _ in range(nb):
            out += _pg1(rng, c)
        return out
    return _pg_gamma_sum(rng, b, c)


def pg_draw(b, c, rng):
    return _pg(rng, float(b), float(c))


def pg_draw_vector(b, c, rng):
    out = np.empty(len(b), dtype=np.float64)
    for i in range(len(b)):
        out[i] = _pg(rng, float(b[i]), float(c[i]))
    return out


def sample_free_slots(forced, n_total, n_free, mask, rng):
    n_pool = n_total - len(forced)
    chosen = set()
    ranks = []
    for j in range(n_pool - n_free, n_pool):
        r = int(rng.random() * (j + 1))
        if r in chosen:
            r = j
        chosen.add(r)
        ranks.append(r)
    out = np.empty(n_free, dtype=np.int64)
    for q, idx in enumerate(ranks):
        for f in forced:
            if f <= idx:
                idx += 1
            else:
                break
        out[q] = idx
    return out


def neighbour_logliks(Xf, w, active, prec, z_active, idx, z_idx, colsq_idx, linear, yty,
                      const, pos, on, log_prior_odds):
    n = Xf.shape[0]
    m = active.size
    nk = idx.size
    flipped = np.zeros(nk)
    ok = np.ones(nk, dtype=np.uint8)
    XI = Xf[:, active]
    WI = XI * w[:, None]
    G = XI.T @ WI + np.diag(prec[active])
    slp = float(np.log(prec[active]).sum())
    try:
        L = np.linalg.cholesky(G) if m else G
    except np.linalg.LinAlgError:
        return 1, 0.0, flipped, ok, np.zeros(m), np.zeros(nk), np.zeros(m), 0.0
    logdet = 2.0 * float(np.log(L.diagonal()).sum())
    Linv = np.linalg.inv(L) if m else L
    ztil = Linv @ z_active
    quad = float(ztil @ ztil)
    beta = Linv.T @ ztil
    fd = np.einsum("ij,ij->j", Linv, Linv)
    B = Linv @ WI.T

    def loglik(q, ld, s):
        if linear:
            return 0.5 * s - 0.5 * ld - 0.5 * n * np.log(yty - q) + const
        return 0.5 * q - 0.5 * ld + 0.5 * s + const

    base = float(loglik(quad, logdet, slp))
    pos[active] = np.arange(m)
    p = pos[idx]
    pos[active] = -1
    on = p >= 0
    tol = 1e-10
    if on.any():
        fkk = fd[p[on]]
        good = fkk > 0
        fkk = np.where(good, fkk, 1.0)
        qd = quad - beta[p[on]] ** 2 / fkk
        if linear:
            good &= yty - qd > tol * yty
            qd = np.where(good, qd, 0.0)
        flipped[on] = np.where(good, loglik(qd, logdet + np.log(fkk),
                                            slp - np.log(prec[idx[on]])), 0.0)
        ok[on] = good
    off = ~on
    if off.any():
        koff = idx[off]
        cross = Xf[:, koff].T @ B.T
        gbase = colsq_idx[off] + prec[koff]
        g = gbase - np.einsum("ij,ij->i", cross, cross)
        wv = cross @ ztil - z_idx[off]
        good = g > tol * gbase
        g = np.where(good, g, 1.0)
        qa = quad + wv * wv / g
        if linear:
            good &= yty - qa > tol * yty
            qa = np.where(good, qa, 0.0)
        flipped[off] = np.where(good, loglik(qa, logdet + np.log(g),
                                             slp + np.log(prec[koff])), 0.0)
        ok[off] = good
    pips = pips_from_logliks(base, flipped, on, log_prior_odds)
    return 0, base, flipped, ok, beta, pips, fd, quad


def pips_from_logliks(base, flipped, on, log_prior_odds):
    log_odds = np.where(on, base - flipped, flipped - base) + log_prior_odds
    return np.clip(expit(log_odds), PIP_FLOOR, 1.0 - PIP_FLOOR)


def tempered_cumsum(pips, on, eps_over_p, variant, u, scale, out):
    """Cumulative tempering masses of every coordinate written to ``out``; returns the total."""
    if variant == 2:
        m = pips + eps_over_p
    else:
        num = 0.5 if variant == 1 else 0.5 * (pips + eps_over_p)
        m = num / np.where(on, pips, 1.0 - pips)
    if u is not None:
        m = m * u
    np.cumsum(m * scale, out=out)
    return float(out[-1]) if out.size else 0.0
