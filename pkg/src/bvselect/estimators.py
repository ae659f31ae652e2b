"""Weight normalization, PIP estimators, coefficient summaries and chain diagnostics.

Samplers feed a :class:`WeightedAccumulator` one retained iteration at a
time, so nothing of size T x P is ever stored. The array-based estimator
functions are the same estimators written out over stored traces; they are
used for small runs and tests.
"""
import numpy as np

from .core import EmptyChain


def normalize_weights(rho_tilde):
    """ρ = ρ̃ / Σρ̃."""
    rho_tilde = np.asarray(rho_tilde, dtype=np.float64)
    if rho_tilde.size == 0:
        raise EmptyChain("no retained samples to normalize")
    if np.any(rho_tilde <= 0) or not np.all(np.isfinite(rho_tilde)):
        raise ValueError("unnormalized weights must be positive and finite")
    return rho_tilde / rho_tilde.sum()


def pip_rb(cond_pips, weights):
    """Rao-Blackwellized PIPs: Σ_t ρ_t p(γ_i = 1 | γ_{-i}^{(t)}).

    :param cond_pips: T x P array of conditional PIPs at the retained states
    :param weights: unnormalized or normalized weights of length T
    """
    rho = normalize_weights(weights)
    return rho @ np.asarray(cond_pips, dtype=np.float64)


def pip_raw(gammas, weights):
    """Naive PIPs: Σ_t ρ_t γ_i^{(t)}."""
    rho = normalize_weights(weights)
    return rho @ np.asarray(gammas, dtype=np.float64)


def pip_partial_rb(gammas, cond_pips, in_subset, weights):
    """Partially Rao-Blackwellized PIPs for subset chains.

    Uses the conditional PIP where ``in_subset[t, i]`` holds and the raw
    indicator otherwise; entries of ``cond_pips`` outside the subset are ignored.
    """
    rho = normalize_weights(weights)
    mask = np.asarray(in_subset, dtype=bool)
    vals = np.where(mask, np.nan_to_num(np.asarray(cond_pips, dtype=np.float64)),
                    np.asarray(gammas, dtype=np.float64))
    return rho @ vals


def weighted_quantiles(values, weights, qs):
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise EmptyChain("no retained samples")
    order = np.argsort(values, kind="stable")
    w = normalize_weights(weights)[order]
    mid = np.cumsum(w) - 0.5 * w
    return np.interp(qs, mid, values[order])


class WeightedAccumulator:
    """Running weighted sums over retained iterations.

    Raw inclusion sums are kept with interval bookkeeping: each covariate
    remembers the cumulative weight at which it last switched on, so an
    iteration costs O(|γ| + number of conditional PIPs folded in) rather
    than O(P).

    :param P: number of covariates
    :param n_coef: length of the coefficient vector (P, or P+1 with an intercept)
    """

    def __init__(self, P, n_coef=None):
        self.P = P
        self.n_coef = P if n_coef is None else n_coef
        self.n = 0
        self.n_chains = 1
        self.sum_w = 0.0
        self.weight_sq_sum = 0.0
        self.pip_numerator = np.zeros(P)
        self.raw_numerator = np.zeros(P)
        self.beta_numerator = np.zeros(self.n_coef)
        self.beta_sq_numerator = np.zeros(self.n_coef)
        self.h_sum = self.h_sq = 0.0
        self.nu_sum = self.nu_sq = 0.0
        self._on_since = np.zeros(P)
        self._open = np.zeros(P, dtype=bool)
        self._closed = False

    # raw indicator bookkeeping -------------------------------------------------
    def start(self, gamma_bits):
        self._open[:] = gamma_bits
        self._on_since[:] = 0.0

    def switch(self, k, on):
        """Covariate ``k`` flipped before the next :meth:`add`."""
        if on:
            self._on_since[k] = self.sum_w
            self._open[k] = True
        else:
            self.raw_numerator[k] += self.sum_w - self._on_since[k]
            self._open[k] = False

    def add(self, w, pips=None, subset=None, gamma_bits=None, coef_idx=None, coef=None,
            coef_var=None, h=None, nu=None):
        """Fold in one retained iteration with unnormalized weight ``w``.

        ``pips`` are conditional PIPs over ``subset`` (all covariates when
        ``subset`` is None); outside the subset the raw indicator is used.
        """
        if pips is not None:
            if subset is None:
                self.pip_numerator += w * pips
            else:
                self.pip_numerator[subset] += w * (pips - gamma_bits[subset])
        if coef_idx is not None and coef_idx.size:
            self.beta_numerator[coef_idx] += w * coef
            self.beta_sq_numerator[coef_idx] += w * (coef * coef + coef_var)
        if h is not None:
            self.h_sum += w * h
            self.h_sq += w * h * h
        if nu is not None:
            self.nu_sum += w * nu
            self.nu_sq += w * nu * nu
        self.sum_w += w
        self.weight_sq_sum += w * w
        self.n += 1

    def close(self):
        """Flush open inclusion intervals; call once after the last :meth:`add`."""
        if not self._closed:
            self.raw_numerator[self._open] += self.sum_w - self._on_since[self._open]
            self._closed = True
        return self

    def _require(self):
        if self.n == 0 or self.sum_w <= 0:
            raise EmptyChain("accumulator holds no retained samples")
        self.close()

    # estimates -----------------------------------------------------------------
    def pip_raw(self):
        self._require()
        return np.clip(self.raw_numerator / self.sum_w, 0.0, 1.0)

    def pip(self, partial=False):
        """Rao-Blackwellized PIP; with ``partial`` the raw sums fill in outside the subsets."""
        self._require()
        num = self.pip_numerator + (self.raw_numerator if partial else 0.0)
        return np.clip(num / self.sum_w, 0.0, 1.0)

    def running_pip(self, partial=True):
        """Current estimate without closing the open inclusion intervals."""
        if self.sum_w <= 0:
            return np.zeros(self.P)
        raw = self.raw_numerator.copy()
        if not self._closed:
            raw[self._open] += self.sum_w - self._on_since[self._open]
        num = self.pip_numerator + (raw if partial else 0.0)
        return num / self.sum_w

    def beta_mean(self):
        """Model-averaged posterior mean (coefficients of excluded covariates count as 0)."""
        self._require()
        return self.beta_numerator / self.sum_w

    def beta_conditional(self):
        """Posterior mean and sd of each coefficient conditional on its inclusion."""
        self._require()
        incl = np.append(self.raw_numerator, np.full(self.n_coef - self.P, self.sum_w))
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = np.where(incl > 0, self.beta_numerator / incl, np.nan)
            second = np.where(incl > 0, self.beta_sq_numerator / incl, np.nan)
        sd = np.sqrt(np.maximum(second - mean * mean, 0.0))
        return mean, sd

    def h_moments(self):
        self._require()
        m = self.h_sum / self.sum_w
        return m, np.sqrt(max(self.h_sq / self.sum_w - m * m, 0.0))

    def nu_moments(self):
        self._require()
        m = self.nu_sum / self.sum_w
        return m, np.sqrt(max(self.nu_sq / self.sum_w - m * m, 0.0))

    def weight_variance(self):
        """Variance of the mean-normalized weights ρ̃ / mean(ρ̃)."""
        self._require()
        mean = self.sum_w / self.n
        return self.weight_sq_sum / self.n / (mean * mean) - 1.0

    # combination -----------------------------------------------------------------
    def merge(self, other):
        """Combine two chains' accumulators, giving every chain equal total weight.

        Each operand is rescaled so that its weight sum equals the number of
        chains it already represents, then sums are added; the operation is
        associative and commutative up to floating-point reassociation.
        """
        if self.P != other.P or self.n_coef != other.n_coef:
            raise ValueError("accumulators have different dimensions")
        a, b = self.close(), other.close()
        out = WeightedAccumulator(self.P, self.n_coef)
        sa = a.n_chains / a.sum_w
        sb = b.n_chains / b.sum_w
        for name in ("pip_numerator", "raw_numerator", "beta_numerator", "beta_sq_numerator"):
            setattr(out, name, getattr(a, name) * sa + getattr(b, name) * sb)
        for name in ("h_sum", "h_sq", "nu_sum", "nu_sq"):
            setattr(out, name, getattr(a, name) * sa + getattr(b, name) * sb)
        out.sum_w = a.sum_w * sa + b.sum_w * sb
        out.weight_sq_sum = a.weight_sq_sum * sa * sa + b.weight_sq_sum * sb * sb
        out.n = a.n + b.n
        out.n_chains = a.n_chains + b.n_chains
        out._closed = True
        return out


def diagnostics(output):
    """Summary record of a finished chain (or merged chains)."""
    acc = output.accumulator
    rec = {
        "retained": int(acc.n),
        "chains": int(acc.n_chains),
        "weight_variance": float(acc.weight_variance()),
        "max_weight": float(output.max_weight),
        "omega_accept_rate": None if output.omega_accept_rate is None else float(output.omega_accept_rate),
        "zero_state_fraction": None if output.zero_state_fraction is None else float(output.zero_state_fraction),
        "flip_counts": np.asarray(output.flip_counts).tolist(),
    }
    if output.xi_final is not None:
        rec["xi_final"] = float(output.xi_final)
    return rec


class ChainOutput:
    """Result of one chain (or of several merged chains).

    ``pip`` is the estimator appropriate to the sampler: Rao-Blackwellized
    for full samplers and partially Rao-Blackwellized for subset samplers.
    ``weights`` are the unnormalized weights ρ̃ of the retained iterations.
    """

    def __init__(self, accumulator, partial, weights, h_draws=None, nu_draws=None,
                 omega_accept_rate=None, xi_final=None, zero_state_fraction=None,
                 flip_counts=None, max_weight=float("nan"), samples=None, trace=None,
                 anchor=None, intercept=False):
        self.accumulator = accumulator
        self.partial = partial
        self.weights = weights
        self.h_draws = h_draws
        self.nu_draws = nu_draws
        self.omega_accept_rate = omega_accept_rate
        self.xi_final = xi_final
        self.zero_state_fraction = zero_state_fraction
        self.flip_counts = flip_counts
        self.max_weight = max_weight
        self.samples = samples
        self.trace = trace
        self.anchor = anchor
        self.intercept = intercept

    @property
    def P(self):
        return self.accumulator.P

    @property
    def pip(self):
        return self.accumulator.pip(partial=self.partial)

    @property
    def pip_rb(self):
        return self.pip

    @property
    def pip_raw(self):
        return self.accumulator.pip_raw()

    @property
    def beta_mean(self):
        return self.accumulator.beta_mean()

    def beta_conditional(self):
        return self.accumulator.beta_conditional()

    @property
    def weight_variance(self):
        return self.accumulator.weight_variance()

    @property
    def normalized_weights(self):
        return normalize_weights(self.weights)

    def h_summary(self, qs=(0.05, 0.5, 0.95)):
        if self.h_draws is None:
            return None
        mean, sd = self.accumulator.h_moments()
        return {"mean": mean, "sd": sd,
                "quantiles": dict(zip(qs, weighted_quantiles(self.h_draws, self.weights, qs)))}

    def nu_summary(self):
        if self.nu_draws is None:
            return None
        mean, sd = self.accumulator.nu_moments()
        return {"mean": mean, "sd": sd}

    def merge(self, other):
        """Combine with another chain run on the same data and configuration."""
        def cat(a, b):
            return None if a is None or b is None else np.concatenate([a, b])

        na, nb = self.accumulator.n_chains, other.accumulator.n_chains

        def avg(a, b):
            return None if a is None or b is None else (na * a + nb * b) / (na + nb)

        return ChainOutput(
            self.accumulator.merge(other.accumulator), self.partial,
            cat(self.weights * (na / self.weights.sum()), other.weights * (nb / other.weights.sum())),
            cat(self.h_draws, other.h_draws), cat(self.nu_draws, other.nu_draws),
            avg(self.omega_accept_rate, other.omega_accept_rate),
            avg(self.xi_final, other.xi_final),
            avg(self.zero_state_fraction, other.zero_state_fraction),
            None if self.flip_counts is None else self.flip_counts + other.flip_counts,
            max(self.max_weight, other.max_weight), None, None, self.anchor, self.intercept)
