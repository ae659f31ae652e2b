"""The chain loop shared by every sampler.

One loop covers linear wTGS, wTGS with inference over h, Subset wTGS, PG-wTGS
(binomial and negative binomial), Subset PG-wTGS and the TGS / wGS
ablations. Each iteration:

1. draws i from the tempered index distribution at the current state,
2. flips γ_i (i a covariate) or, at the untempered state, updates h and/or
   (ω, ν) in random order,
3. resamples the subset 𝒮 given i (subset samplers),
4. recomputes the conditional PIPs and the weight 1/φ of the new state,
5. adapts ξ and the anchor set during burn-in.

The conditional PIPs computed in step 4 are the ones step 1 uses on the next
iteration, so each iteration needs one pass over the neighbourhood of γ.
"""
import time
from dataclasses import replace

import numpy as np

from .core import GammaState, Likelihood, Variant, seeded_rng, validate
from .estimators import ChainOutput, WeightedAccumulator
from .mll import Design, kappa_z, neighbourhood
from .pg import kernels, pg_draw_vector
from .pg_chain import XI_INIT, OmegaProposalContext, adapt_xi, metropolized_gibbs_accept, omega_mh_step, pg_shape
from .subset import SubsetState, adapt_anchor, initial_anchor
from .wtgs import ZERO_STATE, draw_h

VARIANT_CODES = {Variant.WTGS: 0, Variant.TGS: 1, Variant.WGS: 2}
ANCHOR_EVERY = 100
ALWAYS_ACCEPT_FRACTION = 0.25


class _Chain:

    def __init__(self, dataset, config, rng):
        self.ds = dataset
        self.cfg = config
        self.rng = rng
        self.P = dataset.P
        self.kind = dataset.kind
        self.count = self.kind.is_count
        self.negbin = self.kind is Likelihood.NEGBIN
        self.infer_h = config.infer_h
        self.zero_state = self.count or self.infer_h
        self.variant = config.variant
        self.eps = config.epsilon
        self.design = Design(dataset, config.tau, config.tau_bias,
                             include_bias=True if self.count else config.include_bias_linear,
                             precompute_gram=config.precompute_gram)
        self.is_subset = config.subset_size is not None
        self.kern = kernels()
        self.variant_code = VARIANT_CODES[self.variant]
        self.scale = 1.0 / self.P if self.zero_state else 1.0
        self.cum = np.empty(config.subset_size if self.is_subset else self.P)

    # -- helpers ---------------------------------------------------------------
    def _neighbourhood(self):
        idx = self.sub.subset if self.is_subset else None
        return neighbourhood(self.design, self.gamma, self.kz, self.h, idx)

    def _masses(self, nb):
        """Fill ``self.cum`` with cumulative tempering masses at the current state; returns φ."""
        if self.is_subset:
            on = self.gamma.bits[self.sub.subset].view(np.uint8)
            u = self.sub.u_weights()
        else:
            on = self.gamma.bits.view(np.uint8)
            u = None
        total = self.kern.tempered_cumsum(nb.pips, on, self.eps / self.P, self.variant_code, u,
                                          self.scale, self.cum)
        return total + self.xi if self.zero_state else total

    def _draw_index(self):
        cw = self.cum
        u = self.rng.random() * (cw[-1] + (self.xi if self.zero_state else 0.0))
        if self.zero_state:
            if u < self.xi:
                return ZERO_STATE
            u -= self.xi
        return min(int(cw.searchsorted(u, side="right")), cw.size - 1)

    def _coef_var(self, nb):
        if self.count:
            return nb.finv_diag
        N = self.ds.N
        dof = N - 2 if N > 2 else N
        return nb.finv_diag * (self.kz.yty - nb.quad) / dof

    # -- the run ---------------------------------------------------------------
    def run(self):
        cfg, rng, P = self.cfg, self.rng, self.P
        T, T_burn = cfg.T, cfg.T_burn
        ds = self.ds

        # initial draws, in order: ω⁽⁰⁾, h⁽⁰⁾, i⁽⁰⁾ with 𝒮⁽⁰⁾
        self.nu = cfg.nu_init if self.negbin else None
        omega = None
        if self.count:
            omega = pg_draw_vector(pg_shape(ds, self.nu), np.zeros(ds.N), rng)
        if self.infer_h:
            self.h = draw_h(cfg.h_beta[0], cfg.h_beta[1], 0, P, rng)
        else:
            self.h = cfg.h
        self.xi = (cfg.xi if cfg.xi is not None else XI_INIT) if self.zero_state else None
        adapt = self.zero_state and cfg.xi is None
        self.kz = kappa_z(self.design, omega, self.nu, full=not (self.is_subset and self.count))
        self.gamma = GammaState.empty(P)
        i = ZERO_STATE
        if self.is_subset:
            self.sub = SubsetState(P, cfg.subset_size, initial_anchor(ds.X, ds.Y, cfg.anchor_size))
            i = int(rng.integers(P))
            self.sub.resample(i, rng)
        nb = self._neighbourhood()
        phi = self._masses(nb)

        n_keep = T - T_burn
        weights = np.empty(n_keep)
        h_draws = np.empty(n_keep) if self.infer_h else None
        nu_draws = np.empty(n_keep) if self.negbin else None
        flip_counts = np.zeros(P, dtype=np.int64)
        acc = WeightedAccumulator(P, self.design.n_cols)
        burn_acc = WeightedAccumulator(P, self.design.n_cols) if self.is_subset else None
        if burn_acc is not None:
            burn_acc.start(self.gamma.bits)
        if T_burn == 0:
            acc.start(self.gamma.bits)
        samples = [] if cfg.trace else None
        trace = None
        if cfg.trace:
            trace = {"i": np.empty(T, dtype=np.int64), "size": np.empty(T, dtype=np.int64),
                     "rho": np.empty(T), "xi": np.empty(T), "omega_accepted": np.zeros(T, dtype=bool),
                     "seconds": np.empty(T)}
        clock = time.perf_counter()
        n_proposed = n_accepted = 0
        zero_visits = 0
        max_weight = 0.0
        always_accept_until = int(ALWAYS_ACCEPT_FRACTION * T_burn)
        wgs = self.variant is Variant.WGS

        for t in range(1, T + 1):
            retained = t > T_burn
            live = acc if retained else burn_acc
            i = self._draw_index()
            changed = False
            h_changed = False
            accepted = False
            if i != ZERO_STATE:
                k = int(self.sub.subset[i]) if self.is_subset else i
                do_flip = True
                if wgs:
                    q = nb.pips[i]
                    do_flip = rng.random() < metropolized_gibbs_accept(q, self.gamma.bits[k])
                if do_flip:
                    self.gamma.flip(k)
                    flip_counts[k] += 1
                    if live is not None:
                        live.switch(k, self.gamma.bits[k])
                    changed = True
                i = k
            else:
                if retained:
                    zero_visits += 1
                h_first = self.infer_h and self.count and rng.random() < 0.5
                if self.infer_h and (h_first or not self.count):
                    self.h = draw_h(cfg.h_beta[0], cfg.h_beta[1], self.gamma.size, P, rng)
                    h_changed = True
                if self.count:
                    ctx = OmegaProposalContext(nb.beta, nb.linear_predictor(self.design), nb.base)
                    free = t <= always_accept_until
                    omega, self.nu, self.kz, accepted, _ = omega_mh_step(
                        ctx, self.gamma, self.design, self.kz, self.nu, rng, cfg.nu_rw_scale, free)
                    if not free:
                        n_proposed += 1
                        n_accepted += accepted
                    changed = changed or accepted
                    if self.infer_h and not h_first:
                        self.h = draw_h(cfg.h_beta[0], cfg.h_beta[1], self.gamma.size, P, rng)
                        h_changed = True
            if self.is_subset:
                self.sub.resample(i if i != ZERO_STATE else None, rng)
                nb = self._neighbourhood()
            elif changed:
                nb = self._neighbourhood()
            elif h_changed:
                nb = nb.with_prior(self.gamma, self.h)
            phi = self._masses(nb)
            rho = 1.0 / phi

            if live is not None:
                live.add(rho, nb.pips, self.sub.subset if self.is_subset else None,
                         self.gamma.bits, nb.active_idx, nb.beta, self._coef_var(nb),
                         self.h if self.infer_h else None, self.nu)
            if retained:
                j = t - T_burn - 1
                weights[j] = rho
                if rho > max_weight:
                    max_weight = rho
                if h_draws is not None:
                    h_draws[j] = self.h
                if nu_draws is not None:
                    nu_draws[j] = self.nu
                if samples is not None:
                    samples.append(self.gamma.active.copy())
            if trace is not None:
                trace["i"][t - 1] = i
                trace["size"][t - 1] = self.gamma.size
                trace["rho"][t - 1] = rho
                trace["xi"][t - 1] = self.xi if self.zero_state else np.nan
                trace["omega_accepted"][t - 1] = accepted
                now = time.perf_counter()
                trace["seconds"][t - 1] = now - clock
                clock = now

            if not retained:
                if adapt:
                    self.xi = adapt_xi(self.xi, phi, cfg.f_omega, t)
                if self.is_subset and (t % ANCHOR_EVERY == 0 or t == T_burn):
                    anchor = adapt_anchor(burn_acc.running_pip(partial=True), self.sub.A, t, T_burn)
                    if not np.array_equal(anchor, self.sub.anchor):
                        self.sub.set_anchor(anchor)
                        self.sub.resample(i if i != ZERO_STATE else None, rng)
                        nb = self._neighbourhood()
                        self._masses(nb)
                if t == T_burn:
                    acc.start(self.gamma.bits)

        acc.close()
        return ChainOutput(
            acc, self.is_subset, weights, h_draws, nu_draws,
            omega_accept_rate=(n_accepted / n_proposed if n_proposed else None) if self.count else None,
            xi_final=self.xi,
            zero_state_fraction=zero_visits / n_keep if self.zero_state else None,
            flip_counts=flip_counts, max_weight=max_weight, samples=samples, trace=trace,
            anchor=self.sub.anchor.copy() if self.is_subset else None,
            intercept=self.design.has_bias)


def run_chain(dataset, config, rng=None):
    """Run one chain; the sampler is chosen from the likelihood and the configuration.

    :param dataset: a :class:`~bvselect.core.Dataset`
    :param config: a :class:`~bvselect.core.SamplerConfig`
    :param rng: numpy ``Generator``; defaults to ``seeded_rng(config.seed)``
    """
    validate(dataset, config)
    if rng is None:
        rng = seeded_rng(config.seed)
    return _Chain(dataset, config, rng).run()


def chain_seeds(seed, n_chains):
    """Seeds of the individual chains of a multi-chain run."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(int(seed)).spawn(n_chains)]


def run_chains(dataset, config, n_chains, workers=1):
    """Run ``n_chains`` independently seeded chains and merge their estimates.

    Chain c uses the c-th seed spawned from ``config.seed``; results do not
    depend on ``workers``. Returns ``(merged, per_chain)``.
    """
    validate(dataset, config)
    configs = [replace(config, seed=s) for s in chain_seeds(config.seed, n_chains)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(run_chain, [dataset] * n_chains, configs))
    else:
        outs = [run_chain(dataset, c) for c in configs]
    merged = outs[0]
    for o in outs[1:]:
        merged = merged.merge(o)
    return merged, outs
