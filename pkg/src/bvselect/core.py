"""Domain types, configuration, validation and the RNG contract shared by all samplers."""
import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np


class BVSError(Exception):
    """Base class for all errors raised by bvselect."""


class ShapeMismatch(BVSError, ValueError):
    pass


class DomainError(BVSError, ValueError):
    pass


class ConfigError(BVSError, ValueError):
    pass


class NumericalError(BVSError, ArithmeticError):
    pass


class EmptyChain(BVSError, ValueError):
    pass


class TooLarge(BVSError, ValueError):
    pass


class QuadratureNotConverged(BVSError, RuntimeError):
    pass


class Likelihood(str, enum.Enum):
    LINEAR = "linear"
    BINOMIAL = "binomial"
    NEGBIN = "negbin"

    @property
    def is_count(self):
        return self is not Likelihood.LINEAR


class Variant(str, enum.Enum):
    WTGS = "wtgs"
    TGS = "tgs"
    WGS = "wgs"


def default_psi0(Y):
    """Offset used for negative binomial data when none is given: log of the mean response."""
    return max(math.log(max(float(np.mean(Y)), 1e-300)), math.log(1e-3))


@dataclass(frozen=True)
class Dataset:
    """Covariates, responses and likelihood family.

    ``C`` holds binomial total counts and must be absent for the other
    likelihoods; ``psi0`` is the negative binomial log-mean offset.
    """
    X: np.ndarray
    Y: np.ndarray
    C: Optional[np.ndarray] = None
    kind: Likelihood = Likelihood.LINEAR
    psi0: float = 0.0
    names: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "X", np.ascontiguousarray(self.X, dtype=np.float64))
        object.__setattr__(self, "Y", np.ascontiguousarray(self.Y, dtype=np.float64))
        if self.C is not None:
            object.__setattr__(self, "C", np.ascontiguousarray(self.C, dtype=np.float64))
        object.__setattr__(self, "kind", Likelihood(self.kind))

    @classmethod
    def linear(cls, X, Y, names=None):
        return cls(X, Y, kind=Likelihood.LINEAR, names=names)

    @classmethod
    def binomial(cls, X, Y, C, names=None):
        return cls(X, Y, C=C, kind=Likelihood.BINOMIAL, names=names)

    @classmethod
    def negative_binomial(cls, X, Y, psi0=None, names=None):
        psi0 = default_psi0(Y) if psi0 is None else float(psi0)
        return cls(X, Y, kind=Likelihood.NEGBIN, psi0=psi0, names=names)

    @property
    def N(self):
        return self.X.shape[0]

    @property
    def P(self):
        return self.X.shape[1]

    def covariate_names(self):
        if self.names is not None:
            return list(self.names)
        return [f"x{j + 1}" for j in range(self.P)]


@dataclass
class SamplerConfig:
    """Hyperparameters and run settings shared by every sampler.

    Exactly one of ``h`` (fixed prior inclusion probability) and ``h_beta``
    (``(alpha, beta)`` of a Beta prior over it) must be given. ``subset_size``
    switches on the subset samplers; ``anchor_size`` defaults to half of it.
    ``xi=None`` means the mass of the untempered state is adapted during
    burn-in, starting from 5.
    """
    T: int = 10000
    T_burn: int = 1000
    h: Optional[float] = None
    h_beta: Optional[Tuple[float, float]] = None
    tau: float = 0.01
    tau_bias: Optional[float] = None
    epsilon: float = 5.0
    xi: Optional[float] = None
    f_omega: float = 0.25
    subset_size: Optional[int] = None
    anchor_size: Optional[int] = None
    seed: int = 0
    nu_rw_scale: float = 0.03
    nu_init: float = 1.0
    include_bias_linear: bool = False
    variant: Variant = Variant.WTGS
    precompute_gram: bool = False
    trace: bool = False

    def __post_init__(self):
        self.variant = Variant(self.variant)
        if self.subset_size is not None and self.anchor_size is None:
            self.anchor_size = self.subset_size // 2

    @property
    def precision_bias(self):
        return self.tau if self.tau_bias is None else self.tau_bias

    @property
    def infer_h(self):
        return self.h_beta is not None


class GammaState:
    """Inclusion indicators; the sorted active index list is rebuilt lazily after flips."""

    __slots__ = ("bits", "_active")

    def __init__(self, bits):
        self.bits = np.asarray(bits, dtype=bool).copy()
        self._active = None

    @classmethod
    def empty(cls, P):
        return cls(np.zeros(P, dtype=bool))

    @property
    def active(self):
        if self._active is None:
            self._active = np.flatnonzero(self.bits)
        return self._active

    @property
    def size(self):
        return self.active.size

    @property
    def P(self):
        return self.bits.size

    def flip(self, i):
        self.bits[i] = not self.bits[i]
        self._active = None

    def flipped(self, i):
        out = self.copy()
        out.flip(i)
        return out

    def copy(self):
        return GammaState(self.bits)

    def __repr__(self):
        return f"GammaState(active={self.active.tolist()}, P={self.P})"


@dataclass
class ChainState:
    """Mutable state of one chain; owned by exactly one sampler loop."""
    gamma: GammaState
    i: int = -1
    omega: Optional[np.ndarray] = None
    nu: Optional[float] = None
    h: Optional[float] = None
    xi: Optional[float] = None
    subset: Optional[np.ndarray] = None
    anchor: Optional[np.ndarray] = None
    t: int = 0
    rho_tilde: float = float("nan")
    extras: dict = field(default_factory=dict)


def seeded_rng(seed):
    """One PCG64 stream per chain; identical seeds give identical trajectories."""
    return np.random.default_rng(np.random.SeedSequence(int(seed)))


def validate(dataset, config=None):
    """Raise if the dataset or config violates an invariant the samplers rely on."""
    X, Y = dataset.X, dataset.Y
    if X.ndim != 2:
        raise ShapeMismatch(f"X must be two-dimensional, got shape {X.shape}")
    if Y.ndim != 1 or Y.shape[0] != X.shape[0]:
        raise ShapeMismatch(f"Y has shape {Y.shape} but X has {X.shape[0]} rows")
    if not np.all(np.isfinite(X)):
        raise DomainError("X contains non-finite entries")
    if not np.all(np.isfinite(Y)):
        raise DomainError("Y contains non-finite entries")
    kind = dataset.kind
    if kind is Likelihood.BINOMIAL:
        C = dataset.C
        if C is None:
            raise ShapeMismatch("binomial data needs total counts C")
        if C.shape != Y.shape:
            raise ShapeMismatch(f"C has shape {C.shape} but Y has {Y.shape}")
        if np.any(C < 1) or np.any(C != np.round(C)):
            raise DomainError("total counts C must be positive integers")
        if np.any(Y < 0) or np.any(Y > C) or np.any(Y != np.round(Y)):
            raise DomainError("binomial responses must be integers with 0 <= Y <= C")
    elif dataset.C is not None:
        raise ShapeMismatch("total counts C are only meaningful for binomial data")
    if kind is Likelihood.NEGBIN:
        if np.any(Y < 0) or np.any(Y != np.round(Y)):
            raise DomainError("negative binomial responses must be non-negative integers")
        if not math.isfinite(dataset.psi0):
            raise DomainError("psi0 must be finite")
    if config is not None:
        _validate_config(config, dataset.P)


def _validate_config(config, P):
    if (config.h is None) == (config.h_beta is None):
        raise ConfigError("exactly one of h and h_beta must be given")
    if config.h is not None and not 0.0 < config.h < 1.0:
        raise ConfigError(f"h must lie in (0, 1), got {config.h}")
    if config.h_beta is not None:
        a, b = config.h_beta
        if a <= 0 or b <= 0:
            raise ConfigError("Beta prior parameters for h must be positive")
    if config.tau <= 0 or config.precision_bias <= 0:
        raise ConfigError("prior precisions must be positive")
    if config.epsilon < 0:
        raise ConfigError("epsilon must be non-negative")
    if config.xi is not None and config.xi <= 0:
        raise ConfigError("xi must be positive")
    if not 0.0 < config.f_omega < 1.0:
        raise ConfigError("f_omega must lie in (0, 1)")
    if config.T_burn < 0 or config.T_burn >= config.T:
        raise ConfigError(f"need 0 <= T_burn < T, got T_burn={config.T_burn}, T={config.T}")
    if config.nu_rw_scale <= 0 or config.nu_init <= 0:
        raise ConfigError("nu_rw_scale and nu_init must be positive")
    if config.subset_size is not None:
        S, A = config.subset_size, config.anchor_size
        if not 1 <= S <= P:
            raise ConfigError(f"subset size must satisfy 1 <= S <= P={P}, got {S}")
        if A is None or not 0 <= A < S:
            raise ConfigError(f"anchor size must satisfy 0 <= A < S, got A={A}, S={S}")
