"""Bayesian variable selection by weighted tempered Gibbs sampling.

Linear models with Gaussian noise and count models (binomial, negative
binomial) through Pólya-Gamma augmentation, with full and subset samplers.
"""
from .core import (
    BVSError,
    ChainState,
    ConfigError,
    Dataset,
    DomainError,
    EmptyChain,
    GammaState,
    Likelihood,
    NumericalError,
    QuadratureNotConverged,
    SamplerConfig,
    ShapeMismatch,
    TooLarge,
    Variant,
    seeded_rng,
    validate,
)
from .pg import IMPLEMENTATION as KERNEL_IMPLEMENTATION, pg_draw, pg_draw_vector
from .sampler import run_chain, run_chains

__version__ = "0.1.0"

__all__ = [
    "BVSError", "ChainState", "ConfigError", "Dataset", "DomainError", "EmptyChain",
    "GammaState", "Likelihood", "NumericalError", "QuadratureNotConverged",
    "SamplerConfig", "ShapeMismatch", "TooLarge", "Variant", "seeded_rng", "validate",
    "KERNEL_IMPLEMENTATION", "pg_draw", "pg_draw_vector", "run_chain", "run_chains",
]
