"""Pólya-Gamma PG(b, c) sampling.

The compiled kernels are used when the extension module is importable;
otherwise (or when ``BVSELECT_PURE_PYTHON`` is set in the environment) the
pure-Python twin is used. Both consume the generator identically.
"""
import os
from dataclasses import dataclass

import numpy as np

from .core import DomainError

if os.environ.get("BVSELECT_PURE_PYTHON"):
    from . import _kernels_py as _impl
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        from . import _kernels_py as _impl

IMPLEMENTATION = _impl.IMPLEMENTATION


def kernels(implementation=None):
    """Return the kernel module, optionally forcing ``"compiled"`` or ``"python"``."""
    if implementation is None:
        return _impl
    if implementation == "python":
        from . import _kernels_py
        return _kernels_py
    if implementation == "compiled":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown kernel implementation {implementation!r}")


@dataclass(frozen=True)
class PgParams:
    b: float
    c: float

    def __post_init__(self):
        if not self.b > 0:
            raise DomainError(f"PG shape b must be positive, got {self.b}")
        if not np.isfinite(self.c):
            raise DomainError(f"PG tilt c must be finite, got {self.c}")


def pg_mean(b, c):
    """E[PG(b, c)] = b tanh(c/2) / (2c), with the c -> 0 limit b/4."""
    c = np.abs(np.asarray(c, dtype=np.float64))
    safe = np.where(c < 1e-8, 1.0, c)
    return np.asarray(b) * np.where(c < 1e-8, 0.25, np.tanh(0.5 * safe) / (2.0 * safe))


def pg_draw(b, c, rng, implementation=None):
    """Draw one PG(b, c) variate."""
    PgParams(float(b), float(c))
    return kernels(implementation).pg_draw(float(b), float(c), rng)


def pg_draw_vector(b, c, rng, implementation=None):
    """Draw independent PG(b_n, c_n) variates; ``b`` may be a scalar."""
    c = np.ascontiguousarray(c, dtype=np.float64)
    b = np.ascontiguousarray(np.broadcast_to(np.asarray(b, dtype=np.float64), c.shape))
    if c.ndim != 1:
        raise DomainError("pg_draw_vector expects one-dimensional parameters")
    if c.size == 0:
        return np.empty(0, dtype=np.float64)
    if not np.all(b > 0):
        raise DomainError("PG shape b must be positive")
    if not np.all(np.isfinite(c)):
        raise DomainError("PG tilt c must be finite")
    return kernels(implementation).pg_draw_vector(b, c, rng)
