"""Stochastic kernels used by the samplers and the benchmark generator.

All draws go through a caller-owned ``numpy.random.Generator`` (PCG64 via
``np.random.default_rng``); that generator is the pinned PRNG for every
reproducibility contract in this package.  Inverse-gamma variates are the
reciprocal of gamma variates, half-Cauchy uses |tan(pi(u - 1/2))|.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "sample_normal",
    "sample_gamma",
    "sample_invgamma",
    "sample_poisson",
    "sample_halfcauchy",
]


def sample_normal(rng: np.random.Generator, size=None):
    """Standard normal draw(s)."""
    return rng.standard_normal(size) if size is not None else float(rng.standard_normal())


def sample_gamma(shape, scale, rng: np.random.Generator, size=None):
    """Gamma(shape, scale) draw(s); scale is the mean/shape parameterization."""
    shape = np.asarray(shape, dtype=np.float64)
    scale = np.asarray(scale, dtype=np.float64)
    if np.any(shape <= 0) or np.any(scale <= 0):
        raise ValueError("gamma shape and scale must be positive")
    out = rng.gamma(shape, scale, size=size)
    return out if size is not None or out.ndim else float(out)


def sample_invgamma(shape, scale, rng: np.random.Generator, size=None):
    """InvGamma(shape, scale) draw(s): reciprocal of Gamma(shape, 1/scale)."""
    scale = np.asarray(scale, dtype=np.float64)
    if np.any(scale <= 0):
        raise ValueError("inverse-gamma scale must be positive")
    g = sample_gamma(shape, 1.0 / scale, rng, size=size)
    return 1.0 / g


def sample_poisson(mean, rng: np.random.Generator, size=None):
    """Poisson draw(s); inversion for small means, transformed rejection
    for large ones (the generator's built-in split)."""
    mean = np.asarray(mean, dtype=np.float64)
    if np.any(mean <= 0) or not np.all(np.isfinite(mean)):
        raise ValueError("poisson mean must be positive and finite")
    out = rng.poisson(mean, size=size)
    return out if size is not None or np.ndim(out) else int(out)


def sample_halfcauchy(rng: np.random.Generator, size=None):
    """Standard half-Cauchy C+(0,1) draw(s) via |tan(pi(u - 1/2))|."""
    u = rng.uniform(size=size) if size is not None else rng.uniform()
    out = np.abs(np.tan(np.pi * (u - 0.5)))
    return out if size is not None else float(out)
