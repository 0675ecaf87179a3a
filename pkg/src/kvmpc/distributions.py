"""Samplers and exact mass/density functions for every distribution used here:
one- and two-sided geometric, binomial, Laplace, and the gamma variates that
decompose Laplace noise across nodes.

Every sampler takes an explicit ``numpy.random.Generator`` so whole protocol
runs replay deterministically from one seed.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ParameterError


def _check_rate(rate: float):
    if not 0.0 < rate < 1.0:
        raise ParameterError(f"geometric rate must be in (0,1), got {rate}")


def geometric_pmf(z: int, rate: float) -> float:
    """P[Z = z] = (1-rate)^z * rate on support {0, 1, 2, ...}.

    Mean is (1-rate)/rate under this convention.
    """
    _check_rate(rate)
    if z < 0:
        raise ParameterError(f"geometric support is nonnegative, got z={z}")
    return (1.0 - rate) ** z * rate


def geometric_sample(rate: float, rng: np.random.Generator) -> int:
    """One draw from the geometric distribution with support {0, 1, 2, ...}."""
    _check_rate(rate)
    # numpy counts trials up to and including the first success (support >= 1)
    return int(rng.geometric(rate)) - 1


def geometric_samples(rate: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorized geometric_sample."""
    _check_rate(rate)
    return rng.geometric(rate, size=size) - 1


def binomial_pmf(z: int, a: int, p: float) -> float:
    """P[Z = z] = C(a,z) p^z (1-p)^(a-z); exactly 0 whenever z > a or z < 0."""
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"binomial probability must be in [0,1], got {p}")
    if a < 0:
        raise ParameterError(f"binomial count must be nonnegative, got {a}")
    if z < 0 or z > a:
        return 0.0
    # exact integer coefficient; p^0 = 1 covers the degenerate endpoints
    return math.comb(a, z) * p**z * (1.0 - p) ** (a - z)


def two_sided_geometric_pmf(z: int, alpha: float) -> float:
    """P[Z = z] = ((1-alpha)/(1+alpha)) * alpha^|z| on all integers."""
    if not 0.0 <= alpha < 1.0:
        raise ParameterError(f"two-sided geometric parameter must be in [0,1), got {alpha}")
    return (1.0 - alpha) / (1.0 + alpha) * alpha ** abs(z)


def two_sided_geometric_sample(alpha: float, rng: np.random.Generator) -> int:
    """One draw, via the difference of two i.i.d. geometric(1-alpha) variables."""
    if not 0.0 <= alpha < 1.0:
        raise ParameterError(f"two-sided geometric parameter must be in [0,1), got {alpha}")
    if alpha == 0.0:
        return 0
    rate = 1.0 - alpha
    return geometric_sample(rate, rng) - geometric_sample(rate, rng)


def _check_scale(scale: float):
    if scale <= 0.0:
        raise ParameterError(f"scale must be positive, got {scale}")


def laplace_sample(scale: float, rng: np.random.Generator) -> float:
    _check_scale(scale)
    return float(rng.laplace(0.0, scale))


def laplace_cdf(t: float, scale: float) -> float:
    _check_scale(scale)
    if t <= 0.0:
        return 0.5 * math.exp(t / scale)
    return 1.0 - 0.5 * math.exp(-t / scale)


def laplace_inv_cdf(u: float, scale: float) -> float:
    """Quantile function; u must lie strictly inside (0,1)."""
    _check_scale(scale)
    if not 0.0 < u < 1.0:
        raise ParameterError(f"quantile argument must be in (0,1), got {u}")
    if u < 0.5:
        return scale * math.log(2.0 * u)
    return -scale * math.log(2.0 * (1.0 - u))


def gamma_sample(shape: float, scale: float, rng: np.random.Generator) -> float:
    """Gamma(shape, scale) draw for shape in (0, 1].

    shape = 1/node_count always arises when Laplace noise is assembled from
    per-node gamma differences; shape = 1 reduces to Exponential(scale).
    """
    if not 0.0 < shape <= 1.0:
        raise ParameterError(f"gamma shape must be in (0,1], got {shape}")
    _check_scale(scale)
    return float(rng.gamma(shape, scale))
