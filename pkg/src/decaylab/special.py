"""Modified Bessel function of the second kind, order zero.

K0 appears in the two-dimensional steady-state point-source profile.
It is evaluated by the standard piecewise approximation split at
argument 2: below the split, the logarithmic form

    K0(x) = -ln(x/2) I0(x) + P(x^2/4)

with the classic 7-coefficient polynomial P and a machine-precision
ascending series for I0; above the split, the 7-coefficient asymptotic
polynomial in 2/x times exp(-x)/sqrt(x). Both coefficient sets are the
widely reproduced Abramowitz & Stegun 9.8 fits; the absolute error of
the combined evaluation is below 1e-8 everywhere on (0, inf).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError

__all__ = ["bessel_i0", "bessel_k0"]

_SPLIT = 2.0

# Polynomial for K0(x) + ln(x/2) I0(x), argument t = (x/2)^2, 0 < x <= 2.
_K0_SMALL = (
    -0.57721566,
    0.42278420,
    0.23069756,
    0.03488590,
    0.00262698,
    0.00010750,
    0.00000740,
)

# Polynomial for sqrt(x) exp(x) K0(x), argument t = 2/x, x >= 2.
_K0_LARGE = (
    1.25331414,
    -0.07832358,
    0.02189568,
    -0.01062446,
    0.00587872,
    -0.00251540,
    0.00053208,
)


def bessel_i0(x: float) -> float:
    """Modified Bessel function I0 by its ascending series.

    The series sum_k (x^2/4)^k / (k!)^2 converges rapidly for the small
    arguments needed here (the K0 small-x branch, x <= 2).
    """
    t = float(x) * float(x) / 4.0
    term = 1.0
    total = 1.0
    k = 0
    while term > 1e-18 * total:
        k += 1
        term *= t / (k * k)
        total += term
    return total


def _k0_scalar(x: float) -> float:
    if not x > 0.0:
        raise DomainError(f"K0 requires a positive argument, got {x}")
    if x <= _SPLIT:
        t = (x / 2.0) ** 2
        poly = 0.0
        for c in reversed(_K0_SMALL):
            poly = poly * t + c
        return -math.log(x / 2.0) * bessel_i0(x) + poly
    t = 2.0 / x
    poly = 0.0
    for c in reversed(_K0_LARGE):
        poly = poly * t + c
    return poly * math.exp(-x) / math.sqrt(x)


def bessel_k0(x):
    """Modified Bessel function K0 (scalar or array), argument > 0."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        return _k0_scalar(float(arr))
    flat = arr.reshape(-1)
    out = np.empty_like(flat)
    for i, v in enumerate(flat):
        out[i] = _k0_scalar(float(v))
    return out.reshape(arr.shape)
