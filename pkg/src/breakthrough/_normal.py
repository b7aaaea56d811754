"""Standard normal distribution function and its inverse."""

import math

__all__ = ["normal_cdf", "normal_quantile", "two_sided_p"]

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)

# Acklam's rational approximation, |relative error| < 1.15e-9 before refinement.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def normal_cdf(x):
    """Standard normal CDF, computed through ``erfc`` to keep tail accuracy."""
    return 0.5 * math.erfc(-x / _SQRT2)


def _initial_quantile(p):
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    if p > 1.0 - _P_LOW:
        q = math.sqrt(-2.0 * math.log1p(-p))
        return -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    q = p - 0.5
    r = q * q
    return (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
        (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)


def normal_quantile(p):
    """Inverse of :func:`normal_cdf` for ``0 < p < 1``.

    A rational first guess is polished by one Newton step on the CDF.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"quantile requires 0 < p < 1, got {p!r}")
    x = _initial_quantile(p)
    # Newton on the tail closest to p avoids cancellation in 1 - cdf.
    if p > 0.5:
        resid = 0.5 * math.erfc(x / _SQRT2) - (1.0 - p)
        resid = -resid
    else:
        resid = normal_cdf(x) - p
    density = math.exp(-0.5 * x * x) / _SQRT2PI
    return x - resid / density


def two_sided_p(z):
    """``2 * (1 - Phi(|z|))`` evaluated without subtractive cancellation."""
    return math.erfc(abs(z) / _SQRT2)
