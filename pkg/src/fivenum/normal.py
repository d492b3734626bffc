"""Standard normal density, distribution function and quantile function.

The scalar functions are accurate to roughly machine precision:

* the distribution function is evaluated through the complementary error
  function, so both tails keep full relative accuracy;
* the quantile starts from Acklam's rational approximation (relative error
  about 1.2e-9) and is polished with Newton steps on the distribution
  function.

Array variants used by the quadrature code are thin wrappers over
:mod:`scipy.special`.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

from .errors import DomainError

__all__ = [
    "Probability",
    "std_normal_pdf",
    "std_normal_cdf",
    "std_normal_quantile",
    "pdf_array",
    "cdf_array",
    "log_cdf_array",
]

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_LOG_INV_SQRT_2PI = math.log(_INV_SQRT_2PI)

# Acklam's coefficients, central region and tails.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


class Probability(float):
    """A float restricted to the open interval (0, 1)."""

    def __new__(cls, p: float) -> "Probability":
        value = float(p)
        if not (0.0 < value < 1.0):
            raise DomainError(f"probability must lie in (0, 1), got {p!r}")
        return super().__new__(cls, value)


def _check_finite(x: float) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"argument must be finite, got {x!r}")
    return x


def std_normal_pdf(x: float) -> float:
    """Density of N(0, 1) at ``x``."""
    x = _check_finite(x)
    return _INV_SQRT_2PI * math.exp(-0.5 * x * x)


def std_normal_cdf(x: float) -> float:
    """Distribution function of N(0, 1) at ``x``.

    ``Phi(-x) == 1 - Phi(x)`` holds to rounding, and the lower tail is
    returned with full relative precision (e.g. ``Phi(-8) ~ 6.2e-16``).
    """
    x = _check_finite(x)
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def _acklam(p: float) -> float:
    """Initial guess for the lower half, ``0 < p <= 0.5``."""
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        c, d = _C, _D
        num = ((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]
        den = (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        return num / den
    q = p - 0.5
    r = q * q
    a, b = _A, _B
    num = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
    den = ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0
    return num / den


def std_normal_quantile(p: float) -> float:
    """Inverse of :func:`std_normal_cdf`.

    Raises
    ------
    DomainError
        If ``p`` is not strictly between 0 and 1.
    """
    p = float(Probability(p))
    if p > 0.5:
        # 1 - p is exact here, which also makes the function odd about 0.5.
        return -std_normal_quantile(1.0 - p)
    if p == 0.5:
        return 0.0
    x = _acklam(p)
    for _ in range(2):
        err = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
        dens = _INV_SQRT_2PI * math.exp(-0.5 * x * x)
        step = err / dens
        # Halley correction; the second derivative of Phi is -x * phi.
        x -= step / (1.0 + 0.5 * x * step)
    return x


def pdf_array(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def log_pdf_array(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return _LOG_INV_SQRT_2PI - 0.5 * x * x


def cdf_array(x: np.ndarray) -> np.ndarray:
    return special.ndtr(x)


def log_cdf_array(x: np.ndarray) -> np.ndarray:
    """``log Phi(x)`` without underflow in the lower tail."""
    return special.log_ndtr(x)
