"""Closed-form mean and standard deviation estimators for summary data.

A study reports some subset of the five number summary
``{a, q1, m, q3, b}`` (minimum, first quartile, median, third quartile,
maximum) together with its sample size ``n``.  Three reporting patterns
are handled:

* ``S1`` -- ``{a, m, b; n}``
* ``S2`` -- ``{q1, m, q3; n}``
* ``S3`` -- the full five number summary.

The standard deviation estimators divide the range and the interquartile
range by the quantile-based constants::

    xi(n)  = 2 * Phi^-1((n - 0.375) / (n + 0.25))
    eta(n) = 2 * Phi^-1((0.75 n - 0.125) / (n + 0.25))

and the sample-size-weighted estimator combines the two as
``w * (b - a) / xi + (1 - w) * (q3 - q1) / eta`` with the weight
``1 / (1 + 0.07 n^0.6)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Union

import numpy as np

from .errors import DomainError, NumericFailure
from .normal import std_normal_quantile

__all__ = [
    "FiveNumberSummary",
    "S1",
    "S2",
    "S3",
    "ScenarioData",
    "NormalizationConstants",
    "Estimate",
    "CoefficientRow",
    "normalization_constants",
    "sd_hozo_s1",
    "sd_wan_s1",
    "sd_wan_s2",
    "sd_wan_s3",
    "sd_bland",
    "sd_weighted",
    "sd_shi",
    "mean_bland",
    "mean_luo",
    "approx_optimal_weight",
    "approx_j",
    "mse_of_weight",
    "coefficient_table",
    "render_coefficient_table",
    "sd_kernel",
    "SD_METHODS",
]

# Power-law approximation J(n) ~ 0.07 n^0.6 of the moment ratio.
J_COEF = 0.07
J_EXPONENT = 0.6

# Radicands of Bland's formula down to this (relative) level are rounding noise.
_RADICAND_TOL = 1e-12


def _check_n(n, minimum: int = 1) -> int:
    if isinstance(n, bool) or int(n) != n:
        raise DomainError(f"sample size must be an integer, got {n!r}")
    n = int(n)
    if n < minimum:
        raise DomainError(f"sample size must be >= {minimum}, got {n}")
    return n


def _check_ordered(names: tuple[str, ...], values: tuple[float, ...]) -> None:
    for name, v in zip(names, values):
        if not math.isfinite(v):
            raise DomainError(f"{name} must be finite, got {v!r}")
    for (n1, v1), (n2, v2) in zip(zip(names, values), zip(names[1:], values[1:])):
        if v1 > v2:
            raise DomainError(f"summary out of order: {n1}={v1} > {n2}={v2}")


@dataclass(frozen=True)
class FiveNumberSummary:
    """Reported ``{a, q1, m, q3, b}`` of a sample of size ``n``."""

    a: float
    q1: float
    m: float
    q3: float
    b: float
    n: int

    def __post_init__(self):
        for name in ("a", "q1", "m", "q3", "b"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "n", _check_n(self.n))
        _check_ordered(("a", "q1", "m", "q3", "b"),
                       (self.a, self.q1, self.m, self.q3, self.b))

    def s1(self) -> "S1":
        return S1(self.a, self.m, self.b, self.n)

    def s2(self) -> "S2":
        return S2(self.q1, self.m, self.q3, self.n)


@dataclass(frozen=True)
class S1:
    """Minimum, median and maximum: ``{a, m, b; n}``."""

    a: float
    m: float
    b: float
    n: int

    def __post_init__(self):
        for name in ("a", "m", "b"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "n", _check_n(self.n))
        _check_ordered(("a", "m", "b"), (self.a, self.m, self.b))


@dataclass(frozen=True)
class S2:
    """Quartiles and median: ``{q1, m, q3; n}``."""

    q1: float
    m: float
    q3: float
    n: int

    def __post_init__(self):
        for name in ("q1", "m", "q3"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "n", _check_n(self.n))
        _check_ordered(("q1", "m", "q3"), (self.q1, self.m, self.q3))


@dataclass(frozen=True)
class S3:
    """The full five number summary."""

    summary: FiveNumberSummary

    @property
    def n(self) -> int:
        return self.summary.n


ScenarioData = Union[S1, S2, S3]


@dataclass(frozen=True)
class NormalizationConstants:
    n: int
    xi: float
    eta: float
    theta1: float
    theta2: float


@dataclass(frozen=True)
class Estimate:
    value: float
    method: str
    weight_used: Optional[float] = None
    components: Optional[tuple[float, float]] = None

    def __float__(self) -> float:
        return self.value


def _xi(n):
    return 2.0 * std_normal_quantile((n - 0.375) / (n + 0.25))


def _eta(n):
    return 2.0 * std_normal_quantile((0.75 * n - 0.125) / (n + 0.25))


def approx_j(n) -> float:
    """Power-law approximation ``0.07 n^0.6`` of the moment ratio J(n)."""
    return J_COEF * float(n) ** J_EXPONENT


@lru_cache(maxsize=4096)
def normalization_constants(n: int) -> NormalizationConstants:
    """Divisors xi, eta and the shortcut divisors theta1, theta2 for ``n``.

    ``n = 1`` is rejected: both quantile arguments collapse to 0.5 and the
    divisors vanish.
    """
    n = _check_n(n, minimum=2)
    xi = _xi(n)
    eta = _eta(n)
    j = approx_j(n)
    return NormalizationConstants(
        n=n,
        xi=xi,
        eta=eta,
        theta1=(1.0 + j) * xi,
        theta2=eta * (1.0 + j) / j,
    )


def approx_optimal_weight(n: int) -> float:
    """Closed-form weight ``1 / (1 + 0.07 n^0.6)`` on the range component."""
    n = _check_n(n)
    return 1.0 / (1.0 + approx_j(n))


# -- vectorised kernels ------------------------------------------------------
#
# Every kernel takes (a, q1, m, q3, b, n) with numpy broadcasting over the
# summary values and a scalar n; the simulation harness calls them on whole
# blocks of replications at once.


def _k_hozo(a, q1, m, q3, b, n):
    if n <= 15:
        return np.sqrt(((b - a) ** 2 + (a - 2.0 * m + b) ** 2 / 4.0) / 12.0)
    if n <= 70:
        return (b - a) / 4.0
    return (b - a) / 6.0


def _k_wan_s1(a, q1, m, q3, b, n):
    return (b - a) / normalization_constants(n).xi


def _k_wan_s2(a, q1, m, q3, b, n):
    return (q3 - q1) / normalization_constants(n).eta


def _k_wan_s3(a, q1, m, q3, b, n):
    c = normalization_constants(n)
    return 0.5 * ((b - a) / c.xi + (q3 - q1) / c.eta)


def _k_shi(a, q1, m, q3, b, n):
    c = normalization_constants(n)
    return (b - a) / c.theta1 + (q3 - q1) / c.theta2


def _bland_radicand(a, q1, m, q3, b):
    # Only differences matter; centring on the median removes most of the
    # cancellation for data far from zero.
    a, q1, q3, b = a - m, q1 - m, q3 - m, b - m
    m = 0.0 * m
    first = (a * a + 2 * q1 * q1 + 2 * m * m + 2 * q3 * q3 + b * b) / 16.0
    second = (a * q1 + q1 * m + m * q3 + q3 * b) / 8.0
    third = (a + 2 * q1 + 2 * m + 2 * q3 + b) ** 2 / 64.0
    scale = np.maximum(np.abs(a), np.abs(b)) ** 2
    return first + second - third, scale


def _k_bland(a, q1, m, q3, b, n):
    rad, scale = _bland_radicand(a, q1, m, q3, b)
    floor = -_RADICAND_TOL * np.maximum(scale, 1.0)
    if np.any(rad < floor):
        raise NumericFailure(f"negative radicand in Bland's estimator: {rad}")
    return np.sqrt(np.maximum(rad, 0.0))


SD_METHODS = {
    "hozo_sd": _k_hozo,
    "wan_sd_s1": _k_wan_s1,
    "wan_sd_s2": _k_wan_s2,
    "wan_sd_s3": _k_wan_s3,
    "bland_sd": _k_bland,
    "shi_sd": _k_shi,
}


def sd_kernel(label: str):
    """Vectorised SD formula registered under ``label``."""
    try:
        return SD_METHODS[label]
    except KeyError:
        raise DomainError(
            f"unknown SD estimator {label!r}; choose from {sorted(SD_METHODS)}"
        ) from None


# -- scalar estimators -------------------------------------------------------


def sd_hozo_s1(data: S1) -> Estimate:
    """Hozo et al.'s three-branch rule for ``{a, m, b; n}``.

    Uses the uniform-type formula for ``n <= 15``, ``(b - a) / 4`` for
    ``15 < n <= 70`` and ``(b - a) / 6`` beyond.
    """
    value = float(_k_hozo(data.a, None, data.m, None, data.b, data.n))
    return Estimate(value, "hozo_sd")


def sd_wan_s1(data: S1) -> Estimate:
    """``(b - a) / xi(n)``; requires ``n >= 2``."""
    _check_n(data.n, minimum=2)
    return Estimate(float((data.b - data.a) / normalization_constants(data.n).xi),
                    "wan_sd_s1", weight_used=1.0)


def sd_wan_s2(data: S2) -> Estimate:
    """``(q3 - q1) / eta(n)``; requires ``n >= 2``."""
    _check_n(data.n, minimum=2)
    return Estimate(float((data.q3 - data.q1) / normalization_constants(data.n).eta),
                    "wan_sd_s2", weight_used=0.0)


def _components(s: FiveNumberSummary) -> tuple[float, float]:
    c = normalization_constants(s.n)
    return (s.b - s.a) / c.xi, (s.q3 - s.q1) / c.eta


def _summary(data) -> FiveNumberSummary:
    return data.summary if isinstance(data, S3) else data


def sd_weighted(data: FiveNumberSummary, w: float) -> Estimate:
    """``w * (b - a) / xi + (1 - w) * (q3 - q1) / eta``.

    ``w = 1``, ``0`` and ``0.5`` give :func:`sd_wan_s1`, :func:`sd_wan_s2`
    and :func:`sd_wan_s3` respectively.
    """
    s = _summary(data)
    w = float(w)
    if not (0.0 <= w <= 1.0):
        raise DomainError(f"weight must lie in [0, 1], got {w}")
    _check_n(s.n, minimum=2)
    rng_part, iqr_part = _components(s)
    return Estimate(w * rng_part + (1.0 - w) * iqr_part, "weighted_sd",
                    weight_used=w, components=(rng_part, iqr_part))


def sd_wan_s3(data: FiveNumberSummary) -> Estimate:
    """Equal-weight average of the range and IQR estimators."""
    s = _summary(data)
    _check_n(s.n, minimum=2)
    rng_part, iqr_part = _components(s)
    return Estimate(0.5 * (rng_part + iqr_part), "wan_sd_s3",
                    weight_used=0.5, components=(rng_part, iqr_part))


def sd_shi(data: FiveNumberSummary) -> Estimate:
    """Sample-size-weighted estimator in shortcut form.

    Computed as ``(b - a) / theta1(n) + (q3 - q1) / theta2(n)``, which equals
    :func:`sd_weighted` at ``w = approx_optimal_weight(n)``.
    """
    s = _summary(data)
    _check_n(s.n, minimum=2)
    c = normalization_constants(s.n)
    value = (s.b - s.a) / c.theta1 + (s.q3 - s.q1) / c.theta2
    return Estimate(value, "shi_sd", weight_used=approx_optimal_weight(s.n),
                    components=_components(s))


def sd_bland(data: FiveNumberSummary) -> Estimate:
    """Bland's estimator; ignores ``n``.

    Radicands in ``[-1e-12 * scale^2, 0)`` are treated as rounding noise and
    clamped to zero; anything more negative raises :class:`NumericFailure`.
    """
    s = _summary(data)
    return Estimate(float(_k_bland(s.a, s.q1, s.m, s.q3, s.b, s.n)), "bland_sd")


def mean_bland(data: FiveNumberSummary) -> Estimate:
    s = _summary(data)
    return Estimate((s.a + 2 * s.q1 + 2 * s.m + 2 * s.q3 + s.b) / 8.0, "bland_mean")


def mean_luo(data: FiveNumberSummary) -> Estimate:
    """Weighted mean of the mid-range, mid-quartile and median.

    Weights are ``w1 = 2.2 / (2.2 + n^0.75)`` on ``(a + b) / 2`` and
    ``w2 = 0.7 - 0.72 / n^0.55`` on ``(q1 + q3) / 2``.
    """
    s = _summary(data)
    w1 = 2.2 / (2.2 + s.n ** 0.75)
    w2 = 0.7 - 0.72 / s.n ** 0.55
    value = w1 * (s.a + s.b) / 2.0 + w2 * (s.q1 + s.q3) / 2.0 + (1.0 - w1 - w2) * s.m
    return Estimate(value, "luo_mean")


def mse_of_weight(w: float, moments, constants: NormalizationConstants,
                  sigma: float = 1.0) -> float:
    """MSE of the weighted estimator at weight ``w`` for N(mu, sigma^2) data.

    ``moments`` carries the standard-normal range/IQR variances and their
    covariance (an :class:`~fivenum.orderstats.OrderStatMoments`).  The
    estimator is treated as unbiased, so the MSE is its variance, a convex
    quadratic in ``w``.
    """
    w = float(w)
    if not (0.0 <= w <= 1.0):
        raise DomainError(f"weight must lie in [0, 1], got {w}")
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    if moments.n != constants.n:
        raise DomainError(f"moments for n={moments.n} but constants for n={constants.n}")
    xi, eta = constants.xi, constants.eta
    v_r = moments.var_range / xi ** 2
    v_i = moments.var_iqr / eta ** 2
    c = moments.cov_range_iqr / (xi * eta)
    return sigma ** 2 * (w * w * v_r + (1 - w) ** 2 * v_i + 2 * w * (1 - w) * c)


# -- coefficient table -------------------------------------------------------


@dataclass(frozen=True)
class CoefficientRow:
    Q: int
    n: int
    theta1: float
    theta2: float


def coefficient_table(q_max: int = 60) -> list[CoefficientRow]:
    """Shortcut divisors for ``n = 4Q + 1``, ``Q = 1..q_max`` at full precision."""
    q_max = _check_n(q_max)
    rows = []
    for q in range(1, q_max + 1):
        c = normalization_constants(4 * q + 1)
        rows.append(CoefficientRow(q, c.n, c.theta1, c.theta2))
    return rows


def render_coefficient_table(rows: list[CoefficientRow], fmt: str = "text") -> str:
    """Render rows with 4-decimal fixed-point values as ``text`` or ``csv``."""
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["Q", "n", "theta1", "theta2"])
        for r in rows:
            writer.writerow([r.Q, r.n, f"{r.theta1:.4f}", f"{r.theta2:.4f}"])
        return buf.getvalue()
    if fmt != "text":
        raise DomainError(f"unknown table format {fmt!r}")
    lines = [f"{'Q':>4} {'n':>5} {'theta1':>9} {'theta2':>9}"]
    lines += [f"{r.Q:>4} {r.n:>5} {r.theta1:>9.4f} {r.theta2:>9.4f}" for r in rows]
    return "\n".join(lines) + "\n"
