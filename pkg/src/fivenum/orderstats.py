"""Moments of standard-normal order statistics and the optimal weight.

For ``n = 4Q + 1`` the five number summary of a normal sample consists of
the order statistics at ranks ``1, Q+1, 2Q+1, 3Q+1, n``.  The weight that
minimises the MSE of ``w * range / xi + (1 - w) * IQR / eta`` is
``1 / (1 + J(n))`` with::

    J(n) = (Var(R)/xi^2 - Cov(R, I)/(xi eta)) / (Var(I)/eta^2 - Cov(R, I)/(xi eta))

where ``R = Z(n) - Z(1)`` and ``I = Z(3Q+1) - Z(Q+1)``.

Two independent routes to the moments are provided:

``quadrature``
    Composite Gauss-Legendre integration of the single and joint order
    statistic densities, refined by doubling the panel count until
    successive estimates agree to the requested tolerance.
``monte_carlo``
    Block-seeded simulation of sorted standard-normal samples, with
    delete-one-block jackknife standard errors.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import least_squares

from .errors import DomainError, NumericFailure
from .estimators import NormalizationConstants, normalization_constants
from .normal import log_cdf_array, log_pdf_array, cdf_array

__all__ = [
    "SampleSizeQ",
    "OrderStatMoments",
    "PowerLawFit",
    "MomentCache",
    "order_stat_moments",
    "order_stat_moments_quadrature",
    "order_stat_moments_monte_carlo",
    "j_of_n",
    "optimal_weight_exact",
    "monte_carlo_weight",
    "j_grid",
    "fit_power_law",
]

DOMAIN = (-9.0, 9.0)
DEFAULT_TOL = 1e-10
GL_ORDER = 10
MIN_PANELS = 8
MAX_PANELS = 256
# Densities below exp(-LOG_CUTOFF) times the peak are treated as zero support.
LOG_CUTOFF = 45.0
MC_BLOCKS = 20
# Upper bound on doubles generated at once inside a Monte Carlo block.
_CHUNK_ELEMENTS = 4_000_000


@dataclass(frozen=True)
class SampleSizeQ:
    """Sample size ``n = 4Q + 1`` with ``Q >= 1``."""

    Q: int

    def __post_init__(self):
        if isinstance(self.Q, bool) or int(self.Q) != self.Q or self.Q < 1:
            raise DomainError(f"Q must be a positive integer, got {self.Q!r}")
        object.__setattr__(self, "Q", int(self.Q))

    @property
    def n(self) -> int:
        return 4 * self.Q + 1

    @classmethod
    def from_n(cls, n: int) -> "SampleSizeQ":
        if isinstance(n, bool) or int(n) != n or n < 5 or (int(n) - 1) % 4:
            raise DomainError(f"n must have the form 4Q + 1 with Q >= 1, got {n!r}")
        return cls((int(n) - 1) // 4)


@dataclass(frozen=True)
class OrderStatMoments:
    """Moments of the standard-normal order statistics in the summary.

    ``stderr`` holds Monte Carlo standard errors keyed by field name and is
    ``None`` for quadrature results.
    """

    n: int
    e_min: float
    e_q1: float
    e_q3: float
    e_max: float
    var_range: float
    var_iqr: float
    cov_range_iqr: float
    method: str = "quadrature"
    stderr: Optional[dict] = field(default=None, compare=False)

    @property
    def Q(self) -> int:
        return (self.n - 1) // 4


@dataclass(frozen=True)
class PowerLawFit:
    """``J(n) ~ c1 * n**c2 + c0``."""

    c0: float
    c1: float
    c2: float
    residual: float
    method: str = "least_squares"
    initial: Optional["PowerLawFit"] = None

    def __call__(self, n):
        return self.c1 * np.asarray(n, dtype=float) ** self.c2 + self.c0


# -- quadrature ------------------------------------------------------------


def _gl_rule(lo: float, hi: float, panels: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(GL_ORDER)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _log_density(r: int, n: int, x: np.ndarray) -> np.ndarray:
    """log f_(r)(x) for the r-th of n standard-normal order statistics."""
    logc = math.lgamma(n + 1) - math.lgamma(r) - math.lgamma(n - r + 1)
    out = logc + log_pdf_array(x)
    if r > 1:
        out = out + (r - 1) * log_cdf_array(x)
    if n > r:
        out = out + (n - r) * log_cdf_array(-x)
    return out


def _support(r: int, n: int) -> tuple[float, float]:
    grid = np.linspace(*DOMAIN, 3601)
    ld = _log_density(r, n, grid)
    keep = np.nonzero(ld > ld.max() - LOG_CUTOFF)[0]
    step = grid[1] - grid[0]
    return (max(DOMAIN[0], grid[keep[0]] - step), min(DOMAIN[1], grid[keep[-1]] + step))


def _refine(evaluate, tol: float, what: str) -> np.ndarray:
    """Double the panel count until successive results agree within ``tol``."""
    panels = MIN_PANELS
    prev = evaluate(panels)
    while panels < MAX_PANELS:
        panels *= 2
        cur = evaluate(panels)
        if np.max(np.abs(cur - prev)) < tol:
            return cur
        prev = cur
    raise NumericFailure(
        f"quadrature for {what} did not reach tolerance {tol:g} "
        f"with {MAX_PANELS} panels (last change {np.max(np.abs(cur - prev)):.3g})"
    )


def _single_moments(r: int, n: int, tol: float) -> np.ndarray:
    """``[P, E Z(r), E Z(r)^2]`` where P is the total mass (should be 1)."""
    lo, hi = _support(r, n)

    def evaluate(panels):
        x, w = _gl_rule(lo, hi, panels)
        f = np.exp(_log_density(r, n, x)) * w
        return np.array([f.sum(), (x * f).sum(), (x * x * f).sum()])

    return _refine(evaluate, tol, f"E[Z({r})^k], n={n}")


def _log_diff_cdf(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """log(Phi(y) - Phi(x)) for y >= x, evaluated in the better-conditioned tail."""
    upper = np.where(x > 0, cdf_array(-x) - cdf_array(-y), cdf_array(y) - cdf_array(x))
    with np.errstate(divide="ignore"):
        return np.log(upper)


def _product_moment(r: int, s: int, n: int, tol: float) -> np.ndarray:
    """``[P, E Z(r) Z(s)]`` for ranks ``r < s``.

    The ordered region ``x < y`` is mapped to a rectangle through
    ``y = x + t`` with ``t >= 0`` so the integrand stays smooth along the
    diagonal.
    """
    if not 1 <= r < s <= n:
        raise DomainError(f"need 1 <= r < s <= n, got r={r}, s={s}, n={n}")
    x_lo, x_hi = _support(r, n)
    y_lo, y_hi = _support(s, n)
    t_hi = y_hi - x_lo
    t_lo = max(0.0, y_lo - x_hi)
    logc = (math.lgamma(n + 1) - math.lgamma(r) - math.lgamma(s - r)
            - math.lgamma(n - s + 1))
    gap = s - r - 1

    def evaluate(panels):
        x, wx = _gl_rule(x_lo, x_hi, panels)
        t, wt = _gl_rule(t_lo, t_hi, panels)
        xx = x[:, None]
        yy = xx + t[None, :]
        ld = logc + log_pdf_array(xx) + log_pdf_array(yy)
        if r > 1:
            ld = ld + (r - 1) * log_cdf_array(xx)
        if gap:
            ld = ld + gap * _log_diff_cdf(xx, yy)
        if n > s:
            ld = ld + (n - s) * log_cdf_array(-yy)
        f = np.exp(ld) * wx[:, None] * wt[None, :]
        return np.array([f.sum(), (xx * yy * f).sum()])

    return _refine(evaluate, tol, f"E[Z({r})Z({s})], n={n}")


def order_stat_moments_quadrature(size: SampleSizeQ, tol: float = DEFAULT_TOL) -> OrderStatMoments:
    """Moments by numerical integration of the order statistic densities.

    Reflection ``Z -> -Z`` maps rank ``r`` to ``n + 1 - r``; it is used to
    halve the work, so ``e_min == -e_max`` and ``e_q1 == -e_q3`` exactly.
    """
    n, Q = size.n, size.Q
    lo_q, hi_q = Q + 1, 3 * Q + 1

    m_max = _single_moments(n, n, tol)
    m_q3 = _single_moments(hi_q, n, tol)
    for name, mass in (("Z(n)", m_max[0]), ("Z(3Q+1)", m_q3[0])):
        if abs(mass - 1.0) > 1e3 * tol + 1e-12:
            raise NumericFailure(f"density of {name} integrates to {mass!r} for n={n}")
    e_max, e_q3 = m_max[1], m_q3[1]
    var_max = m_max[2] - e_max ** 2
    var_q3 = m_q3[2] - e_q3 ** 2

    cov_1n = _product_moment(1, n, n, tol)[1] + e_max * e_max
    cov_iqr = _product_moment(lo_q, hi_q, n, tol)[1] + e_q3 * e_q3
    cov_q3_max = _product_moment(hi_q, n, n, tol)[1] - e_q3 * e_max
    cov_q1_max = _product_moment(lo_q, n, n, tol)[1] + e_q3 * e_max

    moments = OrderStatMoments(
        n=n,
        e_min=-e_max,
        e_q1=-e_q3,
        e_q3=e_q3,
        e_max=e_max,
        var_range=2.0 * (var_max - cov_1n),
        var_iqr=2.0 * (var_q3 - cov_iqr),
        cov_range_iqr=2.0 * (cov_q3_max - cov_q1_max),
        method="quadrature",
    )
    _validate(moments)
    return moments


def _validate(m: OrderStatMoments) -> None:
    if not (m.var_range > 0 and m.var_iqr > 0):
        raise NumericFailure(f"non-positive variance in moments for n={m.n}: {m}")
    bound = math.sqrt(m.var_range * m.var_iqr)
    if abs(m.cov_range_iqr) > bound * (1 + 1e-9):
        raise NumericFailure(f"covariance violates Cauchy-Schwarz for n={m.n}: {m}")


# -- Monte Carlo -----------------------------------------------------------

# Per-block sufficient statistics, in this column order.
_MC_COLUMNS = ("count", "s_max", "s_q3", "s_r", "s_i", "s_rr", "s_ii", "s_ri")


def _block_sizes(reps: int, blocks: int) -> list[int]:
    base, extra = divmod(reps, blocks)
    return [base + (1 if b < extra else 0) for b in range(blocks)]


def _mc_block(n: int, Q: int, rows: int, seed: int, block: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(n, block))))
    acc = np.zeros(len(_MC_COLUMNS))
    chunk = max(1, _CHUNK_ELEMENTS // n)
    kth = [0, Q, 3 * Q, n - 1]
    done = 0
    while done < rows:
        k = min(chunk, rows - done)
        z = rng.standard_normal((k, n))
        z.partition(kth, axis=1)
        zmin, zq1, zq3, zmax = z[:, 0], z[:, Q], z[:, 3 * Q], z[:, n - 1]
        r = zmax - zmin
        i = zq3 - zq1
        acc += (
            k,
            # reflection-symmetrised location statistics
            0.5 * (zmax - zmin).sum(),
            0.5 * (zq3 - zq1).sum(),
            r.sum(),
            i.sum(),
            (r * r).sum(),
            (i * i).sum(),
            (r * i).sum(),
        )
        done += k
    return acc


def _moments_from_sums(n: int, s: np.ndarray, stderr=None) -> OrderStatMoments:
    cnt, s_max, s_q3, s_r, s_i, s_rr, s_ii, s_ri = s
    mr, mi = s_r / cnt, s_i / cnt
    scale = cnt / (cnt - 1)
    e_max, e_q3 = s_max / cnt, s_q3 / cnt
    return OrderStatMoments(
        n=n,
        e_min=-e_max,
        e_q1=-e_q3,
        e_q3=e_q3,
        e_max=e_max,
        var_range=(s_rr / cnt - mr * mr) * scale,
        var_iqr=(s_ii / cnt - mi * mi) * scale,
        cov_range_iqr=(s_ri / cnt - mr * mi) * scale,
        method="monte_carlo",
        stderr=stderr,
    )


def _jackknife(values: np.ndarray) -> float:
    b = len(values)
    return float(math.sqrt((b - 1) / b * np.sum((values - values.mean()) ** 2)))


_MOMENT_FIELDS = ("e_min", "e_q1", "e_q3", "e_max", "var_range", "var_iqr", "cov_range_iqr")


def _mc_block_sums(size: SampleSizeQ, reps: int, seed: int, blocks: int,
                   workers: int) -> np.ndarray:
    if reps < 10_000:
        raise DomainError(f"Monte Carlo moments need reps >= 10000, got {reps}")
    if blocks < 2:
        raise DomainError("at least two blocks are needed for standard errors")
    sizes = _block_sizes(reps, blocks)
    args = [(size.n, size.Q, rows, seed, b) for b, rows in enumerate(sizes)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            sums = list(pool.map(lambda a: _mc_block(*a), args))
    else:
        sums = [_mc_block(*a) for a in args]
    return np.array(sums)


def order_stat_moments_monte_carlo(size: SampleSizeQ, reps: int = 1_000_000, seed: int = 0,
                                   blocks: int = MC_BLOCKS, workers: int = 1) -> OrderStatMoments:
    """Moments estimated from ``reps`` seeded sorted standard-normal samples.

    Replications are split into ``blocks`` fixed blocks; block ``b`` draws from
    ``SeedSequence(seed, spawn_key=(n, b))`` so the result does not depend on
    ``workers``.
    """
    per_block = _mc_block_sums(size, reps, seed, blocks, workers)
    total = per_block.sum(axis=0)
    loo = [_moments_from_sums(size.n, total - blk) for blk in per_block]
    stderr = {
        name: _jackknife(np.array([getattr(m, name) for m in loo]))
        for name in _MOMENT_FIELDS
    }
    return _moments_from_sums(size.n, total, stderr=stderr)


def monte_carlo_weight(size: SampleSizeQ, reps: int = 1_000_000, seed: int = 0,
                       blocks: int = MC_BLOCKS, workers: int = 1) -> tuple[float, float]:
    """Optimal weight from Monte Carlo moments and its jackknife standard error."""
    constants = normalization_constants(size.n)
    per_block = _mc_block_sums(size, reps, seed, blocks, workers)
    total = per_block.sum(axis=0)
    w = optimal_weight_exact(_moments_from_sums(size.n, total), constants)
    loo = np.array([
        optimal_weight_exact(_moments_from_sums(size.n, total - blk), constants)
        for blk in per_block
    ])
    return float(w), _jackknife(loo)


# -- cache -----------------------------------------------------------------


class MomentCache:
    """Plain-text store of quadrature moments for one ``(method, tol)`` key.

    Rows read ``n e_min e_q1 var_range var_iqr cov_range_iqr`` with every
    value written in the shortest positional notation that round-trips, so
    cached and freshly computed moments are bit-identical.
    """

    def __init__(self, path, method: str = "quadrature", tol: float = DEFAULT_TOL):
        self.path = Path(path)
        self.header = f"# method={method} tol={tol!r}"
        self._rows: dict[int, OrderStatMoments] = {}
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        lines = self.path.read_text().splitlines()
        if not lines or lines[0].strip() != self.header:
            raise ValueError(
                f"cache {self.path} was written for {lines[0] if lines else '<empty>'!r}, "
                f"expected {self.header!r}"
            )
        for line in lines[1:]:
            if not line.strip() or line.startswith("#"):
                continue
            n, e_min, e_q1, vr, vi, c = line.split()
            e_min, e_q1 = float(e_min), float(e_q1)
            self._rows[int(n)] = OrderStatMoments(
                n=int(n), e_min=e_min, e_q1=e_q1, e_q3=-e_q1, e_max=-e_min,
                var_range=float(vr), var_iqr=float(vi), cov_range_iqr=float(c),
            )

    def get(self, n: int) -> Optional[OrderStatMoments]:
        return self._rows.get(n)

    def put(self, m: OrderStatMoments) -> None:
        self._rows[m.n] = m
        self.save()

    def save(self) -> None:
        fmt = lambda v: np.format_float_positional(v, unique=True, trim="-")
        lines = [self.header]
        for n in sorted(self._rows):
            m = self._rows[n]
            lines.append(" ".join([str(n)] + [fmt(v) for v in (
                m.e_min, m.e_q1, m.var_range, m.var_iqr, m.cov_range_iqr)]))
        self.path.write_text("\n".join(lines) + "\n")


def order_stat_moments(size: SampleSizeQ, method: str = "quadrature", *, tol: float = DEFAULT_TOL,
                       reps: int = 1_000_000, seed: int = 0, workers: int = 1,
                       cache: Optional[MomentCache] = None) -> OrderStatMoments:
    """Dispatch to the quadrature or Monte Carlo route.

    Only quadrature results are cached.
    """
    if isinstance(size, int):
        size = SampleSizeQ.from_n(size)
    if method == "quadrature":
        if cache is not None:
            hit = cache.get(size.n)
            if hit is not None:
                return hit
        m = order_stat_moments_quadrature(size, tol)
        if cache is not None:
            cache.put(m)
        return m
    if method == "monte_carlo":
        return order_stat_moments_monte_carlo(size, reps=reps, seed=seed, workers=workers)
    raise DomainError(f"unknown moment method {method!r}")


# -- optimal weight --------------------------------------------------------


def j_of_n(moments: OrderStatMoments, constants: NormalizationConstants) -> float:
    """Moment ratio J(n); the exact optimal weight is ``1 / (1 + J)``."""
    if moments.n != constants.n:
        raise DomainError(f"moments for n={moments.n} but constants for n={constants.n}")
    xi, eta = constants.xi, constants.eta
    cross = moments.cov_range_iqr / (xi * eta)
    num = moments.var_range / xi ** 2 - cross
    den = moments.var_iqr / eta ** 2 - cross
    if not den > 0:
        raise NumericFailure(f"J(n) denominator is {den!r} for n={moments.n}")
    j = num / den
    if not j > 0:
        raise NumericFailure(f"J(n) = {j!r} is not positive for n={moments.n}")
    return j


def optimal_weight_exact(moments: OrderStatMoments, constants: NormalizationConstants) -> float:
    return 1.0 / (1.0 + j_of_n(moments, constants))


def j_grid(q_values: Iterable[int] = range(1, 101), tol: float = DEFAULT_TOL,
           cache: Optional[MomentCache] = None, workers: int = 1) -> list[tuple[int, float]]:
    """``(n, J(n))`` from quadrature moments for ``n = 4Q + 1``."""
    sizes = [SampleSizeQ(q) for q in q_values]

    def one(size):
        m = order_stat_moments(size, "quadrature", tol=tol, cache=cache)
        return size.n, j_of_n(m, normalization_constants(size.n))

    if workers > 1 and cache is None:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, sizes))
    return [one(s) for s in sizes]


# -- power-law fit ---------------------------------------------------------


def fit_power_law(samples: Sequence[tuple[float, float]], c0: Optional[float] = 0.0,
                  polish: bool = True) -> PowerLawFit:
    """Fit ``J(n) ~ c1 * n**c2 + c0`` with ``0 < c2 < 1``.

    With ``c0`` fixed (default 0) the start is ordinary least squares of
    ``log J`` on ``log n``, exact inside the model family.  ``polish`` then
    minimises the untransformed squared error; pass ``c0=None`` to fit the
    offset as well.  The log-log start is kept on ``initial``.
    """
    pts = np.asarray(samples, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 10:
        raise DomainError(f"need at least 10 (n, J) pairs, got {len(pts)}")
    n, j = pts[:, 0], pts[:, 1]
    if np.any(j <= 0) or np.any(n <= 0):
        raise DomainError("n and J values must be positive")
    base = 0.0 if c0 is None else float(c0)
    shifted = j - base
    if np.any(shifted <= 0):
        raise DomainError("J - c0 must be positive for the log-log start")
    slope, intercept = np.polyfit(np.log(n), np.log(shifted), 1)
    c1, c2 = math.exp(intercept), float(slope)

    def sse(c1_, c2_, c0_):
        return float(np.sum((c1_ * n ** c2_ + c0_ - j) ** 2))

    start = PowerLawFit(base, c1, c2, sse(c1, c2, base), method="loglog")
    if not polish:
        _check_concave(start)
        return start

    eps = 1e-9
    c2_start = min(max(c2, eps * 10), 1 - eps * 10)
    if c0 is None:
        x0 = [c1, c2_start, 0.0]
        resid = lambda p: p[0] * n ** p[1] + p[2] - j
        bounds = ([0.0, eps, -np.inf], [np.inf, 1 - eps, np.inf])
    else:
        x0 = [c1, c2_start]
        resid = lambda p: p[0] * n ** p[1] + base - j
        bounds = ([0.0, eps], [np.inf, 1 - eps])
    sol = least_squares(resid, x0, bounds=bounds, xtol=1e-15, ftol=1e-15, gtol=1e-15)
    p1, p2 = sol.x[0], sol.x[1]
    p0 = sol.x[2] if c0 is None else base
    fit = PowerLawFit(float(p0), float(p1), float(p2), sse(p1, p2, p0), initial=start)
    _check_concave(fit)
    return fit


def _check_concave(fit: PowerLawFit) -> None:
    if not 0.0 < fit.c2 < 1.0:
        raise NumericFailure(f"fitted exponent c2={fit.c2} is outside (0, 1)")
