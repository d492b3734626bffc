"""Seeded samplers and the RMSE comparison harness.

Every replication block draws from its own generator seeded by
``SeedSequence(master_seed, spawn_key=(n, block))``.  Blocks are reduced
by summing per-block squared errors in block order, so a report depends
only on the configuration and never on how many workers produced it.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import gamma as gamma_fn

from .errors import DomainError, NumericFailure
from .estimators import FiveNumberSummary, normalization_constants, sd_kernel

__all__ = [
    "Normal",
    "LogNormal",
    "ChiSquare",
    "Beta",
    "Weibull",
    "DistributionSpec",
    "parse_distribution",
    "draw_sample",
    "true_sigma",
    "five_number_summary",
    "SimulationConfig",
    "RmseRecord",
    "RmseReport",
    "run_rmse",
    "histogram_scenario",
    "histogram_csv",
    "DEFAULT_GRID",
    "SKEWED_DISTRIBUTIONS",
]

DEFAULT_GRID = tuple(4 * q + 1 for q in (1, 2, 3, 5, 7, 10, 15, 21, 30, 40, 50))
BLOCK_SIZE = 10_000
_MIN_BLOCKS = 20
# Cap on doubles held by one block; large n gets proportionally fewer rows.
_BLOCK_ELEMENTS = 2_000_000


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not (math.isfinite(value) and value > 0):
        raise DomainError(f"{name} must be positive and finite, got {value!r}")
    return value


@dataclass(frozen=True)
class Normal:
    mu: float
    sigma: float

    def __post_init__(self):
        if not math.isfinite(self.mu):
            raise DomainError(f"mu must be finite, got {self.mu!r}")
        _positive("sigma", self.sigma)

    @property
    def label(self) -> str:
        return f"normal({self.mu:g},{self.sigma:g})"

    def sd(self) -> float:
        return float(self.sigma)

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        return self.mu + self.sigma * rng.standard_normal(shape)


@dataclass(frozen=True)
class LogNormal:
    """``exp(N(location, scale^2))``."""

    location: float
    scale: float

    def __post_init__(self):
        if not math.isfinite(self.location):
            raise DomainError(f"location must be finite, got {self.location!r}")
        _positive("scale", self.scale)

    @property
    def label(self) -> str:
        return f"lognormal({self.location:g},{self.scale:g})"

    def sd(self) -> float:
        s2 = self.scale ** 2
        return math.sqrt(math.expm1(s2) * math.exp(2 * self.location + s2))

    def sample(self, rng, shape):
        return np.exp(self.location + self.scale * rng.standard_normal(shape))


@dataclass(frozen=True)
class ChiSquare:
    df: int

    def __post_init__(self):
        if isinstance(self.df, bool) or int(self.df) != self.df or self.df < 1:
            raise DomainError(f"df must be a positive integer, got {self.df!r}")

    @property
    def label(self) -> str:
        return f"chisq({self.df})"

    def sd(self) -> float:
        return math.sqrt(2.0 * self.df)

    def sample(self, rng, shape):
        # chi-square(k) = 2 * Gamma(k / 2, 1)
        return 2.0 * rng.standard_gamma(self.df / 2.0, shape)


@dataclass(frozen=True)
class Beta:
    alpha: float
    beta: float

    def __post_init__(self):
        _positive("alpha", self.alpha)
        _positive("beta", self.beta)

    @property
    def label(self) -> str:
        return f"beta({self.alpha:g},{self.beta:g})"

    def sd(self) -> float:
        a, b = self.alpha, self.beta
        return math.sqrt(a * b / ((a + b) ** 2 * (a + b + 1)))

    def sample(self, rng, shape):
        x = rng.standard_gamma(self.alpha, shape)
        y = rng.standard_gamma(self.beta, shape)
        return x / (x + y)


@dataclass(frozen=True)
class Weibull:
    shape: float
    scale: float

    def __post_init__(self):
        _positive("shape", self.shape)
        _positive("scale", self.scale)

    @property
    def label(self) -> str:
        return f"weibull({self.shape:g},{self.scale:g})"

    def sd(self) -> float:
        k = self.shape
        return self.scale * math.sqrt(gamma_fn(1 + 2 / k) - gamma_fn(1 + 1 / k) ** 2)

    def sample(self, rng, shape):
        # inverse transform; 1 - U avoids log(0)
        u = rng.random(shape)
        return self.scale * (-np.log1p(-u)) ** (1.0 / self.shape)


DistributionSpec = Union[Normal, LogNormal, ChiSquare, Beta, Weibull]

SKEWED_DISTRIBUTIONS = (
    LogNormal(4.0, 0.3),
    ChiSquare(10),
    Beta(9.0, 4.0),
    Weibull(2.0, 35.0),
)

_PARSERS = {
    "normal": (Normal, 2),
    "lognormal": (LogNormal, 2),
    "chisq": (ChiSquare, 1),
    "chisquare": (ChiSquare, 1),
    "beta": (Beta, 2),
    "weibull": (Weibull, 2),
}


def parse_distribution(text: str) -> DistributionSpec:
    """Parse ``name:p1,p2`` such as ``normal:50,17`` or ``chisq:10``."""
    name, _, params = text.partition(":")
    try:
        cls, arity = _PARSERS[name.strip().lower()]
    except KeyError:
        raise DomainError(f"unknown distribution {name!r}; choose from {sorted(_PARSERS)}") from None
    values = [p for p in params.split(",") if p.strip()]
    if len(values) != arity:
        raise DomainError(f"{name} takes {arity} parameter(s), got {params!r}")
    if cls is ChiSquare:
        df = float(values[0])
        if df != int(df):
            raise DomainError(f"df must be an integer, got {values[0]!r}")
        return ChiSquare(int(df))
    return cls(*(float(v) for v in values))


def true_sigma(dist: DistributionSpec) -> float:
    return dist.sd()


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def draw_sample(dist: DistributionSpec, n: int, seed: int) -> np.ndarray:
    """``n`` sorted draws from ``dist``; a pure function of its arguments."""
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n!r}")
    return np.sort(dist.sample(_rng(seed), int(n)))


# -- five number summaries -------------------------------------------------


def _is_4q1(n: int) -> bool:
    return n >= 5 and (n - 1) % 4 == 0


def _summary_columns(x: np.ndarray, convention: str) -> tuple[np.ndarray, ...]:
    """(a, q1, m, q3, b) for each row of ``x``; rows are partially sorted in place."""
    n = x.shape[-1]
    if convention == "auto":
        convention = "paper_4q1" if _is_4q1(n) else "interpolated"
    if convention == "paper_4q1":
        if not _is_4q1(n):
            raise DomainError(f"paper_4q1 convention needs n = 4Q + 1, got n={n}")
        q = (n - 1) // 4
        ranks = [0, q, 2 * q, 3 * q, n - 1]
        x.partition(ranks, axis=-1)
        return tuple(x[..., r] for r in ranks)
    if convention != "interpolated":
        raise DomainError(f"unknown quartile convention {convention!r}")
    # Linear interpolation at 0-based position p * (n - 1), i.e. 1 + p(n - 1)
    # over positions 1..n.  For n = 4Q + 1 this lands exactly on ranks Q+1 etc.
    positions = [p * (n - 1) for p in (0.25, 0.5, 0.75)]
    lows = [int(math.floor(h)) for h in positions]
    kth = sorted({0, n - 1, *lows, *(min(lo + 1, n - 1) for lo in lows)})
    x.partition(kth, axis=-1)
    cols = [x[..., 0]]
    for h, lo in zip(positions, lows):
        hi = min(lo + 1, n - 1)
        frac = h - lo
        cols.append(x[..., lo] + frac * (x[..., hi] - x[..., lo]))
    cols.append(x[..., n - 1])
    return tuple(cols)


def five_number_summary(sample: Sequence[float], convention: str = "paper_4q1") -> FiveNumberSummary:
    """Summary of an ordered sample.

    ``paper_4q1`` reads ranks ``1, Q+1, 2Q+1, 3Q+1, n`` of a sample of size
    ``4Q + 1``.  ``interpolated`` interpolates linearly at probabilities
    0.25/0.5/0.75 over positions ``1..n`` (the two agree when ``n = 4Q + 1``).
    """
    x = np.array(sample, dtype=float)
    if x.ndim != 1 or len(x) == 0:
        raise DomainError("sample must be a non-empty 1-d sequence")
    if np.any(np.diff(x) < 0):
        raise DomainError("sample must be sorted ascending")
    cols = _summary_columns(x.copy(), convention)
    return FiveNumberSummary(*(float(c) for c in cols), n=len(x))


# -- RMSE harness -------------------------------------------------------------


@dataclass(frozen=True)
class SimulationConfig:
    dist: DistributionSpec
    n_grid: tuple[int, ...] = DEFAULT_GRID
    reps: int = 200_000
    master_seed: int = 0
    estimator_pair: tuple[str, str] = ("wan_sd_s3", "shi_sd")
    sd_divisor: str = "n_minus_1"
    convention: str = "auto"
    block_size: int = BLOCK_SIZE

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        if not self.n_grid:
            raise DomainError("n_grid must not be empty")
        if any(n < 5 for n in self.n_grid):
            raise DomainError(f"every n must be >= 5, got {self.n_grid}")
        if self.reps < 1000:
            raise DomainError(f"reps must be >= 1000, got {self.reps}")
        if self.master_seed < 0:
            raise DomainError("master_seed must be unsigned")
        if self.sd_divisor not in ("n_minus_1", "n"):
            raise DomainError(f"sd_divisor must be 'n_minus_1' or 'n', got {self.sd_divisor!r}")
        if self.block_size < 1:
            raise DomainError("block_size must be positive")
        for label in self.estimator_pair:
            sd_kernel(label)


@dataclass(frozen=True)
class RmseRecord:
    n: int
    rmse_existing: float
    rmse_new: float
    mc_standard_error: float
    se_existing: float = 0.0
    se_new: float = 0.0


@dataclass
class RmseReport:
    config: SimulationConfig
    records: list[RmseRecord] = field(default_factory=list)

    def record(self, n: int) -> RmseRecord:
        for r in self.records:
            if r.n == n:
                return r
        raise KeyError(n)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dist", "n", "T", "rmse_existing", "rmse_new", "mc_se"])
        for r in self.records:
            w.writerow([self.config.dist.label, r.n, self.config.reps,
                        _fmt(r.rmse_existing), _fmt(r.rmse_new), _fmt(r.mc_standard_error)])
        return buf.getvalue()


def _fmt(x: float) -> str:
    return format(float(x), ".9g")


def _block_rows(reps: int, n: int, block_size: int) -> list[int]:
    # Short runs are split into at least _MIN_BLOCKS blocks so the jackknife is defined.
    rows = max(1, min(block_size, _BLOCK_ELEMENTS // n, -(-reps // _MIN_BLOCKS)))
    full, rest = divmod(reps, rows)
    return [rows] * full + ([rest] if rest else [])


def _rmse_block(cfg: SimulationConfig, n: int, block: int, rows: int, sigma: float) -> np.ndarray:
    rng = _rng(cfg.master_seed, n, block)
    x = cfg.dist.sample(rng, (rows, n))
    ddof = 1 if cfg.sd_divisor == "n_minus_1" else 0
    s_full = x.std(axis=1, ddof=ddof)
    a, q1, m, q3, b = _summary_columns(x, cfg.convention)
    existing = sd_kernel(cfg.estimator_pair[0])(a, q1, m, q3, b, n)
    new = sd_kernel(cfg.estimator_pair[1])(a, q1, m, q3, b, n)
    sums = np.array([
        np.sum((s_full - sigma) ** 2),
        np.sum((existing - sigma) ** 2),
        np.sum((new - sigma) ** 2),
    ])
    if not np.all(np.isfinite(sums)):
        raise NumericFailure(
            f"non-finite squared-error sums {sums} for {cfg.dist.label}, n={n}, block={block}"
        )
    return sums


def _ratio_jackknife(blocks: np.ndarray, col: int) -> float:
    total = blocks.sum(axis=0)
    if len(blocks) < 2:
        return float("nan")
    loo = np.array([(total[col] - b[col]) / (total[0] - b[0]) for b in blocks])
    k = len(loo)
    return float(math.sqrt((k - 1) / k * np.sum((loo - loo.mean()) ** 2)))


def run_rmse(config: SimulationConfig, workers: int = 1) -> RmseReport:
    """Relative MSE of two SD estimators against the full-sample SD.

    For each ``n`` the ratio is ``sum (S_est - sigma)^2 / sum (S - sigma)^2``
    over ``config.reps`` replications, with ``S`` the full-sample SD.  The
    reported ``mc_standard_error`` is the larger of the two delete-one-block
    jackknife standard errors.
    """
    sigma = config.dist.sd()
    tasks = [(n, b, rows) for n in config.n_grid
             for b, rows in enumerate(_block_rows(config.reps, n, config.block_size))]
    run = lambda t: _rmse_block(config, t[0], t[1], t[2], sigma)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(t) for t in tasks]

    report = RmseReport(config)
    for n in config.n_grid:
        blocks = np.array([res for (tn, _, _), res in zip(tasks, results) if tn == n])
        total = blocks.sum(axis=0)
        if not total[0] > 0:
            raise NumericFailure(f"full-sample SD has zero squared error at n={n}")
        se_ex = _ratio_jackknife(blocks, 1)
        se_new = _ratio_jackknife(blocks, 2)
        report.records.append(RmseRecord(
            n=n,
            rmse_existing=float(total[1] / total[0]),
            rmse_new=float(total[2] / total[0]),
            mc_standard_error=max(se_ex, se_new),
            se_existing=se_ex,
            se_new=se_new,
        ))
    return report


# -- histogram scenario ---------------------------------------------------------


def histogram_scenario(n: int, reps: int = 10_000, seed: int = 0,
                       convention: str = "auto") -> tuple[np.ndarray, np.ndarray]:
    """Per-replication ``(b - a) / xi`` and ``(q3 - q1) / eta`` on N(0, 1) samples.

    The true SD is 1.  Returns the range-based and IQR-based estimates.
    """
    if int(n) != n or n < 5:
        raise DomainError(f"n must be an integer >= 5, got {n!r}")
    if reps < 1000:
        raise DomainError(f"reps must be >= 1000, got {reps}")
    n = int(n)
    c = normalization_constants(n)
    range_est, iqr_est = [], []
    for block, rows in enumerate(_block_rows(reps, n, BLOCK_SIZE)):
        z = _rng(seed, n, block).standard_normal((rows, n))
        a, q1, _, q3, b = _summary_columns(z, convention)
        range_est.append((b - a) / c.xi)
        iqr_est.append((q3 - q1) / c.eta)
    out = np.concatenate(range_est), np.concatenate(iqr_est)
    if not (np.all(np.isfinite(out[0])) and np.all(np.isfinite(out[1]))):
        raise NumericFailure(f"non-finite estimates in histogram scenario n={n}")
    return out


def histogram_csv(range_est: np.ndarray, iqr_est: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["range_est", "iqr_est"])
    for r, i in zip(range_est, iqr_est):
        w.writerow([_fmt(r), _fmt(i)])
    return buf.getvalue()
