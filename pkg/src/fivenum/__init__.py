"""Sample mean and standard deviation from five-number-summary data."""

from .errors import DomainError, NumericFailure
from .estimators import (
    S1,
    S2,
    S3,
    Estimate,
    FiveNumberSummary,
    NormalizationConstants,
    approx_optimal_weight,
    coefficient_table,
    mean_bland,
    mean_luo,
    mse_of_weight,
    normalization_constants,
    sd_bland,
    sd_hozo_s1,
    sd_shi,
    sd_wan_s1,
    sd_wan_s2,
    sd_wan_s3,
    sd_weighted,
)
from .normal import std_normal_cdf, std_normal_pdf, std_normal_quantile
from .orderstats import (
    OrderStatMoments,
    PowerLawFit,
    SampleSizeQ,
    fit_power_law,
    j_of_n,
    optimal_weight_exact,
    order_stat_moments,
)

__version__ = "0.1.0"
