import math

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from fivenum.errors import DomainError, NumericFailure
from fivenum.estimators import (
    S1,
    S2,
    S3,
    FiveNumberSummary,
    approx_optimal_weight,
    coefficient_table,
    mean_bland,
    mean_luo,
    mse_of_weight,
    normalization_constants,
    render_coefficient_table,
    sd_bland,
    sd_hozo_s1,
    sd_shi,
    sd_wan_s1,
    sd_wan_s2,
    sd_wan_s3,
    sd_weighted,
)

from reference_values import CAPANNI_ROWS, THETA_TABLE

mpmath.mp.dps = 30


def mp_xi_eta(n):
    q = lambda p: mpmath.sqrt(2) * mpmath.erfinv(2 * p - 1)
    n = mpmath.mpf(n)
    xi = 2 * q((n - mpmath.mpf("0.375")) / (n + mpmath.mpf("0.25")))
    eta = 2 * q((mpmath.mpf("0.75") * n - mpmath.mpf("0.125")) / (n + mpmath.mpf("0.25")))
    return float(xi), float(eta)


def summary_from_widths(a, b, iqr, n):
    m = (a + b) / 2
    return FiveNumberSummary(a, m - iqr / 2, m, m + iqr / 2, b, n)


@st.composite
def summaries(draw, min_n=2):
    vals = sorted(draw(st.lists(st.floats(-1e3, 1e3), min_size=5, max_size=5)))
    n = draw(st.integers(min_n, 2000))
    return FiveNumberSummary(*vals, n=n)


# -- normalization constants ------------------------------------------------


@pytest.mark.parametrize("n", [2, 5, 14, 42, 84, 241, 1000])
def test_constants_against_mpmath(n):
    xi, eta = mp_xi_eta(n)
    c = normalization_constants(n)
    assert c.xi == pytest.approx(xi, rel=1e-13)
    assert c.eta == pytest.approx(eta, rel=1e-13)
    j = 0.07 * n ** 0.6
    assert c.theta1 == pytest.approx((2 + 0.14 * n ** 0.6) * xi / 2, rel=1e-13)
    assert c.theta2 == pytest.approx((2 + 2 / j) * eta / 2, rel=1e-13)


def test_constants_table_rows():
    assert normalization_constants(5).theta1 == pytest.approx(2.7933, abs=5e-4)
    assert normalization_constants(5).theta2 == pytest.approx(6.4030, abs=5e-4)
    assert normalization_constants(241).theta1 == pytest.approx(16.1059, abs=5e-4)
    assert normalization_constants(241).theta2 == pytest.approx(2.0538, abs=5e-4)


def test_constants_n14():
    # mpmath oracle: xi(14) = 3.415106..., eta(14) = 1.213974...
    c = normalization_constants(14)
    assert c.xi == pytest.approx(3.4151062, abs=1e-6)
    assert c.eta == pytest.approx(1.2139737, abs=1e-6)


@pytest.mark.parametrize("n", [0, 1, -3, 2.5])
def test_constants_reject_small_n(n):
    with pytest.raises(DomainError):
        normalization_constants(n)


# -- Hozo ---------------------------------------------------------------------


def test_hozo_branches():
    assert sd_hozo_s1(S1(0, 5, 10, 10)).value == pytest.approx(10 / math.sqrt(12))
    assert sd_hozo_s1(S1(0, 5, 12, 50)).value == 3.0
    assert sd_hozo_s1(S1(0, 5, 12, 70)).value == 3.0
    assert sd_hozo_s1(S1(0, 5, 12, 71)).value == 2.0
    drop = 1 - sd_hozo_s1(S1(0, 5, 12, 71)).value / sd_hozo_s1(S1(0, 5, 12, 70)).value
    assert drop == pytest.approx(1 / 3)


def test_hozo_small_n_asymmetric():
    a, m, b = 1.0, 2.0, 9.0
    expected = math.sqrt(((b - a) ** 2 + (a - 2 * m + b) ** 2 / 4) / 12)
    assert sd_hozo_s1(S1(a, m, b, 15)).value == pytest.approx(expected)
    assert sd_hozo_s1(S1(a, m, b, 16)).value == 2.0


# -- Wan ------------------------------------------------------------------------


def test_wan_s1():
    xi, _ = mp_xi_eta(14)
    est = sd_wan_s1(S1(22.8, 28.0, 34.3, 14))
    assert est.value == pytest.approx(11.5 / xi, abs=1e-12)
    assert est.value == pytest.approx(3.3674, abs=1e-4)
    assert sd_wan_s1(S1(3, 3, 3, 20)).value == 0.0


def test_wan_s1_scales_exactly():
    a, m, b = 1.5, 4.25, 9.75
    base = sd_wan_s1(S1(a, m, b, 30)).value
    assert sd_wan_s1(S1(2 * a, 2 * m, 2 * b, 30)).value == 2 * base


def test_wan_s1_rejects_n1():
    with pytest.raises(DomainError):
        sd_wan_s1(S1(0, 1, 2, 1))


def test_wan_s2():
    assert sd_wan_s2(S2(10, 12, 14, 14)).value == pytest.approx(3.2950, abs=1e-3)
    assert sd_wan_s2(S2(10, 12, 18.1, 42)).value == pytest.approx(6.218, abs=2e-3)
    assert sd_wan_s2(S2(5, 5, 5, 10)).value == 0.0


@pytest.mark.parametrize("row", CAPANNI_ROWS, ids=[r[0] for r in CAPANNI_ROWS])
def test_wan_s3_and_shi_reported_rows(row):
    _, n, a, b, iqr, _, wan, shi = row
    s = summary_from_widths(a, b, iqr, n)
    assert sd_wan_s3(s).value == pytest.approx(wan, abs=2e-3)
    assert sd_shi(s).value == pytest.approx(shi, abs=2e-3)


def test_shi_closer_to_reported_sd():
    for _, n, a, b, iqr, sd, _, _ in CAPANNI_ROWS:
        s = summary_from_widths(a, b, iqr, n)
        assert abs(sd_shi(s).value - sd) <= abs(sd_wan_s3(s).value - sd) + 1e-12


# -- weighted / shortcut ---------------------------------------------------------


@given(summaries())
def test_weighted_reductions(s):
    assert sd_weighted(s, 1).value == sd_wan_s1(s.s1()).value
    assert sd_weighted(s, 0).value == sd_wan_s2(s.s2()).value
    assert sd_weighted(s, 0.5).value == pytest.approx(sd_wan_s3(s).value, rel=1e-15, abs=1e-300)


@given(summaries())
def test_shortcut_matches_weighted(s):
    w = approx_optimal_weight(s.n)
    assert sd_shi(s).value == pytest.approx(sd_weighted(s, w).value, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("w", [-0.01, 1.01, math.nan])
def test_weighted_rejects_bad_weight(w):
    with pytest.raises(DomainError):
        sd_weighted(FiveNumberSummary(0, 1, 2, 3, 4, 10), w)


def test_estimators_accept_s3_wrapper():
    s = FiveNumberSummary(0, 1, 2, 3, 4, 10)
    assert sd_shi(S3(s)) == sd_shi(s)
    assert mean_luo(S3(s)) == mean_luo(s)


def test_approx_weight():
    assert approx_optimal_weight(84) == pytest.approx(0.50020, abs=5e-4)
    assert approx_optimal_weight(14) == pytest.approx(0.74571, abs=5e-4)
    assert approx_optimal_weight(1) == pytest.approx(1 / 1.07)
    ws = [approx_optimal_weight(n) for n in range(1, 2000)]
    assert all(0 < w < 1 for w in ws)
    assert all(b < a for a, b in zip(ws, ws[1:]))


# -- means -------------------------------------------------------------------------


def test_mean_bland():
    assert mean_bland(FiveNumberSummary(1, 2, 3, 4, 5, 7)).value == 3
    assert mean_bland(FiveNumberSummary(0, 1, 2, 4, 10, 99)).value == 3.0


def test_mean_luo():
    assert mean_luo(FiveNumberSummary(10, 20, 30, 40, 50, 17)).value == pytest.approx(30)
    s = FiveNumberSummary(0, 1, 2, 4, 10, 25)
    w1 = 2.2 / (2.2 + 25 ** 0.75)
    w2 = 0.7 - 0.72 / 25 ** 0.55
    assert w1 == pytest.approx(0.16442, abs=1e-5)
    assert w2 == pytest.approx(0.57736, abs=1e-4)
    assert mean_luo(s).value == pytest.approx(2.782, abs=1e-3)


def test_mean_luo_weight_on_midrange_vanishes():
    # a large outlying maximum should matter less and less as n grows
    effects = []
    for n in (10, 100, 10_000, 1_000_000):
        lo = mean_luo(FiveNumberSummary(0, 1, 2, 3, 4, n)).value
        hi = mean_luo(FiveNumberSummary(0, 1, 2, 3, 104, n)).value
        effects.append(hi - lo)
    assert all(b < a for a, b in zip(effects, effects[1:]))
    assert effects[-1] < 0.2


# -- Bland SD ----------------------------------------------------------------------


def test_bland_degenerate():
    assert sd_bland(FiveNumberSummary(7, 7, 7, 7, 7, 3)).value == 0.0
    assert sd_bland(FiveNumberSummary(1e9, 1e9, 1e9, 1e9, 1e9, 3)).value == 0.0


def test_bland_value_and_independence_of_n():
    # radicand for {0,1,2,3,4}: 30/16 + 20/8 - 400/64 = 1.25
    values = {sd_bland(FiveNumberSummary(0, 1, 2, 3, 4, n)).value for n in (2, 10, 1000)}
    assert len(values) == 1
    assert values.pop() == pytest.approx(math.sqrt(1.25))


@given(summaries(), st.floats(-1e4, 1e4))
def test_bland_translation_invariant(s, d):
    moved = FiveNumberSummary(s.a + d, s.q1 + d, s.m + d, s.q3 + d, s.b + d, s.n)
    assert sd_bland(moved).value == pytest.approx(sd_bland(s).value, rel=1e-6, abs=1e-6)


def test_bland_rejects_negative_radicand(monkeypatch):
    from fivenum import estimators

    monkeypatch.setattr(estimators, "_bland_radicand", lambda *a: (-1.0, 1.0))
    with pytest.raises(NumericFailure):
        sd_bland(FiveNumberSummary(0, 1, 2, 3, 4, 5))


# -- equivariance -------------------------------------------------------------------

SD_FUNCS = [
    lambda s: sd_wan_s1(s.s1()).value,
    lambda s: sd_wan_s2(s.s2()).value,
    lambda s: sd_wan_s3(s).value,
    lambda s: sd_shi(s).value,
    lambda s: sd_bland(s).value,
    lambda s: sd_weighted(s, 0.3).value,
    lambda s: sd_hozo_s1(s.s1()).value,
]


@given(summaries(), st.floats(0.01, 100), st.floats(-1e3, 1e3))
def test_affine_equivariance(s, c, d):
    t = FiveNumberSummary(c * s.a + d, c * s.q1 + d, c * s.m + d, c * s.q3 + d, c * s.b + d, s.n)
    scale = max(1.0, abs(s.b - s.a))
    for f in SD_FUNCS:
        assert f(t) == pytest.approx(c * f(s), rel=1e-7, abs=1e-9 * c * scale)
    for f in (mean_bland, mean_luo):
        assert f(t).value == pytest.approx(c * f(s).value + d, rel=1e-9, abs=1e-6 * (c + 1) * max(1.0, abs(d), abs(s.b), abs(s.a)))


def test_summary_ordering_enforced():
    with pytest.raises(DomainError):
        FiveNumberSummary(0, 2, 1, 3, 4, 10)
    with pytest.raises(DomainError):
        S1(3, 1, 4, 10)
    with pytest.raises(DomainError):
        S2(1, 5, 4, 10)
    with pytest.raises(DomainError):
        FiveNumberSummary(0, 1, 2, 3, math.inf, 10)
    FiveNumberSummary(1, 1, 1, 1, 1, 1)


# -- MSE --------------------------------------------------------------------------


@pytest.mark.parametrize("n", [5, 85, 201])
def test_mse_minimised_at_optimal_weight(n, quad_moments):
    from fivenum.orderstats import optimal_weight_exact

    m = quad_moments(n)
    c = normalization_constants(n)
    w = optimal_weight_exact(m, c)
    at = mse_of_weight(w, m, c)
    for d in (0.01, -0.01):
        if 0 <= w + d <= 1:
            assert mse_of_weight(w + d, m, c) > at
    grid = np.linspace(0, 1, 2001)
    best = grid[np.argmin([mse_of_weight(g, m, c) for g in grid])]
    assert best == pytest.approx(w, abs=1e-3)


def test_mse_quadratic_and_scaling(quad_moments):
    m = quad_moments(29)
    c = normalization_constants(29)
    ws = [0.1, 0.35, 0.6, 0.85]
    vals = [mse_of_weight(w, m, c) for w in ws]
    d2 = [vals[i] - 2 * vals[i + 1] + vals[i + 2] for i in range(2)]
    assert d2[0] == pytest.approx(d2[1], rel=1e-9)
    assert d2[0] >= 0
    assert mse_of_weight(0.4, m, c, sigma=2.0) == pytest.approx(4 * mse_of_weight(0.4, m, c, sigma=1.0))


def test_mse_rejects_mismatch(quad_moments):
    with pytest.raises(DomainError):
        mse_of_weight(0.5, quad_moments(5), normalization_constants(9))
    with pytest.raises(DomainError):
        mse_of_weight(1.5, quad_moments(5), normalization_constants(5))


# -- coefficient table ------------------------------------------------------------


@pytest.mark.parametrize("q", [2, 21, 41])
def test_coefficient_rows(q):
    row = coefficient_table(60)[q - 1]
    assert (row.Q, row.n) == (q, 4 * q + 1)
    assert row.theta1 == pytest.approx(THETA_TABLE[q][0], abs=5e-4)
    assert row.theta2 == pytest.approx(THETA_TABLE[q][1], abs=5e-4)


def test_coefficient_table_rendering():
    rows = coefficient_table(10)
    text = render_coefficient_table(rows, "csv").splitlines()
    assert text[0] == "Q,n,theta1,theta2"
    assert text[1] == "1,5,2.7933,6.4030"
    assert text[10] == "10,41,7.1472,3.3049"
    plain = render_coefficient_table(rows, "text").splitlines()
    assert len(plain) == 11
    assert plain[1].split() == ["1", "5", "2.7933", "6.4030"]
    # full precision is retained on the rows themselves
    assert rows[0].theta1 != round(rows[0].theta1, 4)


def test_coefficient_table_memo_free_determinism():
    assert coefficient_table(61) == coefficient_table(61)
    t1 = [r.theta1 for r in coefficient_table(61)]
    assert all(b > a for a, b in zip(t1, t1[1:]))
