import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st

from zerorange.errors import DomainError
from zerorange.model import (
    ModelParams,
    build_weight_table,
    critical_constants,
    density_of_fugacity,
    elementary_inequality_holds,
    fluctuation_scale,
    hypergeometric_series,
    hypergeometric_sum,
    jump_rate,
    partition_function,
    smoothness_bounds,
    stretched_amplitude,
    tail_asymptotic,
    tail_by_summation,
    truncated_second_moment,
)
from zerorange.special import bernoulli_poly, gamma_ratio_series, log_gamma_ratio

B4 = ModelParams.power_law(4.0)
STR = ModelParams.stretched(1.0, 0.75)

# ρ_c and σ² of the stretched family (β=1, λ=3/4), frozen from a 40-digit
# mpmath summation of the rate recursion up to k = 4e5.
STRETCHED_RHO_C = 5.683436277282511
STRETCHED_SIGMA2 = 188.212925303527


def _mp_weight(b, k):
    b = mp.mpf(b)
    return (b - 1) * mp.gamma(b) * mp.factorial(k) / mp.gamma(k + b + 1)


# ---------------------------------------------------------------------------
# parameters and rates


def test_params_validation():
    with pytest.raises(DomainError):
        ModelParams.power_law(2.0)
    with pytest.raises(DomainError):
        ModelParams.stretched(1.0, 0.5)
    with pytest.raises(DomainError):
        ModelParams.stretched(0.0, 0.75)
    assert B4.phi_c == 1.0 and STR.phi_c == 1.0


def test_params_round_trip():
    for p in (B4, STR):
        assert ModelParams.from_dict(p.to_dict()) == p
    assert B4.key() != ModelParams.power_law(4.5).key()


def test_jump_rate_examples():
    assert jump_rate(B4, 1) == 5.0
    assert jump_rate(B4, 0) == 0.0
    assert jump_rate(STR, 0) == 0.0
    assert jump_rate(STR, 16) == pytest.approx(1.125, rel=1e-15)
    k = np.arange(1, 50)
    assert np.allclose(jump_rate(B4, k), 1 + 4.0 / k, rtol=1e-15)


# ---------------------------------------------------------------------------
# weight tables


def test_weight_table_examples():
    wt = build_weight_table(B4)
    assert wt.w[0] == pytest.approx(0.75, rel=1e-14)
    assert wt.w[1] == pytest.approx(0.15, rel=1e-14)
    assert wt.w[2] == pytest.approx(0.05, rel=1e-14)
    assert wt.tail[2] == pytest.approx(0.10, rel=1e-14)
    assert wt.tail[2] == pytest.approx(1 - wt.w[0] - wt.w[1], rel=1e-13)
    assert wt.tail[0] == pytest.approx(1.0, rel=1e-14)


@pytest.mark.parametrize("b", [2.5, 3.0, 4.0, 6.0])
def test_weights_match_mpmath(b):
    wt = build_weight_table(ModelParams.power_law(b))
    for k in (0, 1, 7, 100, wt.kmax // 2, wt.kmax):
        assert wt.w[k] == pytest.approx(float(_mp_weight(b, k)), rel=1e-12)
    for m in (3, 1000, wt.kmax + 1):
        exact = mp.gamma(b) * mp.factorial(m) / mp.gamma(m + b)
        assert wt.tail[m] == pytest.approx(float(exact), rel=1e-12)
    big = 10**9
    exact = mp.gamma(b) * mp.exp(mp.loggamma(big + 1) - mp.loggamma(big + b))
    assert math.exp(wt.log_tail(big)) == pytest.approx(float(exact), rel=1e-12)


@pytest.mark.parametrize("params", [ModelParams.power_law(2.5), B4, ModelParams.power_law(7.0), STR,
                                    ModelParams.stretched(2.0, 0.6)])
def test_weight_table_invariants(params):
    wt = build_weight_table(params)
    assert wt.cdf[-1] + wt.tail[wt.kmax + 1] == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.diff(wt.w) < 0)
    k = np.arange(1, wt.kmax + 1)
    rec = wt.w[k] * jump_rate(params, k) / wt.w[k - 1]
    assert np.max(np.abs(rec - 1)) < 1e-12
    if params.is_power_law:
        scaled = np.log(wt.w[1:]) + params.b * np.log(k)
        assert np.all(np.diff(scaled) >= -1e-12)


def test_stretched_constants_frozen():
    cc = critical_constants(STR)
    assert cc.rho_c == pytest.approx(STRETCHED_RHO_C, rel=1e-10)
    assert cc.sigma2 == pytest.approx(STRETCHED_SIGMA2, rel=1e-10)


@pytest.mark.slow
def test_stretched_constants_mpmath():
    mp.mp.dps = 40
    try:
        u = mp.mpf(1)
        z = m1 = m2 = mp.mpf(0)
        for k in range(0, 400001):
            if k:
                u /= 1 + mp.mpf(k) ** mp.mpf(-0.75)
            z += u
            m1 += k * u
            m2 += k * k * u
        rho = m1 / z
        sigma2 = m2 / z - rho * rho
    finally:
        mp.mp.dps = 15
    assert float(rho) == pytest.approx(STRETCHED_RHO_C, rel=1e-10)
    assert float(sigma2) == pytest.approx(STRETCHED_SIGMA2, rel=1e-9)


# ---------------------------------------------------------------------------
# grand-canonical quantities


def test_partition_function_examples():
    assert partition_function(B4, 1.0) == pytest.approx(4 / 3, rel=1e-14)
    assert partition_function(B4, 0.0) == 1.0
    partial, term = 1.0, 1.0
    for k in range(1, 50):
        term *= 0.5 / (1 + 4.0 / k)
        partial += term
    assert partition_function(B4, 0.5) == pytest.approx(partial, abs=1e-12)
    with pytest.raises(DomainError):
        partition_function(B4, 1.01)
    with pytest.raises(DomainError):
        partition_function(B4, -0.1)


def test_density_examples():
    assert density_of_fugacity(B4, 1.0) == pytest.approx(0.5, rel=1e-12)
    assert density_of_fugacity(B4, 0.0) == 0.0
    r9, r8 = density_of_fugacity(B4, 0.9), density_of_fugacity(B4, 0.8)
    assert 0 < r8 < r9 < 0.5


@pytest.mark.parametrize("params", [B4, ModelParams.power_law(2.5), STR])
def test_density_increasing_on_grid(params):
    phis = np.linspace(0.0, 1.0, 41)
    rho = [density_of_fugacity(params, p) for p in phis]
    assert all(b > a for a, b in zip(rho, rho[1:]))
    assert rho[-1] == pytest.approx(critical_constants(params).rho_c, rel=1e-9)


def test_critical_constants_examples():
    cc = critical_constants(B4)
    assert (cc.Z_c, cc.rho_c, cc.sigma2) == pytest.approx((4 / 3, 0.5, 2.25), rel=1e-15)
    assert math.isinf(critical_constants(ModelParams.power_law(3.0)).sigma2)
    assert critical_constants(ModelParams.power_law(2.5)).rho_c == 2.0


@pytest.mark.parametrize("b", [2.5, 3.0, 3.5, 4.0, 6.0, 10.0])
def test_series_matches_closed_form(b):
    p = ModelParams.power_law(b)
    c, s = critical_constants(p, "closed"), critical_constants(p, "series")
    assert s.Z_c == pytest.approx(c.Z_c, rel=1e-10)
    assert s.rho_c == pytest.approx(c.rho_c, rel=1e-10)
    if b > 3:
        assert s.sigma2 == pytest.approx(c.sigma2, rel=1e-10)
    else:
        assert math.isinf(s.sigma2)


def test_tail_by_summation():
    for b in (2.5, 4.0):
        p = ModelParams.power_law(b)
        wt = build_weight_table(p)
        ms = np.array([0, 1, 10, 500, 1000])
        assert np.allclose(tail_by_summation(p, ms), wt.tail[ms], rtol=1e-10, atol=0)
        assert tail_by_summation(p, 3) == pytest.approx(float(wt.tail[3]), rel=1e-10)
    with pytest.raises(DomainError):
        tail_by_summation(STR, 1)


# ---------------------------------------------------------------------------
# hypergeometric identity


def test_hypergeometric_examples():
    assert hypergeometric_sum(1, 1, 4) == pytest.approx(0.25, rel=1e-14)
    assert hypergeometric_sum(1, 2, 5) == pytest.approx(1 / 12, rel=1e-14)
    assert hypergeometric_series(1, 1, 4) == pytest.approx(0.25, rel=1e-10)
    assert hypergeometric_series(1, 2, 5) == pytest.approx(1 / 12, rel=1e-10)
    with pytest.raises(DomainError):
        hypergeometric_sum(1, 1, 2)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(0.1, 3.0), st.floats(0.05, 30.0))
def test_hypergeometric_series_vs_closed(u, v, gap):
    w = u + v + gap
    c = hypergeometric_sum(u, v, w)
    oracle = mp.gamma(u) * mp.gamma(v) / mp.gamma(w) * mp.hyp2f1(u, v, w, 1)
    assert c == pytest.approx(float(oracle), rel=1e-12)
    if gap >= 0.5:
        assert hypergeometric_series(u, v, w) == pytest.approx(c, rel=1e-10)


# ---------------------------------------------------------------------------
# bounds and asymptotics


def test_smoothness_examples():
    wt = build_weight_table(B4)
    lo, hi = smoothness_bounds(B4, 5, 5)
    assert lo == hi == wt.w[5]
    lo, hi = smoothness_bounds(B4, 2, 4)
    assert lo == pytest.approx(wt.w[2] / 16) and hi == wt.w[2]
    assert lo <= wt.w[4] <= hi
    lo, hi = smoothness_bounds(STR, 1, 16)
    assert lo <= build_weight_table(STR).w[16] <= hi
    with pytest.raises(DomainError):
        smoothness_bounds(B4, 3, 2)


@settings(max_examples=200, deadline=None)
@given(st.sampled_from([B4, ModelParams.power_law(2.5), STR]), st.integers(0, 3000), st.integers(0, 3000))
def test_sandwich_property(params, a, b):
    k1, k2 = min(a, b), max(a, b)
    wt = build_weight_table(params)
    lo, hi = smoothness_bounds(params, k1, k2, wt)
    w2 = wt.weight(k2)
    assert lo * (1 - 1e-12) <= w2 <= hi * (1 + 1e-12)


@settings(max_examples=300, deadline=None)
@given(st.floats(-0.999999, 1e12, allow_nan=False))
def test_elementary_inequality(x):
    assert elementary_inequality_holds(x)


def test_power_law_tail_asymptotic():
    wt = build_weight_table(B4)
    # F̄(x) / (Γ(b) x^{1-b}) = x^3 / ((x+1)(x+2)(x+3)) exactly at b = 4
    assert wt.tail[100] / tail_asymptotic(B4, 100) == pytest.approx(100**3 / (101 * 102 * 103), rel=1e-12)
    assert wt.tail[400] / tail_asymptotic(B4, 400) == pytest.approx(1.0, abs=0.02)
    dev = [abs(wt.tail[x] / tail_asymptotic(B4, x) - 1) for x in (50, 100, 200, 400)]
    assert all(b < a for a, b in zip(dev, dev[1:]))
    with pytest.raises(DomainError):
        tail_asymptotic(B4, 0.0)


def test_b3_truncated_second_moment():
    p = ModelParams.power_law(3.0)
    dev = [abs(truncated_second_moment(p, L) / (4 * math.log(L)) - 1) for L in (10**3, 10**4, 10**5)]
    assert all(b < a for a, b in zip(dev, dev[1:]))


def test_stretched_amplitude_and_tail_trend():
    amp, err = stretched_amplitude(STR)
    assert amp > 0 and 0 <= err < 1e-2 * amp
    wt = build_weight_table(STR)
    dev = [abs(wt.tail[k] / tail_asymptotic(STR, k, amp) - 1) for k in (2**8, 2**10, 2**12, 2**14)]
    assert all(b < a for a, b in zip(dev, dev[1:]))


def test_fluctuation_scale_examples():
    assert fluctuation_scale(B4, 100) == pytest.approx(15.0, rel=1e-14)
    assert fluctuation_scale(ModelParams.power_law(3.0), 100) == pytest.approx(2 * math.sqrt(100 * math.log(100)))
    assert fluctuation_scale(ModelParams.power_law(3.0), 100) == pytest.approx(42.92, abs=0.005)
    assert fluctuation_scale(ModelParams.power_law(2.5), 100) == pytest.approx(26.04, abs=0.01)


# ---------------------------------------------------------------------------
# gamma-ratio helpers


@pytest.mark.parametrize("n", [0, 1, 2, 5, 9])
def test_bernoulli_poly(n):
    for x in (0.0, 0.3, 1.0, 4.5):
        assert bernoulli_poly(n, x) == pytest.approx(float(mp.bernpoly(n, x)), rel=1e-12, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 1e9), st.floats(0.0, 8.0), st.floats(0.0, 8.0))
@example(5e-324, 0.0, 0.0)
@example(5e-324, 0.0, 1.0)
def test_log_gamma_ratio(z, a, c):
    if z + min(a, c) <= 0:
        return
    with mp.workdps(50):
        oracle = mp.loggamma(mp.mpf(z) + a) - mp.loggamma(mp.mpf(z) + c)
    assert log_gamma_ratio(z, a, c) == pytest.approx(float(oracle), rel=1e-12, abs=1e-12)


def test_gamma_ratio_series_vs_mpmath():
    b = 3.7
    got = gamma_ratio_series([1.0], [b + 1.0], power=1.0)
    # Σ k k!/Γ(k+b+1) = ρ_c Z_c / Γ(b+1)
    oracle = b / ((b - 1) * (b - 2) * mp.gamma(b + 1))
    assert got == pytest.approx(float(oracle), rel=1e-12)
