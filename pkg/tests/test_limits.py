import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from zerorange.errors import DomainError, RegimeWarning
from zerorange.experiments import exact_samples
from zerorange.limits import (
    bulk_path,
    bulk_values,
    centered_max,
    config_stats,
    empirical_pmf,
    frechet_cdf,
    ks_distance,
    normalization_aL,
    pair_tv,
    second_largest_normalized,
    swap_max,
    theorem1_experiment,
    tv_distance,
    tv_to_law,
)
from zerorange.model import ModelParams, build_weight_table
from zerorange.rng import RngStream

B4 = ModelParams.power_law(4.0)
SEED = 20240917


@pytest.fixture(scope="module")
def b4_samples():
    return exact_samples(B4, 1000, 2000, 10**4, SEED)


# ---------------------------------------------------------------------------
# order statistics and the max swap


def test_swap_max_examples():
    assert swap_max([1, 5, 2]).tolist() == [1, 2, 5]
    assert swap_max([3, 3, 1]).tolist() == [1, 3, 3]
    assert swap_max([1, 2, 5]).tolist() == [1, 2, 5]
    assert swap_max([4]).tolist() == [4]
    rows = np.array([[1, 5, 2], [3, 3, 1], [1, 2, 5]])
    assert swap_max(rows).tolist() == [[1, 2, 5], [1, 3, 3], [1, 2, 5]]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 6), min_size=1, max_size=12))
def test_swap_max_properties(eta):
    eta = np.array(eta)
    out = swap_max(eta)
    assert out[-1] == eta.max()
    assert sorted(out) == sorted(eta)
    s = config_stats(eta)
    assert s.argmax == min(np.flatnonzero(eta == eta.max()))
    assert s.M >= s.M2 >= 0
    if len(eta) >= 2:
        assert s.S >= s.M + s.M2


def test_config_stats_batch():
    s = config_stats(np.array([[1, 5, 2], [3, 3, 1]]))
    assert s.M.tolist() == [5, 3] and s.M2.tolist() == [2, 3] and s.argmax.tolist() == [1, 0]
    assert s.S.tolist() == [8, 7]


def test_max_identity_on_canonical_samples(b4_samples):
    T = swap_max(b4_samples)
    assert np.array_equal(b4_samples.max(axis=1), 2000 - T[:, :-1].sum(axis=1))


# ---------------------------------------------------------------------------
# normalizations and reference laws


def test_normalization_examples():
    assert normalization_aL(B4, 100) == pytest.approx(15.0, rel=1e-14)
    assert normalization_aL(ModelParams.power_law(3.0), 100) == pytest.approx(42.92, abs=0.005)
    assert normalization_aL(ModelParams.power_law(2.5), 100) == pytest.approx(26.04, abs=0.01)
    with pytest.raises(DomainError):
        normalization_aL(ModelParams.stretched(1.0, 0.75), 100)


def test_centered_max_zero_at_center():
    L, N = 100, 200
    s = config_stats(np.array([N - 50] + [0] * 99))
    assert centered_max(s, B4, L, N) == 0.0


def test_frechet_examples():
    assert frechet_cdf(4.0, 1.0) == pytest.approx(math.exp(-1), rel=1e-15)
    assert frechet_cdf(4.0, 2.0) == pytest.approx(0.882497, abs=1e-6)
    assert frechet_cdf(4.0, 0.0) == 0.0 and frechet_cdf(4.0, -1.0) == 0.0


def test_second_largest_domain():
    with pytest.raises(DomainError):
        second_largest_normalized(config_stats(np.array([[3]])), B4, 1)


def test_centered_max_batch_ks(b4_samples):
    x = centered_max(config_stats(b4_samples), B4, 1000, 2000)
    assert ks_distance(x, stats.norm.cdf) < 0.05


@pytest.mark.xfail(strict=True, reason="finite-size bias: conditioning tilts the bulk sum by about "
                   "5σ²/(ρ-ρ_c) particles, which shifts the centered maximum by about -0.16 at L=1000")
def test_centered_max_batch_mean(b4_samples):
    x = centered_max(config_stats(b4_samples), B4, 1000, 2000)
    assert -0.1 < x.mean() < 0.1


def test_centered_max_bias_matches_tilt(b4_samples):
    # W(N-S) ∝ (N-S)^{-b} favours larger bulk sums: E S - ρ_c L ≈ b σ² / (ρ - ρ_c)
    x = centered_max(config_stats(b4_samples), B4, 1000, 2000)
    predicted = -4 * 2.25 / 1.5 / normalization_aL(B4, 1000)
    se = x.std(ddof=1) / math.sqrt(len(x))
    assert abs(x.mean() - predicted) < 4 * se


# ---------------------------------------------------------------------------
# bulk paths


def test_bulk_path_examples():
    a4 = normalization_aL(B4, 4)
    # batch density 2, ζ = 0.75: the cutoff ζL = 3 removes no site
    path = bulk_path(np.array([1, 0, 1, 0]), B4, zeta=0.75, rho=2.0)
    assert path.values[0] == 0.0
    assert np.allclose(path.values[1:], np.array([0.5, 0.0, 0.5, 0.0]) / a4, atol=1e-15)
    zero = bulk_path(np.zeros(8, int), B4, zeta=0.75, rho=2.0)
    assert np.allclose(zero.values, -0.5 * np.arange(9) / normalization_aL(B4, 8), atol=1e-15)
    assert np.allclose(zero.times, np.arange(9) / 8)


def test_bulk_path_jumps(b4_samples):
    eta = b4_samples[0]
    path = bulk_path(eta, B4)
    L = len(eta)
    star = np.where(eta < path.zeta * L, eta, 0)
    assert np.allclose(np.diff(path.values), (star - 0.5) / path.aL, rtol=0, atol=1e-12)
    assert path(0.0) == 0.0 and path(1.0) == path.values[-1]
    assert path(0.5) == path.values[500] and path(0.5 + 0.4 / L) == path.values[500]


def test_bulk_values_match_path(b4_samples):
    Y = bulk_values(b4_samples[:20], B4, (0.25, 0.5, 1.0))
    for i in range(20):
        p = bulk_path(b4_samples[i], B4)
        assert np.allclose(Y[i], [p(0.25), p(0.5), p(1.0)], atol=1e-12)


def test_bulk_end_value_is_minus_centered_max(b4_samples):
    # with a single site above ζL, Y_L(1) = -(M_L - (N - ρ_c L)) / a_L
    Y1 = bulk_values(b4_samples, B4, (1.0,))[:, 0]
    x = centered_max(config_stats(b4_samples), B4, 1000, 2000)
    assert np.allclose(Y1, -x, atol=1e-12)


def test_zeta_domain():
    eta = np.array([0, 0, 0, 8])
    with pytest.raises(DomainError):
        bulk_path(eta, B4, zeta=0.0)
    with pytest.raises(DomainError):
        bulk_path(eta, B4, zeta=1.5)
    with pytest.raises(DomainError):
        bulk_path(np.array([1, 0, 1, 0]), B4)  # density ρ_c leaves no room for ζ


# ---------------------------------------------------------------------------
# distances


def test_ks_examples():
    assert ks_distance([0.0], stats.norm.cdf) == 0.5
    assert ks_distance(np.full(10, 1e3), stats.norm.cdf) == pytest.approx(1.0)
    x = np.random.default_rng(1).standard_normal(10**4)
    assert ks_distance(x, stats.norm.cdf) < 1.63 / math.sqrt(10**4)
    assert ks_distance(x, stats.norm.cdf) == pytest.approx(stats.kstest(x, "norm").statistic, abs=1e-12)
    with pytest.raises(DomainError):
        ks_distance([], stats.norm.cdf)


def test_ks_with_ties():
    x = np.array([0, 0, 0, 1, 1, 2.0])
    ref = stats.uniform(loc=-0.5, scale=3).cdf
    grid = np.linspace(-1, 3, 40001)
    emp = np.searchsorted(np.sort(x), grid, side="right") / len(x)
    brute = max(np.max(np.abs(emp - ref(grid))), np.max(np.abs(np.concatenate([[0], emp[:-1]]) - ref(grid))))
    assert ks_distance(x, ref) == pytest.approx(brute, abs=1e-3)


def test_tv_examples():
    assert tv_distance([0.2, 0.8], [0.2, 0.8]) == 0.0
    assert tv_distance([1, 0], [0, 1]) == 1.0
    assert tv_distance([0.75, 0.25], [0.5, 0.5]) == 0.25
    assert tv_distance([1.0], [0.5, 0.5]) == 0.5


pmfs = st.lists(st.floats(0.0, 1.0), min_size=1, max_size=8).filter(lambda v: sum(v) > 0).map(
    lambda v: np.array(v) / sum(v))


@settings(max_examples=200, deadline=None)
@given(pmfs, pmfs, pmfs)
def test_tv_metric_properties(p, q, r):
    assert tv_distance(p, q) == pytest.approx(tv_distance(q, p), abs=1e-15)
    assert tv_distance(p, r) <= tv_distance(p, q) + tv_distance(q, r) + 1e-12
    assert 0.0 <= tv_distance(p, q) <= 1.0 + 1e-12


def test_tv_to_law_counts_missing_mass():
    w = np.array([0.5, 0.25])
    assert tv_to_law([0, 0, 1, 1], w) == pytest.approx(0.5 * (0.0 + 0.25 + 0.25))
    assert empirical_pmf([0, 2, 2], 4).tolist() == pytest.approx([1 / 3, 0, 2 / 3, 0])


def test_pair_tv_of_independent_draws_is_small():
    wt = build_weight_table(B4)
    from zerorange.sampling import sample_critical_marginal

    x = sample_critical_marginal(wt, RngStream(2), size=(10**5, 2))
    assert pair_tv(x[:, 0], x[:, 1], wt.w) < 0.02
    y = x[:, 0]
    assert pair_tv(y, y, wt.w) > 0.2  # fully dependent pair


# ---------------------------------------------------------------------------
# equivalence of ensembles after removing the maximum


def test_max_swap_experiment_report_fields():
    r = theorem1_experiment(B4, 100, 200, 2000, RngStream(3), n_null=3)
    for key in ("tv_first_site", "tv_first_site_noise_floor", "tv_first_site_noise_sd", "tv_pair",
                "bulk_mean", "bulk_mean_se", "bulk_var", "bulk_var_se"):
        assert np.isfinite(r[key])
    with pytest.warns(RegimeWarning):
        theorem1_experiment(B4, 100, 40, 100, RngStream(3), n_null=2)


@pytest.mark.slow
def test_bulk_mean_bias_decays_like_inverse_L():
    means = []
    for L in (400, 1600):
        r = theorem1_experiment(B4, L, 2 * L, 20000, RngStream(4, L), n_null=2)
        means.append((r["bulk_mean"] - 0.5, r["bulk_mean_se"]))
        # tilt prediction b σ² / ((ρ - ρ_c) L) for the per-site bias
        assert abs(means[-1][0] - 4 * 2.25 / 1.5 / L) < 4 * means[-1][1] + 0.2 * 6.0 / L
    assert means[1][0] < means[0][0] / 2


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="CLT band ignores the O(1/L) conditioning bias: the bulk mean sits "
                   "about 0.016 above ρ_c at L=400 while 4σ/√count is about 0.001")
def test_bulk_mean_clt_band_at_400():
    r = theorem1_experiment(B4, 400, 800, 10**5, RngStream(5), n_null=2)
    count = 10**5 * 399
    assert abs(r["bulk_mean"] - 0.5) < 4 * 1.5 / math.sqrt(count)


@pytest.mark.slow
def test_critical_bulk_mean_differs():
    # the observable that does separate the regimes: removing the maximum at
    # criticality pulls the bulk mean below ρ_c, supercritically it sits above
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeWarning)
        sup = theorem1_experiment(B4, 1600, 3200, 20000, RngStream(7, 0), n_null=2)
        crit = theorem1_experiment(B4, 1600, 800, 20000, RngStream(7, 1), n_null=2)
    assert sup["bulk_mean"] - 0.5 > 4 * sup["bulk_mean_se"]
    assert 0.5 - crit["bulk_mean"] > 4 * crit["bulk_mean_se"]
