"""Order statistics, normalizations and goodness-of-fit tools for the limit
laws of the maximum, the second largest site and the bulk."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .errors import DomainError, RegimeWarning
from .exact import SplitTable
from .model import ModelParams, build_weight_table, critical_constants, fluctuation_scale
from .rng import RngStream
from .sampling import sample_canonical_split, sample_critical_marginal
from .stable import StableLaw


@dataclass(frozen=True)
class ConfigStats:
    """Total, maximum, first argmax and second largest value of configurations.

    Fields are arrays with one entry per configuration (scalars for a
    single configuration).
    """

    S: np.ndarray
    M: np.ndarray
    argmax: np.ndarray
    M2: np.ndarray


def config_stats(configs) -> ConfigStats:
    c = np.asarray(configs)
    single = c.ndim == 1
    c = np.atleast_2d(c)
    S = c.sum(axis=1)
    arg = np.argmax(c, axis=1)  # first occurrence on ties
    M = c[np.arange(len(c)), arg]
    if c.shape[1] >= 2:
        M2 = np.partition(c, -2, axis=1)[:, -2]
    else:
        M2 = np.zeros(len(c), c.dtype)
    if single:
        return ConfigStats(S[0], M[0], arg[0], M2[0])
    return ConfigStats(S, M, arg, M2)


def swap_max(eta) -> np.ndarray:
    """Exchange the last coordinate with the first site holding the maximum.

    Works row-wise on a 2-D array of configurations.
    """
    e = np.array(eta, copy=True)
    if e.ndim == 1:
        m = int(np.argmax(e))
        e[m], e[-1] = e[-1], e[m]
        return e
    rows = np.arange(e.shape[0])
    m = np.argmax(e, axis=1)
    last = e[:, -1].copy()
    e[:, -1] = e[rows, m]
    e[rows, m] = last
    return e


def normalization_aL(params: ModelParams, L: int) -> float:
    """a_L: σ√L (b > 3), 2√(L ln L) (b = 3), (Γ(b)L)^{1/(b-1)} (2 < b < 3)."""
    if not params.is_power_law:
        raise DomainError("normalization defined for the power-law family")
    return fluctuation_scale(params, L)


def centered_max(stats_: ConfigStats, params: ModelParams, L: int, N: int):
    """(M_L - (N - ρ_c L)) / a_L."""
    rho_c = critical_constants(params).rho_c
    return (np.asarray(stats_.M, dtype=float) - (N - rho_c * L)) / normalization_aL(params, L)


def second_largest_scale(params: ModelParams, L: int) -> float:
    return (special.gamma(params.b) * L) ** (1.0 / (params.b - 1.0))


def second_largest_normalized(stats_: ConfigStats, params: ModelParams, L: int):
    """M_L^{(2)} / (Γ(b)L)^{1/(b-1)}."""
    if L < 2:
        raise DomainError("need L >= 2")
    return np.asarray(stats_.M2, dtype=float) / second_largest_scale(params, L)


def frechet_cdf(b: float, x):
    """exp(-x^{1-b}) for x > 0, zero otherwise."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.where(x > 0, np.exp(-np.power(np.where(x > 0, x, 1.0), 1.0 - b)), 0.0)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# bulk fluctuations


@dataclass(frozen=True)
class BulkPath:
    """Y_L on the grid t = j/L, j = 0..L (right-continuous step function)."""

    times: np.ndarray
    values: np.ndarray
    zeta: float
    aL: float

    def __call__(self, t):
        L = len(self.times) - 1
        j = np.floor(np.asarray(t, dtype=float) * L + 1e-12).astype(int)
        return self.values[np.clip(j, 0, L)]


def default_zeta(params: ModelParams, rho: float) -> float:
    return 0.5 * (rho - critical_constants(params).rho_c)


def _check_zeta(params: ModelParams, rho: float, zeta: float) -> None:
    gap = rho - critical_constants(params).rho_c
    if not 0 < zeta < gap:
        raise DomainError(f"zeta must lie in (0, {gap:.6g})")


def bulk_path(eta, params: ModelParams, zeta: float | None = None, aL: float | None = None,
              rho: float | None = None) -> BulkPath:
    """Partial sums of the cut-off bulk η*_x = η_x 1{η_x < ζL}, centered and scaled.

    ``rho`` is the density of the batch the configuration belongs to (it
    bounds the admissible ζ); by default the configuration's own density.
    """
    eta = np.asarray(eta)
    L = len(eta)
    if rho is None:
        rho = eta.sum() / L
    if zeta is None:
        zeta = default_zeta(params, rho)
    _check_zeta(params, rho, zeta)
    if aL is None:
        aL = normalization_aL(params, L)
    rho_c = critical_constants(params).rho_c
    star = np.where(eta < zeta * L, eta, 0)
    values = np.concatenate([[0.0], np.cumsum(star - rho_c)]) / aL
    return BulkPath(np.arange(L + 1) / L, values, zeta, aL)


def bulk_values(configs, params: ModelParams, ts, zeta: float | None = None) -> np.ndarray:
    """Y_L(t) for every configuration (rows) and every t in ``ts`` (columns)."""
    c = np.atleast_2d(np.asarray(configs))
    n, L = c.shape
    rho = c[0].sum() / L
    if zeta is None:
        zeta = default_zeta(params, rho)
    _check_zeta(params, rho, zeta)
    aL = normalization_aL(params, L)
    rho_c = critical_constants(params).rho_c
    star = np.where(c < zeta * L, c, 0)
    cums = np.cumsum(star, axis=1)
    out = np.empty((n, len(ts)))
    for i, t in enumerate(ts):
        j = int(math.floor(t * L + 1e-12))
        s = cums[:, j - 1] if j > 0 else np.zeros(n)
        out[:, i] = (s - rho_c * j) / aL
    return out


def bulk_marginal_law(params: ModelParams, t: float):
    """Limit law of Y_L(t): N(0, t) for b >= 3, right-heavy stable for 2 < b < 3."""
    b = params.b
    if b >= 3:
        return stats.norm(scale=math.sqrt(t)).cdf
    return StableLaw(b - 1.0, heavy_tail="right", time=t).cdf


def max_limit_law(params: ModelParams):
    """Limit law of the centered maximum: N(0, 1) for b >= 3, left-heavy stable below."""
    b = params.b
    if b >= 3:
        return stats.norm.cdf
    return StableLaw(b - 1.0, heavy_tail="left").cdf


# ---------------------------------------------------------------------------
# distances


def ks_distance(samples, ref_cdf) -> float:
    """sup_x |F_n(x) - F(x)| for a continuous reference cdf; ties handled exactly."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise DomainError("need at least one sample")
    vals, counts = np.unique(x, return_counts=True)
    after = np.cumsum(counts) / x.size
    before = after - counts / x.size
    F = np.asarray(ref_cdf(vals), dtype=float)
    return float(max(np.max(after - F), np.max(F - before)))


def tv_distance(p, q) -> float:
    """Total variation distance ½ Σ |p - q|; shorter arrays are padded with zeros."""
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    n = max(len(p), len(q))
    p = np.pad(p, (0, n - len(p)))
    q = np.pad(q, (0, n - len(q)))
    return 0.5 * float(np.abs(p - q).sum())


def empirical_pmf(values, size: int | None = None) -> np.ndarray:
    v = np.asarray(values).ravel()
    counts = np.bincount(v, minlength=size or 0)
    return counts / v.size


def tv_to_law(values, w: np.ndarray) -> float:
    """TV between the empirical pmf of ``values`` and the pmf ``w`` (any missing mass of
    ``w`` beyond its support counts fully)."""
    emp = empirical_pmf(values)
    n = max(len(emp), len(w))
    e = np.pad(emp, (0, n - len(emp)))
    ww = np.pad(w, (0, n - len(w)))
    return 0.5 * float(np.abs(e - ww).sum() + max(0.0, 1.0 - ww.sum()))


def pair_tv(first, second, w: np.ndarray) -> float:
    """TV between the empirical joint pmf of two coordinates and the product w ⊗ w."""
    first = np.asarray(first)
    second = np.asarray(second)
    K = int(max(first.max(), second.max())) + 1
    n = len(first)
    joint = np.bincount(first * K + second, minlength=K * K).reshape(K, K) / n
    wk = np.pad(w[:K], (0, max(0, K - len(w))))
    prod = np.outer(wk, wk)
    outside = max(0.0, 1.0 - prod.sum())
    return 0.5 * float(np.abs(joint - prod).sum() + outside)


# ---------------------------------------------------------------------------
# equivalence of ensembles after removing the maximum


def theorem1_experiment(
    params: ModelParams,
    L: int,
    N: int,
    n_samples: int,
    rng: RngStream,
    n_null: int = 20,
) -> dict:
    """Distance of the canonical law, seen away from its maximum, to ν_{φ_c}.

    Draws exact configurations, moves the maximum to the last site and
    measures on the remaining L-1 sites: (i) the first-site TV to ν_{φ_c},
    (ii) the TV of the first two sites' joint law to the product law,
    (iii) pooled bulk mean and variance against ρ_c and σ².  The TV values
    are reported next to a noise floor: the same statistic computed for
    ``n_samples`` genuine i.i.d. ν_{φ_c} draws, repeated ``n_null`` times.
    """
    cc = critical_constants(params)
    if N <= cc.rho_c * L:
        warnings.warn("N is not above rho_c L: outside the supercritical regime", RegimeWarning, stacklevel=2)
    wt = build_weight_table(params)
    configs = sample_canonical_split(SplitTable.build(params, L, N), rng, n_samples)
    T = swap_max(configs)
    bulk = T[:, : L - 1]
    tv1 = tv_to_law(bulk[:, 0], wt.w)
    tv2 = pair_tv(bulk[:, 0], bulk[:, 1], wt.w) if L >= 3 else float("nan")
    pooled = tv_to_law(bulk, wt.w)
    null1, null2 = [], []
    nrng = rng.child(1)
    for _ in range(n_null):
        x = sample_critical_marginal(wt, nrng, size=(n_samples, 2))
        null1.append(tv_to_law(x[:, 0], wt.w))
        null2.append(pair_tv(x[:, 0], x[:, 1], wt.w))
    # per-configuration bulk averages are independent across configurations
    row_mean = bulk.mean(axis=1)
    row_var = bulk.var(axis=1, ddof=1) if L > 2 else np.zeros(n_samples)
    return {
        "L": L,
        "N": N,
        "n_samples": n_samples,
        "tv_first_site": tv1,
        "tv_first_site_noise_floor": float(np.mean(null1)),
        "tv_first_site_noise_sd": float(np.std(null1, ddof=1)) if n_null > 1 else float("nan"),
        "tv_pair": tv2,
        "tv_pair_noise_floor": float(np.mean(null2)),
        "tv_pair_noise_sd": float(np.std(null2, ddof=1)) if n_null > 1 else float("nan"),
        "tv_pooled_bulk": pooled,
        "bulk_mean": float(row_mean.mean()),
        "bulk_mean_se": float(row_mean.std(ddof=1) / math.sqrt(n_samples)),
        "bulk_var": float(row_var.mean()),
        "bulk_var_se": float(row_var.std(ddof=1) / math.sqrt(n_samples)),
        "rho_c": cc.rho_c,
        "sigma2": cc.sigma2,
    }
