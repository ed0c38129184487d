"""Exact canonical-ensemble computations.

The canonical measure μ^{N,L} is ν_{φ_c}^L conditioned on S_L = N.  All of
its finite-size quantities follow from the convolution powers

    Q_{l,n} = ν_{φ_c}^l[S_l = n],

which are stored as natural logs so that rows for large l do not underflow.
"""

from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import ConsistencyError, DomainError, ResourceError
from .model import ModelParams, build_weight_table, critical_constants

MEMORY_BUDGET_CELLS = 150_000_000
FIBER_CAP = 10**7
CACHE_FORMAT_VERSION = 1


def weights_upto(params: ModelParams, N: int) -> np.ndarray:
    """ln W(0..N), extending the default table if N is past it."""
    wt = build_weight_table(params)
    if N <= wt.kmax:
        return np.array(wt.logw[: N + 1])
    wt = build_weight_table(params, kmax=N)
    return np.array(wt.logw)


@dataclass(frozen=True)
class CanonicalTable:
    """Log convolution powers ln Q_{l,n} for 0 <= n <= N.

    ``logQ`` holds the rows listed in ``rows`` (all of 0..L in full mode,
    only L-1 and L otherwise).  Row 0 is the point mass at n = 0.
    """

    params: ModelParams
    L: int
    N: int
    logw: np.ndarray
    logQ: np.ndarray
    rows: tuple

    @property
    def full(self) -> bool:
        return len(self.rows) == self.L + 1

    def row(self, l: int) -> np.ndarray:
        try:
            return self.logQ[self.rows.index(l)]
        except ValueError:
            raise KeyError(f"row {l} not kept (table built with keep_rows=False)") from None

    @property
    def log_total(self) -> float:
        """ln Q_{L,N}."""
        return float(self.row(self.L)[self.N])

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.logQ).tobytes())
        return h.hexdigest()

    # -- persistence -------------------------------------------------------

    def cache_key(self) -> str:
        mode = "full" if self.full else "last2"
        return f"v{CACHE_FORMAT_VERSION}-{self.params.key()}-L{self.L}-N{self.N}-{mode}"

    def save(self, directory) -> Path:
        path = Path(directory) / (self.cache_key() + ".npz")
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(
            path,
            logQ=self.logQ,
            logw=self.logw,
            rows=np.array(self.rows),
            meta=np.array([CACHE_FORMAT_VERSION, self.L, self.N]),
        )
        return path

    @classmethod
    def load(cls, path, params: ModelParams) -> "CanonicalTable":
        with np.load(path) as z:
            version, L, N = (int(x) for x in z["meta"])
            if version != CACHE_FORMAT_VERSION:
                raise ValueError(f"cache format {version} != {CACHE_FORMAT_VERSION}")
            return cls(params, L, N, z["logw"], z["logQ"], tuple(int(r) for r in z["rows"]))


def build_canonical_table(
    params: ModelParams,
    L: int,
    N: int,
    keep_rows: bool = True,
    cache_dir=None,
    budget: int = MEMORY_BUDGET_CELLS,
) -> CanonicalTable:
    """Tabulate ln Q_{l,n} by repeated convolution with W.

    Runtime is O(L N^2).  With ``keep_rows=False`` only rows L-1 and L are
    returned (sampling needs the full table).
    """
    if L < 1 or N < 0:
        raise DomainError("need L >= 1 and N >= 0")
    cells = (L + 1) * (N + 1) if keep_rows else 2 * (N + 1)
    if cells > budget:
        raise ResourceError(f"table needs {cells} cells > budget {budget}")
    if cache_dir is not None:
        mode = "full" if keep_rows else "last2"
        path = Path(cache_dir) / f"v{CACHE_FORMAT_VERSION}-{params.key()}-L{L}-N{N}-{mode}.npz"
        if path.exists():
            return CanonicalTable.load(path, params)
    logw = weights_upto(params, N)
    if keep_rows:
        logQ = _kernels.build_rows(logw, L, N)
        rows = tuple(range(L + 1))
    else:
        prev = np.full(N + 1, -np.inf)
        prev[0] = 0.0
        cur = prev
        for _ in range(L):
            prev, cur = cur, _kernels.logconv(cur, logw, N)
        logQ = np.vstack([prev, cur])
        rows = (L - 1, L)
    logQ.setflags(write=False)
    table = CanonicalTable(params, L, N, logw, logQ, rows)
    if cache_dir is not None:
        table.save(cache_dir)
    return table


def convolution_power(logw: np.ndarray, L: int, N: int) -> np.ndarray:
    """ln of the L-fold convolution of exp(logw), truncated to 0..N.

    Binary powering: O(log L · N^2).
    """
    result = np.full(N + 1, -np.inf)
    result[0] = 0.0
    base = np.array(logw[: N + 1])
    while L:
        if L & 1:
            result = _kernels.logconv(result, base, N)
        L >>= 1
        if L:
            base = _kernels.logconv(base, base, N)
    return result


class CanonicalDistribution:
    """μ^{N,L} expressed through a :class:`CanonicalTable`."""

    def __init__(self, table: CanonicalTable):
        self.table = table
        self.params = table.params
        self.L = table.L
        self.N = table.N

    @classmethod
    def build(cls, params: ModelParams, L: int, N: int, **kw) -> "CanonicalDistribution":
        return cls(build_canonical_table(params, L, N, **kw))

    def log_prob(self, eta) -> float:
        eta = np.asarray(eta)
        if eta.shape != (self.L,):
            raise DomainError(f"configuration must have length {self.L}")
        if np.any(eta < 0) or int(eta.sum()) != self.N:
            raise DomainError(f"configuration must be nonnegative with sum {self.N}")
        return float(self.table.logw[eta].sum() - self.table.log_total)

    def prob(self, eta) -> float:
        return math.exp(self.log_prob(eta))

    def site_marginal(self, k=None) -> np.ndarray | float:
        """μ^{N,L}[η_{x_1} = k]; the whole pmf on 0..N when ``k`` is None."""
        t = self.table
        prev = t.row(self.L - 1)
        if k is None:
            ks = np.arange(self.N + 1)
            return np.exp(t.logw[ks] + prev[self.N - ks] - t.log_total)
        if not 0 <= k <= self.N:
            raise DomainError("k out of range")
        return math.exp(t.logw[k] + prev[self.N - k] - t.log_total)

    def conditional_pmf(self, l: int, n: int) -> np.ndarray:
        """Law of the next site's occupation when l sites share n particles."""
        t = self.table
        ks = np.arange(n + 1)
        return np.exp(t.logw[ks] + t.row(l - 1)[n - ks] - t.row(l)[n])

    def check_normalization(self, tol: float = 1e-8) -> float:
        """Worst normalization error over all conditional pmfs; raises above tol."""
        if not self.table.full:
            raise ConsistencyError("normalization check needs a full table")
        err = _kernels.conditional_mass_error(self.table.logQ, self.table.logw)
        if err > tol:
            raise ConsistencyError(f"conditional pmf off by {err:.3g}")
        return err


def canonical_prob(dist: CanonicalDistribution, eta) -> float:
    return dist.prob(eta)


def canonical_site_marginal(dist: CanonicalDistribution, k: int) -> float:
    return dist.site_marginal(k)


# ---------------------------------------------------------------------------
# split tree for fast exact sampling


def _split_sizes(L: int) -> list[int]:
    sizes: set[int] = set()
    stack = [L]
    while stack:
        l = stack.pop()
        if l in sizes:
            continue
        sizes.add(l)
        if l > 1:
            stack.extend((l // 2, l - l // 2))
    return sorted(sizes)


@dataclass(frozen=True)
class SplitTable:
    """ln Q_{l,·} for the block sizes met when halving L sites recursively.

    Needs O(log L) rows instead of L, so exact samples at L in the
    thousands are cheap.
    """

    params: ModelParams
    L: int
    N: int
    logw: np.ndarray
    rows: np.ndarray
    row_of: np.ndarray

    @classmethod
    def build(cls, params: ModelParams, L: int, N: int) -> "SplitTable":
        if L < 1 or N < 0:
            raise DomainError("need L >= 1 and N >= 0")
        sizes = _split_sizes(L)
        logw = weights_upto(params, N)
        row_of = np.full(L + 1, -1, dtype=np.int64)
        rows = np.empty((len(sizes), N + 1))
        for i, s in enumerate(sizes):
            row_of[s] = i
            if s == 1:
                rows[i] = logw
            else:
                rows[i] = _kernels.logconv(rows[row_of[s // 2]], rows[row_of[s - s // 2]], N)
        rows.setflags(write=False)
        return cls(params, L, N, logw, rows, row_of)

    @property
    def log_total(self) -> float:
        return float(self.rows[self.row_of[self.L], self.N])


# ---------------------------------------------------------------------------
# local limit theorem and thresholds


def llt_ratio(params: ModelParams, L: int, N: int, logQ_LN: float | None = None) -> float:
    """Q_{L,N} / (L · W(N - ⌊ρ_c L⌋))."""
    rho_c = critical_constants(params).rho_c
    if not math.isfinite(rho_c):
        raise DomainError("critical density must be finite")
    m = N - math.floor(rho_c * L)
    if m < 0:
        raise DomainError(f"N - floor(rho_c L) = {m} < 0")
    logw = weights_upto(params, N)
    if logQ_LN is None:
        logQ_LN = float(convolution_power(logw, L, N)[N])
    return math.exp(logQ_LN - math.log(L) - logw[m])


def moderate_deviation_threshold(params: ModelParams, L: int, gammaL: float) -> int:
    """Smallest N inside the refined supercritical range for the given γ(L).

    Power law (b > 3):
        ρ_c L + (b-1)/(b-2) √(L ln L) (1 + b/(2(b-3)) ln ln L / ln L + γ/ln L)
    Stretched:
        ρ_c L + γ L^{1/(2λ)}
    """
    rho_c = critical_constants(params).rho_c
    if params.is_power_law:
        b = params.b
        if not b > 3:
            raise DomainError("refined threshold is only available for b > 3")
        if L < 3:
            raise DomainError("need L >= 3 so that ln ln L is defined")
        lnL = math.log(L)
        x = rho_c * L + (b - 1) / (b - 2) * math.sqrt(L * lnL) * (
            1 + b / (2 * (b - 3)) * math.log(lnL) / lnL + gammaL / lnL
        )
    else:
        x = rho_c * L + gammaL * L ** (1.0 / (2.0 * params.lam))
    return int(math.ceil(x))


# ---------------------------------------------------------------------------
# brute force


def fiber_size(L: int, N: int) -> int:
    return math.comb(N + L - 1, L - 1)


def enumerate_fiber(L: int, N: int, cap: int = FIBER_CAP) -> np.ndarray:
    """Every η ∈ N_0^L with Σ η = N, one per row."""
    if L < 1 or N < 0:
        raise DomainError("need L >= 1 and N >= 0")
    size = fiber_size(L, N)
    if size > cap:
        raise ResourceError(f"fiber has {size} configurations > cap {cap}")
    if L == 1:
        return np.array([[N]], dtype=np.int64)
    bars = np.fromiter(
        itertools.combinations(range(N + L - 1), L - 1),
        dtype=np.dtype((np.int64, L - 1)),
        count=size,
    )
    padded = np.hstack(
        [np.full((size, 1), -1, np.int64), bars, np.full((size, 1), N + L - 1, np.int64)]
    )
    return np.diff(padded, axis=1) - 1


def enumeration_probs(params: ModelParams, L: int, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Fiber and its μ^{N,L} probabilities, normalized by brute-force summation."""
    fiber = enumerate_fiber(L, N)
    logw = weights_upto(params, N)
    lp = logw[fiber].sum(axis=1)
    shift = lp.max()
    p = np.exp(lp - shift)
    return fiber, p / math.fsum(p)
