"""Random configurations: critical marginals, exact canonical draws and the
condensate shortcut."""

from __future__ import annotations

import hashlib
import io
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import ConsistencyError, DomainError, RegimeError, RegimeWarning, ResourceError
from .exact import CanonicalDistribution, SplitTable
from .model import ModelParams, WeightTable, critical_constants, fluctuation_scale
from .rng import RngStream

# uniforms per kernel call, to bound memory for large batches
_CHUNK_UNIFORMS = 1 << 22


@dataclass
class SampleBatch:
    """Configurations drawn by one sampler, one per row of ``configs``."""

    params: ModelParams
    L: int
    N: int
    configs: np.ndarray
    seed: int
    stream_id: int
    sampler: str
    stats: dict = field(default_factory=dict)

    def __len__(self):
        return self.configs.shape[0]

    def content_hash(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.configs, dtype="<i8").tobytes()).hexdigest()

    def header(self) -> dict:
        h = {
            **self.params.to_dict(),
            "L": self.L,
            "N": self.N,
            "seed": self.seed,
            "stream_id": self.stream_id,
            "sampler": self.sampler,
            "n": len(self),
            "sha256": self.content_hash(),
        }
        return h

    def to_csv(self, path) -> Path:
        path = Path(path)
        buf = io.StringIO()
        for k, v in self.header().items():
            buf.write(f"# {k}: {v}\n")
        buf.write(",".join(f"x{j + 1}" for j in range(self.L)) + "\n")
        np.savetxt(buf, self.configs, fmt="%d", delimiter=",")
        path.write_text(buf.getvalue(), encoding="utf-8")
        return path

    @classmethod
    def from_csv(cls, path) -> "SampleBatch":
        meta = {}
        n_head = 0
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                n_head += 1
                if not line.startswith("#"):
                    break
                key, _, val = line[1:].strip().partition(": ")
                meta[key] = val
        configs = np.loadtxt(path, delimiter=",", skiprows=n_head, dtype=np.int64, ndmin=2)
        configs = configs.reshape(int(meta["n"]), int(meta["L"]))
        params = ModelParams.from_dict(
            {k: meta[k] for k in ("family", "b", "beta", "lam") if k in meta}
        )
        batch = cls(
            params, int(meta["L"]), int(meta["N"]), configs, int(meta["seed"]),
            int(meta["stream_id"]), meta["sampler"],
        )
        if batch.content_hash() != meta["sha256"]:
            raise ConsistencyError(f"{path}: content hash mismatch")
        return batch


# ---------------------------------------------------------------------------
# single-site critical law


def _power_law_tail_inverse(b: float, V: np.ndarray, log_tail) -> np.ndarray:
    """max{m : F̄(m) >= V} for V below the table's tail mass."""
    from scipy import special

    lnV = np.log(V)
    m = np.floor((special.gamma(b) / V) ** (1.0 / (b - 1.0)) - b / 2.0)
    m = np.maximum(m, 1.0)
    # F̄(m) ~ Γ(b)(m + b/2)^{1-b}; the guess is off by O(1/m), so only a few
    # unit steps are ever needed
    for _ in range(64):
        too_far = log_tail(m) < lnV
        if not too_far.any():
            break
        m = np.where(too_far, m - 1, m)
    for _ in range(64):
        nxt = log_tail(m + 1) >= lnV
        if not nxt.any():
            break
        m = np.where(nxt, m + 1, m)
    return m.astype(np.int64)


def _stretched_tail_walk(wt: WeightTable, v: float) -> int:
    # walk the rate recursion past the table; the tail mass here is < 1e-12
    p = wt.params
    lw = wt.logw[-1]
    tail = wt.tail[-1]
    m = wt.kmax + 1
    for _ in range(64 * wt.kmax):
        lw -= math.log1p(p.beta * m ** (-p.lam))
        tail_next = tail - math.exp(lw)
        if tail_next < v:
            return m
        tail = tail_next
        m += 1
    return m


def sample_critical_marginal(wt: WeightTable, rng: RngStream, size=None):
    """Draw from ν_{φ_c} by inverting the tail function.

    With V uniform on (0, 1], X = max{m : F̄(m) >= V}.  Inside the table
    this is a binary search; beyond kmax the power-law tail is inverted in
    closed form so the heavy tail carries no truncation bias.
    """
    n = 1 if size is None else int(np.prod(size))
    V = rng.open_uniform(n)
    # tail is decreasing: count m in 1..kmax+1 with F̄(m) >= V
    rev = wt.tail[:0:-1]  # F̄(kmax+1), ..., F̄(1), increasing
    x = (len(rev) - np.searchsorted(rev, V, side="left")).astype(np.int64)
    beyond = x == wt.kmax + 1
    if beyond.any():
        if wt.params.is_power_law:
            x[beyond] = _power_law_tail_inverse(wt.params.b, V[beyond], wt.log_tail)
        else:
            x[beyond] = [_stretched_tail_walk(wt, v) for v in V[beyond]]
    if size is None:
        return int(x[0])
    return x.reshape(size)


def sample_iid(wt: WeightTable, L: int, n: int, rng: RngStream) -> np.ndarray:
    return sample_critical_marginal(wt, rng, size=(n, L))


# ---------------------------------------------------------------------------
# exact canonical samplers


def sample_canonical_exact(dist: CanonicalDistribution, rng: RngStream, size=None):
    """Exact μ^{N,L} draws, filling sites one at a time.

    Site j receives k with probability W(k) Q_{l-1, n-k} / Q_{l, n} where
    l sites share the n particles not yet placed.
    """
    t = dist.table
    if not t.full:
        raise DomainError("exact sampling needs a table with all rows")
    n = 1 if size is None else int(size)
    out = np.empty((n, t.L), np.int64)
    per = max(1, _CHUNK_UNIFORMS // max(t.L - 1, 1))
    for s0 in range(0, n, per):
        s1 = min(n, s0 + per)
        U = rng.uniform((s1 - s0, max(t.L - 1, 0)))
        bad = _kernels.sample_sequential(t.logQ, t.logw, t.N, U, out[s0:s1])
        if bad >= 0:
            raise ConsistencyError("conditional pmf failed to normalize within 1e-8")
    return out[0] if size is None else out


def sample_canonical_split(split: SplitTable, rng: RngStream, size=None):
    """Exact μ^{N,L} draws by recursive halving of the site set.

    Same law as :func:`sample_canonical_exact` with far smaller tables.
    """
    n = 1 if size is None else int(size)
    L = split.L
    out = np.empty((n, L), np.int64)
    per = max(1, _CHUNK_UNIFORMS // max(L - 1, 1))
    for s0 in range(0, n, per):
        s1 = min(n, s0 + per)
        U = rng.uniform((s1 - s0, max(L - 1, 1)))
        bad = _kernels.sample_split(split.rows, split.row_of, split.N, U, out[s0:s1])
        if bad >= 0:
            raise ConsistencyError("split pmf failed to normalize within 1e-8")
    return out[0] if size is None else out


@dataclass
class CondensateDraws:
    configs: np.ndarray
    assigned_site: np.ndarray
    attempts: int
    rejections: int

    @property
    def rejection_rate(self) -> float:
        return self.rejections / self.attempts if self.attempts else 0.0


def sample_canonical_condensate(
    wt: WeightTable, L: int, N: int, rng: RngStream, size: int = 1, max_rejection_rate: float = 0.5
) -> CondensateDraws:
    """Approximate μ^{N,L}: L-1 critical draws plus the leftover on a uniform site.

    Draws whose leftover would be negative are rejected and redrawn.
    """
    if L < 1 or N < 0:
        raise DomainError("need L >= 1 and N >= 0")
    rho_c = critical_constants(wt.params).rho_c
    aL = fluctuation_scale(wt.params, L) if L > 1 else 0.0
    if N <= rho_c * L + aL:
        warnings.warn(
            f"N={N} is not above rho_c L + a_L = {rho_c * L + aL:.1f}; the condensate "
            "approximation is not justified here",
            RegimeWarning,
            stacklevel=2,
        )
    configs = np.empty((size, L), np.int64)
    sites = np.empty(size, np.int64)
    filled = attempts = rejections = 0
    while filled < size:
        want = size - filled
        block = max(16, int(want * 1.1) + 8)
        bulk = sample_critical_marginal(wt, rng, size=(block, L - 1))
        rest = N - bulk.sum(axis=1)
        pos = rng.integers(0, L, size=block)
        attempts += block
        rejections += int(np.count_nonzero(rest < 0))
        for i in np.flatnonzero(rest >= 0)[:want]:
            configs[filled] = np.insert(bulk[i], pos[i], rest[i])
            sites[filled] = pos[i]
            filled += 1
        rate = rejections / attempts
        if attempts >= 100 and rate > max_rejection_rate:
            raise RegimeError(f"rejection rate {rate:.2f} exceeds {max_rejection_rate}")
    return CondensateDraws(configs, sites, attempts, rejections)


@dataclass
class RejectionDraws:
    configs: np.ndarray
    attempts: int
    accepted: int

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.attempts


def sample_canonical_rejection(
    wt: WeightTable, L: int, N: int, rng: RngStream, cap: int = 10**7, size: int = 1
) -> RejectionDraws:
    """Exact μ^{N,L} by drawing ν_{φ_c}^L until the total equals N.

    Raises ResourceError once ``cap`` consecutive attempts are rejected.
    """
    configs = []
    attempts = hits = 0
    since_accept = 0
    block = 4096
    while len(configs) < size:
        draws = sample_critical_marginal(wt, rng, size=(block, L))
        hit = np.flatnonzero(draws.sum(axis=1) == N)
        attempts += block
        hits += len(hit)
        since_accept = since_accept + block if len(hit) == 0 else block - 1 - int(hit[-1])
        configs.extend(draws[hit[: size - len(configs)]])
        if len(configs) < size and since_accept >= cap:
            raise ResourceError(f"no acceptance in {cap} attempts")
    return RejectionDraws(np.array(configs, dtype=np.int64).reshape(size, L), attempts, hits)


# ---------------------------------------------------------------------------
# batch front end

SAMPLERS = ("exact", "split", "condensate", "rejection", "iid")


def draw_batch(params: ModelParams, L: int, N: int, n: int, sampler: str, seed: int, stream_id: int = 0) -> SampleBatch:
    """Draw ``n`` configurations with the named sampler into a SampleBatch."""
    from .exact import build_canonical_table
    from .model import build_weight_table

    rng = RngStream(seed, stream_id)
    stats: dict = {}
    if sampler == "exact":
        dist = CanonicalDistribution(build_canonical_table(params, L, N))
        configs = sample_canonical_exact(dist, rng, n)
    elif sampler == "split":
        configs = sample_canonical_split(SplitTable.build(params, L, N), rng, n)
    elif sampler == "condensate":
        d = sample_canonical_condensate(build_weight_table(params), L, N, rng, n)
        configs = d.configs
        stats["rejection_rate"] = d.rejection_rate
    elif sampler == "rejection":
        d = sample_canonical_rejection(build_weight_table(params), L, N, rng, size=n)
        configs = d.configs
        stats["acceptance_rate"] = d.acceptance_rate
    elif sampler == "iid":
        configs = sample_iid(build_weight_table(params), L, n, rng)
    else:
        raise DomainError(f"unknown sampler {sampler!r}; choose from {SAMPLERS}")
    return SampleBatch(params, L, N, configs, seed, stream_id, sampler, stats)
