"""Continuous-time zero-range dynamics and exact stationarity checks.

Sites are indexed 0..L-1.  A particle leaves site x at rate g(η_x) and
moves to y with probability p(x, y).
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from . import _kernels
from .errors import DomainError, ResourceError
from .exact import enumerate_fiber, fiber_size, weights_upto
from .model import ModelParams, jump_rate
from .rng import RngStream

GENERATOR_CAP = 10**4
RECOMPUTE_EVERY = 1 << 20


class KernelKind(str, enum.Enum):
    UNIFORM = "uniform"
    RING = "ring"
    CUSTOM = "custom"


_KIND_CODE = {KernelKind.UNIFORM: _kernels.KIND_UNIFORM, KernelKind.RING: _kernels.KIND_RING,
              KernelKind.CUSTOM: _kernels.KIND_CUSTOM}


class TransitionKernel:
    """Doubly stochastic random-walk kernel p(x, y) on L sites.

    ``uniform``: p(x, y) = 1/(L-1) for y != x.  ``ring``: ±1 with
    probability 1/2 each (periodic).  ``custom``: an explicit matrix, which
    must be doubly stochastic within ``tol`` and irreducible.
    """

    def __init__(self, L: int, kind="uniform", matrix=None, tol: float = 1e-12):
        self.L = int(L)
        self.kind = KernelKind(kind)
        if self.L < 1:
            raise DomainError("L must be >= 1")
        if self.kind is KernelKind.CUSTOM:
            if matrix is None:
                raise DomainError("custom kernel needs a matrix")
            P = np.array(matrix, dtype=float)
            if P.shape != (self.L, self.L):
                raise DomainError(f"matrix must be {self.L}x{self.L}")
            if np.any(P < 0):
                raise DomainError("kernel entries must be nonnegative")
            if np.max(np.abs(P.sum(axis=1) - 1)) > tol or np.max(np.abs(P.sum(axis=0) - 1)) > tol:
                raise DomainError("kernel must be doubly stochastic")
            self._P = P
        else:
            if matrix is not None:
                raise DomainError("matrix is only used by custom kernels")
            if self.L < 2:
                raise DomainError("built-in kernels need L >= 2")
            self._P = None
        if not self.is_irreducible():
            raise DomainError("kernel is not irreducible")

    @classmethod
    def uniform(cls, L: int) -> "TransitionKernel":
        return cls(L, KernelKind.UNIFORM)

    @classmethod
    def ring(cls, L: int) -> "TransitionKernel":
        return cls(L, KernelKind.RING)

    @classmethod
    def custom(cls, matrix) -> "TransitionKernel":
        m = np.asarray(matrix)
        return cls(m.shape[0], KernelKind.CUSTOM, m)

    def __repr__(self):
        return f"TransitionKernel(L={self.L}, kind={self.kind.value!r})"

    def matrix(self) -> np.ndarray:
        L = self.L
        if self.kind is KernelKind.CUSTOM:
            return self._P.copy()
        if self.kind is KernelKind.UNIFORM:
            return (np.ones((L, L)) - np.eye(L)) / (L - 1)
        P = np.zeros((L, L))
        for x in range(L):
            P[x, (x + 1) % L] += 0.5
            P[x, (x - 1) % L] += 0.5
        return P

    def sparse_matrix(self) -> sparse.csr_matrix:
        if self.kind is KernelKind.RING:
            L = self.L
            x = np.arange(L)
            rows = np.concatenate([x, x])
            cols = np.concatenate([(x + 1) % L, (x - 1) % L])
            return sparse.csr_matrix((np.full(2 * L, 0.5), (rows, cols)), shape=(L, L))
        return sparse.csr_matrix(self.matrix())

    def is_irreducible(self) -> bool:
        if self.L == 1:
            return True
        if self.kind is not KernelKind.CUSTOM:
            return True
        n, _ = connected_components(sparse.csr_matrix(self._P > 0), directed=True, connection="strong")
        return n == 1

    def row(self, x: int) -> np.ndarray:
        if self.kind is KernelKind.CUSTOM:
            return self._P[x]
        return self.matrix()[x]

    def cumulative_rows(self) -> np.ndarray:
        if self.kind is KernelKind.CUSTOM:
            c = np.cumsum(self._P, axis=1)
            c[:, -1] = np.inf  # guard against rounding at the top
            return c
        return np.zeros((1, 1))

    @property
    def code(self) -> int:
        return _KIND_CODE[self.kind]


def total_rate(params: ModelParams, eta) -> float:
    """R(η) = Σ_x g(η_x)."""
    return float(np.sum(jump_rate(params, np.asarray(eta))))


def gillespie_step(params: ModelParams, eta, kernel: TransitionKernel, rng: RngStream):
    """One event from state ``eta``: (holding time, departure site, target site).

    The state is not modified.  A self-jump (target == departure) is a null
    event of the chain.
    """
    eta = np.asarray(eta)
    if eta.shape != (kernel.L,):
        raise DomainError("configuration length does not match the kernel")
    rates = np.asarray(jump_rate(params, eta), dtype=float)
    R = float(rates.sum())
    if R <= 0:
        raise DomainError("empty configuration has no events")
    dt = float(rng.exponential()) / R
    cum = np.cumsum(rates)
    x = int(np.searchsorted(cum, rng.uniform() * cum[-1], side="right"))
    x = min(x, kernel.L - 1)
    while rates[x] == 0:  # rounding at a boundary lands on an empty site
        x -= 1
    cum_p = np.cumsum(kernel.row(x))
    y = int(np.searchsorted(cum_p, rng.uniform() * cum_p[-1], side="right"))
    return dt, x, min(y, kernel.L - 1)


@dataclass
class Trajectory:
    """Event log of one run; ``occupancy_time[k]`` is site-time spent at k."""

    params: ModelParams
    initial: np.ndarray
    final: np.ndarray
    t_end: float
    times: np.ndarray
    sources: np.ndarray
    targets: np.ndarray
    n_events: int
    n_null: int
    occupancy_time: np.ndarray
    snapshot_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    snapshots: np.ndarray = field(default_factory=lambda: np.empty((0, 0), np.int64))
    rate_drift: float = 0.0

    def occupancy_distribution(self) -> np.ndarray:
        """Time-averaged single-site occupation law."""
        return self.occupancy_time / (len(self.initial) * self.t_end)

    def replay(self) -> np.ndarray:
        """Apply the recorded events to the initial state; checks legality."""
        eta = self.initial.copy()
        for x, y in zip(self.sources, self.targets):
            if eta[x] <= 0 or x == y:
                raise DomainError(f"illegal event {x}->{y}")
            eta[x] -= 1
            eta[y] += 1
        return eta

    def events_to_csv(self, path) -> Path:
        path = Path(path)
        buf = io.StringIO()
        buf.write(f"# params: {self.params.to_dict()}\n")
        buf.write("# initial: " + " ".join(map(str, self.initial)) + "\n")
        buf.write(f"# t_end: {self.t_end!r}\n")
        buf.write("time,from,to\n")
        for t, x, y in zip(self.times, self.sources, self.targets):
            buf.write(f"{float(t)!r},{x},{y}\n")
        path.write_text(buf.getvalue(), encoding="utf-8")
        return path

    def snapshots_to_csv(self, path) -> Path:
        path = Path(path)
        L = len(self.initial)
        buf = io.StringIO()
        buf.write("time," + ",".join(f"x{j + 1}" for j in range(L)) + "\n")
        for t, row in zip(self.snapshot_times, self.snapshots):
            buf.write(f"{float(t)!r}," + ",".join(map(str, row)) + "\n")
        path.write_text(buf.getvalue(), encoding="utf-8")
        return path


def simulate(
    params: ModelParams,
    eta0,
    kernel: TransitionKernel,
    t_end: float,
    rng: RngStream,
    record: bool = True,
    snapshot_times=None,
    max_events: int | None = None,
    hist_size: int | None = None,
    recompute_every: int = RECOMPUTE_EVERY,
) -> Trajectory:
    """Run the process from ``eta0`` up to time ``t_end`` (or ``max_events``)."""
    eta = np.array(eta0, dtype=np.int64)
    if eta.shape != (kernel.L,) or np.any(eta < 0):
        raise DomainError("initial configuration must be nonnegative with one entry per site")
    if not t_end > 0:
        raise DomainError("t_end must be positive")
    if eta.sum() == 0:
        raise DomainError("empty configuration has no events")
    N = int(eta.sum())
    hist = np.zeros((N + 1) if hist_size is None else hist_size)
    snaps_t = np.sort(np.asarray([] if snapshot_times is None else snapshot_times, dtype=float))
    snaps = np.zeros((len(snaps_t), kernel.L), np.int64)
    cum = kernel.cumulative_rows()
    is_power = params.is_power_law
    b = params.b if is_power else 0.0
    beta = 0.0 if is_power else params.beta
    lam = 0.0 if is_power else params.lam
    limit = max_events if max_events is not None else np.iinfo(np.int64).max
    chunk = recompute_every
    t = 0.0
    n_events = n_null = 0
    n_snap = 0
    drift = 0.0
    times, srcs, tgts = [], [], []
    initial = eta.copy()
    while True:
        want = int(min(chunk, limit - n_events))
        if want <= 0:
            break
        t_stop, ev, nn, ts, fs, gs, si, d = _kernels.gillespie_run(
            eta, t, t_end, want, is_power, b, beta, lam, kernel.code, cum,
            rng.kernel_seed(), record, snaps_t[n_snap:], snaps[n_snap:], hist, recompute_every,
        )
        n_events += ev
        n_null += nn
        n_snap += si
        drift = max(drift, d)
        if record:
            times.append(ts.copy())
            srcs.append(fs.copy())
            tgts.append(gs.copy())
        t = t_stop
        if ev < want:
            break
    if int(eta.sum()) != N:
        raise DomainError("particle number changed during simulation")
    cat = (lambda xs, dt: np.concatenate(xs) if xs else np.empty(0, dt))
    return Trajectory(
        params=params, initial=initial, final=eta, t_end=t,
        times=cat(times, float), sources=cat(srcs, np.int64), targets=cat(tgts, np.int64),
        n_events=n_events, n_null=n_null, occupancy_time=hist,
        snapshot_times=snaps_t[:n_snap], snapshots=snaps[:n_snap], rate_drift=drift,
    )


# ---------------------------------------------------------------------------
# generator on a fiber


def _fiber_index(configs: np.ndarray, N: int):
    """Map from configuration rows to their position in ``configs``."""
    L = configs.shape[1]
    if L * math.log2(N + 1) < 62:
        base = (N + 1) ** np.arange(L, dtype=np.int64)
        keys = configs @ base
        order = np.argsort(keys)
        sorted_keys = keys[order]

        def lookup(targets):
            return order[np.searchsorted(sorted_keys, targets @ base)]

        return lookup
    table = {tuple(c): i for i, c in enumerate(configs)}

    def lookup(targets):
        return np.array([table[tuple(c)] for c in targets], dtype=np.int64)

    return lookup


def generator_matrix(params: ModelParams, L: int, N: int, kernel: TransitionKernel, cap: int = GENERATOR_CAP):
    """Sparse generator over the fiber plus the fiber itself.

    Off-diagonal entry (η, η^{x→y}) is g(η_x) p(x, y); the diagonal makes
    rows sum to zero.  Returns ``(Q, configs)``.
    """
    if kernel.L != L:
        raise DomainError("kernel size does not match L")
    if fiber_size(L, N) > cap:
        raise ResourceError(f"fiber of size {fiber_size(L, N)} exceeds cap {cap}")
    configs = enumerate_fiber(L, N)
    M = len(configs)
    lookup = _fiber_index(configs, N)
    P = kernel.matrix()
    rows, cols, vals = [], [], []
    for x in range(L):
        src = np.flatnonzero(configs[:, x] > 0)
        if len(src) == 0:
            continue
        g = np.asarray(jump_rate(params, configs[src, x]), dtype=float)
        for y in range(L):
            if y == x or P[x, y] == 0:
                continue
            tgt = configs[src].copy()
            tgt[:, x] -= 1
            tgt[:, y] += 1
            rows.append(src)
            cols.append(lookup(tgt))
            vals.append(g * P[x, y])
    if rows:
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        v = np.concatenate(vals)
    else:
        r = c = np.empty(0, np.int64)
        v = np.empty(0)
    off = sparse.csr_matrix((v, (r, c)), shape=(M, M))
    diag = -np.asarray(off.sum(axis=1)).ravel()
    Q = (off + sparse.diags(diag)).tocsr()
    return Q, configs


def fiber_graph_strongly_connected(Q) -> bool:
    n, _ = connected_components(abs(Q) > 0, directed=True, connection="strong")
    return n == 1


def stationarity_residual(
    params: ModelParams, L: int, N: int, kernel: TransitionKernel, perturb: tuple[int, float] | None = None
) -> float:
    """max |μ^{N,L} Q| with μ^{N,L}(η) ∝ Π W(η_x) normalized over the fiber.

    ``perturb=(k, eps)`` multiplies W(k) by 1+eps before normalizing, as a
    negative control.
    """
    Q, configs = generator_matrix(params, L, N, kernel)
    logw = weights_upto(params, N)
    if perturb is not None:
        k, eps = perturb
        logw = logw.copy()
        logw[k] += math.log1p(eps)
    lp = logw[configs].sum(axis=1)
    mu = np.exp(lp - lp.max())
    mu /= math.fsum(mu)
    return float(np.max(np.abs(Q.T @ mu)))
