import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zerorange.dynamics import (
    TransitionKernel,
    fiber_graph_strongly_connected,
    generator_matrix,
    gillespie_step,
    simulate,
    stationarity_residual,
    total_rate,
)
from zerorange.errors import DomainError, ResourceError
from zerorange.exact import CanonicalDistribution
from zerorange.experiments import ergodic_experiment
from zerorange.model import ModelParams, jump_rate
from zerorange.rng import RngStream

B4 = ModelParams.power_law(4.0)


# ---------------------------------------------------------------------------
# kernels


@pytest.mark.parametrize("kind", ["uniform", "ring"])
def test_builtin_kernels_doubly_stochastic(kind):
    for L in (2, 3, 7):
        P = TransitionKernel(L, kind).matrix()
        assert np.allclose(P.sum(axis=0), 1, atol=1e-15) and np.allclose(P.sum(axis=1), 1, atol=1e-15)
        assert np.allclose(TransitionKernel(L, kind).sparse_matrix().toarray(), P)


def test_custom_kernel_validation():
    good = np.array([[0.2, 0.8, 0.0], [0.0, 0.2, 0.8], [0.8, 0.0, 0.2]])
    k = TransitionKernel.custom(good)
    assert k.L == 3 and np.array_equal(k.matrix(), good)
    bad_cols = np.array([[0.5, 0.5, 0.0], [0.5, 0.5, 0.0], [0.5, 0.0, 0.5]])
    with pytest.raises(DomainError):
        TransitionKernel.custom(bad_cols)
    off = good.copy()
    off[0, 0] += 2e-12
    off[0, 1] -= 1e-12
    with pytest.raises(DomainError):
        TransitionKernel.custom(off)
    with pytest.raises(DomainError):
        TransitionKernel.custom([[1.5, -0.5], [-0.5, 1.5]])  # sums are fine, entries are not
    reducible = np.kron(np.eye(2), np.full((2, 2), 0.5))
    with pytest.raises(DomainError):
        TransitionKernel.custom(reducible)
    with pytest.raises(DomainError):
        TransitionKernel(3, "custom")


# ---------------------------------------------------------------------------
# single steps and rates


def test_step_example_two_sites():
    k = TransitionKernel.uniform(2)
    eta = np.array([2, 0])
    # g(2) = 1 + 4/2 = 3
    assert total_rate(B4, eta) == 3.0
    for seed in range(20):
        dt, x, y = gillespie_step(B4, eta, k, RngStream(seed))
        assert (x, y) == (0, 1) and dt > 0
    dts = [gillespie_step(B4, eta, k, RngStream(s))[0] for s in range(20000)]
    assert np.mean(dts) == pytest.approx(1 / 3.0, rel=0.03)


def test_single_particle_rate():
    for b in (2.5, 4.0, 9.0):
        p = ModelParams.power_law(b)
        assert total_rate(p, [0, 1, 0, 0]) == 1 + b


def test_step_departure_law():
    k = TransitionKernel.ring(3)
    eta = np.array([1, 3, 0])
    rates = np.asarray(jump_rate(B4, eta), dtype=float)
    xs = [gillespie_step(B4, eta, k, RngStream(s))[1] for s in range(20000)]
    freq = np.bincount(xs, minlength=3) / len(xs)
    assert np.allclose(freq, rates / rates.sum(), atol=0.015)


def test_empty_configuration():
    with pytest.raises(DomainError):
        gillespie_step(B4, np.zeros(3, int), TransitionKernel.ring(3), RngStream(1))
    with pytest.raises(DomainError):
        simulate(B4, np.zeros(3, int), TransitionKernel.ring(3), 1.0, RngStream(1))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 50), min_size=1, max_size=30))
def test_rate_additivity(eta):
    assert total_rate(B4, eta) == pytest.approx(sum(0.0 if k == 0 else 1 + 4.0 / k for k in eta), rel=1e-12)


# ---------------------------------------------------------------------------
# trajectories


@pytest.mark.parametrize("kind", ["uniform", "ring"])
def test_trajectory_conservation_and_legality(kind):
    L = 6
    eta0 = np.array([7, 0, 0, 2, 0, 1])
    snaps = np.linspace(0, 50, 11)
    tr = simulate(B4, eta0, TransitionKernel(L, kind), 50.0, RngStream(3), snapshot_times=snaps)
    assert tr.n_events > 100
    assert np.all(np.diff(tr.times) > 0)
    assert np.array_equal(tr.replay(), tr.final)
    assert np.all(tr.snapshots.sum(axis=1) == 10)
    assert np.array_equal(tr.snapshots[0], eta0)
    assert tr.occupancy_distribution().sum() == pytest.approx(1.0, abs=1e-12)


def test_custom_kernel_self_jumps_are_null_events():
    P = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
    tr = simulate(B4, np.array([3, 1, 0]), TransitionKernel.custom(P), 100.0, RngStream(4))
    assert tr.n_null > 0
    assert np.all(tr.sources != tr.targets)
    assert np.array_equal(tr.replay(), tr.final)


def test_simulation_reproducible():
    k = TransitionKernel.uniform(5)
    a = simulate(B4, np.array([5, 0, 0, 0, 0]), k, 20.0, RngStream(8))
    b = simulate(B4, np.array([5, 0, 0, 0, 0]), k, 20.0, RngStream(8))
    assert np.array_equal(a.times, b.times) and np.array_equal(a.targets, b.targets)


def test_rate_accumulator_drift_after_1e6_events():
    L = 1000
    eta = np.full(L, 3)
    tr = simulate(B4, eta, TransitionKernel.uniform(L), 1e12, RngStream(9), record=False,
                  max_events=10**6, recompute_every=10**6)
    assert tr.n_events == 10**6
    assert tr.rate_drift < 1e-9


def test_event_and_snapshot_csv(tmp_path):
    tr = simulate(B4, np.array([4, 0, 1]), TransitionKernel.ring(3), 5.0, RngStream(5),
                  snapshot_times=[0.0, 2.5, 5.0])
    ev = tr.events_to_csv(tmp_path / "ev.csv").read_text().splitlines()
    assert ev[1] == "# initial: 4 0 1" and ev[3] == "time,from,to"
    body = np.loadtxt(tmp_path / "ev.csv", delimiter=",", skiprows=4, ndmin=2)
    assert np.array_equal(body[:, 0], tr.times)
    sn = tr.snapshots_to_csv(tmp_path / "sn.csv").read_text().splitlines()
    assert sn[0] == "time,x1,x2,x3" and sn[1] == "0.0,4,0,1"
    assert "np.float64" not in "".join(ev + sn)


def test_ergodic_average_matches_exact_marginal():
    rep = ergodic_experiment(B4, L=3, N=5, kind="ring", t_end=2e5)
    assert rep.passed, rep.statistics


# ---------------------------------------------------------------------------
# generator


def test_generator_two_state_example():
    k = TransitionKernel.uniform(2)
    Q, configs = generator_matrix(B4, 2, 1, k)
    order = np.argsort(configs[:, 1])  # (1,0) first, then (0,1)
    M = Q.toarray()[np.ix_(order, order)]
    assert np.allclose(M, [[-5.0, 5.0], [5.0, -5.0]], atol=0)


@pytest.mark.parametrize("kind", ["uniform", "ring"])
def test_generator_rows_sum_to_zero(kind):
    Q, _ = generator_matrix(B4, 4, 6, TransitionKernel(4, kind))
    assert np.max(np.abs(np.asarray(Q.sum(axis=1)).ravel())) < 1e-12


def test_fiber_strongly_connected():
    Q, _ = generator_matrix(B4, 3, 4, TransitionKernel.ring(3))
    assert fiber_graph_strongly_connected(Q)


def test_generator_resource_cap():
    with pytest.raises(ResourceError):
        generator_matrix(B4, 10, 10, TransitionKernel.ring(10))


def test_stationarity_examples():
    assert stationarity_residual(B4, 2, 3, TransitionKernel.uniform(2)) < 1e-12
    assert stationarity_residual(B4, 3, 4, TransitionKernel.ring(3)) < 1e-10
    assert stationarity_residual(B4, 3, 4, TransitionKernel.ring(3), perturb=(1, 0.01)) > 1e-4


def test_stationarity_custom_kernel_and_stretched():
    P = np.array([[0.1, 0.6, 0.3], [0.3, 0.1, 0.6], [0.6, 0.3, 0.1]])
    k = TransitionKernel.custom(P)
    for p in (B4, ModelParams.stretched(1.0, 0.75)):
        assert stationarity_residual(p, 3, 8, k) < 1e-10


def test_stationary_law_equals_canonical_measure():
    # null vector of Q^T versus the DP canonical probabilities
    L, N = 3, 6
    Q, configs = generator_matrix(B4, L, N, TransitionKernel.ring(L))
    dense = Q.toarray().T
    u, s, vt = np.linalg.svd(dense)
    pi = np.abs(vt[-1])
    pi /= pi.sum()
    dist = CanonicalDistribution.build(B4, L, N)
    ref = np.array([dist.prob(c) for c in configs])
    assert np.allclose(pi, ref, atol=1e-12)
