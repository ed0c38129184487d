"""Compiled inner loops.  Everything here works on plain arrays; the public
modules own validation and bookkeeping."""

import math

import numpy as np
from numba import njit

_NEG_INF = -np.inf
# Entries more than this many nats below a row's maximum are flushed to zero
# in the linear-space pass; products stay clear of subnormals.
_FLUSH = 350.0
_SAFE = math.exp(-300.0)

_FM = {"reassoc", "contract", "nsz", "arcp"}


@njit(cache=True, fastmath=_FM)
def _dot_rev(A, Brev, k0, k1, off):
    s = 0.0
    for k in range(k0, k1 + 1):
        s += A[k] * Brev[off + k]
    return s


@njit(cache=True)
def logconv(a, b, N):
    """c[n] = log Σ_k exp(a[k] + b[n-k]) for n = 0..N.

    A linear-space pass handles every entry whose value is within ~300 nats
    of the product of row maxima; the rest are recomputed by log-sum-exp.
    """
    na = min(a.shape[0], N + 1)
    nb = min(b.shape[0], N + 1)
    sa = _NEG_INF
    for i in range(na):
        if a[i] > sa:
            sa = a[i]
    sb = _NEG_INF
    for i in range(nb):
        if b[i] > sb:
            sb = b[i]
    c = np.empty(N + 1)
    if sa == _NEG_INF or sb == _NEG_INF:
        c[:] = _NEG_INF
        return c
    A = np.zeros(na)
    for i in range(na):
        d = a[i] - sa
        if d > -_FLUSH:
            A[i] = math.exp(d)
    Brev = np.zeros(nb)
    for i in range(nb):
        d = b[i] - sb
        if d > -_FLUSH:
            Brev[nb - 1 - i] = math.exp(d)
    for n in range(N + 1):
        k0 = max(0, n - nb + 1)
        k1 = min(n, na - 1)
        if k0 > k1:
            c[n] = _NEG_INF
            continue
        # b[n-k] sits at Brev[nb-1-n+k]
        s = _dot_rev(A, Brev, k0, k1, nb - 1 - n)
        if s > _SAFE:
            c[n] = math.log(s) + sa + sb
            continue
        m = _NEG_INF
        for k in range(k0, k1 + 1):
            t = a[k] + b[n - k]
            if t > m:
                m = t
        if m == _NEG_INF:
            c[n] = _NEG_INF
            continue
        s2 = 0.0
        for k in range(k0, k1 + 1):
            s2 += math.exp(a[k] + b[n - k] - m)
        c[n] = m + math.log(s2)
    return c


@njit(cache=True)
def build_rows(logw, L, N):
    """All convolution powers 0..L of logw, truncated to 0..N."""
    out = np.empty((L + 1, N + 1))
    out[0, :] = _NEG_INF
    out[0, 0] = 0.0
    for l in range(1, L + 1):
        out[l, :] = logconv(out[l - 1], logw, N)
    return out


@njit(cache=True)
def sample_sequential(logQ, logw, N, U, out):
    """Fill ``out`` (ns x L) site by site from the conditional pmfs.

    Returns the index of the first sample whose conditional pmf failed to
    reach its uniform within 1e-8, or -1 when all is well.
    """
    L = logQ.shape[0] - 1
    ns = out.shape[0]
    for s in range(ns):
        n = N
        for j in range(L - 1):
            if n == 0:
                for jj in range(j, L):
                    out[s, jj] = 0
                break
            l = L - j
            u = U[s, j]
            base = logQ[l, n]
            cum = 0.0
            chosen = -1
            last_pos = 0
            for k in range(n + 1):
                t = logw[k] + logQ[l - 1, n - k]
                if t == _NEG_INF:
                    continue
                last_pos = k
                cum += math.exp(t - base)
                if cum >= u:
                    chosen = k
                    break
            if chosen < 0:
                if u - cum > 1e-8:
                    return s
                chosen = last_pos
            out[s, j] = chosen
            n -= chosen
        else:
            out[s, L - 1] = n
            continue
    return -1


@njit(cache=True)
def sample_split(rows, row_of, N, U, out):
    """Exact sampling by recursive halving of the site set.

    A block of l sites holding n particles sends n1 to its left half
    (l//2 sites) with probability Q_{l//2}(n1) Q_{l-l//2}(n-n1) / Q_l(n).
    The inverse cdf is searched from the low end when u < 1/2 and from the
    high end otherwise, so the condensate never costs a full scan.
    """
    ns, L = out.shape
    st_start = np.empty(256, np.int64)
    st_l = np.empty(256, np.int64)
    st_n = np.empty(256, np.int64)
    for s in range(ns):
        top = 0
        st_start[0] = 0
        st_l[0] = L
        st_n[0] = N
        ui = 0
        while top >= 0:
            start = st_start[top]
            l = st_l[top]
            n = st_n[top]
            top -= 1
            if l == 1:
                out[s, start] = n
                continue
            if n == 0:
                for x in range(start, start + l):
                    out[s, x] = 0
                continue
            l1 = l // 2
            l2 = l - l1
            r = row_of[l]
            r1 = row_of[l1]
            r2 = row_of[l2]
            base = rows[r, n]
            u = U[s, ui]
            ui += 1
            n1 = -1
            if u < 0.5:
                cum = 0.0
                last_pos = 0
                for m in range(n + 1):
                    t = rows[r1, m] + rows[r2, n - m]
                    if t == _NEG_INF:
                        continue
                    last_pos = m
                    cum += math.exp(t - base)
                    if cum >= u:
                        n1 = m
                        break
                if n1 < 0:
                    if u - cum > 1e-8:
                        return s
                    n1 = last_pos
            else:
                # largest m with P(X >= m) > 1 - u
                v = 1.0 - u
                tail = 0.0
                last_pos = n
                for m in range(n, -1, -1):
                    t = rows[r1, m] + rows[r2, n - m]
                    if t == _NEG_INF:
                        continue
                    last_pos = m
                    tail += math.exp(t - base)
                    if tail > v:
                        n1 = m
                        break
                if n1 < 0:
                    if v - tail > 1e-8:
                        return s
                    n1 = last_pos
            top += 1
            st_start[top] = start + l1
            st_l[top] = l2
            st_n[top] = n - n1
            top += 1
            st_start[top] = start
            st_l[top] = l1
            st_n[top] = n1
    return -1


@njit(cache=True)
def conditional_mass_error(logQ, logw):
    """max over (l, n) with Q_l(n) > 0 of |Σ_k W(k) Q_{l-1}(n-k) / Q_l(n) - 1|."""
    L = logQ.shape[0] - 1
    N = logQ.shape[1] - 1
    worst = 0.0
    for l in range(1, L + 1):
        for n in range(N + 1):
            base = logQ[l, n]
            if base == _NEG_INF:
                continue
            s = 0.0
            for k in range(n + 1):
                t = logw[k] + logQ[l - 1, n - k]
                if t != _NEG_INF:
                    s += math.exp(t - base)
            e = abs(s - 1.0)
            if e > worst:
                worst = e
    return worst


# ---------------------------------------------------------------------------
# zero-range dynamics

KIND_UNIFORM = 0
KIND_RING = 1
KIND_CUSTOM = 2


@njit(cache=True)
def _rate(k, is_power, b, beta, lam):
    if k <= 0:
        return 0.0
    if is_power:
        return 1.0 + b / k
    return 1.0 + beta / k**lam


@njit(cache=True)
def _pick_target(x, L, kind, cum_rows, u):
    if kind == KIND_UNIFORM:
        y = int(u * (L - 1))
        if y >= L - 1:
            y = L - 2
        return y + 1 if y >= x else y
    if kind == KIND_RING:
        if u < 0.5:
            return (x + 1) % L
        return (x - 1) % L
    row = cum_rows[x]
    lo = 0
    hi = L - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if row[mid] > u:
            hi = mid
        else:
            lo = mid + 1
    return lo


@njit(cache=True)
def gillespie_run(
    eta, t0, t_end, max_events, is_power, b, beta, lam, kind, cum_rows,
    seed, record, snap_times, snaps, hist, recompute_every,
):
    """Event-driven simulation in place on ``eta``.

    Departure sites are drawn by thinning: a uniformly random occupied site
    is accepted with probability g(η_x)/g_max.  The total rate is updated
    incrementally and recomputed from scratch every ``recompute_every``
    events.  ``hist[k]`` accumulates the time during which sites hold k
    particles (summed over sites).  Returns
    (t, n_events, n_null, times, froms, tos, n_snaps, drift).
    """
    np.random.seed(seed)
    L = eta.shape[0]
    occ = np.empty(L, np.int64)
    pos = np.full(L, -1, np.int64)
    n_occ = 0
    total = 0.0
    for x in range(L):
        if eta[x] > 0:
            occ[n_occ] = x
            pos[x] = n_occ
            n_occ += 1
        total += _rate(eta[x], is_power, b, beta, lam)
    gmax = 1.0 + (b if is_power else beta)
    cap = max_events if record else 1
    times = np.empty(cap)
    froms = np.empty(cap, np.int64)
    tos = np.empty(cap, np.int64)
    last_change = np.full(L, t0)
    hmax = hist.shape[0]
    t = t0
    ev = 0
    n_null = 0
    si = 0
    n_snap = snap_times.shape[0]
    drift = 0.0
    while ev < max_events:
        if total <= 0.0:
            break
        dt = -math.log(1.0 - np.random.random()) / total
        t_next = t + dt
        while si < n_snap and snap_times[si] <= t_next and snap_times[si] <= t_end:
            snaps[si, :] = eta
            si += 1
        if t_next > t_end:
            break
        t = t_next
        # departure site by thinning
        while True:
            x = occ[int(np.random.random() * n_occ)]
            if np.random.random() * gmax < _rate(eta[x], is_power, b, beta, lam):
                break
        y = _pick_target(x, L, kind, cum_rows, np.random.random())
        if y == x:
            n_null += 1
            continue
        for z in (x, y):
            k = eta[z]
            if k < hmax:
                hist[k] += t - last_change[z]
            last_change[z] = t
        kx = eta[x]
        ky = eta[y]
        total += (
            _rate(kx - 1, is_power, b, beta, lam) - _rate(kx, is_power, b, beta, lam)
            + _rate(ky + 1, is_power, b, beta, lam) - _rate(ky, is_power, b, beta, lam)
        )
        eta[x] = kx - 1
        eta[y] = ky + 1
        if kx == 1:
            # remove x from the occupied list
            p = pos[x]
            last = occ[n_occ - 1]
            occ[p] = last
            pos[last] = p
            pos[x] = -1
            n_occ -= 1
        if ky == 0:
            occ[n_occ] = y
            pos[y] = n_occ
            n_occ += 1
        if record:
            times[ev] = t
            froms[ev] = x
            tos[ev] = y
        ev += 1
        if ev % recompute_every == 0:
            exact = 0.0
            for z in range(L):
                exact += _rate(eta[z], is_power, b, beta, lam)
            d = abs(exact - total) / exact
            if d > drift:
                drift = d
            total = exact
    t_stop = t_end if ev < max_events else t
    while si < n_snap and snap_times[si] <= t_stop:
        snaps[si, :] = eta
        si += 1
    for z in range(L):
        k = eta[z]
        if k < hmax:
            hist[k] += t_stop - last_change[z]
    if not record:
        return t_stop, ev, n_null, times[:0], froms[:0], tos[:0], si, drift
    return t_stop, ev, n_null, times[:ev], froms[:ev], tos[:ev], si, drift
