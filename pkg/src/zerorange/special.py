"""Gamma-ratio helpers that stay accurate for large arguments.

``scipy.special.gammaln`` is accurate to a few ulp of its *value*, which is
not good enough for differences such as ``lnΓ(k+1) - lnΓ(k+b+1)`` once ``k``
is in the millions (both terms are ~1e7 and the difference is ~50).  For
large ``z`` we use the generalized Stirling series

    lnΓ(z+a) - lnΓ(z+c) = (a-c) ln z
        + Σ_{n≥1} (-1)^{n+1} (B_{n+1}(a) - B_{n+1}(c)) / (n (n+1) z^n)

where ``B_n`` are Bernoulli polynomials.  The same expansion, summed against
Hurwitz zeta values, gives tails of series whose terms are ratios of Gamma
functions.
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy import special

_N_TERMS = 16


@lru_cache(maxsize=None)
def _bernoulli_numbers(n: int) -> tuple[float, ...]:
    # exact rationals (B_1 = -1/2) by the Akiyama-Tanigawa recurrence
    out = []
    a = [Fraction(0)] * (n + 1)
    for m in range(n + 1):
        a[m] = Fraction(1, m + 1)
        for j in range(m, 0, -1):
            a[j - 1] = j * (a[j - 1] - a[j])
        out.append(a[0])
    if n >= 1:
        out[1] = -out[1]
    return tuple(float(x) for x in out)


def bernoulli_poly(n: int, x: float) -> float:
    """Bernoulli polynomial B_n(x)."""
    bn = _bernoulli_numbers(n)
    return math.fsum(math.comb(n, k) * bn[k] * x ** (n - k) for k in range(n + 1))


def _stirling_coefficients(num: tuple[float, ...], den: tuple[float, ...], n_terms: int) -> np.ndarray:
    # d[n] multiplies z^{-n} in  Σ lnΓ(z+a_i) - Σ lnΓ(z+c_i)  (n >= 1)
    d = np.zeros(n_terms + 1)
    for n in range(1, n_terms + 1):
        acc = sum(bernoulli_poly(n + 1, a) for a in num) - sum(bernoulli_poly(n + 1, c) for c in den)
        d[n] = (-1) ** (n + 1) * acc / (n * (n + 1))
    return d


def _series_ok(z, shifts) -> np.ndarray:
    scale = max(1.0, max(abs(s) for s in shifts))
    return np.asarray(z) >= max(64.0, 24.0 * scale)


def _gammaln_pos(x):
    # gammaln overflows for subnormal x; lnΓ(x) = lnΓ(x+1) - ln x there
    x = np.asarray(x, dtype=float)
    tiny = x < 1e-8
    out = special.gammaln(np.where(tiny, 1.0, x))
    if tiny.any():
        out = np.where(tiny, special.gammaln(x + 1.0) - np.log(np.where(tiny, x, 1.0)), out)
    return out


def log_gamma_ratio(z, a: float, c: float):
    """Return ``lnΓ(z+a) - lnΓ(z+c)`` elementwise for ``z >= 0``.

    Small arguments use ``gammaln`` directly; large ones use the
    Bernoulli-polynomial expansion, which keeps full relative accuracy.
    """
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    big = _series_ok(z, (a, c))
    small = ~big
    if small.any():
        zs = z[small]
        out[small] = _gammaln_pos(zs + a) - _gammaln_pos(zs + c)
    if big.any():
        zb = z[big]
        d = _stirling_coefficients((float(a),), (float(c),), _N_TERMS)
        inv = 1.0 / zb
        acc = np.zeros_like(zb)
        for n in range(_N_TERMS, 0, -1):
            acc = (acc + d[n]) * inv
        out[big] = (a - c) * np.log(zb) + acc
    return out if out.ndim else float(out)


def _exp_series(d: np.ndarray) -> np.ndarray:
    """Coefficients of exp(Σ_{n≥1} d_n y^n) as a power series in y."""
    m = len(d) - 1
    e = np.zeros(m + 1)
    e[0] = 1.0
    for n in range(1, m + 1):
        e[n] = sum(k * d[k] * e[n - k] for k in range(1, n + 1)) / n
    return e


def gamma_ratio_tail_sum(num, den, start: int, power: float = 0.0, log_prefactor: float = 0.0) -> float:
    """Sum ``Σ_{k≥start} k^power · e^{log_prefactor} · ΠΓ(k+a_i)/ΠΓ(k+c_i)``.

    ``num`` and ``den`` must have the same length.  The summand is expanded
    as ``k^s Σ e_n k^{-n}`` and each power is summed with the Hurwitz zeta
    function, so ``start`` has to be large compared to the shifts.
    """
    num = tuple(float(x) for x in num)
    den = tuple(float(x) for x in den)
    if len(num) != len(den):
        raise ValueError("num and den must have equal length")
    if not _series_ok(start, num + den):
        raise ValueError(f"start={start} too small for the asymptotic tail")
    s = sum(num) - sum(den) + power
    if s >= -1.0:
        raise ValueError("series diverges")
    e = _exp_series(_stirling_coefficients(num, den, _N_TERMS))
    terms = [e[n] * special.zeta(n - s, start) for n in range(_N_TERMS + 1)]
    return math.exp(log_prefactor) * math.fsum(terms)


def gamma_ratio_series(num, den, power: float = 0.0, log_prefactor: float = 0.0, start: int = 0) -> float:
    """Full sum ``Σ_{k≥start}`` of the same summand: explicit head plus asymptotic tail."""
    shifts = tuple(num) + tuple(den)
    cut = int(max(256, 48 * max(1.0, max(abs(x) for x in shifts))))
    cut = max(cut, start)
    k = np.arange(start, cut, dtype=float)
    logt = np.full_like(k, log_prefactor)
    for a in num:
        logt += special.gammaln(k + a)
    for c in den:
        logt -= special.gammaln(k + c)
    head_terms = np.exp(logt)
    if power:
        head_terms = head_terms * k**power
    head = math.fsum(head_terms)
    return head + gamma_ratio_tail_sum(num, den, cut, power=power, log_prefactor=log_prefactor)
