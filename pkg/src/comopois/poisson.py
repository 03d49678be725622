"""Univariate Poisson primitives and comonotonic Poisson vectors.

Everything downstream (joint probabilities, moment formulas, estimation)
reduces to four scalar operations on a single Poisson margin: pmf, cdf,
quantile, and sampling by inversion. They are implemented here once, in
plain float arithmetic, with the conventions fixed for the whole package:

* pmf values are computed in log space against a shared log-factorial
  table, so large counts underflow gracefully instead of overflowing;
* the cdf is a forward series sum with an early exit once terms stop
  mattering, clamped into [0, 1];
* the quantile is the generalised inverse min{k : cdf(k) >= u}, with
  u = 1 mapped to the quantile of 1 - 1e-15 so it stays finite;
* rate 0 means the distribution degenerate at 0, not an error.

A comonotonic Poisson vector is (Q_1(U), ..., Q_m(U)) for one shared
uniform U, where Q_k is the quantile function of a Poisson(mu_k) margin.
Its pmf is an interval length on the uniform scale: the overlap of
[cdf_k(z_k - 1), cdf_k(z_k)] across coordinates.  `comono_pmf` evaluates
that bracket pointwise and `comono_support` walks the whole support as a
staircase in U, which is what the grid-based joint pmf code consumes.
"""

from __future__ import annotations

import math
import threading
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "pois_pmf",
    "pois_log_pmf",
    "pois_cdf",
    "pois_cdf_array",
    "pois_quantile",
    "pois_quantile_vec",
    "comono_pmf",
    "comono_sample",
    "comono_support",
]

# Mass used to invert u == 1; the true generalised inverse is unbounded there.
QUANTILE_CAP = 1.0 - 1e-15

# Lazily extended table of log(k!).  Readers grab the module-level reference
# once (atomic in CPython) and never see a partially built array; writers
# serialise on the lock and publish a fully initialised replacement.
_logfact_lock = threading.Lock()
_logfact = np.zeros(2)


def _logfact_table(n: int) -> np.ndarray:
    """Return a table t with t[k] = log(k!) valid for k = 0..n inclusive."""
    global _logfact
    table = _logfact
    if table.size <= n:
        with _logfact_lock:
            table = _logfact
            if table.size <= n:
                size = max(n + 1, 2 * table.size)
                ext = np.empty(size)
                ext[: table.size] = table
                ks = np.arange(table.size, size, dtype=float)
                ext[table.size :] = table[-1] + np.cumsum(np.log(ks))
                _logfact = table = ext
    return table


def _check_rate(rate: float) -> float:
    rate = float(rate)
    if not math.isfinite(rate) or rate < 0.0:
        raise ValueError(f"Poisson rate must be finite and non-negative, got {rate!r}")
    return rate


def _check_count(k: int) -> int:
    if k != int(k):
        raise ValueError(f"count must be an integer, got {k!r}")
    k = int(k)
    if k < 0:
        raise ValueError(f"count must be non-negative, got {k}")
    return k


def pois_log_pmf(k: int, rate: float) -> float:
    """log P(X = k) for X ~ Poisson(rate); -inf where the pmf is zero."""
    rate = _check_rate(rate)
    k = _check_count(k)
    if rate == 0.0:
        return 0.0 if k == 0 else -math.inf
    return k * math.log(rate) - rate - float(_logfact_table(k)[k])


def pois_pmf(k: int, rate: float) -> float:
    """P(X = k) for X ~ Poisson(rate).

    Rate 0 is the point mass at 0.  Negative or non-integer ``k`` and
    non-finite or negative rates raise ``ValueError``.
    """
    lp = pois_log_pmf(k, rate)
    return 0.0 if lp == -math.inf else math.exp(lp)


def pois_cdf(k: int, rate: float) -> float:
    """P(X <= k) for X ~ Poisson(rate); 0.0 for k < 0.

    Forward series summation.  Terms are added until either k is reached
    or, past the mode, the next term would change the running total by a
    relative 1e-17 or less, at which point the sum has saturated in double
    precision.  The result is clamped into [0, 1].
    """
    rate = _check_rate(rate)
    if k != int(k):
        raise ValueError(f"count must be an integer, got {k!r}")
    k = int(k)
    if k < 0:
        return 0.0
    if rate == 0.0:
        return 1.0
    term = math.exp(-rate)
    total = term
    for i in range(1, k + 1):
        term *= rate / i
        total += term
        if i > rate and term < total * 1e-17:
            break
    return min(total, 1.0)


def pois_cdf_array(kmax: int, rate: float) -> np.ndarray:
    """Vector of P(X <= k) for k = 0..kmax, monotone and clamped to [0, 1]."""
    rate = _check_rate(rate)
    kmax = _check_count(kmax)
    if rate == 0.0:
        return np.ones(kmax + 1)
    ks = np.arange(kmax + 1)
    logs = ks * math.log(rate) - rate - _logfact_table(kmax)[: kmax + 1]
    return np.minimum(np.cumsum(np.exp(logs)), 1.0)


def pois_quantile(u: float, rate: float) -> int:
    """Generalised inverse cdf: the smallest k with P(X <= k) >= u.

    ``u`` must lie in [0, 1].  u = 0 returns 0; u = 1 is evaluated at
    1 - 1e-15 so the result is finite.  Rate 0 always returns 0.
    """
    rate = _check_rate(rate)
    u = float(u)
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"u must lie in [0, 1], got {u!r}")
    if rate == 0.0 or u == 0.0:
        return 0
    u = min(u, QUANTILE_CAP)
    k = 0
    term = math.exp(-rate)
    total = term
    while total < u:
        k += 1
        term *= rate / k
        total += term
        # The float sum can stall a hair below 1; once terms are dust we
        # are past every quantile the cap can ask for.
        if k > rate and term < total * 1e-18:
            break
    return k


def pois_quantile_vec(u: np.ndarray, rate: float) -> np.ndarray:
    """Vectorised `pois_quantile` for a fixed rate.

    Builds the cdf once out to the 1 - 1e-15 quantile and inverts by
    binary search, so agrees exactly with the scalar version.
    """
    rate = _check_rate(rate)
    u = np.asarray(u, dtype=float)
    if u.size and (u.min() < 0.0 or u.max() > 1.0):
        raise ValueError("u values must lie in [0, 1]")
    if rate == 0.0:
        return np.zeros(u.shape, dtype=np.int64)
    cap = pois_quantile(QUANTILE_CAP, rate)
    cdf = pois_cdf_array(cap, rate)
    idx = np.searchsorted(cdf, np.minimum(u, QUANTILE_CAP), side="left")
    return np.minimum(idx, cap).astype(np.int64)


def _check_rates(rates: Sequence[float]) -> list[float]:
    rates = [_check_rate(r) for r in rates]
    if not rates:
        raise ValueError("need at least one rate")
    return rates


def comono_pmf(z: Sequence[int], rates: Sequence[float]) -> float:
    """pmf of a comonotonic Poisson vector at the point ``z``.

    The vector is (Q_1(U), ..., Q_m(U)) for a single uniform U, so the
    probability of hitting ``z`` is the length of the overlap of the
    uniform-scale intervals (cdf_k(z_k - 1), cdf_k(z_k)]:

        max(0, min_k cdf_k(z_k) - max_k cdf_k(z_k - 1))

    Any negative coordinate gives 0.  With one coordinate this is the
    ordinary Poisson pmf.  ``z`` and ``rates`` must have equal length.
    """
    rates = _check_rates(rates)
    z = [int(v) for v in z]
    if len(z) != len(rates):
        raise ValueError(f"z has length {len(z)} but rates has length {len(rates)}")
    if any(v < 0 for v in z):
        return 0.0
    hi = min(pois_cdf(v, r) for v, r in zip(z, rates))
    lo = max(pois_cdf(v - 1, r) for v, r in zip(z, rates))
    return max(hi - lo, 0.0)


def comono_sample(u: float, rates: Sequence[float]) -> np.ndarray:
    """One draw of the comonotonic vector from a single uniform ``u``."""
    rates = _check_rates(rates)
    return np.array([pois_quantile(u, r) for r in rates], dtype=np.int64)


def comono_support(cdf_cols: Sequence[np.ndarray]) -> Iterator[tuple[tuple[int, ...], float]]:
    """Walk the support of a comonotonic vector as a staircase in U.

    ``cdf_cols[k]`` holds the cdf of coordinate k at 0..cap_k.  Starting
    from the origin, the walk repeatedly emits the current point with the
    uniform mass it owns, then advances every coordinate whose cdf equals
    the current level.  Yields ``(z, mass)`` pairs for every point of the
    support that fits under the caps, in increasing order; total yielded
    mass is min(1, the cdf bound imposed by the caps).  At most
    sum(cap_k) + 1 points are produced.
    """
    m = len(cdf_cols)
    if m == 0:
        raise ValueError("need at least one cdf column")
    z = [0] * m
    u_lo = 0.0
    while True:
        u_hi = min(float(cdf_cols[k][z[k]]) for k in range(m))
        if u_hi > u_lo:
            yield tuple(z), u_hi - u_lo
            u_lo = u_hi
        if u_hi >= 1.0:
            return
        for k in range(m):
            if float(cdf_cols[k][z[k]]) == u_hi:
                z[k] += 1
                if z[k] >= cdf_cols[k].size:
                    return
