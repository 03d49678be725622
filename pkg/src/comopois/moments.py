"""Covariance and correlation structure implied by the shock weights.

Two comonotonic Poisson variables with rates a and b attain the maximal
covariance possible for those margins,

    m(a, b) = sum_{s,t >= 0} min(S_a(s), S_b(t)) - a * b,

with S the survival function; m(a, a) = a.  Component covariances in the
model stack these column by column:

    cov(X_i, X_j) = sum_{k <= min(i,j)} m(omega_ik * lambda_i,
                                          omega_jk * lambda_j),

and correlations divide by sqrt(lambda_i * lambda_j).  The double series
is evaluated by truncating both margins at their 1 - 1e-12 quantiles M_a
and M_b (truncation error below (M_a + M_b) * 1e-12) and splitting the
inner sum at the index where the two survival curves cross, which turns
the O(M_a * M_b) sum into a sort-free O(M_a log M_b) pass.

`solve_weight` inverts the per-pair covariance equation in one unknown
weight by bisection; it is the engine of the moment estimator, including
its capping of out-of-range targets at 0 or 1.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .model import ModelParams, _as_params
from .poisson import pois_cdf_array, pois_quantile

__all__ = [
    "max_cov",
    "max_cor",
    "pair_cov",
    "cov_matrix",
    "cor_matrix",
    "PairCovTarget",
    "solve_weight",
]

SURVIVAL_TAIL = 1e-12


def _survival_array(rate: float) -> np.ndarray:
    """S(t) = P(X > t) for t = 0..M with M the 1 - 1e-12 quantile."""
    cap = pois_quantile(1.0 - SURVIVAL_TAIL, rate)
    return np.maximum(1.0 - pois_cdf_array(cap, rate), 0.0)


def max_cov(a: float, b: float) -> float:
    """Covariance of comonotonic Poisson(a), Poisson(b); m(a, a) = a.

    Zero when either rate is zero.  Negative or non-finite rates raise
    ``ValueError``.
    """
    a, b = float(a), float(b)
    for r in (a, b):
        if not np.isfinite(r) or r < 0.0:
            raise ValueError(f"rates must be finite and non-negative, got {r!r}")
    if a == 0.0 or b == 0.0:
        return 0.0
    sa = _survival_array(a)
    sb = _survival_array(b)
    # For each s, the inner sum over t splits at the first t with
    # S_b(t) <= S_a(s): below it the min is S_a(s), beyond it the min is
    # S_b(t), whose totals come from one suffix-sum pass.
    idx = np.searchsorted(-sb, -sa, side="left")
    suffix = np.zeros(sb.size + 1)
    suffix[:-1] = np.cumsum(sb[::-1])[::-1]
    total = float((idx * sa).sum() + suffix[idx].sum())
    return total - a * b


def max_cor(a: float, b: float) -> float:
    """Upper correlation bound for Poisson margins with rates a, b."""
    if a <= 0.0 or b <= 0.0:
        return 0.0
    return max_cov(a, b) / np.sqrt(a * b)


def pair_cov(i: int, j: int, params: ModelParams) -> float:
    """cov(X_i, X_j) implied by the parameters, 1-based i < j."""
    p = _as_params(params)
    if i != int(i) or j != int(j):
        raise IndexError("component indices must be integers")
    i, j = int(i), int(j)
    if not (1 <= i < j <= p.d):
        raise IndexError(f"need 1 <= i < j <= d = {p.d}, got (i, j) = ({i}, {j})")
    lam, W = p.lambdas, p.omega
    return sum(
        max_cov(W[i - 1, k] * lam[i - 1], W[j - 1, k] * lam[j - 1]) for k in range(i)
    )


def cov_matrix(params: ModelParams) -> np.ndarray:
    """Model covariance matrix; diagonal is lambda."""
    p = _as_params(params)
    d = p.d
    C = np.diag(p.lambdas.astype(float))
    for i in range(1, d):
        for j in range(i + 1, d + 1):
            C[i - 1, j - 1] = C[j - 1, i - 1] = pair_cov(i, j, p)
    return C


def cor_matrix(params: ModelParams) -> np.ndarray:
    """Model correlation matrix (unit diagonal, entries in [0, 1])."""
    p = _as_params(params)
    C = cov_matrix(p)
    s = np.sqrt(p.lambdas.astype(float))
    R = C / np.outer(s, s)
    np.fill_diagonal(R, 1.0)
    return R


@dataclass(frozen=True)
class PairCovTarget:
    """One equation of the moment system: match cov(X_i, X_j) to a sample value.

    ``residual_weight_i`` is the weight mass component i still has in the
    column being solved (its diagonal weight at that stage of the
    sequential procedure).
    """

    i: int
    j: int
    sample_cov: float
    residual_weight_i: float

    def __post_init__(self):
        if not (1 <= self.i < self.j):
            raise IndexError(f"need 1 <= i < j, got ({self.i}, {self.j})")
        if not 0.0 <= self.residual_weight_i <= 1.0:
            raise ValueError(f"residual_weight_i must lie in [0, 1], got {self.residual_weight_i!r}")
        if not np.isfinite(self.sample_cov):
            raise ValueError("sample_cov must be finite")


def solve_weight(
    target: PairCovTarget,
    lambda_i: float,
    lambda_j: float,
    *,
    f_tol: float = 1e-10,
    x_tol: float = 1e-8,
) -> float:
    """Solve m(rw_i * lambda_i, w * lambda_j) = sample_cov for w in [0, 1].

    m is increasing in w, so bisection brackets the root from f(0) < 0,
    f(1) > 0.  Targets at or below 0 return 0; targets at or above the
    maximum attainable covariance return 1 (the capping convention of the
    moment estimator).  A zero residual weight means no covariance can be
    generated in this column: a warning is issued and 0 returned.

    m(a, b) is stationary in b at b = a, so roots that sit at rate
    equality are only pinned to about sqrt(2 * f_tol) / lambda_j by the
    residual stopping rule; that is still far below sampling noise.
    """
    lambda_i, lambda_j = float(lambda_i), float(lambda_j)
    if lambda_i <= 0.0 or lambda_j <= 0.0:
        raise ValueError("rates must be strictly positive")
    s = float(target.sample_cov)
    if s <= 0.0:
        return 0.0
    a = target.residual_weight_i * lambda_i
    if a == 0.0:
        warnings.warn(
            f"pair ({target.i}, {target.j}): component {target.i} has no residual "
            "weight left in this column, covariance target dropped",
            stacklevel=2,
        )
        return 0.0
    if s >= max_cov(a, lambda_j):
        return 1.0
    lo, hi = 0.0, 1.0
    while hi - lo > x_tol:
        mid = 0.5 * (lo + hi)
        f = max_cov(a, mid * lambda_j) - s
        if abs(f) <= f_tol:
            return mid
        if f < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
