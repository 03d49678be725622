"""The comonotonic-shocks multivariate Poisson model.

A d-dimensional count vector X is built from d comonotonic shock columns.
Column j carries one shared uniform U_j and contributes a comonotonic
Poisson vector to components i >= j; component i is the sum of its shocks:

    X_i = Z_i1 + ... + Z_ii,   Z_ij = Q(U_j; omega_ij * lambda_i),

where Q is the Poisson quantile function.  The parameters are the marginal
rates lambda (so X_i is exactly Poisson(lambda_i)) and a lower-triangular
weight matrix Omega whose rows sum to one; omega_11 = 1.  Weights of zero
or one are allowed, so dependence can be switched off column by column or
made fully comonotonic.

Joint probabilities do not factor, but they reduce to finite sums over the
latent shock columns because column 1 is pinned by the observed counts:
z_i1 = x_i - (z_i2 + ... + z_ii).  Two evaluation strategies are provided
and cross-checked in the tests:

* a scalar recursion over columns (`joint_pmf`, `joint_cdf`,
  `bivariate_pmf`) that prunes negative residuals as it goes, and
* a grid dynamic programme (`joint_pmf_box`, `bivariate_pmf_box`) that
  convolves the sparse column staircases over an axis-aligned box of
  counts, which is the fast path for likelihoods.

Cost grows with the product of the observed counts, so the scalar entry
points guard against boxes past desk scale; the bounds can be raised
explicitly by callers who know what they are paying for.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .poisson import comono_support, pois_cdf_array, pois_pmf, pois_quantile_vec

__all__ = [
    "ParameterError",
    "ModelParams",
    "validate",
    "params_from_dict",
    "check_counts",
    "joint_pmf",
    "joint_cdf",
    "joint_pmf_box",
    "joint_cdf_box",
    "bivariate_pmf",
    "bivariate_pmf_box",
    "sample",
    "log_likelihood",
    "pairwise_log_likelihood",
]

# Log-likelihood contribution of an observation the model gives zero
# probability: a large finite penalty rather than -inf, so optimisers can
# still rank candidate parameter values.
ZERO_PROB_LOGLIK = -1e18

ROW_SUM_TOL = 1e-12


class ParameterError(ValueError):
    """Raised when (lambda, Omega) fail the model constraints."""


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Validated parameters: rates ``lambdas`` (d,) and weights ``omega`` (d, d).

    Instances are produced by `validate` (or `params_from_dict`); the
    arrays are normalised so every row of ``omega`` sums to exactly 1.
    """

    lambdas: np.ndarray
    omega: np.ndarray

    @property
    def d(self) -> int:
        return self.lambdas.size

    def omega_rows(self) -> list[list[float]]:
        """Lower-triangular rows as plain lists, row i of length i."""
        return [list(map(float, self.omega[i, : i + 1])) for i in range(self.d)]

    def as_dict(self) -> dict:
        return {"lambda": [float(v) for v in self.lambdas], "omega": self.omega_rows()}

    def shock_rate(self, i: int, j: int) -> float:
        """Rate of the shock Z_ij, 1-based indices with j <= i."""
        return float(self.omega[i - 1, j - 1] * self.lambdas[i - 1])


def validate(lambdas: Sequence[float], omega_rows: Sequence[Sequence[float]]) -> ModelParams:
    """Check and normalise (lambda, Omega); raises `ParameterError`.

    ``omega_rows`` may be the ragged lower triangle (row i holding i
    entries) or a full d x d matrix whose upper triangle must be zero.
    Rates must be finite and strictly positive.  Weights must be
    non-negative with each row summing to 1 within 1e-12; rows are then
    renormalised so the sums are exact.
    """
    lam = np.asarray(lambdas, dtype=float)
    if lam.ndim != 1 or lam.size == 0:
        raise ParameterError("lambda must be a non-empty 1-d sequence")
    d = lam.size
    for i, v in enumerate(lam, start=1):
        if not np.isfinite(v) or v <= 0.0:
            raise ParameterError(f"lambda_{i} must be finite and > 0, got {v!r}")

    W = np.zeros((d, d))
    rows = list(omega_rows)
    if len(rows) != d:
        raise ParameterError(f"omega has {len(rows)} rows but lambda has length {d}")
    for i, row in enumerate(rows):
        row = np.asarray(row, dtype=float)
        if row.ndim != 1 or row.size not in (i + 1, d):
            raise ParameterError(
                f"omega row {i + 1} must have {i + 1} (triangular) or {d} (square) entries"
            )
        if row.size == d and np.any(row[i + 1 :] != 0.0):
            raise ParameterError(f"omega row {i + 1} has non-zero entries above the diagonal")
        W[i, : i + 1] = row[: i + 1]

    if not np.all(np.isfinite(W)):
        raise ParameterError("omega entries must be finite")
    bad = np.argwhere(W < 0.0)
    if bad.size:
        i, j = bad[0] + 1
        raise ParameterError(f"omega_{i}{j} is negative")
    sums = W.sum(axis=1)
    for i, s in enumerate(sums, start=1):
        if abs(s - 1.0) > ROW_SUM_TOL:
            raise ParameterError(f"omega row {i} sums to {s!r}, expected 1 within {ROW_SUM_TOL}")
    W /= sums[:, None]

    lam = lam.copy()
    lam.setflags(write=False)
    W.setflags(write=False)
    return ModelParams(lam, W)


def params_from_dict(obj: dict) -> ModelParams:
    """Build `ModelParams` from the {"lambda": [...], "omega": [[...], ...]} layout."""
    if not isinstance(obj, dict) or "lambda" not in obj or "omega" not in obj:
        raise ParameterError('parameter object needs "lambda" and "omega" keys')
    return validate(obj["lambda"], obj["omega"])


def _as_params(params) -> ModelParams:
    if isinstance(params, ModelParams):
        return params
    raise TypeError("params must be a ModelParams (see validate / params_from_dict)")


def check_counts(data) -> np.ndarray:
    """Validate an n x d matrix of observed counts; returns int64 array.

    Error messages carry 1-based row/column positions so they can be
    surfaced directly to users loading files.
    """
    arr = np.asarray(data)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError("count data must be a non-empty 2-d array (rows = observations)")
    if not np.issubdtype(arr.dtype, np.number):
        raise ValueError("count data must be numeric")
    vals = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(vals)):
        r, c = np.argwhere(~np.isfinite(vals))[0] + 1
        raise ValueError(f"row {r}, column {c}: value is not finite")
    if np.any(vals != np.floor(vals)):
        r, c = np.argwhere(vals != np.floor(vals))[0] + 1
        raise ValueError(f"row {r}, column {c}: count {vals[r - 1, c - 1]!r} is not an integer")
    if np.any(vals < 0):
        r, c = np.argwhere(vals < 0)[0] + 1
        raise ValueError(f"row {r}, column {c}: count {int(vals[r - 1, c - 1])} is negative")
    return vals.astype(np.int64)


# ---------------------------------------------------------------------------
# grid evaluation


def _column_components(params: ModelParams, upper: np.ndarray) -> list[tuple[tuple[int, ...], list[np.ndarray]]]:
    """Shock columns as (axes, cdf arrays) pairs for the box ``upper``."""
    lam, W, d = params.lambdas, params.omega, params.d
    comps = []
    for j in range(d):
        axes = tuple(range(j, d))
        cols = [pois_cdf_array(int(upper[i]), W[i, j] * lam[i]) for i in axes]
        comps.append((axes, cols))
    return comps


def _convolve_components(shape: tuple[int, ...], components) -> np.ndarray:
    """Probability grid of a sum of independent comonotonic blocks.

    Each component touches a subset of axes; its staircase support is
    walked once and folded into the grid by shifted slice adds.  Exact
    within the box up to float rounding (all summands non-negative).
    """
    ndim = len(shape)
    grid = None
    for axes, cols in components:
        points = list(comono_support(cols))
        if grid is None:
            grid = np.zeros(shape)
            for z, mass in points:
                pos = [0] * ndim
                for a, ax in enumerate(axes):
                    pos[ax] = z[a]
                grid[tuple(pos)] += mass
            continue
        out = np.zeros(shape)
        for z, mass in points:
            src = [slice(None)] * ndim
            dst = [slice(None)] * ndim
            for a, ax in enumerate(axes):
                s = z[a]
                if s:
                    dst[ax] = slice(s, None)
                    src[ax] = slice(None, shape[ax] - s)
            out[tuple(dst)] += mass * grid[tuple(src)]
        grid = out
    return grid


def _check_box(upper, d: int, max_cells: int) -> np.ndarray:
    up = np.asarray(upper)
    if up.shape != (d,):
        raise ValueError(f"upper must have shape ({d},), got {up.shape}")
    if np.any(up != np.floor(np.asarray(up, dtype=float))) or np.any(up < 0):
        raise ValueError("upper corner must be non-negative integers")
    up = up.astype(np.int64)
    cells = int(np.prod(up + 1))
    if cells > max_cells:
        raise ValueError(
            f"requested box has {cells} cells, above the max_cells guard of {max_cells}; "
            "raise max_cells explicitly if the memory cost is intended"
        )
    return up


def joint_pmf_box(params: ModelParams, upper, *, max_cells: int = 20_000_000) -> np.ndarray:
    """Joint pmf on the whole box 0..upper as an array of shape upper + 1.

    This is the fast path behind `log_likelihood`: the d shock columns are
    convolved over the box with sparse staircase supports, so the cost is
    O(points * cells) rather than exponential in d.
    """
    p = _as_params(params)
    up = _check_box(upper, p.d, max_cells)
    return _convolve_components(tuple(up + 1), _column_components(p, up))


def joint_cdf_box(params: ModelParams, upper, *, max_cells: int = 20_000_000) -> np.ndarray:
    """Joint cdf on the box 0..upper (cumulative sums of `joint_pmf_box`)."""
    grid = joint_pmf_box(params, upper, max_cells=max_cells)
    for ax in range(grid.ndim):
        grid = np.cumsum(grid, axis=ax)
    return np.minimum(grid, 1.0)


# ---------------------------------------------------------------------------
# scalar evaluation

# Desk-scale guards for the scalar recursion; enumeration cost grows like
# the product over later columns of the capped counts.
MAX_DIM = 5
MAX_COUNT = 60


def _check_point(x, d: int, max_dim: int, max_count: int) -> np.ndarray | None:
    xs = np.asarray(x)
    if xs.shape != (d,):
        raise ValueError(f"x must have shape ({d},) to match the model, got {xs.shape}")
    if np.any(xs != np.floor(np.asarray(xs, dtype=float))):
        raise ValueError("x must be integer valued")
    if d > max_dim:
        raise ValueError(f"dimension {d} above the scalar-path guard of {max_dim}")
    xs = xs.astype(np.int64)
    if np.any(xs < 0):
        return None
    if int(xs.max(initial=0)) > max_count:
        raise ValueError(
            f"count {int(xs.max())} above the scalar-path guard of {max_count}; "
            "the enumeration cost grows with the product of the counts, "
            "pass a larger max_count to override"
        )
    return xs


def _column_supports(params: ModelParams, caps: np.ndarray) -> dict[int, list]:
    """Materialised staircase supports for columns 2..d (0-based 1..d-1)."""
    lam, W, d = params.lambdas, params.omega, params.d
    sup = {}
    for j in range(1, d):
        cols = [pois_cdf_array(int(caps[i]), W[i, j] * lam[i]) for i in range(j, d)]
        sup[j] = list(comono_support(cols))
    return sup


def joint_pmf(x, params: ModelParams, *, max_dim: int = MAX_DIM, max_count: int = MAX_COUNT) -> float:
    """P(X = x), exact up to float rounding.

    Enumerates the latent shocks of columns 2..d recursively; column 1 is
    pinned by the residuals x_i - sum of later shocks, and branches whose
    residual would go negative are pruned before recursing.
    """
    p = _as_params(params)
    xs = _check_point(x, p.d, max_dim, max_count)
    if xs is None:
        return 0.0
    d = p.d
    col1 = [pois_cdf_array(int(xs[i]), p.omega[i, 0] * p.lambdas[i]) for i in range(d)]
    if d == 1:
        b = int(xs[0])
        lo = float(col1[0][b - 1]) if b > 0 else 0.0
        return max(float(col1[0][b]) - lo, 0.0)
    supports = _column_supports(p, xs)
    budget = xs.copy()

    def leaf() -> float:
        hi = min(float(col1[i][budget[i]]) for i in range(d))
        lo = max((float(col1[i][budget[i] - 1]) if budget[i] > 0 else 0.0) for i in range(d))
        return max(hi - lo, 0.0)

    def rec(j: int) -> float:
        if j == 0:
            return leaf()
        total = 0.0
        for z, mass in supports[j]:
            ok = True
            for a, zi in enumerate(z):
                if zi > budget[j + a]:
                    ok = False
                    break
            if not ok:
                continue
            for a, zi in enumerate(z):
                budget[j + a] -= zi
            total += mass * rec(j - 1)
            for a, zi in enumerate(z):
                budget[j + a] += zi
        return total

    return rec(d - 1)


def joint_cdf(x, params: ModelParams, *, max_dim: int = MAX_DIM, max_count: int = MAX_COUNT) -> float:
    """P(X <= x componentwise); 0.0 if any coordinate is negative.

    Same latent enumeration as `joint_pmf`, but the pinned first column
    contributes min_i cdf(residual_i) instead of a pmf bracket.
    """
    p = _as_params(params)
    xs = _check_point(x, p.d, max_dim, max_count)
    if xs is None:
        return 0.0
    d = p.d
    col1 = [pois_cdf_array(int(xs[i]), p.omega[i, 0] * p.lambdas[i]) for i in range(d)]
    if d == 1:
        return float(col1[0][int(xs[0])])
    supports = _column_supports(p, xs)
    budget = xs.copy()

    def rec(j: int) -> float:
        if j == 0:
            return min(float(col1[i][budget[i]]) for i in range(d))
        total = 0.0
        for z, mass in supports[j]:
            ok = True
            for a, zi in enumerate(z):
                if zi > budget[j + a]:
                    ok = False
                    break
            if not ok:
                continue
            for a, zi in enumerate(z):
                budget[j + a] -= zi
            total += mass * rec(j - 1)
            for a, zi in enumerate(z):
                budget[j + a] += zi
        return total

    return min(rec(d - 1), 1.0)


def _pair_layout(p: ModelParams, i: int, j: int):
    """Shared layout for the (X_i, X_j) margin: column rate pairs + residual rate."""
    if i != int(i) or j != int(j):
        raise IndexError("component indices must be integers")
    i, j = int(i), int(j)
    if not (1 <= i < j <= p.d):
        raise IndexError(f"need 1 <= i < j <= d = {p.d}, got (i, j) = ({i}, {j})")
    lam_i, lam_j = float(p.lambdas[i - 1]), float(p.lambdas[j - 1])
    pair_rates = [
        (p.omega[i - 1, k] * lam_i, p.omega[j - 1, k] * lam_j) for k in range(i)
    ]
    res_rate = max(0.0, (1.0 - float(p.omega[j - 1, :i].sum())) * lam_j)
    return pair_rates, res_rate


def bivariate_pmf(i: int, j: int, xi: int, xj: int, params: ModelParams) -> float:
    """P(X_i = xi, X_j = xj) for components 1 <= i < j <= d.

    Only the first i shock columns couple the pair; the rest of X_j is an
    independent Poisson remainder.  Exact up to float rounding.
    """
    p = _as_params(params)
    pair_rates, res_rate = _pair_layout(p, i, j)
    if xi != int(xi) or xj != int(xj):
        raise ValueError("counts must be integers")
    xi, xj = int(xi), int(xj)
    if xi < 0 or xj < 0:
        return 0.0

    ci = [pois_cdf_array(xi, a) for a, _ in pair_rates]
    cj = [pois_cdf_array(xj, b) for _, b in pair_rates]
    g_res = np.array([pois_pmf(t, res_rate) for t in range(xj + 1)])
    supports = {
        k: list(comono_support([ci[k], cj[k]])) for k in range(1, i)
    }

    def column1(bi: int, bj: int) -> float:
        hi_i = float(ci[0][bi])
        lo_i = float(ci[0][bi - 1]) if bi > 0 else 0.0
        total = 0.0
        for t in range(bj + 1):
            lo_j = float(cj[0][t - 1]) if t > 0 else 0.0
            if lo_j >= hi_i:
                break
            c = min(hi_i, float(cj[0][t])) - max(lo_i, lo_j)
            if c > 0.0:
                total += c * float(g_res[bj - t])
        return total

    def rec(k: int, bi: int, bj: int) -> float:
        if k == 0:
            return column1(bi, bj)
        total = 0.0
        for (zi, zj), mass in supports[k]:
            if zi <= bi and zj <= bj:
                total += mass * rec(k - 1, bi - zi, bj - zj)
        return total

    return rec(i - 1, xi, xj)


def bivariate_pmf_box(i: int, j: int, params: ModelParams, upper, *, max_cells: int = 20_000_000) -> np.ndarray:
    """Pmf of (X_i, X_j) on the box 0..upper, shape upper + 1."""
    p = _as_params(params)
    pair_rates, res_rate = _pair_layout(p, i, j)
    up = _check_box(upper, 2, max_cells)
    comps = [
        ((0, 1), [pois_cdf_array(int(up[0]), a), pois_cdf_array(int(up[1]), b)])
        for a, b in pair_rates
    ]
    comps.append(((1,), [pois_cdf_array(int(up[1]), res_rate)]))
    return _convolve_components(tuple(up + 1), comps)


# ---------------------------------------------------------------------------
# sampling and likelihood


def sample(params: ModelParams, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n iid vectors; returns an int64 array of shape (n, d).

    One uniform per shock column per draw, inverted through each
    component's shock quantile, so dependence is exactly the comonotonic
    coupling the pmf machinery assumes.
    """
    p = _as_params(params)
    if n != int(n) or int(n) < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    d = p.d
    U = rng.random((n, d))
    X = np.zeros((n, d), dtype=np.int64)
    for i in range(d):
        for j in range(i + 1):
            rate = p.omega[i, j] * p.lambdas[i]
            if rate > 0.0:
                X[:, i] += pois_quantile_vec(U[:, j], rate)
    return X


def _sum_row_logliks(probs: np.ndarray) -> float:
    out = np.full(probs.shape, ZERO_PROB_LOGLIK)
    pos = probs > 0.0
    out[pos] = np.log(probs[pos])
    return float(out.sum())


def log_likelihood(data, params: ModelParams, *, max_cells: int = 4_000_000) -> float:
    """Sum of log joint pmf over the rows of ``data``.

    Rows with zero probability under ``params`` contribute the finite
    sentinel -1e18 each instead of -inf.  When the bounding box of the
    data is small enough the whole pmf grid is built once and the rows
    gathered from it; otherwise rows are evaluated individually.
    """
    p = _as_params(params)
    X = check_counts(data)
    if X.shape[1] != p.d:
        raise ValueError(f"data has {X.shape[1]} columns but the model has d = {p.d}")
    box = X.max(axis=0)
    if int(np.prod(box + 1)) <= max_cells:
        grid = joint_pmf_box(p, box, max_cells=max_cells)
        probs = grid[tuple(X.T)]
    else:
        rows, inverse = np.unique(X, axis=0, return_inverse=True)
        vals = np.array([joint_pmf(r, p, max_count=int(box.max())) for r in rows])
        probs = vals[inverse]
    return _sum_row_logliks(probs)


def pairwise_log_likelihood(data, i: int, j: int, params: ModelParams, *, max_cells: int = 4_000_000) -> float:
    """Sum of log bivariate pmf of columns (i, j) over the rows of ``data``."""
    p = _as_params(params)
    X = check_counts(data)
    if X.shape[1] != p.d:
        raise ValueError(f"data has {X.shape[1]} columns but the model has d = {p.d}")
    _pair_layout(p, i, j)
    sub = X[:, [i - 1, j - 1]]
    box = sub.max(axis=0)
    grid = bivariate_pmf_box(i, j, p, box, max_cells=max_cells)
    probs = grid[tuple(sub.T)]
    return _sum_row_logliks(probs)
