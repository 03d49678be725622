"""Fitting the model to count data.

Four estimators, in increasing order of how much of the joint structure
they use:

* ``mm``   moment matching: rates from column means, then one weight per
           (column, component) pair solved sequentially from the sample
           covariances, capping out-of-range targets at 0 or 1;
* ``sq``   sequential pairwise likelihood: rates from column means, each
           off-diagonal weight maximised one at a time against the
           bivariate likelihood of the pair it couples, earlier weights
           frozen, searched on [0, remaining row budget];
* ``2s``   two stage: rates frozen at column means, all weights refit
           jointly by full maximum likelihood from the ``sq`` solution;
* ``ml``   full maximum likelihood over rates and weights together.

The likelihood methods work on an unconstrained scale: eta = log lambda
and a multinomial-logit transform of each weight row with the diagonal
as reference category, so every candidate the optimiser visits is a
valid parameter point.  The optimiser is a plain Nelder-Mead simplex
with deterministic restarts; observations with zero model probability
contribute a large finite penalty, so the search can recover from
impossible configurations instead of dying on -inf.

`bootstrap` wraps any of the fits with row resampling and percentile
intervals, and `poisson_gof` is the marginal chi-square check used to
justify Poisson margins before fitting.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2

from .model import (
    ModelParams,
    ParameterError,
    check_counts,
    log_likelihood,
    pairwise_log_likelihood,
    validate,
)
from .moments import PairCovTarget, cor_matrix, max_cov, solve_weight
from .poisson import pois_pmf, pois_quantile

__all__ = [
    "EstimationError",
    "DiagnosticError",
    "FitResult",
    "UnconstrainedPoint",
    "to_unconstrained",
    "from_unconstrained",
    "nelder_mead",
    "NMResult",
    "fit",
    "fit_mm",
    "fit_sq",
    "fit_2s",
    "fit_ml",
    "parameter_names",
    "parameter_vector",
    "bootstrap",
    "BootstrapResult",
    "poisson_gof",
    "GofResult",
    "METHODS",
]

METHODS = ("mm", "sq", "2s", "ml")

# Logit clamp corresponding to a weight ratio of about 1e-16: beyond this
# the transform is numerically flat.
LOGIT_CLAMP = 36.7

# Boundary solutions from the sequential fit are nudged this far into the
# interior before seeding the simplex methods; starting exactly on the
# clamp leaves the optimiser on a zero-gradient plateau.
START_CLAMP = 6.0


class EstimationError(RuntimeError):
    """A fit cannot be carried out on this data (degenerate inputs etc.)."""


class DiagnosticError(RuntimeError):
    """A diagnostic is unreliable on this data and refuses to report."""


@dataclass(frozen=True)
class FitResult:
    """Outcome of one fit: validated parameters plus bookkeeping."""

    params: ModelParams
    method: str
    loglik: float | None
    converged: bool
    iterations: int
    capped_indices: tuple[tuple[int, int], ...] = ()


# ---------------------------------------------------------------------------
# unconstrained reparameterisation


@dataclass(frozen=True)
class UnconstrainedPoint:
    """Model parameters on the optimiser's scale.

    ``etas[i]`` is log lambda_{i+1}; ``alphas`` holds one array per row
    2..d, entry j being log(omega_ij / omega_ii).  The map back to the
    simplex is a softmax with the diagonal as reference, so the interior
    round-trips exactly and boundary weights are clamped (``clamped``
    records that information was lost).
    """

    etas: np.ndarray
    alphas: tuple[np.ndarray, ...]
    clamped: bool = False

    def flat_alphas(self) -> np.ndarray:
        return np.concatenate(self.alphas) if self.alphas else np.empty(0)


def _split_alphas(vec: np.ndarray, d: int) -> tuple[np.ndarray, ...]:
    out, pos = [], 0
    for i in range(1, d):
        out.append(np.asarray(vec[pos : pos + i], dtype=float))
        pos += i
    return tuple(out)


def to_unconstrained(params: ModelParams, *, clamp: float = LOGIT_CLAMP) -> UnconstrainedPoint:
    """Map validated parameters to the unconstrained scale.

    Weights equal to 0 (or reference weights equal to 0) have no finite
    logit; they are clamped to +-``clamp`` and flagged.
    """
    etas = np.log(params.lambdas.astype(float))
    alphas = []
    clamped = False
    with np.errstate(divide="ignore"):
        logw = np.log(params.omega)
    for i in range(1, params.d):
        ref = logw[i, i]
        a = logw[i, :i] - ref
        a = np.where(np.isnan(a), 0.0, a)
        if np.any(np.abs(a) > clamp) or np.any(np.isinf(a)):
            clamped = True
            a = np.clip(np.nan_to_num(a, posinf=clamp, neginf=-clamp), -clamp, clamp)
        alphas.append(a)
    return UnconstrainedPoint(etas=etas, alphas=tuple(alphas), clamped=clamped)


def from_unconstrained(point: UnconstrainedPoint) -> ModelParams:
    """Inverse of `to_unconstrained`; always lands on a valid parameter point."""
    etas = np.clip(np.asarray(point.etas, dtype=float), -700.0, 700.0)
    lam = np.exp(etas)
    d = lam.size
    if len(point.alphas) != d - 1:
        raise ValueError(f"expected {d - 1} alpha rows for d = {d}, got {len(point.alphas)}")
    W = np.zeros((d, d))
    W[0, 0] = 1.0
    for i in range(1, d):
        a = np.asarray(point.alphas[i - 1], dtype=float)
        if a.shape != (i,):
            raise ValueError(f"alpha row {i + 1} must have {i} entries, got shape {a.shape}")
        m = max(float(a.max(initial=0.0)), 0.0)
        e = np.exp(a - m)
        ref = math.exp(-m)
        s = e.sum() + ref
        W[i, :i] = e / s
        W[i, i] = ref / s
    lam.setflags(write=False)
    W.setflags(write=False)
    return ModelParams(lam, W)


# ---------------------------------------------------------------------------
# optimisers


@dataclass(frozen=True)
class NMResult:
    x: np.ndarray
    fun: float
    iterations: int
    nfev: int
    converged: bool
    restarts: int


def _nm_once(fn, x0, step, x_tol, f_tol, max_iter):
    n = x0.size
    simplex = np.tile(x0, (n + 1, 1))
    for k in range(n):
        simplex[k + 1, k] += step
    fvals = np.array([fn(v) for v in simplex])
    nfev = n + 1
    alpha, gamma, rho, sigma = 1.0, 2.0, 0.5, 0.5

    for it in range(max_iter):
        order = np.argsort(fvals, kind="stable")
        simplex, fvals = simplex[order], fvals[order]
        diam = np.abs(simplex[1:] - simplex[0]).max()
        fspread = fvals[-1] - fvals[0]
        if diam < x_tol and fspread <= f_tol * (abs(fvals[0]) + f_tol):
            return simplex[0], float(fvals[0]), it, nfev, True

        centroid = simplex[:-1].mean(axis=0)
        xr = centroid + alpha * (centroid - simplex[-1])
        fr = fn(xr)
        nfev += 1
        if fr < fvals[0]:
            xe = centroid + gamma * (xr - centroid)
            fe = fn(xe)
            nfev += 1
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
        elif fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
        else:
            if fr < fvals[-1]:
                xc = centroid + rho * (xr - centroid)
            else:
                xc = centroid + rho * (simplex[-1] - centroid)
            fc = fn(xc)
            nfev += 1
            if fc < min(fr, fvals[-1]):
                simplex[-1], fvals[-1] = xc, fc
            else:
                simplex[1:] = simplex[0] + sigma * (simplex[1:] - simplex[0])
                fvals[1:] = [fn(v) for v in simplex[1:]]
                nfev += n
    order = np.argsort(fvals, kind="stable")
    return simplex[order[0]], float(fvals[order[0]]), max_iter, nfev, False


def nelder_mead(
    fn,
    x0,
    *,
    step: float = 0.25,
    x_tol: float = 1e-6,
    f_tol: float = 1e-9,
    max_iter: int = 2000,
    max_restarts: int = 5,
) -> NMResult:
    """Minimise ``fn`` by the Nelder-Mead simplex.

    Convergence requires the simplex diameter below ``x_tol`` and the
    value spread relatively below ``f_tol``.  On failure the search is
    restarted from the best point perturbed by 10% per coordinate with
    alternating signs (an absolute 0.1 near zero), up to ``max_restarts``
    times; everything is deterministic.
    """
    x0 = np.asarray(x0, dtype=float).copy()
    if x0.ndim != 1 or x0.size == 0:
        raise ValueError("x0 must be a non-empty 1-d point")
    best_x, best_f, nit, nfev, conv = _nm_once(fn, x0, step, x_tol, f_tol, max_iter)
    restarts = 0
    while not conv and restarts < max_restarts:
        restarts += 1
        signs = np.where((np.arange(x0.size) + restarts) % 2 == 0, 1.0, -1.0)
        bump = np.where(np.abs(best_x) > 1e-8, 0.1 * np.abs(best_x), 0.1)
        xr = best_x + signs * bump
        x, f, it, ne, conv = _nm_once(fn, xr, step, x_tol, f_tol, max_iter)
        nit += it
        nfev += ne
        if f < best_f:
            best_x, best_f = x, f
    return NMResult(best_x, best_f, nit, nfev, conv, restarts)


def _minimize_scalar(fn, lo: float, hi: float, *, grid_points: int = 21, x_tol: float = 1e-6):
    """Grid seed plus golden-section refinement on [lo, hi]; returns (x, nfev)."""
    if hi <= lo:
        return lo, 0
    grid = np.linspace(lo, hi, grid_points)
    vals = [fn(g) for g in grid]
    nfev = grid_points
    b = int(np.argmin(vals))
    a = grid[max(b - 1, 0)]
    c = grid[min(b + 1, grid_points - 1)]
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = c - invphi * (c - a)
    x2 = a + invphi * (c - a)
    f1, f2 = fn(x1), fn(x2)
    nfev += 2
    while c - a > x_tol:
        if f1 < f2:
            c, x2, f2 = x2, x1, f1
            x1 = c - invphi * (c - a)
            f1 = fn(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (c - a)
            f2 = fn(x2)
        nfev += 1
    return 0.5 * (a + c), nfev


# ---------------------------------------------------------------------------
# the four estimators


def _check_fit_data(data) -> tuple[np.ndarray, np.ndarray]:
    X = check_counts(data)
    means = X.mean(axis=0)
    for j, m in enumerate(means, start=1):
        if m <= 0.0:
            raise EstimationError(f"column {j} is all zero; its rate is not identifiable")
    return X, means


def _fill_diag_renorm(W: np.ndarray) -> np.ndarray:
    """Set diagonals to the leftover row mass, floor at 0, renormalise."""
    d = W.shape[0]
    for i in range(d):
        W[i, i] = max(1.0 - W[i, :i].sum(), 0.0)
    sums = W.sum(axis=1)
    return W / sums[:, None]


def fit_mm(data) -> FitResult:
    """Method of moments.

    Rates are the column means.  Weights are solved column by column:
    at column k the remaining covariance target for the pair (k, j) is
    the sample covariance minus what earlier columns already supply, and
    `solve_weight` inverts it with capping at 0 and 1.  Capped entries
    are reported in ``capped_indices``; overshooting rows are fixed up by
    flooring the diagonal and renormalising.
    """
    X, means = _check_fit_data(data)
    n, d = X.shape
    if n < 2:
        raise EstimationError("need at least 2 observations for moment matching")
    W = np.zeros((d, d))
    W[0, 0] = 1.0
    capped: list[tuple[int, int]] = []
    if d > 1:
        var = X.var(axis=0, ddof=1)
        if np.any(var == 0.0):
            j = int(np.flatnonzero(var == 0.0)[0]) + 1
            raise EstimationError(f"column {j} has zero sample variance")
        S = np.cov(X.T, ddof=1)
        for k in range(d - 1):  # 0-based column index
            rw = max(1.0 - W[k, :k].sum(), 0.0)
            W[k, k] = rw
            for j in range(k + 1, d):
                already = sum(
                    max_cov(W[k, l] * means[k], W[j, l] * means[j]) for l in range(k)
                )
                target = PairCovTarget(
                    i=k + 1, j=j + 1, sample_cov=S[k, j] - already, residual_weight_i=rw
                )
                w = solve_weight(target, means[k], means[j])
                if w == 0.0 or w == 1.0:
                    capped.append((j + 1, k + 1))
                W[j, k] = w
    W = _fill_diag_renorm(W)
    params = validate(means, W)
    return FitResult(params, "mm", None, True, 0, tuple(capped))


def _eval_params(means: np.ndarray, W: np.ndarray) -> ModelParams:
    # Trial point during sequential search: diagonals rebalanced, no
    # full validation (rows are within budget by construction).
    Wn = _fill_diag_renorm(W.copy())
    lam = means.astype(float).copy()
    lam.setflags(write=False)
    Wn.setflags(write=False)
    return ModelParams(lam, Wn)


def fit_sq(data, *, grid_points: int = 21, x_tol: float = 1e-6) -> FitResult:
    """Sequential pairwise likelihood.

    Rates stay at the column means.  Scanning columns left to right and
    rows top to bottom, each weight omega_jk is chosen to maximise the
    bivariate likelihood of components (k, j), searching [0, remaining
    budget of row j] with a coarse grid followed by golden-section
    refinement.  Earlier weights are frozen as the scan proceeds.
    """
    X, means = _check_fit_data(data)
    d = X.shape[1]
    W = np.zeros((d, d))
    W[0, 0] = 1.0
    nfev = 0
    for k in range(d - 1):
        W[k, k] = max(1.0 - W[k, :k].sum(), 0.0)
        for j in range(k + 1, d):
            budget = 1.0 - W[j, :k].sum()
            if budget <= 0.0:
                W[j, k] = 0.0
                continue

            def neg_pll(w, _j=j, _k=k):
                Wt = W.copy()
                Wt[_j, _k] = w
                return -pairwise_log_likelihood(X, _k + 1, _j + 1, _eval_params(means, Wt))

            w_best, ne = _minimize_scalar(neg_pll, 0.0, budget, grid_points=grid_points, x_tol=x_tol)
            nfev += ne
            W[j, k] = w_best
    params = validate(means, _fill_diag_renorm(W))
    ll = log_likelihood(X, params)
    return FitResult(params, "sq", ll, True, nfev)


def fit_2s(data, start_omega=None, **nm_kwargs) -> FitResult:
    """Two-stage likelihood: rates frozen at column means, weights by ML.

    Starts from the sequential solution unless ``start_omega`` (a full
    weight matrix) is supplied.
    """
    X, means = _check_fit_data(data)
    d = X.shape[1]
    if d == 1:
        params = validate(means, [[1.0]])
        return FitResult(params, "2s", log_likelihood(X, params), True, 0)
    if start_omega is None:
        start_omega = fit_sq(X).params.omega
    start = validate(means, start_omega)
    pt = to_unconstrained(start, clamp=START_CLAMP)
    etas = np.log(means)

    def neg_ll(vec):
        point = UnconstrainedPoint(etas=etas, alphas=_split_alphas(vec, d))
        return -log_likelihood(X, from_unconstrained(point))

    res = nelder_mead(neg_ll, pt.flat_alphas(), **nm_kwargs)
    fitted = from_unconstrained(UnconstrainedPoint(etas=etas, alphas=_split_alphas(res.x, d)))
    params = validate(fitted.lambdas, fitted.omega)
    return FitResult(params, "2s", -res.fun, res.converged, res.iterations)


def fit_ml(data, start: ModelParams | None = None, **nm_kwargs) -> FitResult:
    """Full maximum likelihood over rates and weights jointly.

    Starts from the sequential solution (rates at column means) unless a
    starting point is supplied.
    """
    X, means = _check_fit_data(data)
    d = X.shape[1]
    if start is None:
        start = fit_sq(X).params if d > 1 else validate(means, [[1.0]])
    pt = to_unconstrained(start, clamp=START_CLAMP)
    x0 = np.concatenate([pt.etas, pt.flat_alphas()])

    def neg_ll(vec):
        point = UnconstrainedPoint(etas=vec[:d], alphas=_split_alphas(vec[d:], d))
        return -log_likelihood(X, from_unconstrained(point))

    res = nelder_mead(neg_ll, x0, **nm_kwargs)
    fitted = from_unconstrained(
        UnconstrainedPoint(etas=res.x[:d], alphas=_split_alphas(res.x[d:], d))
    )
    params = validate(fitted.lambdas, fitted.omega)
    return FitResult(params, "ml", -res.fun, res.converged, res.iterations)


_FITTERS = {"mm": fit_mm, "sq": fit_sq, "2s": fit_2s, "ml": fit_ml}


def fit(data, method: str, **kwargs) -> FitResult:
    """Dispatch to one of the estimators by tag: mm, sq, 2s or ml."""
    try:
        fitter = _FITTERS[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}, expected one of {METHODS}") from None
    return fitter(data, **kwargs)


# ---------------------------------------------------------------------------
# uncertainty and diagnostics


def parameter_names(d: int) -> list[str]:
    """Flat report order: rates, free weights, implied pair correlations."""
    names = [f"lambda_{i}" for i in range(1, d + 1)]
    names += [f"omega_{i}{j}" for i in range(2, d + 1) for j in range(1, i)]
    names += [f"rho_{i}{j}" for i in range(1, d + 1) for j in range(i + 1, d + 1)]
    return names


def parameter_vector(params: ModelParams) -> np.ndarray:
    """Values matching `parameter_names`, correlations included."""
    d = params.d
    vals = [float(v) for v in params.lambdas]
    vals += [float(params.omega[i, j]) for i in range(1, d) for j in range(i)]
    R = cor_matrix(params)
    vals += [float(R[i, j]) for i in range(d) for j in range(i + 1, d)]
    return np.array(vals)


@dataclass(frozen=True)
class BootstrapResult:
    """Row-resampling bootstrap summary for one estimator."""

    B: int
    names: list[str]
    se: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    replicates: np.ndarray
    n_dropped: int


def _bootstrap_replicate(X: np.ndarray, method: str, seed: np.random.SeedSequence):
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, X.shape[0], size=X.shape[0])
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fr = fit(X[idx], method)
    except (EstimationError, ParameterError):
        return None
    if not fr.converged:
        return None
    return parameter_vector(fr.params)


def bootstrap(data, method: str, B: int, seed: int, *, jobs: int = 1) -> BootstrapResult:
    """Nonparametric bootstrap of `fit` by resampling rows with replacement.

    Standard errors are the replicate standard deviations and intervals
    the 2.5/97.5 percentiles.  Replicates that fail or do not converge
    are dropped; more than 20% dropped raises `DiagnosticError`.  Results
    are deterministic in ``seed`` and independent of ``jobs``.
    """
    if method not in _FITTERS:
        raise ValueError(f"unknown method {method!r}, expected one of {METHODS}")
    if B < 2:
        raise ValueError("need at least 2 bootstrap replicates")
    X = check_counts(data)
    children = np.random.SeedSequence(seed).spawn(B)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_bootstrap_replicate, [X] * B, [method] * B, children))
    else:
        rows = [_bootstrap_replicate(X, method, s) for s in children]
    kept = [r for r in rows if r is not None]
    dropped = B - len(kept)
    if dropped > 0.2 * B:
        raise DiagnosticError(
            f"{dropped} of {B} bootstrap fits failed or did not converge; "
            "the resampling distribution is unreliable"
        )
    reps = np.vstack(kept)
    se = reps.std(axis=0, ddof=1)
    ci_lo, ci_hi = np.percentile(reps, [2.5, 97.5], axis=0)
    return BootstrapResult(
        B=B,
        names=parameter_names(X.shape[1]),
        se=se,
        ci_lo=ci_lo,
        ci_hi=ci_hi,
        replicates=reps,
        n_dropped=dropped,
    )


@dataclass(frozen=True)
class GofResult:
    statistic: float
    p_value: float
    dof: int
    n_bins: int
    rate: float


def poisson_gof(column, *, min_expected: float = 5.0) -> GofResult:
    """Chi-square goodness of fit of one count column against Poisson.

    The rate is the sample mean (one estimated parameter, so dof is
    bins - 2).  Cells are pooled left to right until each expected count
    reaches ``min_expected``; the last bin is open ended.  Needs at least
    20 observations and, after pooling, at least 3 bins, otherwise the
    test refuses (`ValueError` / `DiagnosticError`).
    """
    x = np.asarray(column)
    if x.ndim != 1:
        raise ValueError("gof expects a single column of counts")
    x = check_counts(x[:, None])[:, 0]
    n = x.size
    if n < 20:
        raise ValueError(f"need at least 20 observations for the chi-square test, got {n}")
    lam = float(x.mean())
    if lam == 0.0:
        raise DiagnosticError("column is identically zero; no Poisson test possible")

    kmax = max(int(x.max()), pois_quantile(1.0 - 1e-9, lam))
    expected = np.array([n * pois_pmf(k, lam) for k in range(kmax + 1)])

    # Greedy pooling: close a bin once its expected mass reaches the
    # threshold; whatever is left (including the open tail) joins the
    # last bin.
    edges: list[int] = []  # right edge (inclusive) of each closed bin
    acc = 0.0
    for k in range(kmax + 1):
        acc += expected[k]
        if acc >= min_expected:
            edges.append(k)
            acc = 0.0
    if not edges:
        raise DiagnosticError("expected counts never reach the pooling threshold")
    # Expected mass of the open tail bin beyond the last closed edge:
    tail = n - n * sum(pois_pmf(k, lam) for k in range(edges[-1] + 1))
    if tail < min_expected:
        edges = edges[:-1]  # merge the short tail into the previous bin
    if len(edges) < 2:
        raise DiagnosticError("fewer than 3 bins with adequate expected counts")

    lo = 0
    obs, exp = [], []
    for e in edges:
        obs.append(int(np.count_nonzero((x >= lo) & (x <= e))))
        exp.append(float(expected[lo : e + 1].sum()))
        lo = e + 1
    obs.append(int(np.count_nonzero(x >= lo)))
    exp.append(float(n - sum(exp)))

    n_bins = len(obs)
    if n_bins < 3:
        raise DiagnosticError("fewer than 3 bins with adequate expected counts")
    stat = float(sum((o - e) ** 2 / e for o, e in zip(obs, exp)))
    dof = n_bins - 2
    p = float(chi2.sf(stat, dof))
    return GofResult(stat, p, dof, n_bins, lam)
