"""Command line front end.

Five subcommands: ``simulate`` draws data from a parameter file,
``fit`` estimates parameters from a count CSV (optionally with a
bootstrap), ``scenario`` runs a named replication study, ``cor`` prints
the correlation structure a parameter file implies, and ``exceed``
reduces daily series to yearly exceedance counts.

Exit codes: 0 on success, 2 for input or validation problems, 3 when a
fit (or its bootstrap) ran but did not converge.  Count CSVs are plain
UTF-8 with LF line endings, a header row, and base-10 integers.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from .estimate import (
    DiagnosticError,
    EstimationError,
    METHODS,
    bootstrap,
    fit,
)
from .exceed import ExceedanceConfig, count_exceedances
from .model import ParameterError, check_counts, params_from_dict, sample
from .moments import cor_matrix
from .scenarios import SCENARIOS, run_study

__all__ = ["main", "entry", "build_parser"]

MISSING_TOKENS = {"", "na", "nan", "null", "."}


class InputError(Exception):
    """A file or argument the user supplied cannot be used."""


def _load_params(path: str):
    try:
        with open(path, encoding="utf-8") as f:
            obj = json.load(f)
    except OSError as e:
        raise InputError(f"cannot read parameter file {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise InputError(f"{path} is not valid JSON: {e}") from None
    return params_from_dict(obj)


def _read_table(path: str) -> tuple[list[str], list[list[str]]]:
    import csv

    try:
        with open(path, newline="", encoding="utf-8") as f:
            rows = [row for row in csv.reader(f) if row]
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror}") from None
    if not rows:
        raise InputError(f"{path} is empty")
    return rows[0], rows[1:]


def _read_counts_csv(path: str) -> np.ndarray:
    header, body = _read_table(path)

    def parse(rows, start):
        out = []
        for r, row in enumerate(rows, start=start):
            vals = []
            for c, tok in enumerate(row, start=1):
                try:
                    vals.append(int(tok))
                except ValueError:
                    raise InputError(
                        f"{path}: row {r}, column {c}: {tok!r} is not an integer count"
                    ) from None
            out.append(vals)
        return out

    # Header row is optional: if every first-line token parses as an
    # integer, the file has no header.
    try:
        first = [int(t) for t in header]
        data = [first] + parse(body, start=2)
    except ValueError:
        if not body:
            raise InputError(f"{path} has a header but no data rows") from None
        data = parse(body, start=2)
    widths = {len(r) for r in data}
    if len(widths) != 1:
        raise InputError(f"{path}: rows have inconsistent lengths {sorted(widths)}")
    try:
        return check_counts(np.array(data, dtype=np.int64))
    except ValueError as e:
        raise InputError(f"{path}: {e}") from None


def _write_counts_csv(path: str, X: np.ndarray, header: list[str]) -> None:
    lines = [",".join(header)]
    lines += [",".join(str(int(v)) for v in row) for row in X]
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def _write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _fmt_matrix(M: np.ndarray) -> str:
    return "\n".join("  ".join(f"{v:7.4f}" for v in row) for row in M)


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    params = _load_params(args.params)
    if args.n < 1:
        raise InputError("--n must be at least 1")
    X = sample(params, args.n, np.random.default_rng(args.seed))
    _write_counts_csv(args.out, X, [f"x{i}" for i in range(1, params.d + 1)])
    print(f"wrote {args.n} draws of d={params.d} to {args.out}")
    print("implied correlation matrix:")
    print(_fmt_matrix(cor_matrix(params)))
    return 0


def _fit_report(fr, boot) -> dict:
    rep = {
        "method": fr.method,
        "lambda_hat": [float(v) for v in fr.params.lambdas],
        "omega_hat": fr.params.omega_rows(),
        "cor_hat": [[float(v) for v in row] for row in cor_matrix(fr.params)],
        "loglik": fr.loglik,
        "converged": fr.converged,
        "boot": None,
    }
    if fr.capped_indices:
        rep["capped"] = [list(ij) for ij in fr.capped_indices]
    if boot is not None:
        rep["boot"] = {
            "B": boot.B,
            "n_dropped": boot.n_dropped,
            "se": dict(zip(boot.names, map(float, boot.se))),
            "ci_lo": dict(zip(boot.names, map(float, boot.ci_lo))),
            "ci_hi": dict(zip(boot.names, map(float, boot.ci_hi))),
        }
    return rep


def cmd_fit(args) -> int:
    X = _read_counts_csv(args.data)
    if args.method not in METHODS:
        raise InputError(f"unknown method {args.method!r}; choose from {', '.join(METHODS)}")
    t0 = time.perf_counter()
    fr = fit(X, args.method)
    boot = None
    if args.boot:
        boot = bootstrap(X, args.method, args.boot, args.seed, jobs=args.jobs)
    rep = _fit_report(fr, boot)
    rep["timing_ms"] = (time.perf_counter() - t0) * 1e3
    _write_json(args.out, rep)

    print(f"method {fr.method}, n = {X.shape[0]}, d = {X.shape[1]}")
    print("lambda_hat:", "  ".join(f"{v:.3f}" for v in fr.params.lambdas))
    for i, row in enumerate(fr.params.omega_rows(), start=1):
        print(f"omega row {i}:", "  ".join(f"{v:.3f}" for v in row))
    if fr.loglik is not None:
        print(f"log-likelihood: {fr.loglik:.3f}")
    if boot is not None:
        print(f"bootstrap B = {boot.B} ({boot.n_dropped} dropped):")
        for k, name in enumerate(boot.names):
            print(
                f"  {name:<10} se {boot.se[k]:.4f}   "
                f"ci [{boot.ci_lo[k]:.4f}, {boot.ci_hi[k]:.4f}]"
            )
    if not fr.converged:
        print("warning: fit did not converge", file=sys.stderr)
        return 3
    print(f"report written to {args.out}")
    return 0


def cmd_scenario(args) -> int:
    if args.id not in SCENARIOS:
        raise InputError(f"unknown scenario {args.id!r}; choose from {', '.join(sorted(SCENARIOS))}")
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    for m in methods:
        if m not in METHODS:
            raise InputError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    res = run_study(args.id, n=args.n, reps=args.reps, methods=methods, seed=args.seed, jobs=args.jobs)
    _write_json(args.out, res.summary())
    print(f"scenario {args.id}: n = {args.n}, reps = {args.reps}, methods = {', '.join(methods)}")
    width = max(len(n) for n in res.names)
    for m in methods:
        ok = res.converged[m]
        print(f"[{m}] converged {int(ok.sum())}/{args.reps}, fit time {res.method_seconds[m]:.1f}s")
        rows = res.estimates[m][ok]
        for p, name in enumerate(res.names):
            col = rows[:, p]
            print(
                f"  {name:<{width}}  truth {res.truth[p]:7.4f}   "
                f"mean {col.mean():7.4f}   sd {col.std(ddof=1):7.4f}"
            )
    print(f"summary written to {args.out}")
    return 0


def cmd_cor(args) -> int:
    params = _load_params(args.params)
    R = cor_matrix(params)
    print(_fmt_matrix(R))
    if args.out:
        _write_json(args.out, {"cor": [[float(v) for v in row] for row in R]})
    return 0


def _parse_year(tok: str, where: str) -> int:
    tok = tok.strip()
    try:
        return int(tok)
    except ValueError:
        pass
    if len(tok) >= 8 and tok[:4].isdigit() and "-" in tok:
        return int(tok[:4])
    raise InputError(f"{where}: cannot parse year from {tok!r}")


def cmd_exceed(args) -> int:
    header, body = _read_table(args.data)
    if not body:
        raise InputError(f"{args.data} has no data rows")
    norm = [h.strip() for h in header]
    try:
        iy = [h.lower() for h in norm].index(args.year_col.lower())
    except ValueError:
        raise InputError(f"{args.data}: no {args.year_col!r} column in header {norm}") from None
    if args.stations:
        stations = [s.strip() for s in args.stations.split(",") if s.strip()]
        if len(set(stations)) != len(stations):
            raise InputError("--stations has repeated columns")
        try:
            idx = [norm.index(s) for s in stations]
        except ValueError as e:
            raise InputError(f"{args.data}: {e}") from None
        if iy in idx:
            raise InputError(f"--stations must not include the year column {args.year_col!r}")
    else:
        stations = [h for c, h in enumerate(norm) if c != iy]
        idx = [c for c in range(len(norm)) if c != iy]
    if not stations:
        raise InputError(f"{args.data}: no station columns")

    thresholds = []
    for tok in args.thresholds.split(","):
        try:
            thresholds.append(float(tok))
        except ValueError:
            raise InputError(f"--thresholds: {tok!r} is not a number") from None
    if len(thresholds) != len(stations):
        raise InputError(
            f"{len(thresholds)} thresholds for {len(stations)} stations {stations}"
        )

    years = np.empty(len(body), dtype=np.int64)
    vals = np.empty((len(body), len(stations)))
    for r, row in enumerate(body):
        if len(row) != len(norm):
            raise InputError(f"{args.data}: row {r + 2} has {len(row)} fields, expected {len(norm)}")
        years[r] = _parse_year(row[iy], f"{args.data}: row {r + 2}")
        for c, col in enumerate(idx):
            tok = row[col].strip()
            if tok.lower() in MISSING_TOKENS:
                vals[r, c] = np.nan
            else:
                try:
                    vals[r, c] = float(tok)
                except ValueError:
                    raise InputError(
                        f"{args.data}: row {r + 2}, column {norm[col]!r}: "
                        f"{tok!r} is not a number"
                    ) from None

    cfg = ExceedanceConfig(
        thresholds=tuple(thresholds),
        decluster=not args.no_decluster,
        max_missing_frac=args.max_missing,
    )
    res = count_exceedances(years, vals, cfg)
    out = np.column_stack([np.array(res.years, dtype=np.int64), res.counts]) if res.years else np.zeros((0, 1 + len(stations)), dtype=np.int64)
    _write_counts_csv(args.out, out, ["year"] + stations)
    mode = "declustered events" if cfg.decluster else "exceedance days"
    print(f"{len(res.years)} years kept, {len(res.dropped_years)} dropped ({mode})")
    if res.dropped_years:
        print("dropped (missingness above {:.0%}):".format(cfg.max_missing_frac), *res.dropped_years)
    gaps = {y: f for y, f in res.missing_frac.items() if any(v > 0 for v in f)}
    if gaps:
        print("missing fraction per station (fully observed years omitted):")
        for y, f in sorted(gaps.items()):
            note = "  [dropped]" if y in res.dropped_years else ""
            print(f"  {y}: " + "  ".join(f"{s} {v:.3f}" for s, v in zip(stations, f)) + note)
    print(f"counts written to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# wiring


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="comopois",
        description="Multivariate Poisson counts coupled by comonotonic shocks.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw from a parameter file")
    p.add_argument("--params", required=True, help='JSON file {"lambda": [...], "omega": [[...], ...]}')
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output count CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="estimate parameters from a count CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--method", required=True, help="mm, sq, 2s or ml")
    p.add_argument("--boot", type=int, default=0, metavar="B", help="bootstrap replicates")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="output report JSON")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("scenario", help="run a named replication study")
    p.add_argument("--id", required=True, help="one of " + ", ".join(sorted(SCENARIOS)))
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--methods", default=",".join(METHODS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="output summary JSON")
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("cor", help="print the implied correlation matrix")
    p.add_argument("--params", required=True)
    p.add_argument("--out", default=None, help="optional JSON output")
    p.set_defaults(func=cmd_cor)

    p = sub.add_parser("exceed", help="yearly exceedance counts from daily series")
    p.add_argument("--data", required=True, help="daily CSV with a year column")
    p.add_argument("--thresholds", required=True, help="comma separated, one per station")
    p.add_argument("--no-decluster", action="store_true", help="count days instead of runs")
    p.add_argument("--year-col", default="year")
    p.add_argument("--stations", default=None, help="comma separated station columns")
    p.add_argument("--max-missing", type=float, default=0.10)
    p.add_argument("--out", required=True, help="output count CSV")
    p.set_defaults(func=cmd_exceed)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ParameterError, EstimationError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except DiagnosticError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
