"""Command-line front end: one subcommand per experiment.

Reports land in the output directory as JSON (sorted keys, two-space indent)
and CSV with a rendered figure next to each CSV; timestamps go to a separate
``*.meta.json`` so reports are byte-identical across reruns with the same
configuration and cache state.  Exit codes: 0 success, 1 numerical or
precondition failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from membranelab import extremes as ext
from membranelab import figures, reports
from membranelab import sampler as smp
from membranelab import scheme as sch
from membranelab import verify as vfy
from membranelab.greens import ColumnCache, FullSpaceGreen
from membranelab.lattice import GridSpec, save_field
from membranelab.solver import dense_operator_matrix, set_workers

LARGE_GRID_LIMIT = 48

USAGE_ERROR = 2
FAILURE = 1

_CONFIG_KEYS = {
    "out", "cache_dir", "seed", "tol", "samples", "threads",
    "keep_fields", "allow_large_grids", "no_figures",
}


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _parse_config_file(path: str) -> dict:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key=value, got {raw!r}", USAGE_ERROR)
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if key not in _CONFIG_KEYS:
            raise CliError(f"{path}:{lineno}: unknown key {key!r}", USAGE_ERROR)
        values[key] = value.strip()
    return values


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", default="out", help="output directory (default: ./out)")
    p.add_argument("--cache-dir", default=None,
                   help="Green-column cache directory (default: $CACHE_DIR or ./cache)")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--threads", type=int, default=None, help="cap worker threads")
    p.add_argument("--config", default=None, help="key=value file merged at lower precedence")
    p.add_argument("--allow-large-grids", action="store_true",
                   help=f"permit n > {LARGE_GRID_LIMIT}")
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")


def _grid_arg(p, repeat: bool) -> None:
    if repeat:
        p.add_argument("--n", type=int, action="append", required=True,
                       help="grid side count (repeatable)")
    else:
        p.add_argument("--n", type=int, required=True, help="grid side count")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="membranelab",
        description="Numerical experiments on the 4D lattice biharmonic field.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fullspace", help="full-space Green function vs its expansion")
    _add_common(p)
    p.add_argument("--radius", type=int, action="append", default=None,
                   help="evaluation radius along the first axis (repeatable; default 8 16 32)")

    p = sub.add_parser("green", help="solve one box Green column")
    _add_common(p)
    _grid_arg(p, repeat=False)
    p.add_argument("--source", default=None, help="source site i,j,k,l (default: center)")
    p.add_argument("--check-dense", action="store_true",
                   help="compare against a dense factorization (small grids)")

    p = sub.add_parser("scheme-rate", help="convergence rate on a manufactured solution")
    _add_common(p)
    _grid_arg(p, repeat=True)
    p.add_argument("--sol", default="sin2", choices=sorted(sch.SOLUTIONS))

    p = sub.add_parser("sample", help="draw field samples and summarize them")
    _add_common(p)
    _grid_arg(p, repeat=False)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--keep-fields", action="store_true", help="dump full fields")

    p = sub.add_parser("extremes", help="extreme-value statistics across grid sizes")
    _add_common(p)
    _grid_arg(p, repeat=True)
    p.add_argument("--samples", type=int, default=200)

    p = sub.add_parser("verify-b0", help="variance bound constants")
    _add_common(p)
    _grid_arg(p, repeat=False)

    p = sub.add_parser("verify-b1", help="covariance-log uniformity constant")
    _add_common(p)
    _grid_arg(p, repeat=False)

    p = sub.add_parser("near-diagonal", help="near-diagonal resolution limit")
    _add_common(p)
    _grid_arg(p, repeat=True)
    p.add_argument("--x", default="0.5,0.5,0.5,0.5", help="base point (continuous coords)")
    p.add_argument("--u", default="0,0,0,0", help="first lattice offset")
    p.add_argument("--v", default="0,0,0,0", help="second lattice offset")

    p = sub.add_parser("off-diagonal", help="off-diagonal resolution limit")
    _add_common(p)
    _grid_arg(p, repeat=True)
    p.add_argument("--x", default="0.25,0.25,0.25,0.25")
    p.add_argument("--y", default="0.75,0.75,0.75,0.75")

    p = sub.add_parser("inequalities", help="discrete inequality constants")
    _add_common(p)
    _grid_arg(p, repeat=True)
    p.add_argument("--trials", type=int, default=8)

    p = sub.add_parser("closeness", help="discrete vs extrapolated regularized Green values")
    _add_common(p)
    _grid_arg(p, repeat=True)
    p.add_argument("--x", default="0.5,0.5,0.5,0.5")
    p.add_argument("--y", default="0.5,0.5,0.5,0.5")
    p.add_argument("--r", type=float, required=True, help="cutoff scale")
    p.add_argument("--K", type=float, default=2.0)
    p.add_argument("--relax-scale-ratio", action="store_true",
                   help="diagnostic: waive the r >= 192 h requirement")

    return parser


def _vec(text: str, kind=float):
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != 4:
        raise CliError(f"expected 4 components, got {text!r}", USAGE_ERROR)
    return tuple(kind(p) for p in parts)


def _check_grids(ns, allow_large: bool) -> list[GridSpec]:
    grids = []
    for n in ns:
        if n > LARGE_GRID_LIMIT and not allow_large:
            raise CliError(
                f"n = {n} exceeds {LARGE_GRID_LIMIT}; pass --allow-large-grids to proceed",
                USAGE_ERROR)
        grids.append(GridSpec(n))
    return grids


def _setup(args) -> tuple[Path, ColumnCache]:
    if args.threads is not None:
        set_workers(args.threads)
    out = Path(args.out).resolve()
    out.mkdir(parents=True, exist_ok=True)
    cache_dir = args.cache_dir or os.environ.get("CACHE_DIR") or "cache"
    cache = ColumnCache(Path(cache_dir).resolve())
    return out, cache


def _figures_enabled(args) -> bool:
    return not args.no_figures


# ---------------------------------------------------------------------------
# subcommand implementations
# ---------------------------------------------------------------------------


def cmd_fullspace(args) -> int:
    out, cache = _setup(args)
    radii = args.radius or [8, 16, 32]
    fs = FullSpaceGreen(cache_dir=cache.root)
    residuals = [abs(fs.quadrature((r, 0, 0, 0)) - fs.asymptotic((r, 0, 0, 0))) for r in radii]
    ratios = [residuals[i] / residuals[i + 1] for i in range(len(residuals) - 1)]
    doc = reports.fullspace_doc(radii, residuals, ratios, fs.normalization,
                                fs.crossover)
    reports.write_json(out / "fullspace.json", doc)
    reports.write_csv(out / "fullspace.csv", reports.fullspace_rows(radii, residuals))
    if _figures_enabled(args):
        figures.residual_decay_figure(radii, residuals, "full-space expansion residual",
                                      out / "fullspace.png")
    reports.write_run_metadata(out / "fullspace.meta.json", command="fullspace")
    print(f"fullspace: residuals at {radii} -> ratios {[f'{r:.1f}' for r in ratios]} "
          f"(c0 = {fs.normalization.c0:.9f})")
    return 0


def cmd_green(args) -> int:
    out, cache = _setup(args)
    (grid,) = _check_grids([args.n], args.allow_large_grids)
    source = _vec(args.source, int) if args.source else grid.center
    col = cache.get(grid, source, tol=args.tol)
    if not col.converged:
        print(f"green: solver failed to converge (residual {col.residual:.3e})",
              file=sys.stderr)
        return FAILURE
    save_field(col.values, out / f"green_n{grid.n}_{'_'.join(map(str, col.source))}.mbf")
    doc = {
        "grid_n": grid.n, "source": list(col.source), "tolerance": col.tolerance,
        "iterations": col.iterations, "residual": col.residual,
        "value_at_source": col.at(col.source),
    }
    line = (f"green: n={grid.n} source={col.source} iters={col.iterations} "
            f"residual={col.residual:.2e}")
    if args.check_dense:
        mat = dense_operator_matrix(grid.n)
        rhs = np.zeros(grid.site_count)
        rhs[grid.linear_index(col.source)] = 1.0
        dense = np.linalg.solve(mat, rhs).reshape(grid.shape)
        err = float(np.abs(dense - col.values.values).max() / np.abs(dense).max())
        doc["dense_oracle_max_rel_error"] = err
        line += f" dense-oracle-rel-err={err:.2e}"
    reports.write_json(out / f"green_n{grid.n}.json", doc)
    reports.write_run_metadata(out / f"green_n{grid.n}.meta.json", command="green")
    print(line)
    return 0


def cmd_scheme_rate(args) -> int:
    out, _ = _setup(args)
    grids = _check_grids(args.n, args.allow_large_grids)
    sol = sch.SOLUTIONS[args.sol]()
    report = sch.measure_rate(sol, [g.n for g in grids], tol=args.tol)
    reports.write_json(out / f"scheme_{args.sol}.json", reports.scheme_doc(report, args.tol))
    reports.write_csv(out / f"scheme_{args.sol}.csv", reports.scheme_rows(report))
    if _figures_enabled(args):
        figures.convergence_figure(report.entries, report.rate,
                                   f"scheme convergence: {args.sol}",
                                   out / f"scheme_{args.sol}.png")
    reports.write_run_metadata(out / f"scheme_{args.sol}.meta.json", command="scheme-rate")
    rate = "undefined" if report.rate is None else f"{report.rate:.3f}"
    print(f"scheme-rate: {args.sol} over n={[g.n for g in grids]} -> rate {rate}")
    return 0


def cmd_sample(args) -> int:
    out, _ = _setup(args)
    (grid,) = _check_grids([args.n], args.allow_large_grids)
    batch = smp.sample_batch(grid, args.seed, args.samples, tol=args.tol,
                             keep_fields=args.keep_fields)
    reports.write_json(out / f"sample_n{grid.n}.json", reports.sample_batch_doc(batch))
    reports.write_csv(out / f"sample_n{grid.n}.csv", reports.sample_batch_rows(batch))
    if args.keep_fields:
        fdir = out / f"sample_n{grid.n}_fields"
        fdir.mkdir(parents=True, exist_ok=True)
        for i, f in enumerate(batch.fields):
            save_field(f, fdir / f"sample_{i:05d}.mbf")
    if _figures_enabled(args):
        figures.histogram_figure(
            {f"n={grid.n}": [s.maximum for s in batch.summaries]},
            "sample maxima", out / f"sample_n{grid.n}.png")
    reports.write_run_metadata(out / f"sample_n{grid.n}.meta.json", command="sample")
    print(f"sample: n={grid.n} count={batch.count} "
          f"mean-max={np.mean([s.maximum for s in batch.summaries]):.4f}")
    return 0


def cmd_extremes(args) -> int:
    out, _ = _setup(args)
    grids = _check_grids(args.n, args.allow_large_grids)
    batches = [smp.sample_batch(g, args.seed, args.samples, tol=args.tol) for g in grids]
    report = ext.extremes_report(batches)
    reports.write_json(out / "extremes.json", reports.extremes_doc(report, args.seed, args.tol))
    series = {}
    for b in batches:
        rec = ext.recentred_max(b)
        series[f"n={b.grid.n}"] = rec
        counts, edges = ext.histogram(rec)
        reports.write_csv(out / f"extremes_hist_n{b.grid.n}.csv",
                          reports.histogram_rows(counts, edges))
    if _figures_enabled(args):
        figures.histogram_figure(series, "recentred maxima", out / "extremes_hist.png")
    reports.write_run_metadata(out / "extremes.meta.json", command="extremes")
    ks = ", ".join(f"KS({a},{b})={d:.3f}" for a, b, d in report.ks_consecutive)
    print(f"extremes: n={[g.n for g in grids]} samples={args.samples} {ks}")
    return 0


def cmd_verify_b0(args) -> int:
    out, cache = _setup(args)
    (grid,) = _check_grids([args.n], args.allow_large_grids)
    res = vfy.check_variance_bounds(grid, seed=args.seed, tol=args.tol, cache=cache)
    doc = reports.variance_bounds_doc(res, args.seed, args.tol,
                                      cache.content_hashes(grid.n))
    reports.write_json(out / f"variance_bounds_n{grid.n}.json", doc)
    reports.write_run_metadata(out / f"variance_bounds_n{grid.n}.meta.json", command="verify-b0")
    print(f"verify-b0: n={grid.n} constant={res.constant:.4f}")
    return 0


def cmd_verify_b1(args) -> int:
    out, cache = _setup(args)
    (grid,) = _check_grids([args.n], args.allow_large_grids)
    res = vfy.check_covariance_log(grid, seed=args.seed, tol=args.tol, cache=cache)
    doc = reports.covariance_log_doc(res, args.seed, args.tol, cache.content_hashes(grid.n))
    reports.write_json(out / f"covariance_log_n{grid.n}.json", doc)
    reports.write_csv(out / f"covariance_log_n{grid.n}.csv", reports.covariance_log_rows(res))
    if _figures_enabled(args):
        figures.pair_deviation_figure(res.details, res.deviation,
                                      f"covariance-log deviations, n={grid.n}",
                                      out / f"covariance_log_n{grid.n}.png")
    reports.write_run_metadata(out / f"covariance_log_n{grid.n}.meta.json", command="verify-b1")
    print(f"verify-b1: n={grid.n} deviation={res.deviation:.4f} pairs={res.pair_count}")
    return 0


def cmd_near_diagonal(args) -> int:
    out, cache = _setup(args)
    grids = _check_grids(args.n, args.allow_large_grids)
    res = vfy.near_diagonal_limit(_vec(args.x), [g.n for g in grids],
                                  u=_vec(args.u, int), v=_vec(args.v, int),
                                  tol=args.tol, cache=cache)
    reports.write_json(out / "near_diagonal.json", reports.regular_part_doc(res, args.tol))
    if _figures_enabled(args):
        figures.stability_figure(res.resolutions, res.values,
                                 "regular part estimate", "near-diagonal limit",
                                 out / "near_diagonal.png")
    reports.write_run_metadata(out / "near_diagonal.meta.json", command="near-diagonal")
    print(f"near-diagonal: x={args.x} values={[f'{v:.4f}' for v in res.values]} "
          f"extrapolated={res.extrapolated:.4f}")
    return 0


def cmd_off_diagonal(args) -> int:
    out, cache = _setup(args)
    grids = _check_grids(args.n, args.allow_large_grids)
    res = vfy.off_diagonal_limit(_vec(args.x), _vec(args.y), [g.n for g in grids],
                                 tol=args.tol, cache=cache)
    reports.write_json(out / "off_diagonal.json", reports.off_diagonal_doc(res, args.tol))
    if _figures_enabled(args):
        figures.stability_figure(res.resolutions, res.values,
                                 "scaled covariance", "off-diagonal limit",
                                 out / "off_diagonal.png")
    reports.write_run_metadata(out / "off_diagonal.meta.json", command="off-diagonal")
    print(f"off-diagonal: values={[f'{v:.4f}' for v in res.values]} "
          f"extrapolated={res.extrapolated:.4f}")
    return 0


def cmd_inequalities(args) -> int:
    out, cache = _setup(args)
    grids = _check_grids(args.n, args.allow_large_grids)
    ps = [vfy.check_poincare_sobolev(g, trial_count=args.trials, seed=args.seed,
                                     tol=args.tol, cache=cache) for g in grids]
    pc = [vfy.check_poincare(g, trial_count=2 * args.trials, seed=args.seed) for g in grids]
    doc = reports.inequalities_doc(ps, pc, args.seed, args.trials)
    reports.write_json(out / "inequalities.json", doc)
    if _figures_enabled(args):
        figures.stability_figure([r.grid_n for r in ps], [r.constant for r in ps],
                                 "pointwise-energy constant", "discrete inequality constants",
                                 out / "inequalities.png")
    reports.write_run_metadata(out / "inequalities.meta.json", command="inequalities")
    summary = ", ".join(f"n={r.grid_n}: {r.constant:.4f}" for r in ps)
    print(f"inequalities: {summary}")
    return 0


def cmd_closeness(args) -> int:
    out, cache = _setup(args)
    grids = _check_grids(args.n, args.allow_large_grids)
    res = vfy.check_closeness(_vec(args.x), _vec(args.y), [g.n for g in grids],
                              r=args.r, K=args.K, tol=args.tol, cache=cache,
                              enforce_scale_ratio=not args.relax_scale_ratio)
    doc = {
        "x": list(res.x), "y": list(res.y), "r": res.r,
        "resolutions": res.resolutions,
        "regular_parts": res.regular_parts,
        "monitored": res.monitored,
        "scale_ratio_enforced": res.scale_ratio_enforced,
    }
    reports.write_json(out / "closeness.json", doc)
    reports.write_run_metadata(out / "closeness.meta.json", command="closeness")
    print(f"closeness: monitored={res.monitored:.5f} over n={res.resolutions}")
    return 0


_COMMANDS = {
    "fullspace": cmd_fullspace,
    "green": cmd_green,
    "scheme-rate": cmd_scheme_rate,
    "sample": cmd_sample,
    "extremes": cmd_extremes,
    "verify-b0": cmd_verify_b0,
    "verify-b1": cmd_verify_b1,
    "near-diagonal": cmd_near_diagonal,
    "off-diagonal": cmd_off_diagonal,
    "inequalities": cmd_inequalities,
    "closeness": cmd_closeness,
}


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        # config file merges at lower precedence: a key applies only when the
        # corresponding flag was not given explicitly
        args = parser.parse_args(argv)
        if args.config:
            for key, value in _parse_config_file(args.config).items():
                if key in ("keep_fields", "allow_large_grids", "no_figures"):
                    value = value.lower() in ("1", "true", "yes")
                elif key in ("seed", "samples", "threads"):
                    value = int(value)
                elif key == "tol":
                    value = float(value)
                flag = "--" + key.replace("_", "-")
                explicit = any(tok == flag or tok.startswith(flag + "=") for tok in argv)
                if not explicit and hasattr(args, key):
                    setattr(args, key, value)
        return _COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except vfy.PreconditionError as exc:
        print(f"precondition: {exc}", file=sys.stderr)
        return FAILURE
    except (RuntimeError, ValueError) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return FAILURE


if __name__ == "__main__":
    sys.exit(main())
