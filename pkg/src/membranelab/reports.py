"""Report documents and deterministic writers.

Reports are JSON (UTF-8, two-space indent, sorted keys) and CSV (header row,
LF line endings).  Identical inputs and cache state produce byte-identical
files; anything time-dependent (timestamps, durations) goes into a separate
metadata file that is never part of a determinism comparison.
"""

from __future__ import annotations

import csv
import datetime
import io
import json
from pathlib import Path

from membranelab.extremes import ExtremesReport
from membranelab.sampler import SampleBatch, batch_csv_rows
from membranelab.scheme import SchemeReport
from membranelab.verify import (
    AssumptionReport,
    CovarianceLogResult,
    OffDiagonalResult,
    PoincareResult,
    PoincareSobolevResult,
    RegularPartResult,
    VarianceBoundResult,
)


def json_bytes(doc) -> bytes:
    return (json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n").encode("utf-8")


def write_json(path, doc) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(json_bytes(doc))
    return path


def csv_bytes(rows) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in rows:
        writer.writerow(row)
    return buf.getvalue().encode("utf-8")


def write_csv(path, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(csv_bytes(rows))
    return path


def write_run_metadata(path, **extra) -> Path:
    """Timestamps and other non-reproducible run facts, kept out of reports."""
    doc = {"written_at": datetime.datetime.now(datetime.timezone.utc).isoformat(), **extra}
    return write_json(path, doc)


# ---------------------------------------------------------------------------
# document builders
# ---------------------------------------------------------------------------


def extremes_doc(report: ExtremesReport, seed: int, tol: float) -> dict:
    return {
        "seed": seed,
        "tolerance": tol,
        "levels": [
            {
                "n": lv.n,
                "count": lv.count,
                "mean_recentred_max": lv.mean,
                "variance_recentred_max": lv.variance,
                "quantiles": {f"{q:g}": v for q, v in lv.quantiles.items()},
                "z_mean": lv.z_mean,
                "z_positive_fraction": lv.z_positive_fraction,
                "tail_slope": lv.tail_slope,
            }
            for lv in report.levels
        ],
        "ks_consecutive": [
            {"n_coarse": a, "n_fine": b, "distance": d} for a, b, d in report.ks_consecutive
        ],
    }


def histogram_rows(counts, edges) -> list[list]:
    rows = [["bin_left", "bin_right", "count"]]
    for i, c in enumerate(counts):
        rows.append([repr(float(edges[i])), repr(float(edges[i + 1])), int(c)])
    return rows


def scheme_doc(report: SchemeReport, tol: float) -> dict:
    return {
        "solution": report.solution,
        "regularity_supremum": report.s_max,
        "tolerance": tol,
        "entries": [
            {"h": h, "w22_error": w, "linf_error": li} for h, w, li in report.entries
        ],
        "w22_rate": report.rate,
    }


def scheme_rows(report: SchemeReport) -> list[list]:
    rows = [["h", "w22_error", "linf_error"]]
    for h, w, li in report.entries:
        rows.append([repr(h), repr(w), repr(li)])
    return rows


def covariance_log_doc(result: CovarianceLogResult, seed: int, tol: float,
                       cache_hashes: dict | None = None) -> dict:
    return {
        "grid_n": result.grid_n,
        "seed": seed,
        "tolerance": tol,
        "deviation_max": result.deviation,
        "worst_pair": [list(result.worst_pair[0]), list(result.worst_pair[1])],
        "pair_count": result.pair_count,
        "column_sources": result.column_sources,
        "cache_hashes": cache_hashes or {},
    }


def covariance_log_rows(result: CovarianceLogResult) -> list[list]:
    rows = [["x1", "x2", "x3", "x4", "y1", "y2", "y3", "y4",
             "distance", "max_depth", "green", "deviation"]]
    for d in result.details:
        rows.append([*d.x, *d.y, repr(d.distance), d.max_depth, repr(d.green), repr(d.deviation)])
    return rows


def variance_bounds_doc(result: VarianceBoundResult, seed: int, tol: float,
                        cache_hashes: dict | None = None) -> dict:
    return {
        "grid_n": result.grid_n,
        "seed": seed,
        "tolerance": tol,
        "constant": result.constant,
        "from_mesh_bound": result.from_mesh_bound,
        "from_depth_bound": result.from_depth_bound,
        "from_increment": result.from_increment,
        "site_count": result.site_count,
        "cache_hashes": cache_hashes or {},
    }


def regular_part_doc(result: RegularPartResult, tol: float) -> dict:
    return {
        "x": list(result.x),
        "offset_u": list(result.offsets[0]),
        "offset_v": list(result.offsets[1]),
        "resolutions": result.resolutions,
        "values": result.values,
        "differences": result.differences,
        "extrapolated": result.extrapolated,
        "extrapolation_residual": result.extrapolation_residual,
        "depth_threshold_satisfied": result.depth_threshold_satisfied,
        "depth_threshold_margin": result.depth_threshold_margin,
        "tolerance": tol,
    }


def off_diagonal_doc(result: OffDiagonalResult, tol: float) -> dict:
    return {
        "x": list(result.x),
        "y": list(result.y),
        "resolutions": result.resolutions,
        "values": result.values,
        "differences": result.differences,
        "extrapolated": result.extrapolated,
        "extrapolation_residual": result.extrapolation_residual,
        "tolerance": tol,
    }


def inequalities_doc(ps_results: list[PoincareSobolevResult],
                     poincare_results: list[PoincareResult],
                     seed: int, trial_count: int) -> dict:
    return {
        "seed": seed,
        "trial_count": trial_count,
        "pointwise_energy": [
            {"n": r.grid_n, "constant": r.constant, "worst_trial": r.worst_trial}
            for r in ps_results
        ],
        "poincare": [
            {"n": r.grid_n, "ratio": r.ratio, "bound": r.bound} for r in poincare_results
        ],
    }


def assumption_report_doc(report: AssumptionReport,
                          cache_hashes: dict | None = None) -> dict:
    return {
        "grids": report.grids,
        "seed": report.seed,
        "tolerance": report.tolerance,
        "pair_sampling_plan": report.plan,
        "variance_bound_constants": {
            str(r.grid_n): r.constant for r in report.variance_bounds
        },
        "covariance_log_deviations": {
            str(r.grid_n): r.deviation for r in report.covariance_log
        },
        "near_diagonal": regular_part_doc(report.near_diagonal, report.tolerance),
        "off_diagonal": off_diagonal_doc(report.off_diagonal, report.tolerance),
        "cache_hashes": cache_hashes or {},
    }


def sample_batch_doc(batch: SampleBatch) -> dict:
    return {
        "grid_n": batch.grid.n,
        "seed": batch.seed,
        "count": batch.count,
        "tolerance": batch.tolerance,
        "max_mean": sum(s.maximum for s in batch.summaries) / batch.count,
        "z_positive_fraction": sum(1 for s in batch.summaries if s.z_statistic > 0) / batch.count,
    }


def sample_batch_rows(batch: SampleBatch) -> list[list]:
    return batch_csv_rows(batch)


def fullspace_doc(radii, residuals, ratios, normalization, crossover) -> dict:
    return {
        "crossover": crossover,
        "normalization_c0": normalization.c0,
        "normalization_fit_residual": normalization.fit_residual,
        "shell_size": normalization.shell_size,
        "radii": list(radii),
        "residuals": list(residuals),
        "octave_ratios": list(ratios),
    }


def fullspace_rows(radii, residuals) -> list[list]:
    rows = [["radius", "residual"]]
    for r, res in zip(radii, residuals):
        rows.append([r, repr(res)])
    return rows
