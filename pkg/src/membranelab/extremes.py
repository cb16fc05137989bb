"""Extreme-value statistics of the sampled field.

Covers the deterministic centering of the maximum, the recentred maxima of a
batch, the derivative-martingale-type statistic attached to each sample, a
right-tail slope diagnostic, and cross-resolution distributional-stability
measures (two-sample Kolmogorov-Smirnov distances).  The exact limit law is
out of reach at desk scale, so everything here is property-based: stability
in n, positivity frequencies, and slope diagnostics rather than a comparison
against a closed-form law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from membranelab.lattice import Field
from membranelab.sampler import SampleBatch, _z_statistic_values

QUANTILES = (0.1, 0.25, 0.5, 0.75, 0.9)

#: Reference decay rate of the limit law's upper tail (diagnostic only).
TAIL_RATE = 8.0 * math.pi


def centering(n: int) -> float:
    """Deterministic centering of the maximum: log(n)/pi - 3 log(log n)/(16 pi)."""
    if n < 3:
        raise ValueError("centering needs n >= 3 so that log log n is positive")
    return math.log(n) / math.pi - 3.0 / (16.0 * math.pi) * math.log(math.log(n))


def z_statistic(field: Field) -> float:
    """Exact sum over all box sites, compensated summation."""
    if field.grid.n < 2:
        raise ValueError("z statistic needs a grid with n >= 2")
    return _z_statistic_values(field.values, field.grid.n)


def recentred_max(batch: SampleBatch) -> list[float]:
    """M - m_n per sample, in batch order."""
    if not batch.summaries:
        raise ValueError("batch is empty")
    m = centering(batch.grid.n)
    return [s.maximum - m for s in batch.summaries]


def tail_slope(values, min_count: int = 100) -> float:
    """Least-squares slope of the log empirical CCDF over the upper quartile.

    A diagnostic for the exponential decay rate of the right tail; polynomial
    prefactors contaminate small samples, so this is never asserted tightly.
    """
    values = np.sort(np.asarray(values, dtype=float))
    m = len(values)
    if m < min_count:
        raise ValueError(f"tail slope needs at least {min_count} values, got {m}")
    start = int(math.floor(0.75 * m))
    xs = values[start:]
    ccdf = (m - np.arange(start, m) - 1) / m      # strictly-greater fraction
    keep = ccdf > 0
    xs, ccdf = xs[keep], ccdf[keep]
    if len(xs) < 5 or np.ptp(xs) == 0:
        raise ValueError("degenerate upper tail (not enough distinct values)")
    slope, _ = np.polyfit(xs, np.log(ccdf), 1)
    return float(slope)


def ks_distance(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic (no asymptotic p-value)."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if len(a) == 0 or len(b) == 0:
        raise ValueError("KS distance needs nonempty samples")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / len(a)
    fb = np.searchsorted(b, grid, side="right") / len(b)
    return float(np.max(np.abs(fa - fb)))


@dataclass
class LevelStats:
    n: int
    count: int
    mean: float
    variance: float
    quantiles: dict[float, float]
    z_mean: float
    z_positive_fraction: float
    tail_slope: float | None


@dataclass
class ExtremesReport:
    levels: list[LevelStats]
    ks_consecutive: list[tuple[int, int, float]]    # (n_a, n_b, distance)


def level_stats(batch: SampleBatch) -> LevelStats:
    rec = np.asarray(recentred_max(batch))
    zs = np.asarray([s.z_statistic for s in batch.summaries])
    slope = None
    if len(rec) >= 100:
        try:
            slope = tail_slope(rec)
        except ValueError:
            slope = None
    return LevelStats(
        n=batch.grid.n,
        count=batch.count,
        mean=float(rec.mean()),
        variance=float(rec.var(ddof=1)) if len(rec) > 1 else 0.0,
        quantiles={q: float(np.quantile(rec, q)) for q in QUANTILES},
        z_mean=float(zs.mean()),
        z_positive_fraction=float(np.mean(zs > 0.0)),
        tail_slope=slope,
    )


def extremes_report(batches: list[SampleBatch]) -> ExtremesReport:
    """Per-level statistics plus KS distances between consecutive levels."""
    ordered = sorted(batches, key=lambda b: b.grid.n)
    levels = [level_stats(b) for b in ordered]
    ks = []
    for a, b in zip(ordered[:-1], ordered[1:]):
        ks.append((a.grid.n, b.grid.n, ks_distance(recentred_max(a), recentred_max(b))))
    return ExtremesReport(levels=levels, ks_consecutive=ks)


def histogram(values, bins: int = 24) -> tuple[np.ndarray, np.ndarray]:
    """Counts and bin edges for the CSV/figure output."""
    counts, edges = np.histogram(np.asarray(values, dtype=float), bins=bins)
    return counts, edges
