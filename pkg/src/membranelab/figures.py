"""Figure rendering for the report path.

Every CSV the command line emits has a figure rendered next to it; the CSV
stays the canonical data interface and the figures are a plain matplotlib
view of the same rows.  The Agg backend keeps this headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402


def _finish(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def convergence_figure(entries, rate, title, path) -> Path:
    """log-log mesh width vs error with the fitted slope."""
    hs = np.array([e[0] for e in entries])
    w22 = np.array([e[1] for e in entries])
    linf = np.array([e[2] for e in entries])
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(hs, w22, "o-", label="energy-norm error")
    ax.loglog(hs, linf, "s--", label="max-norm error")
    if rate is not None and np.all(w22 > 0):
        ref = w22[-1] * (hs / hs[-1]) ** rate
        ax.loglog(hs, ref, ":", color="gray", label=f"slope {rate:.2f}")
    ax.set_xlabel("mesh width h")
    ax.set_ylabel("error")
    ax.set_title(title)
    ax.legend()
    return _finish(fig, path)


def histogram_figure(series, title, path) -> Path:
    """Overlaid step histograms; ``series`` maps label -> values."""
    fig, ax = plt.subplots(figsize=(5, 4))
    for label, values in series.items():
        ax.hist(values, bins=24, histtype="step", density=True, label=label)
    ax.set_xlabel("recentred maximum")
    ax.set_ylabel("density")
    ax.set_title(title)
    ax.legend()
    return _finish(fig, path)


def residual_decay_figure(radii, residuals, title, path) -> Path:
    radii = np.asarray(radii, dtype=float)
    residuals = np.asarray(residuals, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(radii, residuals, "o-", label="expansion residual")
    ax.loglog(radii, residuals[0] * (radii / radii[0]) ** -4.0, ":",
              color="gray", label="reference decay |x|^-4")
    ax.set_xlabel("|x|")
    ax.set_ylabel("residual")
    ax.set_title(title)
    ax.legend()
    return _finish(fig, path)


def pair_deviation_figure(details, bound, title, path) -> Path:
    """Deviation of the covariance from the log model against pair distance."""
    dist = np.array([d.distance for d in details])
    dev = np.array([d.deviation for d in details])
    depth = np.array([d.max_depth for d in details])
    fig, ax = plt.subplots(figsize=(5, 4))
    sc = ax.scatter(dist, dev, c=depth, s=14, cmap="viridis")
    ax.axhline(bound, color="tab:red", lw=1, label=f"max = {bound:.3f}")
    ax.set_xscale("log")
    ax.set_xlabel("|x - y| (lattice units)")
    ax.set_ylabel("deviation from log model")
    ax.set_title(title)
    fig.colorbar(sc, ax=ax, label="max boundary depth")
    ax.legend()
    return _finish(fig, path)


def stability_figure(resolutions, values, ylabel, title, path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(resolutions, values, "o-")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("grid side count n")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    return _finish(fig, path)
