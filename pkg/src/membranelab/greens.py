"""Green's functions of the discrete Bilaplacian: full space and clamped box.

Full space
    F solves Delta_1^2 F = delta_0 on Z^4 and grows like
    -(8 pi^2)^{-1} log|x|.  The Fourier integral for F(x) - F(0),

        (2 pi)^{-4} int_{[-pi,pi]^4} (cos(x.xi) - 1) / mu(xi)^2 dxi,

    is evaluated through its heat-kernel (Laplace-transform) form

        int_0^inf t [ prod_a e^{-2t} I_{x_a}(2t) - (e^{-2t} I_0(2t))^4 ] dt,

    which turns the singular oscillatory 4D integral into a smooth 1D one
    (panelled Gauss-Legendre plus a 1/t-substituted tail).  The additive
    constant F(0) is not determined by the equation; it is fixed once by
    least-squares matching the large-|x| expansion on a lattice shell and
    cached.

Box
    G_h(.,y) is the column of the inverse of the clamped operator; one column
    per conjugate-gradient solve, persisted in an on-disk cache keyed by grid
    size and source site.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import ive

from membranelab.lattice import (
    Field,
    GridSpec,
    Site,
    field_to_bytes,
    load_field,
)
from membranelab.solver import SolveResult, SinePreconditioner, solve_clamped_bilaplacian

#: lambda = sqrt(8) pi; lambda^2 = 8 pi^2 is the variance scale of the model.
LAMBDA = np.sqrt(8.0) * np.pi
LAMBDA_SQ = 8.0 * np.pi**2

#: Crossover radius between quadrature and asymptotic evaluation of F.
CROSSOVER_RADIUS = 24.0


class QuadratureError(RuntimeError):
    """Quadrature failed to reach the requested accuracy; carries the estimate."""

    def __init__(self, message: str, error_estimate: float):
        super().__init__(message)
        self.error_estimate = error_estimate


def _heat_kernel_difference(x: Site, t: np.ndarray) -> np.ndarray:
    """p_t(x) - p_t(0) for the continuous-time walk generated by Delta_1."""
    px = np.ones_like(t)
    p0 = np.ones_like(t)
    for xa in x:
        px = px * ive(abs(int(xa)), 2.0 * t)
        p0 = p0 * ive(0, 2.0 * t)
    return px - p0


def _offset_from_origin(x: Site, nodes: int) -> float:
    """F(x) - F(0) by panelled Gauss-Legendre in the heat-kernel variable."""
    if all(v == 0 for v in x):
        return 0.0
    r2 = float(sum(v * v for v in x))
    big_t = max(8.0, 2.0 * r2)
    edges = [0.0, 0.5]
    while edges[-1] < big_t:
        edges.append(min(edges[-1] * 2.0, big_t))
    z, w = leggauss(nodes)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        t = 0.5 * (a + b) + 0.5 * (b - a) * z
        total += 0.5 * (b - a) * float(np.sum(w * t * _heat_kernel_difference(x, t)))
    # tail via t = 1/u: integrand u^-3 D(1/u) is smooth at u = 0
    u = 0.5 / big_t * (z + 1.0)
    total += 0.5 / big_t * float(np.sum(w * _heat_kernel_difference(x, 1.0 / u) / u**3))
    return total


def expansion(x) -> float:
    """Large-|x| form of F: -(8 pi^2)^{-1} log|x| + (24 pi^2)^{-1} sum x_a^4/|x|^6."""
    x = np.asarray(x, dtype=float)
    r2 = float(np.dot(x, x))
    if r2 == 0.0:
        raise ValueError("expansion undefined at the origin")
    return -np.log(r2) / (2.0 * LAMBDA_SQ) + float(np.sum(x**4)) / r2**3 / (24.0 * np.pi**2)


def _shell_points() -> list[Site]:
    """Deterministic lattice sample of the matching shell 24 <= |x| <= 48."""
    pts: list[Site] = []
    for k in (24, 28, 32, 36, 40, 44, 48):
        pts.append((k, 0, 0, 0))
    for k in (12, 14, 16, 18, 20, 22, 24):
        pts.append((k, k, k, k))
    for k in (17, 20, 24, 28, 32):
        pts.append((k, k, 0, 0))
    for k in (14, 17, 20, 24, 27):
        pts.append((k, k, k, 0))
    pts += [(20, 12, 8, 4), (30, 20, 10, 5), (36, 12, 6, 2), (25, 15, 10, 5), (40, 16, 8, 0)]
    return [p for p in pts if 24.0 <= float(np.linalg.norm(p)) <= 48.0]


@dataclass(frozen=True)
class Normalization:
    c0: float              # the value of F at the origin
    fit_residual: float    # rms misfit over the shell
    shell_size: int


class FullSpaceGreen:
    """Evaluator for F with quadrature / asymptotic dispatch at a crossover radius.

    For |x| below the crossover the heat-kernel quadrature is used (plus the
    one-time normalization); beyond it the expansion is already accurate to
    well under 1e-5 and is returned directly.
    """

    def __init__(self, crossover: float = CROSSOVER_RADIUS, nodes: int = 40,
                 cache_dir: str | os.PathLike | None = None):
        self.crossover = float(crossover)
        self.nodes = int(nodes)
        self._cache_dir = Path(cache_dir) if cache_dir is not None else None
        self._norm: Normalization | None = None
        self._memo: dict[Site, float] = {}

    # -- normalization -----------------------------------------------------

    @property
    def normalization(self) -> Normalization:
        if self._norm is None:
            self._norm = self._load_or_fit()
        return self._norm

    def _norm_path(self) -> Path | None:
        if self._cache_dir is None:
            return None
        return self._cache_dir / "fullspace_normalization.json"

    def _load_or_fit(self) -> Normalization:
        path = self._norm_path()
        if path is not None and path.exists():
            doc = json.loads(path.read_text())
            return Normalization(doc["c0"], doc["fit_residual"], doc["shell_size"])
        norm = self._fit_normalization()
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps({
                "c0": norm.c0,
                "fit_residual": norm.fit_residual,
                "shell_size": norm.shell_size,
            }, indent=2, sort_keys=True))
        return norm

    def _fit_normalization(self) -> Normalization:
        """Least squares for the additive constant, weighted by the expected
        |x|^-4 size of the expansion remainder."""
        pts = _shell_points()
        vals = []
        weights = []
        for p in pts:
            vals.append(expansion(p) - _offset_from_origin(p, self.nodes))
            weights.append(float(np.linalg.norm(p)) ** 8)
        vals = np.asarray(vals)
        weights = np.asarray(weights)
        c0 = float(np.sum(weights * vals) / np.sum(weights))
        resid = float(np.sqrt(np.mean((vals - c0) ** 2)))
        return Normalization(c0=c0, fit_residual=resid, shell_size=len(pts))

    # -- evaluation ---------------------------------------------------------

    def quadrature(self, x) -> float:
        """F(x) through the quadrature path regardless of |x| (normalized)."""
        key = tuple(int(v) for v in x)
        if key not in self._memo:
            val = _offset_from_origin(key, self.nodes)
            check = _offset_from_origin(key, self.nodes + 12)
            err = abs(val - check)
            if err > 1e-9 * max(1.0, abs(val)):
                raise QuadratureError(
                    f"heat-kernel quadrature for F{key} did not settle "
                    f"(estimate {err:.3e})", err)
            self._memo[key] = check
        return self._memo[key] + self.normalization.c0

    def asymptotic(self, x) -> float:
        return expansion(x)

    def __call__(self, x) -> float:
        """F(x) via the method appropriate for |x|."""
        r = float(np.linalg.norm(np.asarray(x, dtype=float)))
        if r >= self.crossover:
            return self.asymptotic(x)
        return self.quadrature(x)


_default_fullspace: FullSpaceGreen | None = None
_default_lock = threading.Lock()


def default_fullspace() -> FullSpaceGreen:
    """Shared process-wide evaluator (normalization computed once)."""
    global _default_fullspace
    with _default_lock:
        if _default_fullspace is None:
            _default_fullspace = FullSpaceGreen()
        return _default_fullspace


def fullspace_green(x, evaluator: FullSpaceGreen | None = None) -> float:
    """F(x) for a lattice offset x."""
    return (evaluator or default_fullspace())(x)


def shifted_fullspace(x, y, h: float, r: float, evaluator: FullSpaceGreen | None = None) -> float:
    """Shifted full-space Green: F((x-y)/h) - log(h)/lambda^2 + log(r)/lambda^2.

    x, y are points of (hZ)^4 given in continuous coordinates.
    """
    if r <= 0 or h <= 0:
        raise ValueError("mesh width and shift radius must be positive")
    m = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    lattice = m / h
    rounded = np.rint(lattice)
    if not np.allclose(lattice, rounded, atol=1e-9):
        raise ValueError("x - y is not a lattice vector at this mesh width")
    val = fullspace_green(tuple(int(v) for v in rounded), evaluator)
    return val + (np.log(r) - np.log(h)) / LAMBDA_SQ


def continuous_fullspace(x, y, r: float) -> float:
    """Continuous analogue: -log|x-y|/lambda^2 + log(r)/lambda^2."""
    d = float(np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)))
    if d == 0.0:
        raise ValueError("continuous full-space Green is singular at x = y")
    if r <= 0:
        raise ValueError("shift radius must be positive")
    return (np.log(r) - np.log(d)) / LAMBDA_SQ


# ---------------------------------------------------------------------------
# box Green columns
# ---------------------------------------------------------------------------


@dataclass
class GreenColumn:
    grid: GridSpec
    source: Site
    values: Field
    tolerance: float
    iterations: int
    residual: float
    converged: bool

    def at(self, site) -> float:
        return self.values.value_at(site)


def solve_green_column(
    grid: GridSpec,
    source,
    tol: float = 1e-8,
    preconditioner: SinePreconditioner | None = None,
) -> GreenColumn:
    """One column G(., source) of the clamped-box Green's function.

    The values are in the lattice normalization, which coincides with the
    h-scaled Green's function evaluated at the corresponding mesh points.
    """
    source = tuple(int(v) for v in source)
    if not grid.contains(source):
        raise ValueError(f"source {source} outside the box [0,{grid.n}]^4")
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    b = np.zeros(grid.shape)
    b[source] = 1.0
    result: SolveResult = solve_clamped_bilaplacian(b, tol=tol, preconditioner=preconditioner)
    return GreenColumn(
        grid=grid,
        source=source,
        values=Field(grid, result.solution),
        tolerance=tol,
        iterations=result.iterations,
        residual=result.residual,
        converged=result.converged,
    )


class ColumnCache:
    """On-disk cache of Green columns, one subdirectory per grid size.

    A cached column is reused only when it was solved at least as tightly as
    requested.  Writers take a process-wide lock and publish files atomically;
    concurrent readers are safe.
    """

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        self._lock = threading.Lock()
        self._memo: dict[tuple[int, Site], GreenColumn] = {}

    def _grid_dir(self, n: int) -> Path:
        return self.root / f"n{n:04d}"

    def _index_path(self, n: int) -> Path:
        return self._grid_dir(n) / "index.json"

    def _read_index(self, n: int) -> dict:
        path = self._index_path(n)
        if not path.exists():
            return {"columns": {}}
        return json.loads(path.read_text())

    @staticmethod
    def _key(source: Site) -> str:
        return ",".join(str(v) for v in source)

    def get(self, grid: GridSpec, source, tol: float = 1e-8,
            preconditioner: SinePreconditioner | None = None) -> GreenColumn:
        source = tuple(int(v) for v in source)
        memo_key = (grid.n, source)
        cached = self._memo.get(memo_key)
        if cached is not None and cached.tolerance <= tol:
            return cached
        entry = self._read_index(grid.n)["columns"].get(self._key(source))
        if entry is not None and entry["tolerance"] <= tol:
            field = load_field(self._grid_dir(grid.n) / entry["file"])
            col = GreenColumn(
                grid=grid, source=source, values=field,
                tolerance=entry["tolerance"], iterations=entry["iterations"],
                residual=entry["residual"], converged=True,
            )
            self._memo[memo_key] = col
            return col
        col = solve_green_column(grid, source, tol=tol, preconditioner=preconditioner)
        if col.converged:
            self.put(col)
            self._memo[memo_key] = col
        return col

    def put(self, col: GreenColumn) -> None:
        with self._lock:
            gdir = self._grid_dir(col.grid.n)
            gdir.mkdir(parents=True, exist_ok=True)
            fname = "col_" + "_".join(str(v) for v in col.source) + ".mbf"
            blob = field_to_bytes(col.values)
            digest = hashlib.sha256(blob).hexdigest()
            fd, tmp = tempfile.mkstemp(dir=gdir, suffix=".tmp")
            with os.fdopen(fd, "wb") as fh:
                fh.write(blob)
            os.replace(tmp, gdir / fname)
            index = self._read_index(col.grid.n)
            index["columns"][self._key(col.source)] = {
                "file": fname,
                "tolerance": col.tolerance,
                "iterations": col.iterations,
                "residual": col.residual,
                "sha256": digest,
            }
            fd, tmp = tempfile.mkstemp(dir=gdir, suffix=".tmp")
            with os.fdopen(fd, "w") as fh:
                fh.write(json.dumps(index, indent=2, sort_keys=True))
            os.replace(tmp, self._index_path(col.grid.n))

    def content_hashes(self, n: int) -> dict[str, str]:
        """sha256 digests of the cached columns of one grid, for provenance."""
        idx = self._read_index(n)
        return {k: v["sha256"] for k, v in sorted(idx["columns"].items())}
