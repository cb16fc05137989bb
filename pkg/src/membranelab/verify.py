"""Numerical instantiation of the covariance estimates for the box Green's function.

Each check turns one of the uniform estimates into a measured quantity:

* variance bounds: the smallest constant making the diagonal bounds and the
  increment bound hold over a site/pair sample (``check_variance_bounds``);
* covariance-log uniformity: the largest deviation of lambda^2 G from
  log(2 + max(d(x),d(y))/(h+|x-y|)) over a stratified pair sample
  (``check_covariance_log``);
* near/off-diagonal resolution limits with first-order Richardson
  extrapolation (``near_diagonal_limit``, ``off_diagonal_limit``);
* the pointwise-by-energy inequality constant over a randomized trial suite
  (``check_poincare_sobolev``);
* the discrete-vs-extrapolated closeness experiment (``check_closeness``),
  whose scale preconditions are only satisfiable on very large grids and are
  therefore reported explicitly rather than silently relaxed.

Every reported constant is a pure function of (grid, seed, plan), so reruns
reproduce reports bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from membranelab.greens import (
    LAMBDA_SQ,
    ColumnCache,
    FullSpaceGreen,
    GreenColumn,
    default_fullspace,
    solve_green_column,
)
from membranelab.lattice import DIM, Field, GridSpec, Site, cutoff_profile, norms
from membranelab.solver import SinePreconditioner

#: Pair-sampling plan for the covariance-log check: distance bins x depth bins.
DISTANCE_BINS = 6
DEPTH_BINS = 4
PAIRS_PER_CELL = 8

#: Operational stand-in for the near-diagonal depth threshold exponent.
DEPTH_EXPONENT = 3.0

#: Scale separation required by the closeness experiment.
MIN_SCALE_RATIO = 192


class PreconditionError(ValueError):
    """An operation's scale precondition cannot be satisfied; never relaxed silently."""


def _column_getter(cache: ColumnCache | None, grid: GridSpec, tol: float):
    precond = SinePreconditioner(grid.n + 1)
    memo: dict[Site, GreenColumn] = {}

    def get(source) -> GreenColumn:
        source = tuple(int(v) for v in source)
        if source not in memo:
            if cache is not None:
                memo[source] = cache.get(grid, source, tol=tol, preconditioner=precond)
            else:
                memo[source] = solve_green_column(grid, source, tol=tol, preconditioner=precond)
        return memo[source]

    return get


def covariance_log_model(grid: GridSpec, x, y) -> float:
    """log(2 + max(d(x),d(y)) / (h + |x-y|)), computed in lattice units."""
    dmax = max(grid.boundary_distance(x), grid.boundary_distance(y))
    dist = float(np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)))
    return math.log(2.0 + dmax / (1.0 + dist))


# ---------------------------------------------------------------------------
# stratified pair plan
# ---------------------------------------------------------------------------


def stratified_pairs(grid: GridSpec, seed: int,
                     distance_bins: int = DISTANCE_BINS,
                     depth_bins: int = DEPTH_BINS,
                     per_cell: int = PAIRS_PER_CELL,
                     max_attempts: int = 200_000) -> list[tuple[Site, Site]]:
    """Site pairs stratified by log-distance and boundary depth.

    The bound being probed varies on the scales log|x-y| and log(2+d), so the
    strata are log-uniform in both.  Cells that the geometry cannot populate
    (far-apart pairs deep inside a small box) are filled as far as possible.
    """
    n = grid.n
    rng = np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), 0xB1]))
    dist_edges = np.exp(np.linspace(math.log(1.0), math.log(2.0 * n), distance_bins + 1))
    depth_edges = np.exp(np.linspace(math.log(2.0), math.log(2.0 + n / 2), depth_bins + 1))
    filled: dict[tuple[int, int], list[tuple[Site, Site]]] = {}
    target = distance_bins * depth_bins * per_cell
    total = 0
    attempts = 0
    while total < target and attempts < max_attempts:
        attempts += 1
        x = tuple(int(v) for v in rng.integers(0, n + 1, size=DIM))
        y = tuple(int(v) for v in rng.integers(0, n + 1, size=DIM))
        if x == y:
            continue
        dist = float(np.linalg.norm(np.subtract(x, y)))
        dmax = 2.0 + max(grid.boundary_distance(x), grid.boundary_distance(y))
        i = int(np.searchsorted(dist_edges, dist, side="right")) - 1
        j = int(np.searchsorted(depth_edges, dmax, side="right")) - 1
        i = min(max(i, 0), distance_bins - 1)
        j = min(max(j, 0), depth_bins - 1)
        cell = filled.setdefault((i, j), [])
        if len(cell) < per_cell:
            cell.append((x, y))
            total += 1
    plan = []
    for key in sorted(filled):
        plan.extend(filled[key])
    return plan


# ---------------------------------------------------------------------------
# uniform covariance estimates
# ---------------------------------------------------------------------------


@dataclass
class PairDeviation:
    x: Site
    y: Site
    distance: float
    max_depth: int
    green: float
    deviation: float


@dataclass
class CovarianceLogResult:
    grid_n: int
    deviation: float                      # empirical uniformity constant
    worst_pair: tuple[Site, Site]
    pair_count: int
    column_sources: int
    details: list[PairDeviation] = field(default_factory=list)


def check_covariance_log(grid: GridSpec, seed: int = 1, tol: float = 1e-8,
                         cache: ColumnCache | None = None,
                         pairs: list[tuple[Site, Site]] | None = None,
                         pairs_per_cell: int = PAIRS_PER_CELL) -> CovarianceLogResult:
    """Max |lambda^2 G(x,y) - log(2 + max(d)/(h+|x-y|))| over the pair plan."""
    if grid.n < 8:
        raise ValueError("covariance-log check needs n >= 8")
    plan = pairs if pairs is not None else stratified_pairs(grid, seed, per_cell=pairs_per_cell)
    get = _column_getter(cache, grid, tol)
    worst = -1.0
    worst_pair = plan[0]
    sources = set()
    details = []
    for x, y in plan:
        sources.add(x)
        g = get(x).at(y)
        dev = abs(LAMBDA_SQ * g - covariance_log_model(grid, x, y))
        details.append(PairDeviation(
            x=x, y=y,
            distance=float(np.linalg.norm(np.subtract(x, y))),
            max_depth=max(grid.boundary_distance(x), grid.boundary_distance(y)),
            green=g, deviation=dev,
        ))
        if dev > worst:
            worst = dev
            worst_pair = (x, y)
    return CovarianceLogResult(
        grid_n=grid.n, deviation=worst, worst_pair=worst_pair,
        pair_count=len(plan), column_sources=len(sources), details=details,
    )


@dataclass
class VarianceBoundResult:
    grid_n: int
    constant: float            # smallest constant making all three bounds hold
    from_mesh_bound: float     # lambda^2 G(x,x) + log h
    from_depth_bound: float    # lambda^2 G(x,x) / log(2 + d/h)
    from_increment: float      # (lambda^2 (G(x,x)-G(x,y)) - log(1+|x-y|/h)) / 2
    site_count: int


def check_variance_bounds(grid: GridSpec, sites=None, seed: int = 1, tol: float = 1e-8,
                          cache: ColumnCache | None = None,
                          pairs: list[tuple[Site, Site]] | None = None) -> VarianceBoundResult:
    """Smallest constant satisfying the two diagonal bounds and the increment bound.

    The increment bound with x = y forces the constant to be nonnegative.
    """
    if sites is None:
        rng = np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), 0xB0]))
        sites = [grid.center] + [
            tuple(int(v) for v in rng.integers(0, grid.n + 1, size=DIM)) for _ in range(11)
        ]
    if not sites:
        raise ValueError("need at least one site")
    if pairs is None:
        pairs = stratified_pairs(grid, seed, per_cell=2)
    get = _column_getter(cache, grid, tol)
    a_mesh = -math.inf
    a_depth = -math.inf
    for x in sites:
        gxx = get(x).at(x)
        a_mesh = max(a_mesh, LAMBDA_SQ * gxx - math.log(grid.n))
        a_depth = max(a_depth, LAMBDA_SQ * gxx / math.log(2.0 + grid.boundary_distance(x)))
    a_inc = 0.0   # x = y case
    for x, y in pairs:
        col = get(x)
        lhs = LAMBDA_SQ * (col.at(x) - col.at(y))
        dist = float(np.linalg.norm(np.subtract(x, y)))
        a_inc = max(a_inc, (lhs - math.log(1.0 + dist)) / 2.0)
    return VarianceBoundResult(
        grid_n=grid.n,
        constant=max(a_mesh, a_depth, a_inc, 0.0),
        from_mesh_bound=a_mesh,
        from_depth_bound=a_depth,
        from_increment=a_inc,
        site_count=len(sites),
    )


# ---------------------------------------------------------------------------
# resolution limits
# ---------------------------------------------------------------------------


@dataclass
class RegularPartResult:
    x: tuple[float, float, float, float]
    offsets: tuple[Site, Site]
    resolutions: list[int]
    values: list[float]                 # lambda^2 G(x+hu, x+hv) + log h - lambda^2 F(u-v)
    differences: list[float]
    extrapolated: float
    extrapolation_residual: float
    depth_threshold_satisfied: bool     # recorded, never enforced
    depth_threshold_margin: float


def _onsite(x, n: int) -> Site:
    v = np.asarray(x, dtype=float) * n
    r = np.rint(v)
    if not np.allclose(v, r, atol=1e-9):
        raise ValueError(f"point {tuple(x)} is not on the n={n} grid")
    return tuple(int(t) for t in r)


def near_diagonal_limit(x, resolutions, u=(0, 0, 0, 0), v=(0, 0, 0, 0),
                        tol: float = 1e-8, cache: ColumnCache | None = None,
                        fullspace: FullSpaceGreen | None = None) -> RegularPartResult:
    """Resolution study of lambda^2 G(x+hu, x+hv) + log h - lambda^2 F(u-v).

    First-order Richardson extrapolation (2 v(h/2) - v(h)) estimates the
    limit; the last successive difference is reported as its residual.  The
    polylog depth threshold d(x) >= h (log 1/h)^theta is bookkept for the
    coarsest grid but not enforced (tested points sit far above it).
    """
    resolutions = sorted(int(n) for n in resolutions)
    if len(resolutions) < 2:
        raise ValueError("need at least two resolutions")
    fs = fullspace or default_fullspace()
    offset = tuple(int(a) - int(b) for a, b in zip(u, v))
    f2 = LAMBDA_SQ * fs(offset)
    values = []
    for n in resolutions:
        grid = GridSpec(n)
        base = _onsite(x, n)
        xs = tuple(int(a + b) for a, b in zip(base, u))
        ys = tuple(int(a + b) for a, b in zip(base, v))
        if not (grid.contains(xs) and grid.contains(ys)):
            raise ValueError(f"offsets leave the box at n={n}")
        get = _column_getter(cache, grid, tol)
        g = get(xs).at(ys)
        values.append(LAMBDA_SQ * g - math.log(n) - f2)
    diffs = [values[i + 1] - values[i] for i in range(len(values) - 1)]
    extrap = 2.0 * values[-1] - values[-2]
    n0 = resolutions[0]
    h0 = 1.0 / n0
    threshold = h0 * math.log(n0) ** DEPTH_EXPONENT
    depth = GridSpec(n0).boundary_distance(_onsite(x, n0)) * h0
    return RegularPartResult(
        x=tuple(float(t) for t in x),
        offsets=(tuple(int(t) for t in u), tuple(int(t) for t in v)),
        resolutions=resolutions,
        values=values,
        differences=diffs,
        extrapolated=extrap,
        extrapolation_residual=abs(diffs[-1]),
        depth_threshold_satisfied=bool(depth >= threshold),
        depth_threshold_margin=float(depth - threshold),
    )


@dataclass
class OffDiagonalResult:
    x: tuple[float, float, float, float]
    y: tuple[float, float, float, float]
    resolutions: list[int]
    values: list[float]                 # lambda^2 G(x,y) per resolution
    differences: list[float]
    extrapolated: float
    extrapolation_residual: float


def off_diagonal_limit(x, y, resolutions, min_separation: float = 0.0,
                       tol: float = 1e-8, cache: ColumnCache | None = None) -> OffDiagonalResult:
    """Resolution study of lambda^2 G(x,y) for fixed interior points x != y."""
    resolutions = sorted(int(n) for n in resolutions)
    if len(resolutions) < 2:
        raise ValueError("need at least two resolutions")
    sep = float(np.linalg.norm(np.subtract(x, y, dtype=float)))
    if sep < max(min_separation, 1e-12):
        raise ValueError(f"points too close: |x-y| = {sep:.3g} < {min_separation:.3g}")
    values = []
    for n in resolutions:
        grid = GridSpec(n)
        xs = _onsite(x, n)
        ys = _onsite(y, n)
        get = _column_getter(cache, grid, tol)
        values.append(LAMBDA_SQ * get(xs).at(ys))
    diffs = [values[i + 1] - values[i] for i in range(len(values) - 1)]
    extrap = 2.0 * values[-1] - values[-2]
    return OffDiagonalResult(
        x=tuple(float(t) for t in x), y=tuple(float(t) for t in y),
        resolutions=resolutions, values=values, differences=diffs,
        extrapolated=extrap, extrapolation_residual=abs(diffs[-1]),
    )


# ---------------------------------------------------------------------------
# pointwise-by-energy inequality
# ---------------------------------------------------------------------------


@dataclass
class PoincareSobolevResult:
    grid_n: int
    constant: float
    worst_trial: str
    trial_count: int


def _ps_ratio(field: Field) -> float:
    """max_x |u(x)| / (sqrt(log(2 + d(x))) * ||u||_{W22h}) over the box."""
    nm = norms(field)
    if nm.w22h == 0.0:
        return 0.0
    n = field.grid.n
    ax = np.minimum(np.arange(n + 1), n - np.arange(n + 1))
    g1, g2, g3, g4 = np.ix_(ax, ax, ax, ax)
    d = np.minimum(np.minimum(g1, g2), np.minimum(g3, g4))
    weight = np.sqrt(np.log(2.0 + d))
    return float(np.max(np.abs(field.values) / weight) / nm.w22h)


def check_poincare_sobolev(grid: GridSpec, trial_count: int = 8, seed: int = 1,
                           tol: float = 1e-8,
                           cache: ColumnCache | None = None) -> PoincareSobolevResult:
    """Empirical constant of the pointwise bound over a randomized trial suite.

    Trials mix i.i.d. fields, a sine-smoothed low-frequency field, adversarial
    spikes (center and near-corner), and the center Green column.
    """
    if trial_count < 1:
        raise ValueError("need at least one trial")
    rng = np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), 0x95]))
    best = -1.0
    worst_name = ""

    def consider(name: str, f: Field):
        nonlocal best, worst_name
        r = _ps_ratio(f)
        if r > best:
            best = r
            worst_name = name

    for t in range(trial_count):
        consider(f"iid-{t}", Field(grid, rng.standard_normal(grid.shape)))
    smoothing = SinePreconditioner(grid.n + 1)
    consider("smoothed", Field(grid, smoothing(rng.standard_normal(grid.shape))))
    spike = Field.zeros(grid)
    spike.values[grid.center] = 1.0
    consider("center-spike", spike)
    corner = Field.zeros(grid)
    corner.values[1, 1, 1, 1] = 1.0
    consider("corner-spike", corner)
    get = _column_getter(cache, grid, tol)
    consider("green-column", get(grid.center).values)
    return PoincareSobolevResult(grid_n=grid.n, constant=best,
                                 worst_trial=worst_name, trial_count=trial_count + 4)


@dataclass
class PoincareResult:
    grid_n: int
    ratio: float                # max ||u|| / ||grad u|| over the trials
    bound: float                # the loose reference bound (2r/pi)(1+1/2), r = 1/2


def check_poincare(grid: GridSpec, trial_count: int = 16, seed: int = 1) -> PoincareResult:
    """Empirical cube Poincare ratio over random fields vanishing on one face.

    The whole box is the cube of half-side r = 1/2; fields are zeroed on the
    face x_1 = 0.  Random fields sit far below the sharp constant, so the
    reported ratio is checked against the loose bound 3r/pi.
    """
    if trial_count < 1:
        raise ValueError("need at least one trial")
    rng = np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), 0x2C]))
    h = 1.0 / grid.n
    worst = 0.0
    smoothing = SinePreconditioner(grid.n + 1)
    for t in range(trial_count):
        vals = rng.standard_normal(grid.shape)
        if t % 4 == 3:
            vals = smoothing(vals)       # include low-frequency content
        vals[0, :, :, :] = 0.0
        # both difference endpoints inside the cube, as the inequality states
        l2 = math.sqrt(float(np.sum(vals * vals)))
        gradsq = 0.0
        for ax in range(DIM):
            d = np.diff(vals, axis=ax) / h
            gradsq += float(np.sum(d * d))
        worst = max(worst, l2 / math.sqrt(gradsq))
    return PoincareResult(grid_n=grid.n, ratio=worst, bound=(2.0 * 0.5 / math.pi) * 1.5)


@dataclass
class EasyBoundResult:
    grid_n: int
    constant: float
    worst_pair: tuple[Site, Site]


def check_easy_bound(columns: list[GreenColumn]) -> EasyBoundResult:
    """Empirical constant of |G(x,y)| <= C sqrt(log(2+d(x)) log(2+d(y)))."""
    if not columns:
        raise ValueError("need at least one column")
    grid = columns[0].grid
    n = grid.n
    ax = np.minimum(np.arange(n + 1), n - np.arange(n + 1))
    g1, g2, g3, g4 = np.ix_(ax, ax, ax, ax)
    d = np.minimum(np.minimum(g1, g2), np.minimum(g3, g4))
    weight = np.sqrt(np.log(2.0 + d))
    best = -1.0
    worst = (columns[0].source, columns[0].source)
    for col in columns:
        wx = math.sqrt(math.log(2.0 + grid.boundary_distance(col.source)))
        ratios = np.abs(col.values.values) / (wx * weight)
        idx = np.unravel_index(int(np.argmax(ratios)), ratios.shape)
        if ratios[idx] > best:
            best = float(ratios[idx])
            worst = (col.source, tuple(int(v) for v in idx))
    return EasyBoundResult(grid_n=grid.n, constant=best, worst_pair=worst)


# ---------------------------------------------------------------------------
# combined assumption report
# ---------------------------------------------------------------------------


@dataclass
class AssumptionReport:
    """Empirical constants for the uniform estimates across resolutions."""

    grids: list[int]
    seed: int
    tolerance: float
    plan: str
    variance_bounds: list[VarianceBoundResult]
    covariance_log: list[CovarianceLogResult]
    near_diagonal: RegularPartResult
    off_diagonal: OffDiagonalResult


def build_assumption_report(grids, seed: int = 1, tol: float = 1e-8,
                            cache: ColumnCache | None = None) -> AssumptionReport:
    """Run the full estimate suite on a family of grids."""
    grids = sorted(int(n) for n in grids)
    if len(grids) < 2:
        raise ValueError("need at least two grids")
    plan = (f"distance/depth stratified pairs: {DISTANCE_BINS} log-distance bins x "
            f"{DEPTH_BINS} depth bins x {PAIRS_PER_CELL} pairs, counter-based seed")
    return AssumptionReport(
        grids=grids,
        seed=seed,
        tolerance=tol,
        plan=plan,
        variance_bounds=[check_variance_bounds(GridSpec(n), seed=seed, tol=tol, cache=cache)
                         for n in grids],
        covariance_log=[check_covariance_log(GridSpec(n), seed=seed, tol=tol, cache=cache)
                        for n in grids],
        near_diagonal=near_diagonal_limit((0.5,) * DIM, grids, tol=tol, cache=cache),
        off_diagonal=off_diagonal_limit((0.25,) * DIM, (0.75,) * DIM, grids,
                                        tol=tol, cache=cache),
    )


# ---------------------------------------------------------------------------
# closeness experiment
# ---------------------------------------------------------------------------


@dataclass
class ClosenessResult:
    x: tuple[float, float, float, float]
    y: tuple[float, float, float, float]
    r: float
    resolutions: list[int]
    regular_parts: list[float]          # (G - eta * shifted fullspace) per resolution
    monitored: float                    # |coarsest regular part - extrapolated|
    scale_ratio_enforced: bool


def closeness_regular_part(grid: GridSpec, x: Site, y: Site, r: float,
                           tol: float = 1e-8, cache: ColumnCache | None = None,
                           fullspace: FullSpaceGreen | None = None) -> float:
    """(G - eta^{(r)} Ghat^{(r)})(x,y) on one grid: the regularized Green value."""
    fs = fullspace or default_fullspace()
    get = _column_getter(cache, grid, tol)
    g = get(x).at(y)
    offset = tuple(int(a - b) for a, b in zip(x, y))
    dist = float(np.linalg.norm(offset)) / grid.n
    eta = float(cutoff_profile(dist / r))
    hshift = (fs(offset) + (math.log(r) + math.log(grid.n)) / LAMBDA_SQ)
    return g - eta * hshift


def check_closeness(x, y, resolutions, r: float, K: float = 2.0,
                    tol: float = 1e-8, cache: ColumnCache | None = None,
                    fullspace: FullSpaceGreen | None = None,
                    enforce_scale_ratio: bool = True) -> ClosenessResult:
    """Monitored distance between one-grid and extrapolated regularized Green values.

    Preconditions: d(y)/K <= r <= d(y)/2 and r >= 192 h on every grid, which
    requires n >= 384/d(y) at the least; desk grids cannot satisfy it and the
    operation then reports the violation explicitly.  Passing
    ``enforce_scale_ratio=False`` runs the same arithmetic as a diagnostic
    with the scale-separation requirement waived (recorded in the result).
    """
    resolutions = sorted(int(n) for n in resolutions)
    if len(resolutions) < 3:
        raise ValueError("closeness needs at least three resolutions")
    if K < 2.0:
        raise PreconditionError(f"K must be at least 2, got {K}")
    coarsest = GridSpec(resolutions[0])
    ys = _onsite(y, resolutions[0])
    dy = coarsest.boundary_distance(ys) / resolutions[0]
    if not (dy / K <= r <= dy / 2.0):
        raise PreconditionError(
            f"need d(y)/K <= r <= d(y)/2 with d(y) = {dy:.4g}, got r = {r:.4g}")
    if enforce_scale_ratio:
        hmax = 1.0 / resolutions[0]
        if r < MIN_SCALE_RATIO * hmax:
            raise PreconditionError(
                f"precondition unsatisfiable at this resolution: r >= {MIN_SCALE_RATIO} h "
                f"needs n >= {math.ceil(MIN_SCALE_RATIO / r)}, coarsest grid has n = {resolutions[0]}")
    parts = []
    for n in resolutions:
        grid = GridSpec(n)
        parts.append(closeness_regular_part(
            grid, _onsite(x, n), _onsite(y, n), r, tol=tol, cache=cache, fullspace=fullspace))
    extrapolated = 2.0 * parts[-1] - parts[-2]
    return ClosenessResult(
        x=tuple(float(t) for t in x), y=tuple(float(t) for t in y), r=float(r),
        resolutions=resolutions, regular_parts=parts,
        monitored=abs(parts[0] - extrapolated),
        scale_ratio_enforced=enforce_scale_ratio,
    )
