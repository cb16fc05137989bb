import math

import numpy as np
import pytest

from membranelab.greens import LAMBDA_SQ, ColumnCache, solve_green_column
from membranelab.lattice import Field, GridSpec
from membranelab.verify import (
    PreconditionError,
    check_closeness,
    check_covariance_log,
    check_easy_bound,
    check_poincare,
    check_poincare_sobolev,
    check_variance_bounds,
    closeness_regular_part,
    covariance_log_model,
    near_diagonal_limit,
    off_diagonal_limit,
    stratified_pairs,
    _ps_ratio,
)


@pytest.fixture(scope="module")
def cache(tmp_path_factory):
    return ColumnCache(tmp_path_factory.mktemp("columns"))


def test_stratified_pairs_deterministic_and_in_box():
    grid = GridSpec(8)
    p1 = stratified_pairs(grid, seed=1)
    p2 = stratified_pairs(grid, seed=1)
    assert p1 == p2
    assert stratified_pairs(grid, seed=2) != p1
    for x, y in p1:
        assert grid.contains(x) and grid.contains(y)
        assert x != y


def test_covariance_log_model_center_specialization():
    grid = GridSpec(16)
    c = grid.center
    # x = y at the center: the model reduces to log(2 + (1/2)/h)
    assert covariance_log_model(grid, c, c) == pytest.approx(math.log(2.0 + 8.0))
    # boundary pair: depth zero gives log 2
    assert covariance_log_model(grid, (0, 3, 5, 0), (0, 9, 5, 0)) == pytest.approx(
        math.log(2.0), abs=1e-12)


def test_covariance_log_check(cache):
    grid = GridSpec(8)
    res = check_covariance_log(grid, seed=1, cache=cache)
    assert np.isfinite(res.deviation)
    assert res.pair_count > 100
    assert len(res.details) == res.pair_count
    # deviation at a specific pair is a pure function of the two columns,
    # independent of the sampling plan
    x, y = res.worst_pair
    col = solve_green_column(grid, x, tol=1e-8)
    expected = abs(LAMBDA_SQ * col.at(y) - covariance_log_model(grid, x, y))
    assert res.deviation == pytest.approx(expected, abs=1e-12)


def test_covariance_log_rejects_tiny_grid():
    with pytest.raises(ValueError):
        check_covariance_log(GridSpec(4))


def test_variance_bounds(cache):
    grid = GridSpec(8)
    res = check_variance_bounds(grid, seed=1, cache=cache)
    assert res.constant >= 0.0
    c = grid.center
    col = solve_green_column(grid, c, tol=1e-8)
    # first bound holds with the returned constant at the center
    assert LAMBDA_SQ * col.at(c) <= math.log(grid.n) + res.constant + 1e-12
    # near-boundary plug-in: the depth bound at d = 1
    site = (1, 4, 4, 4)
    col_b = solve_green_column(grid, site, tol=1e-8)
    assert LAMBDA_SQ * col_b.at(site) <= res.constant * math.log(3.0) + 1e-12


def test_variance_bounds_cross_consistency_with_near_diagonal(cache):
    # the near-diagonal value at u = v = 0 obeys the first variance bound
    from membranelab.greens import default_fullspace

    grid = GridSpec(8)
    vb = check_variance_bounds(grid, seed=1, cache=cache)
    nd = near_diagonal_limit((0.5,) * 4, [8, 16], u=(0, 0, 0, 0), v=(0, 0, 0, 0), cache=cache)
    f0 = LAMBDA_SQ * default_fullspace()((0, 0, 0, 0))
    assert nd.values[0] + f0 <= vb.constant + 1e-12


def test_near_diagonal_offset_symmetry(cache):
    a = near_diagonal_limit((0.5,) * 4, [8, 16], u=(1, 0, 0, 0), v=(0, 0, 0, 0), cache=cache)
    b = near_diagonal_limit((0.5,) * 4, [8, 16], u=(0, 0, 0, 0), v=(1, 0, 0, 0), cache=cache)
    # exact up to the conjugate-gradient tolerance of the two columns
    assert a.values == pytest.approx(b.values, abs=1e-7)


def test_near_diagonal_box_symmetry(cache):
    tol = 1e-9
    a = near_diagonal_limit((0.25,) * 4, [8, 16], tol=tol, cache=cache)
    b = near_diagonal_limit((0.75,) * 4, [8, 16], tol=tol, cache=cache)
    assert a.extrapolated == pytest.approx(b.extrapolated, abs=3 * (2 * tol) + 1e-9)


def test_near_diagonal_threshold_recorded_not_enforced(cache):
    res = near_diagonal_limit((0.5,) * 4, [8, 16], cache=cache)
    # the polylog depth threshold is far out of reach at n = 8; the run
    # proceeds and the bookkeeping records the violation
    assert res.depth_threshold_satisfied is False
    assert res.depth_threshold_margin < 0.0


def test_near_diagonal_offgrid_rejected(cache):
    with pytest.raises(ValueError):
        near_diagonal_limit((1 / 3,) * 4, [8, 16], cache=cache)


def test_off_diagonal_symmetry_and_guard(cache):
    a = off_diagonal_limit((0.25,) * 4, (0.75,) * 4, [8, 16], cache=cache)
    b = off_diagonal_limit((0.75,) * 4, (0.25,) * 4, [8, 16], cache=cache)
    assert a.values == pytest.approx(b.values, abs=1e-10)
    with pytest.raises(ValueError):
        off_diagonal_limit((0.25,) * 4, (0.25,) * 4, [8, 16], cache=cache)


def test_off_diagonal_corner_pair_within_envelope(cache):
    # small-covariance pair near opposite corners: the extrapolated value
    # stays inside the covariance-log envelope measured on the same grid
    grid = GridSpec(8)
    b1 = check_covariance_log(grid, seed=1, cache=cache)
    od = off_diagonal_limit((0.125,) * 4, (0.875,) * 4, [8, 16], cache=cache)
    slack = 2.0 * abs(od.differences[-1])
    assert abs(od.extrapolated) <= b1.deviation + math.log(3.0) + slack


def test_poincare_sobolev_single_spike():
    grid = GridSpec(8)
    spike = Field.zeros(grid)
    spike.values[grid.center] = 1.0
    ratio = _ps_ratio(spike)
    assert np.isfinite(ratio) and ratio > 0.0
    # interior-constant field: denominator carried by the boundary layer
    box = Field(grid, np.ones(grid.shape))
    ratio2 = _ps_ratio(box)
    assert np.isfinite(ratio2) and ratio2 > 0.0


def test_poincare_sobolev_suite(cache):
    res = check_poincare_sobolev(GridSpec(8), trial_count=4, seed=1, cache=cache)
    assert res.constant > 0.0
    assert res.trial_count == 8
    res2 = check_poincare_sobolev(GridSpec(8), trial_count=4, seed=1, cache=cache)
    assert res2.constant == res.constant    # reproducible


def test_poincare_random_fields_under_bound():
    res = check_poincare(GridSpec(12), trial_count=12, seed=7)
    assert res.ratio <= res.bound


def test_easy_bound_constant(cache):
    grid = GridSpec(8)
    cols = [cache.get(grid, s, tol=1e-8) for s in
            [grid.center, (1, 4, 4, 4), (0, 2, 6, 3), (2, 2, 2, 2)]]
    res = check_easy_bound(cols)
    assert res.constant <= 1.0


def test_closeness_preconditions():
    # r >= 192 h cannot hold at desk resolutions: explicit report, no silent relaxing
    with pytest.raises(PreconditionError, match="unsatisfiable"):
        check_closeness((0.5,) * 4, (0.5,) * 4, [8, 16, 32], r=0.25)
    with pytest.raises(PreconditionError):
        check_closeness((0.5,) * 4, (0.5,) * 4, [8, 16, 32], r=0.25, K=1.0)
    with pytest.raises(PreconditionError):
        # r outside [d(y)/K, d(y)/2]
        check_closeness((0.5,) * 4, (0.5,) * 4, [8, 16, 32], r=0.4)


def test_closeness_diagnostic_run(cache):
    res = check_closeness((0.5,) * 4, (0.5,) * 4, [8, 16, 32], r=0.25,
                          cache=cache, enforce_scale_ratio=False)
    assert res.scale_ratio_enforced is False
    assert np.isfinite(res.monitored)
    assert len(res.regular_parts) == 3


def test_closeness_shift_invariance_under_r_doubling(cache):
    # with the cutoff identically 1 (here |x-y| = 0 < r/2, the only separation
    # compatible with r <= d(y)/2 on desk grids) the shift of both terms
    # cancels in the monitored difference
    x = (0.5, 0.5, 0.5, 0.5)
    a = check_closeness(x, x, [8, 16, 32], r=0.125, K=4.0, cache=cache,
                        enforce_scale_ratio=False)
    b = check_closeness(x, x, [8, 16, 32], r=0.25, K=2.0, cache=cache,
                        enforce_scale_ratio=False)
    assert a.monitored == pytest.approx(b.monitored, abs=1e-12)
    # and the per-resolution parts shift by exactly log(2)/lambda^2
    shift = math.log(2.0) / LAMBDA_SQ
    for pa, pb in zip(a.regular_parts, b.regular_parts):
        assert pb - pa == pytest.approx(-shift, abs=1e-12)


def test_closeness_regular_part_is_b2_style_residual(cache):
    # at x = y the regularized value is the near-diagonal quantity up to the
    # r-shift: G(x,x) - F(0) - (log r + log n)/lambda^2
    grid = GridSpec(8)
    from membranelab.greens import default_fullspace
    val = closeness_regular_part(grid, grid.center, grid.center, r=0.25, cache=cache)
    col = cache.get(grid, grid.center, tol=1e-8)
    f0 = default_fullspace()((0, 0, 0, 0))
    expected = col.at(grid.center) - f0 - (math.log(0.25) + math.log(8)) / LAMBDA_SQ
    assert val == pytest.approx(expected, abs=1e-12)


def test_assumption_report_bundle(cache):
    from membranelab.verify import build_assumption_report
    from membranelab.reports import assumption_report_doc, json_bytes

    rep = build_assumption_report([8, 16], seed=1, cache=cache)
    assert rep.grids == [8, 16]
    assert len(rep.variance_bounds) == 2
    assert all(np.isfinite(r.deviation) for r in rep.covariance_log)
    doc = assumption_report_doc(rep, {"n0008": "stub"})
    blob = json_bytes(doc)
    assert b"pair_sampling_plan" in blob
    rep2 = build_assumption_report([8, 16], seed=1, cache=cache)
    assert json_bytes(assumption_report_doc(rep2, {"n0008": "stub"})) == blob
