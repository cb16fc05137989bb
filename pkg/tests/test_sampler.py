import numpy as np
import pytest

from membranelab.greens import solve_green_column
from membranelab.lattice import GridSpec
from membranelab.sampler import batch_csv_rows, sample_batch, sample_field


def test_reproducible_bit_for_bit():
    grid = GridSpec(6)
    b1 = sample_batch(grid, seed=42, count=3, tol=1e-6)
    b2 = sample_batch(grid, seed=42, count=3, tol=1e-6, keep_fields=True)
    for s1, s2 in zip(b1.summaries, b2.summaries):
        assert s1.maximum == s2.maximum
        assert s1.argmax == s2.argmax
        assert s1.z_statistic == s2.z_statistic


def test_count_one_matches_sample_field():
    grid = GridSpec(6)
    batch = sample_batch(grid, seed=9, count=1, tol=1e-6, keep_fields=True)
    lone = sample_field(grid, seed=9, tol=1e-6, sample_index=0)
    assert np.array_equal(batch.fields[0].values, lone.values)


def test_different_seeds_differ():
    grid = GridSpec(6)
    f1 = sample_field(grid, seed=1, tol=1e-6)
    f2 = sample_field(grid, seed=2, tol=1e-6)
    assert not np.array_equal(f1.values, f2.values)


def test_summaries_invariant_to_keep_fields():
    grid = GridSpec(5)
    a = sample_batch(grid, seed=3, count=4, tol=1e-6, keep_fields=False)
    b = sample_batch(grid, seed=3, count=4, tol=1e-6, keep_fields=True)
    assert [s.maximum for s in a.summaries] == [s.maximum for s in b.summaries]
    assert [s.z_statistic for s in a.summaries] == [s.z_statistic for s in b.summaries]
    assert not a.fields and len(b.fields) == 4


def test_field_zero_outside_box():
    grid = GridSpec(5)
    f = sample_field(grid, seed=4, tol=1e-6)
    assert f.value_at((6, 0, 0, 0)) == 0.0
    assert f.value_at((-1, 2, 2, 2)) == 0.0


def test_sample_moments_match_green_function():
    # centred Gaussian with covariance given by the solved Green column
    grid = GridSpec(6)
    count = 500
    c = grid.center
    nb = (c[0] + 1, c[1], c[2], c[3])
    batch = sample_batch(grid, seed=2026, count=count, tol=1e-6, keep_fields=True)
    vc = np.array([f.values[c] for f in batch.fields])
    vn = np.array([f.values[nb] for f in batch.fields])
    col = solve_green_column(grid, c, tol=1e-10)
    var_true = col.at(c)
    cov_true = col.at(nb)
    # mean within 3 standard errors
    assert abs(vc.mean()) <= 3.0 * np.sqrt(var_true / count)
    # variance of the sample variance ~ 2 var^2 / count
    assert abs(vc.var(ddof=1) - var_true) <= 4.0 * var_true * np.sqrt(2.0 / count)
    cov_emp = float(np.cov(vc, vn, ddof=1)[0, 1])
    sd_cov = np.sqrt((var_true * col.at(nb) + cov_true**2 + var_true**2) / count)
    assert abs(cov_emp - cov_true) <= 4.0 * sd_cov


def test_covariance_aggregate_z_scores():
    # chi^2-style check across several site pairs
    grid = GridSpec(8)
    count = 400
    batch = sample_batch(grid, seed=11, count=count, tol=1e-6, keep_fields=True)
    c = grid.center
    col = solve_green_column(grid, c, tol=1e-10)
    vc = np.array([f.values[c] for f in batch.fields])
    zsq = []
    for site in [(4, 4, 4, 5), (5, 4, 4, 4), (3, 5, 5, 3), (2, 4, 6, 4), (4, 4, 4, 4)]:
        vs = np.array([f.values[site] for f in batch.fields])
        if site == c:
            emp = vc.var(ddof=1)
            true = col.at(c)
            sd = true * np.sqrt(2.0 / count)
        else:
            emp = float(np.cov(vc, vs, ddof=1)[0, 1])
            true = col.at(site)
            var_s = solve_green_column(grid, site, tol=1e-10).at(site)
            sd = np.sqrt((col.at(c) * var_s + true**2) / count)
        zsq.append(((emp - true) / sd) ** 2)
    assert 0.05 <= float(np.mean(zsq)) <= 3.0


def test_symmetry_equivariance_of_variance():
    # variance at a site and at its mirror image agree within 3 standard errors
    grid = GridSpec(5)
    count = 400
    batch = sample_batch(grid, seed=12, count=count, tol=1e-6, keep_fields=True)
    site = (1, 2, 3, 2)
    mirror = (4, 2, 3, 2)   # reflection across the mid-plane of axis 1
    va = np.array([f.values[site] for f in batch.fields]).var(ddof=1)
    vb = np.array([f.values[mirror] for f in batch.fields]).var(ddof=1)
    se = va * np.sqrt(2.0 / count)
    assert abs(va - vb) <= 3.0 * np.sqrt(2.0) * se


def test_batch_csv_rows():
    grid = GridSpec(5)
    batch = sample_batch(grid, seed=5, count=2, tol=1e-6)
    rows = batch_csv_rows(batch)
    assert rows[0][0] == "index"
    assert len(rows) == 3
    assert rows[1][0] == 0


def test_invalid_arguments():
    grid = GridSpec(5)
    with pytest.raises(ValueError):
        sample_batch(grid, seed=1, count=0)
    with pytest.raises(ValueError):
        sample_field(grid, seed=1, tol=0.0)
