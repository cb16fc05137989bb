import json

import pytest

from membranelab.cli import main


def run(argv):
    return main([str(a) for a in argv])


def test_green_with_dense_check(tmp_path):
    out = tmp_path / "out"
    code = run(["green", "--n", 4, "--out", out, "--cache-dir", tmp_path / "c",
                "--check-dense", "--tol", "1e-10", "--no-figures", "--threads", 1])
    assert code == 0
    doc = json.loads((out / "green_n4.json").read_text())
    assert doc["dense_oracle_max_rel_error"] <= 1e-8
    assert (out / "green_n4_2_2_2_2.mbf").exists()
    assert (out / "green_n4.meta.json").exists()


def test_scheme_rate_zero_solution(tmp_path):
    out = tmp_path / "out"
    code = run(["scheme-rate", "--sol", "zero", "--n", 4, "--n", 6, "--n", 8,
                "--out", out, "--no-figures"])
    assert code == 0
    doc = json.loads((out / "scheme_zero.json").read_text())
    assert doc["w22_rate"] is None
    assert (out / "scheme_zero.csv").exists()


def test_sample_with_fields(tmp_path):
    out = tmp_path / "out"
    code = run(["sample", "--n", 4, "--samples", 3, "--seed", 11,
                "--out", out, "--keep-fields"])
    assert code == 0
    assert (out / "sample_n4.csv").exists()
    assert (out / "sample_n4.png").exists()
    fields = sorted((out / "sample_n4_fields").glob("*.mbf"))
    assert len(fields) == 3


def test_extremes_reports_and_figures(tmp_path):
    out = tmp_path / "out"
    code = run(["extremes", "--n", 4, "--n", 6, "--samples", 12, "--seed", 3,
                "--out", out])
    assert code == 0
    doc = json.loads((out / "extremes.json").read_text())
    assert [lv["n"] for lv in doc["levels"]] == [4, 6]
    assert (out / "extremes_hist_n4.csv").exists()
    assert (out / "extremes_hist.png").exists()


def test_verify_subcommands(tmp_path):
    out = tmp_path / "out"
    cache = tmp_path / "cache"
    assert run(["verify-b0", "--n", 8, "--out", out, "--cache-dir", cache]) == 0
    assert run(["verify-b1", "--n", 8, "--out", out, "--cache-dir", cache]) == 0
    b1 = json.loads((out / "covariance_log_n8.json").read_text())
    assert b1["pair_count"] > 0
    assert b1["cache_hashes"]
    assert (out / "covariance_log_n8.csv").exists()
    assert (out / "covariance_log_n8.png").exists()
    # no subcommand touches the cache of another grid size
    assert sorted(p.name for p in cache.iterdir()) == ["n0008"]


def test_near_and_off_diagonal(tmp_path):
    out = tmp_path / "out"
    cache = tmp_path / "cache"
    assert run(["near-diagonal", "--n", 8, "--n", 16, "--out", out,
                "--cache-dir", cache, "--no-figures"]) == 0
    assert run(["off-diagonal", "--n", 8, "--n", 16, "--out", out,
                "--cache-dir", cache, "--no-figures"]) == 0
    nd = json.loads((out / "near_diagonal.json").read_text())
    assert nd["depth_threshold_satisfied"] is False


def test_inequalities(tmp_path):
    out = tmp_path / "out"
    assert run(["inequalities", "--n", 8, "--trials", 2, "--out", out,
                "--cache-dir", tmp_path / "c", "--no-figures"]) == 0
    doc = json.loads((out / "inequalities.json").read_text())
    assert doc["pointwise_energy"][0]["n"] == 8
    assert doc["poincare"][0]["ratio"] <= doc["poincare"][0]["bound"]


def test_closeness_precondition_exit_code(tmp_path):
    code = run(["closeness", "--n", 8, "--n", 16, "--n", 32, "--r", 0.25,
                "--out", tmp_path / "o", "--cache-dir", tmp_path / "c"])
    assert code == 1   # explicit precondition failure


def test_closeness_relaxed(tmp_path):
    code = run(["closeness", "--n", 8, "--n", 16, "--r", 0.25,
                "--relax-scale-ratio",
                "--out", tmp_path / "o", "--cache-dir", tmp_path / "c"])
    # still requires at least three resolutions
    assert code == 1
    code = run(["closeness", "--n", 8, "--n", 16, "--n", 32, "--r", 0.25,
                "--relax-scale-ratio",
                "--out", tmp_path / "o", "--cache-dir", tmp_path / "c"])
    assert code == 0
    doc = json.loads((tmp_path / "o" / "closeness.json").read_text())
    assert doc["scale_ratio_enforced"] is False


def test_large_grid_guard(tmp_path):
    code = run(["green", "--n", 56, "--out", tmp_path / "o", "--cache-dir", tmp_path / "c"])
    assert code == 2


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        run(["no-such-command"])
    assert exc.value.code == 2


def test_config_file_merge(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("seed=5\n# comment\ntol=1e-7\n")
    out1 = tmp_path / "o1"
    assert run(["verify-b0", "--n", 8, "--config", cfg, "--out", out1,
                "--cache-dir", tmp_path / "c"]) == 0
    doc = json.loads((out1 / "variance_bounds_n8.json").read_text())
    assert doc["seed"] == 5
    assert doc["tolerance"] == 1e-7
    # explicit flag wins over the config file
    out2 = tmp_path / "o2"
    assert run(["verify-b0", "--n", 8, "--config", cfg, "--seed", 9,
                "--out", out2, "--cache-dir", tmp_path / "c"]) == 0
    doc2 = json.loads((out2 / "variance_bounds_n8.json").read_text())
    assert doc2["seed"] == 9


def test_config_file_rejects_unknown_keys(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("wibble=1\n")
    assert run(["verify-b0", "--n", 8, "--config", cfg,
                "--out", tmp_path / "o", "--cache-dir", tmp_path / "c"]) == 2


def test_reports_byte_identical_with_cache(tmp_path):
    cache = tmp_path / "cache"
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    for out in (out1, out2):
        assert run(["verify-b1", "--n", 8, "--seed", 1, "--out", out,
                    "--cache-dir", cache, "--no-figures"]) == 0
    j1 = (out1 / "covariance_log_n8.json").read_bytes()
    j2 = (out2 / "covariance_log_n8.json").read_bytes()
    assert j1 == j2
    c1 = (out1 / "covariance_log_n8.csv").read_bytes()
    c2 = (out2 / "covariance_log_n8.csv").read_bytes()
    assert c1 == c2


def test_fullspace_report(tmp_path):
    out = tmp_path / "out"
    code = run(["fullspace", "--radius", 8, "--radius", 16,
                "--out", out, "--cache-dir", tmp_path / "c"])
    assert code == 0
    doc = json.loads((out / "fullspace.json").read_text())
    assert len(doc["octave_ratios"]) == 1
    assert (out / "fullspace.png").exists()
