import json
import shutil

import numpy as np
import pytest
from click.testing import CliRunner

from siggm.cli import main, payload_fc_vector, payload_to_precision

runner = CliRunner()


def run_ok(args):
    result = runner.invoke(main, args, catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return result


@pytest.fixture(scope="module")
def bundle(tmp_path_factory):
    d = tmp_path_factory.mktemp("data") / "bundle"
    run_ok(["simulate", "--structure", "er", "--p", "10", "--t", "150",
            "--seed", "3", "--out", str(d), "--verify"])
    return d


@pytest.fixture(scope="module")
def estimate_json(bundle, tmp_path_factory):
    out = tmp_path_factory.mktemp("est") / "est.json"
    run_ok(["estimate", str(bundle / "timeseries.csv"),
            "--sc", str(bundle / "sc.csv"), "--out", str(out)])
    return out


# ---------------------------------------------------------------------------
# estimate


def test_estimate_output_schema(estimate_json):
    payload = json.loads(estimate_json.read_text())
    for key in ("format_version", "p", "omega_diag", "omega_triplets",
                "partial_correlation_triplets", "alpha", "mu", "eta",
                "selected_nu", "bic", "n_iter", "converged",
                "wall_time_seconds", "config"):
        assert key in payload, key
    assert payload["p"] == 10
    assert len(payload["alpha"]) == 45
    assert payload["eta"] is not None
    est = payload_to_precision(payload)  # rebuilds a valid PD matrix
    assert est.p == 10


def test_estimate_without_sc_matches_eta_zero_and_nulls_eta(bundle, tmp_path):
    out = tmp_path / "nosc.json"
    run_ok(["estimate", str(bundle / "timeseries.csv"), "--out", str(out)])
    payload = json.loads(out.read_text())
    assert payload["eta"] is None

    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"mode": "eta_zero"}))
    out2 = tmp_path / "eta0.json"
    run_ok(["estimate", str(bundle / "timeseries.csv"),
            "--sc", str(bundle / "sc.csv"), "--config", str(cfg),
            "--out", str(out2)])
    payload2 = json.loads(out2.read_text())
    assert payload["omega_triplets"] == payload2["omega_triplets"]


def test_estimate_corrupt_csv_exit_2_with_line_number(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("1.0,2.0\n3.0,oops\n")
    result = runner.invoke(main, ["estimate", str(bad), "--out", str(tmp_path / "x.json")])
    assert result.exit_code == 2
    assert "line 2" in result.output


def test_estimate_dimension_mismatch_exit_2(bundle, tmp_path):
    small_sc = tmp_path / "sc3.csv"
    np.savetxt(small_sc, np.zeros((3, 3)), delimiter=",")
    result = runner.invoke(main, ["estimate", str(bundle / "timeseries.csv"),
                                  "--sc", str(small_sc),
                                  "--out", str(tmp_path / "x.json")])
    assert result.exit_code == 2
    assert "mismatch" in result.output


# ---------------------------------------------------------------------------
# simulate


def test_simulate_deterministic_bundles(tmp_path):
    args = ["simulate", "--structure", "er", "--p", "12", "--t", "30",
            "--scenario", "MI", "--misspec", "0.1", "--seed", "7"]
    run_ok(args + ["--out", str(tmp_path / "a")])
    run_ok(args + ["--out", str(tmp_path / "b")])
    for name in ("omega_true.csv", "sc.csv", "timeseries.csv", "meta.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_meta_records_parameters(tmp_path):
    run_ok(["simulate", "--structure", "sw", "--p", "14", "--t", "25",
            "--scenario", "MII", "--misspec", "0.2", "--seed", "9",
            "--out", str(tmp_path / "c")])
    meta = json.loads((tmp_path / "c" / "meta.json").read_text())
    assert meta["structure"] == "sw" and meta["scenario"] == "MII"
    assert meta["misspec_frac"] == 0.2 and meta["seed"] == 9
    assert meta["p"] == 14 and meta["T"] == 25


# ---------------------------------------------------------------------------
# metrics


def test_metrics_round_trip(bundle, estimate_json, tmp_path):
    out = tmp_path / "metrics.json"
    run_ok(["metrics", str(estimate_json), "--truth", str(bundle), "--out", str(out)])
    rec = json.loads(out.read_text())
    assert rec["tp"] + rec["tn"] + rec["fp"] + rec["fn"] == 45
    assert -1.0 <= rec["mcc"] <= 1.0
    assert rec["l1"] >= 0.0
    assert "eglob_bias" in rec


# ---------------------------------------------------------------------------
# bench


def bench_config(tmp_path, **kw):
    cfg = {"structures": ["er"], "p_values": [12], "scenarios": [["MI", 0.1]],
           "T": 80, "n_replicates": 1, "methods": ["siggm", "glasso"],
           "master_seed": 5}
    cfg.update(kw)
    path = tmp_path / "bench_cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def test_bench_deterministic_across_reruns(tmp_path):
    cfg = bench_config(tmp_path)
    run_ok(["bench", "--config", str(cfg), "--out", str(tmp_path / "r1.json")])
    run_ok(["bench", "--config", str(cfg), "--out", str(tmp_path / "r2.json")])
    r1 = json.loads((tmp_path / "r1.json").read_text())["rows"]
    r2 = json.loads((tmp_path / "r2.json").read_text())["rows"]
    for a, b in zip(r1, r2):
        for key in ("method", "mcc", "auc", "l1", "eglob_bias"):
            assert a[key] == b[key]
    assert (tmp_path / "r1.txt").exists()  # rendered table


def test_bench_independent_of_thread_count(tmp_path, monkeypatch):
    cfg = bench_config(tmp_path, n_replicates=2)
    monkeypatch.setenv("SIGGM_THREADS", "1")
    run_ok(["bench", "--config", str(cfg), "--out", str(tmp_path / "t1.json")])
    monkeypatch.setenv("SIGGM_THREADS", "2")
    run_ok(["bench", "--config", str(cfg), "--out", str(tmp_path / "t2.json")])
    r1 = json.loads((tmp_path / "t1.json").read_text())["rows"]
    r2 = json.loads((tmp_path / "t2.json").read_text())["rows"]
    for a, b in zip(r1, r2):
        for key in ("method", "mcc", "auc", "l1", "eglob_bias"):
            assert a[key] == b[key]


def test_bench_sweep_misspec_csv(tmp_path):
    cfg = bench_config(tmp_path, methods=["siggm"])
    out = tmp_path / "sweep.csv"
    run_ok(["bench", "--config", str(cfg), "--out", str(out),
            "--sweep-misspec", "0.1:0.3:0.2"])
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "method,misspec,l1,l1_se,auc,mcc"
    assert len(lines) == 3  # two misspec levels x one method


def test_bench_bad_sweep_spec_exit_2(tmp_path):
    cfg = bench_config(tmp_path)
    result = runner.invoke(main, ["bench", "--config", str(cfg),
                                  "--out", str(tmp_path / "x.csv"),
                                  "--sweep-misspec", "nonsense"])
    assert result.exit_code == 2


# ---------------------------------------------------------------------------
# icc


def _estimate_into(dirpath, bundle_dir, name):
    dirpath.mkdir(parents=True, exist_ok=True)
    run_ok(["estimate", str(bundle_dir / "timeseries.csv"),
            "--sc", str(bundle_dir / "sc.csv"), "--out", str(dirpath / name)])


@pytest.fixture(scope="module")
def subject_dir(tmp_path_factory):
    base = tmp_path_factory.mktemp("subjects")
    for seed in (1, 2, 3):
        b = base / f"bundle{seed}"
        run_ok(["simulate", "--structure", "er", "--p", "10", "--t", "120",
                "--seed", str(seed), "--out", str(b)])
        _estimate_into(base / "session1", b, f"sub{seed}.json")
    return base


def test_icc_duplicated_sessions_all_one(subject_dir, tmp_path):
    s2 = tmp_path / "session2"
    shutil.copytree(subject_dir / "session1", s2)
    out = tmp_path / "icc.json"
    result = run_ok(["icc", str(subject_dir / "session1"), str(s2), "--out", str(out)])
    rows = json.loads(out.read_text())["rows"]
    assert len(rows) == 5
    for row in rows:
        if row["icc"] is not None:
            assert np.isclose(row["icc"], 1.0)
            assert row["label"] == "near perfect"
    assert "near perfect" in result.output


def test_icc_unmatched_subjects_exit_2(subject_dir, tmp_path):
    s2 = tmp_path / "session2"
    shutil.copytree(subject_dir / "session1", s2)
    (s2 / "sub1.json").rename(s2 / "other.json")
    result = runner.invoke(main, ["icc", str(subject_dir / "session1"), str(s2),
                                  "--out", str(tmp_path / "x.json")])
    assert result.exit_code == 2
    assert "sub1.json" in result.output and "other.json" in result.output


# ---------------------------------------------------------------------------
# dwe


def test_dwe_identical_groups_zero_table(subject_dir, tmp_path):
    modules = tmp_path / "modules.csv"
    modules.write_text("node,module\n" + "\n".join(f"{i},{i // 5}" for i in range(10)))
    out = tmp_path / "dwe.json"
    run_ok(["dwe", str(subject_dir / "session1"), str(subject_dir / "session1"),
            str(modules), "--out", str(out), "--n-perm", "200"])
    rec = json.loads(out.read_text())
    assert rec["n_dwe"] == 0
    assert all(r["Q"] == 0.0 for r in rec["blocks"])
    total = sum(r["Q"] for r in rec["blocks"])
    assert total == rec["n_dwe"]


def test_dwe_missing_module_labels_exit_2(subject_dir, tmp_path):
    modules = tmp_path / "short.csv"
    modules.write_text("node,module\n0,0\n1,0\n")
    result = runner.invoke(main, ["dwe", str(subject_dir / "session1"),
                                  str(subject_dir / "session1"), str(modules),
                                  "--out", str(tmp_path / "x.json")])
    assert result.exit_code == 2
    assert "missing module labels" in result.output


def test_payload_fc_vector_round_trip(estimate_json):
    payload = json.loads(estimate_json.read_text())
    vec = payload_fc_vector(payload)
    assert vec.shape == (45,)
    nz = np.count_nonzero(vec)
    assert nz == len(payload["partial_correlation_triplets"])
