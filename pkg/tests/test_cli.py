import json
import shutil
import subprocess

import numpy as np
import pytest

from ivrobust.cli import SCHEMA_VERSION, main
from ivrobust.simulator import constant_effect_config, draw_sample, heterogeneous_config

from conftest import FIXTURES

E2_ARGS = ["--outcome", "Y", "--endogenous", "D", "--instruments", "Z1,Z2"]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _write_config(path, cfg):
    path.write_text(json.dumps(cfg.to_dict()))
    return str(path)


def _write_csv(path, data):
    names = data.column_names
    rows = np.column_stack([data[c] for c in names])
    np.savetxt(path, rows, delimiter=",", header=",".join(names), comments="", fmt="%.17g")
    return str(path)


def test_estimate_json_e2(capsys):
    code, out, _ = run(capsys, "estimate", "--data", str(FIXTURES / "e2.csv"), *E2_ARGS, "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert doc["schema_version"] == SCHEMA_VERSION
    assert doc["rho"] == pytest.approx(3.0, abs=1e-12)
    assert doc["se_c"] == pytest.approx(0.5 ** 0.5, abs=1e-4)
    assert doc["se_mr"] == pytest.approx((25.5 / 6) ** 0.5, abs=1e-4)
    assert doc["diagnostics"]["j_dof"] == 1
    assert [c["name"] for c in doc["coefficients"]] == ["const", "D"]


def test_estimate_text_matches_json(capsys):
    args = ["estimate", "--data", str(FIXTURES / "e2.csv"), *E2_ARGS]
    _, text, _ = run(capsys, *args)
    _, js, _ = run(capsys, *args, "--format", "json")
    doc = json.loads(js)
    row = next(l for l in text.splitlines() if l.startswith("D "))
    printed = [float(x) for x in row.split()[1:]]
    expected = [doc["rho"], doc["se_c"], doc["se_mr"]]
    assert [f"{x:.6g}" for x in printed] == [f"{x:.6g}" for x in expected]
    assert "J test" in text and "Cragg-Donald" in text


def test_missing_file(capsys, tmp_path):
    path = tmp_path / "nope.csv"
    code, _, err = run(capsys, "estimate", "--data", str(path), *E2_ARGS)
    assert code == 2 and str(path) in err


def test_cluster_vce_without_cluster(capsys):
    code, _, err = run(capsys, "estimate", "--data", str(FIXTURES / "e2.csv"), *E2_ARGS, "--vce", "cluster-mr")
    assert code == 2 and "cluster id required" in err


def test_unknown_column(capsys):
    code, _, err = run(capsys, "estimate", "--data", str(FIXTURES / "e2.csv"), "--outcome", "Y",
                       "--endogenous", "D", "--instruments", "Z9")
    assert code == 2 and "Z9" in err


def test_numerical_failure_exit_code(capsys):
    # E2 perfectly separates D given Z, so the logit first stage diverges
    code, _, err = run(capsys, "psiv", "--data", str(FIXTURES / "e2.csv"), *E2_ARGS)
    assert code == 3 and "psiv" in err


def test_cluster_estimate(capsys, tmp_path):
    cfg = heterogeneous_config(n=400, n_clusters=20, cluster_sd=1.0, seed=3)
    path = _write_csv(tmp_path / "c.csv", draw_sample(cfg))
    code, out, _ = run(capsys, "estimate", "--data", path, *E2_ARGS, "--cluster", "cluster",
                       "--vce", "c,mr,cluster-mr", "--format", "json")
    doc = json.loads(out)
    assert code == 0 and doc["variance"]["cmr"]["n_clusters"] == 20
    assert doc["se_cmr"] > 0


def test_psiv_and_bootstrap_subcommands(capsys, tmp_path):
    cfg = heterogeneous_config(n=500, seed=4)
    path = _write_csv(tmp_path / "d.csv", draw_sample(cfg))
    code, out, _ = run(capsys, "psiv", "--data", path, *E2_ARGS, "--format", "json")
    doc = json.loads(out)
    assert code == 0 and doc["se"] > 0 and abs(doc["rho"] - 3) < 1.5

    code, out, _ = run(capsys, "bootstrap", "--data", path, *E2_ARGS, "--reps", "99", "--seed", "1",
                       "--format", "json")
    doc = json.loads(out)
    assert code == 0 and doc["B"] == 99 and doc["studentizer"] == "MR"
    lo, hi = doc["ci"]["0.05"]["symmetric"]
    assert lo < doc["estimate"] < hi

    code, out, _ = run(capsys, "bootstrap", "--data", path, *E2_ARGS, "--reps", "99", "--seed", "1")
    assert code == 0 and "Percentile-t" in out


def test_bootstrap_generates_seed(capsys, tmp_path):
    path = _write_csv(tmp_path / "d.csv", draw_sample(heterogeneous_config(n=200, seed=5)))
    code, out, err = run(capsys, "bootstrap", "--data", path, *E2_ARGS, "--reps", "99", "--format", "json")
    assert code == 0
    seed = int(err.split("seed:")[1].split()[0])
    assert json.loads(out)["seed"] == seed


def test_simulate_byte_identical(capsys, tmp_path):
    cfg = _write_config(tmp_path / "cfg.json", constant_effect_config(n=500))
    outs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        code, out, _ = run(capsys, "simulate", "--config", cfg, "--reps", "50", "--seed", "9",
                           "--out-dir", str(d), "--format", "json")
        assert code == 0
        outs.append((out, (d / "summary.json").read_bytes(), (d / "replicates.csv").read_bytes()))
    assert outs[0] == outs[1]
    assert outs[0][2].splitlines()[0] == b"rep,rho_hat,se_c,se_mr,j_pvalue,f_robust,pct_se_diff"


def test_simulate_threads_do_not_matter(capsys, tmp_path, monkeypatch):
    cfg = _write_config(tmp_path / "cfg.json", heterogeneous_config(n=300))
    _, a, _ = run(capsys, "simulate", "--config", cfg, "--reps", "20", "--seed", "2", "--threads", "1")
    monkeypatch.setenv("IVROBUST_THREADS", "3")
    _, b, _ = run(capsys, "simulate", "--config", cfg, "--reps", "20", "--seed", "2")
    assert a == b


def test_simulate_heterogeneous_se_pattern(capsys, tmp_path):
    cfg = _write_config(tmp_path / "cfg.json", heterogeneous_config())
    code, out, _ = run(capsys, "simulate", "--config", cfg, "--reps", "200", "--n", "2000", "--seed", "13",
                       "--format", "json")
    doc = json.loads(out)
    assert code == 0 and doc["config"]["n"] == 2000
    assert doc["mean_se_mr"] > doc["mean_se_c"]


def test_simulate_invalid_probabilities(capsys, tmp_path):
    bad = heterogeneous_config().to_dict()
    bad["type_probs"] = [0.4, 0.3, 0.25, 0.25]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    code, _, err = run(capsys, "simulate", "--config", str(path), "--reps", "10", "--seed", "1")
    assert code == 2 and "sum to 1" in err


def test_simulate_text_summary_file(capsys, tmp_path):
    cfg = _write_config(tmp_path / "cfg.json", heterogeneous_config(n=300))
    code, out, _ = run(capsys, "simulate", "--config", cfg, "--reps", "10", "--seed", "1",
                       "--out-dir", str(tmp_path / "o"))
    assert code == 0 and (tmp_path / "o" / "summary.txt").read_text() == out


@pytest.mark.skipif(shutil.which("ivrobust") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["ivrobust", "estimate", "--data", str(FIXTURES / "e2.csv"), *E2_ARGS],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "se_mr" in proc.stdout
