import os
import json

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

import sgl_pipeline
from utils import ConfigError
from linalg_utils import HemispherePartition
from simulation import GroundTruth, sample_mvn, compute_metrics
from file_io import load_model_json, theta_from_model_dict
from sgl_pipeline import RunConfig, run_pipeline
from SymGL import symgl

NAMES = ["lA", "lB", "lC", "rA", "rB", "rC"]

def _symmetric_precision():
    block = 2.0 * np.eye(3) + 0.6 * (np.eye(3, k = 1) + np.eye(3, k = -1))
    Theta = np.zeros((6, 6))
    Theta[:3, :3] = Theta[3:, 3:] = block
    Theta[:3, 3:] = Theta[3:, :3] = 0.4 * np.eye(3)
    return Theta

def _write_series(tmp_path, T = 200, names = NAMES, seed = 3):
    rng = np.random.default_rng(seed)
    noise = rng.multivariate_normal(np.zeros(6), np.linalg.inv(_symmetric_precision()), size = T)
    t = np.arange(T)[:, None]
    trend = 2.0 * np.sin(2 * np.pi * t / 150.0 + np.arange(6)[None, :])
    path = os.path.join(str(tmp_path), "series.csv")
    pd.DataFrame(trend + noise, columns = NAMES).reindex(columns = names).to_csv(path, index = False)
    return path

def _config(input, out, **kwargs):
    options = dict(lambda1_grid = [0.05, 0.1, 0.2], lambda2_grid = [0.001, 0.01, 0.1], inner_solver = "pairwise", tol = 1e-6)
    options.update(kwargs)
    return RunConfig(input, out, **options)

def test_pipeline_outputs(tmp_path):
    input = _write_series(tmp_path)
    out = os.path.join(str(tmp_path), "out")
    bundle = run_pipeline(_config(input, out))

    residuals = pd.read_csv(bundle["residuals"])
    assert residuals.shape == (188, 6)
    trace = pd.read_csv(bundle["trace"], sep = "\t")
    assert len(trace) == 6
    summary = pd.read_csv(bundle["summary"], sep = "\t")
    assert list(summary["method"]) == ["gl", "sgl"]
    with open(bundle["model"]) as f:
        model = json.load(f)
    assert model["names"] == NAMES
    assert model["criterion"] == "ebic"

    with open(os.path.join(out, "MANIFEST")) as f:
        records = [line.split("\t") for line in f.read().splitlines()]
    assert [r[0] for r in records] == ["load", "detrend", "detrend", "select", "report", "report", "report", "report"]
    assert all(r[1] == "done" for r in records)
    for r in records:
        assert os.path.exists(os.path.join(out, r[2]))

def test_pipeline_is_deterministic(tmp_path):
    input = _write_series(tmp_path)
    outs = [os.path.join(str(tmp_path), name) for name in ("first", "second")]
    for out in outs:
        run_pipeline(_config(input, out))
    files = sorted(os.listdir(outs[0]))
    assert files == sorted(os.listdir(outs[1]))
    for name in files:
        with open(os.path.join(outs[0], name)) as f, open(os.path.join(outs[1], name)) as g:
            assert f.read() == g.read(), name

def test_pipeline_with_roi_map(tmp_path):
    input = _write_series(tmp_path, names = ["lA", "rA", "lB", "rB", "lC", "rC"])
    roi_map = os.path.join(str(tmp_path), "roi.csv")
    with open(roi_map, "w") as f:
        f.write("name,hemisphere,homolog\n")
        for region in "ABC":
            f.write("l%s,L,r%s\nr%s,R,l%s\n" % (region, region, region, region))
    out = os.path.join(str(tmp_path), "out")
    bundle = run_pipeline(_config(input, out, method = "var1", roi_map = roi_map))
    with open(bundle["model"]) as f:
        model = json.load(f)
    assert model["names"] == NAMES
    assert model["permutation"] == [0, 2, 4, 1, 3, 5]
    assert pd.read_csv(bundle["residuals"]).shape == (199, 6)

def _planted_tie_series(tmp_path, T = 412, seed = 5):
    """Twenty series whose concentration matrix ties every LL edge of a chain to its RR homolog."""
    rng = np.random.default_rng(seed)
    part = HemispherePartition(20)
    chain = [(j + 1, j) for j in range(9)]
    graph = sorted(chain + [(i + 10, j + 10) for i, j in chain] + [(i + 10, i) for i in (0, 3, 6, 9)])
    Theta = 1.6 * np.eye(20)
    for i, j in chain:
        Theta[i, j] = Theta[j, i] = Theta[i + 10, j + 10] = Theta[j + 10, i + 10] = 0.35 + 0.03 * j
    for i in (0, 3, 6, 9):
        Theta[i + 10, i] = Theta[i, i + 10] = 0.25
    truth = GroundTruth(graph, Theta, chain, list(range(10)), len(chain), part)

    t = np.arange(T)[:, None]
    trend = 2.0 * np.sin(2 * np.pi * t / 200.0 + np.arange(20)[None, :])
    names = ["l%d" % i for i in range(10)] + ["r%d" % i for i in range(10)]
    path = os.path.join(str(tmp_path), "planted.csv")
    pd.DataFrame(trend + sample_mvn(Theta, T, rng), columns = names).to_csv(path, index = False)
    return path, truth

def test_pipeline_recovers_planted_ties(tmp_path):
    input, truth = _planted_tie_series(tmp_path)
    assert len(truth.sym_pairs) == 9
    out = os.path.join(str(tmp_path), "out")
    bundle = run_pipeline(RunConfig(input, out, inner_solver = "pairwise", tol = 1e-6))
    assert pd.read_csv(bundle["residuals"]).shape == (400, 20)

    model = load_model_json(bundle["model"])
    report = compute_metrics(truth, theta_from_model_dict(model))
    assert report.sTPR >= 0.8
    assert report.eTPR >= 0.8

def test_unexpected_error_is_recorded(tmp_path, monkeypatch):
    def broken_select(*args, **kwargs):
        raise OSError("disk full")
    monkeypatch.setattr(sgl_pipeline, "grid_select", broken_select)
    input = _write_series(tmp_path)
    out = os.path.join(str(tmp_path), "out")
    with pytest.raises(OSError):
        run_pipeline(_config(input, out))
    with open(os.path.join(out, "MANIFEST")) as f:
        records = f.read().splitlines()
    assert records[-1] == "select\tfailed\t"

    result = CliRunner().invoke(symgl, ["pipeline", "--input", input, "--out", os.path.join(str(tmp_path), "cli")])
    assert result.exit_code == 3
    assert "disk full" in result.output

def test_seed_is_recorded(tmp_path):
    input = _write_series(tmp_path)
    out = os.path.join(str(tmp_path), "out")
    run_pipeline(_config(input, out, seed = 77))
    with open(os.path.join(out, "run_config.json")) as f:
        assert json.load(f)["seed"] == 77

def test_failed_stage_is_recorded(tmp_path):
    input = _write_series(tmp_path, T = 12)
    out = os.path.join(str(tmp_path), "out")
    with pytest.raises(ConfigError):
        run_pipeline(_config(input, out))
    with open(os.path.join(out, "MANIFEST")) as f:
        assert f.read() == "load\tfailed\t\n"
    assert os.path.exists(os.path.join(out, "run_config.json"))

@pytest.mark.parametrize("options", [dict(gamma = 1.5), dict(method = "wavelet"), dict(h = 1), dict(lambda1_grid = [0.1, -0.2]),
                                     dict(criterion = "aic"), dict(rho1 = 0.0), dict(n_threads = 0)])
def test_config_validation(tmp_path, options):
    input = _write_series(tmp_path)
    with pytest.raises(ConfigError):
        _config(input, str(tmp_path), **options).validate()

def test_config_rejects_missing_input(tmp_path):
    with pytest.raises(ConfigError):
        _config(os.path.join(str(tmp_path), "nope.csv"), str(tmp_path)).validate()

def test_cli_version():
    result = CliRunner().invoke(symgl, ["--version"])
    assert result.exit_code == 0
    assert "1.0.0" in result.output

def test_cli_exit_codes(tmp_path):
    runner = CliRunner()
    input = _write_series(tmp_path, T = 60)
    out = os.path.join(str(tmp_path), "out")

    assert runner.invoke(symgl, ["detrend", "--input", input, "--out", out, "--h", "30"]).exit_code == 2

    odd = os.path.join(str(tmp_path), "odd.csv")
    pd.read_csv(input).iloc[:, :5].to_csv(odd, index = False)
    assert runner.invoke(symgl, ["detrend", "--input", odd, "--out", out]).exit_code == 2

    broken = os.path.join(str(tmp_path), "broken.csv")
    with open(broken, "w") as f:
        f.write("lA,rA\n1,2\n3,x\n")
    assert runner.invoke(symgl, ["detrend", "--input", broken, "--out", out]).exit_code == 2

    collinear = os.path.join(str(tmp_path), "collinear.csv")
    frame = pd.read_csv(input)
    frame["rC"] = frame["lA"]
    frame.to_csv(collinear, index = False)
    assert runner.invoke(symgl, ["detrend", "--input", collinear, "--out", out, "--method", "var1"]).exit_code == 3

def test_cli_detrend_fit_report(tmp_path):
    runner = CliRunner()
    input = _write_series(tmp_path)
    out = os.path.join(str(tmp_path), "out")

    result = runner.invoke(symgl, ["detrend", "--input", input, "--out", out])
    assert result.exit_code == 0, result.output
    residuals = os.path.join(out, "residuals.csv")
    assert pd.read_csv(residuals).shape == (188, 6)

    result = runner.invoke(symgl, ["fit", "--input", residuals, "--out", out, "--lambda1", "0.1", "--lambda2", "0.05",
                                   "--inner-solver", "pairwise"])
    assert result.exit_code == 0, result.output
    assert os.path.exists(os.path.join(out, "fit_model.json"))
    assert os.path.exists(os.path.join(out, "fit_symmetry.dot"))

    report_dir = os.path.join(str(tmp_path), "report")
    result = runner.invoke(symgl, ["report", "--model", os.path.join(out, "fit_model.json"), "--out", report_dir])
    assert result.exit_code == 0, result.output
    assert os.path.exists(os.path.join(report_dir, "fit_model_symmetry.dot"))
    assert os.path.exists(os.path.join(report_dir, "fit_model_symmetry_report.tsv"))

    result = runner.invoke(symgl, ["intersect", "--model", os.path.join(out, "fit_model.json"),
                                   "--model", os.path.join(out, "fit_model.json"), "--out", report_dir])
    assert result.exit_code == 0, result.output
    with open(os.path.join(report_dir, "intersection.json")) as f:
        assert json.load(f)["n_models"] == 2

def test_cli_simulate(tmp_path):
    out = os.path.join(str(tmp_path), "sim")
    result = CliRunner().invoke(symgl, ["simulate", "--out", out, "--p", "8", "--density", "0.3", "--sym-fraction", "0.5",
                                        "--n", "100", "--replicates", "1", "--inner-solver", "pairwise"])
    assert result.exit_code == 0, result.output
    for name in ("table1_custom.tsv", "table2_custom.tsv", "simulation_custom.json"):
        assert os.path.exists(os.path.join(out, name))
    missing = CliRunner().invoke(symgl, ["simulate", "--out", out, "--p", "8"])
    assert missing.exit_code == 2
