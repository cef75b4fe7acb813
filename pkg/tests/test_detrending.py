import os
import json

import numpy as np
import pytest

from utils import InvalidInputError, RankDeficiencyError
from file_io import write_json
from detrending import (TimeSeriesMatrix, fit_var1, dcs_score, dcs_filter, fit_dcs, henderson_weights, apply_filter,
                        detrend, DCS_MIN_LENGTH)

def test_time_series_matrix_validation():
    with pytest.raises(InvalidInputError):
        TimeSeriesMatrix(np.array([[1.0, np.nan], [2.0, 3.0]]))
    with pytest.raises(InvalidInputError):
        TimeSeriesMatrix(np.ones((3, 2)), names = ["a", "a"])
    X = TimeSeriesMatrix(np.arange(6.0).reshape(3, 2), names = ["a", "b"])
    assert X.T == 3 and X.p == 2
    assert np.array_equal(X.column("b"), [1.0, 3.0, 5.0])
    assert X.select(["b", "a"]).names == ["b", "a"]

def test_henderson_thirteen_term_weights():
    f = henderson_weights(6)
    assert len(f) == 13
    assert f.weights[6] == pytest.approx(0.2401, abs = 5e-4)
    assert f.weights.sum() == pytest.approx(1.0, abs = 1e-12)
    assert np.allclose(f.weights, f.weights[::-1])

def test_henderson_reproduces_cubics():
    f = henderson_weights(6)
    t = np.arange(61) / 10.0
    x = 0.5 * t ** 3 - 2.0 * t ** 2 + t - 3.0
    mu, residuals = apply_filter(x, f)
    assert np.allclose(residuals, 0.0, atol = 1e-10)
    assert np.allclose(mu, x[6:-6], atol = 1e-10)

def test_literal_henderson_weights():
    f = henderson_weights(6, "literal")
    assert f.weights.sum() == pytest.approx(1.0)
    assert np.allclose(f.weights, f.weights[::-1])
    t = np.arange(61) / 10.0
    mu, residuals = apply_filter(t ** 3, f)
    assert np.abs(residuals).max() > 1e-6

def test_henderson_validation():
    with pytest.raises(InvalidInputError):
        henderson_weights(1)
    with pytest.raises(InvalidInputError):
        henderson_weights(6, "spline")
    with pytest.raises(InvalidInputError):
        apply_filter(np.ones(12), henderson_weights(6))

def test_henderson_constant_series():
    mu, residuals = apply_filter(np.full(404, 3.5), henderson_weights(6))
    assert residuals.shape == (392, )
    assert np.allclose(residuals, 0.0, atol = 1e-12)

def test_var1_residuals_are_orthogonal_to_lag(rng):
    X = TimeSeriesMatrix(rng.standard_normal((300, 4)))
    fit = fit_var1(X)
    centered = X.data - X.data.mean(axis = 0)
    assert fit.residuals.shape == (299, 4)
    assert np.abs(fit.residuals.T @ centered[:-1]).max() < 1e-8

def test_var1_recovers_coefficients(rng):
    p, T = 5, 404
    Phi = 0.95 * np.eye(p)
    Phi[0, 1] = Phi[2, 3] = 0.02
    x = np.zeros((T, p))
    for t in range(1, T):
        x[t] = Phi @ x[t - 1] + rng.standard_normal(p)
    fit = fit_var1(TimeSeriesMatrix(x))
    assert np.linalg.norm(fit.Phi - Phi) < 0.1
    assert fit.stable

def test_var1_rank_deficiency(rng):
    data = rng.standard_normal((100, 3))
    data = np.column_stack([data, data[:, 0]])
    with pytest.raises(RankDeficiencyError):
        fit_var1(TimeSeriesMatrix(data))

def test_var1_needs_enough_time_points(rng):
    with pytest.raises(InvalidInputError):
        fit_var1(TimeSeriesMatrix(rng.standard_normal((5, 4))))

def test_dcs_score_examples():
    assert dcs_score(1.0, 1.0, 5.0) == pytest.approx(5 / 6)
    assert abs(dcs_score(1.0, 1.0, 1e6) - 1.0) < 1e-5
    assert dcs_score(0.0, 1.0, 5.0) == 0.0

def test_dcs_filter_starts_at_first_observation(rng):
    x = rng.standard_normal(60)
    mu, u = dcs_filter(x, 0.1, 0.5, 0.3, 1.0, 8.0)
    assert mu[0] == x[0]
    assert u[0] == 0.0
    assert mu[1] == pytest.approx(0.1 + 0.5 * x[0])

def test_dcs_needs_minimum_length(rng):
    with pytest.raises(InvalidInputError):
        fit_dcs(rng.standard_normal(DCS_MIN_LENGTH - 1))

def test_dcs_constant_series_is_degenerate():
    fit = fit_dcs(np.full(80, 2.0))
    assert fit.diagnostics["degenerate"]
    assert not fit.diagnostics["converged"]
    assert np.array_equal(fit.residuals, np.zeros(80))

def test_dcs_gaussian_series_has_large_nu(rng):
    x = 1.0 + rng.standard_normal(10000)
    fit = fit_dcs(x)
    assert fit.nu >= 50
    assert abs(fit.phi) < 1
    assert fit.sigma > 0
    assert np.all(np.abs(fit.u_path) <= np.sqrt(fit.nu * fit.sigma ** 2) / 2 + 1e-12)
    assert np.allclose(fit.residuals, x - fit.mu_path)

def test_dcs_tracks_a_shifting_level(rng):
    level = np.repeat([0.0, 5.0], 150)
    x = level + 0.5 * rng.standard_t(4, size = 300)
    fit = fit_dcs(x)
    assert np.abs(fit.residuals[-50:]).mean() < np.abs(x[-50:] - x.mean()).mean()

@pytest.mark.parametrize("method, rows", [("var1", 403), ("henderson", 392)])
def test_detrend_shapes(rng, method, rows):
    X = TimeSeriesMatrix(rng.standard_normal((404, 70)))
    residuals, diagnostics = detrend(X, method)
    assert residuals.data.shape == (rows, 70)
    assert residuals.names == X.names
    assert diagnostics["method"] == method

def test_detrend_dcs_with_workers(rng):
    X = TimeSeriesMatrix(np.cumsum(rng.standard_normal((60, 2)), axis = 0), names = ["lA", "rA"])
    residuals, diagnostics = detrend(X, "dcs", n_threads = 2)
    assert residuals.data.shape == (60, 2)
    assert [i["name"] for i in diagnostics["columns"]] == ["lA", "rA"]

def test_detrend_diagnostics_of_constant_series_are_strict_json(rng, tmp_path):
    data = np.column_stack([np.full(60, 3.0), np.cumsum(rng.standard_normal(60))])
    X = TimeSeriesMatrix(data, names = ["lA", "rA"])
    _, diagnostics = detrend(X, "dcs")
    flat = diagnostics["columns"][0]
    assert flat["degenerate"] and flat["loglik"] is None
    assert np.isfinite(diagnostics["columns"][1]["loglik"])

    path = os.path.join(str(tmp_path), "diagnostics.json")
    write_json(diagnostics, path)
    with open(path) as f:
        text = f.read()
    assert "Infinity" not in text and "NaN" not in text
    json.dumps(json.loads(text), allow_nan = False)

def test_detrend_henderson_workers_agree(rng):
    X = TimeSeriesMatrix(rng.standard_normal((100, 4)))
    serial, _ = detrend(X, "henderson", n_threads = 1)
    parallel, _ = detrend(X, "henderson", n_threads = 3)
    assert np.array_equal(serial.data, parallel.data)

def test_detrend_names_failing_series(rng):
    X = TimeSeriesMatrix(rng.standard_normal((30, 2)), names = ["lA", "rA"])
    with pytest.raises(InvalidInputError, match = "lA"):
        detrend(X, "dcs")
    with pytest.raises(InvalidInputError):
        detrend(X, "wavelet")
