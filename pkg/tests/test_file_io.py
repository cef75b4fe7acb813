import os

import numpy as np
import pytest

from utils import InvalidInputError, ParseError
from linalg_utils import HemispherePartition
from model_selection import extract_colored_model, score_model
from file_io import (load_timeseries, load_roi_map, order_by_hemisphere, RoiMap, write_residuals, model_to_dict,
                     save_model_json, load_model_json, theta_from_model_dict, intersect_models, symmetry_dot, Manifest)

ROI_MAP = "name,hemisphere,homolog\nlA,L,rA\nrA,R,lA\nlB,L,rB\nrB,R,lB\n"

THETA = np.array([[2.0, 0.5, 0.0, 0.1],
                  [0.5, 3.0, 0.0, 0.0],
                  [0.0, 0.0, 2.0, 0.5],
                  [0.1, 0.0, 0.5, 4.0]])

def _write(tmp_path, name, text):
    path = os.path.join(str(tmp_path), name)
    with open(path, "w") as f:
        f.write(text)
    return path

def _model_dict(Theta = THETA):
    part = HemispherePartition(4)
    model = extract_colored_model(Theta, part)
    score = score_model(-10.0, 50, 4, model.n_params, 0.5)
    return model_to_dict(Theta, model, ["lA", "lB", "rA", "rB"], [0, 2, 1, 3], 0.1, 0.05, score, "ebic")

def test_load_time_by_series(tmp_path):
    path = _write(tmp_path, "x.csv", "lA,lB,rA,rB\n1,2,3,4\n5,6,7,8\n9,10,11,12\n")
    X = load_timeseries(path)
    assert X.names == ["lA", "lB", "rA", "rB"]
    assert X.data.shape == (3, 4)
    assert X.data[2, 1] == 10.0

def test_load_series_by_time(tmp_path):
    path = _write(tmp_path, "x.csv", "lA,1,5,9\nlB,2,6,10\nrA,3,7,11\nrB,4,8,12\n")
    X = load_timeseries(path)
    assert X.names == ["lA", "lB", "rA", "rB"]
    assert X.data.shape == (3, 4)
    assert X.data[2, 1] == 10.0
    with_header = _write(tmp_path, "y.csv", "name,t1,t2,t3\nlA,1,5,9\nlB,2,6,10\nrA,3,7,11\nrB,4,8,12\n")
    assert np.array_equal(load_timeseries(with_header, transpose = True).data, X.data)

def test_missing_cell_is_located(tmp_path):
    path = _write(tmp_path, "x.csv", "a,b\n1,2\n3,\n5,6\n")
    with pytest.raises(ParseError) as e:
        load_timeseries(path)
    assert e.value.locations == ["row 3, column 2 (b): empty"]

def test_non_numeric_and_ragged_rows(tmp_path):
    with pytest.raises(ParseError, match = "row 2, column 1"):
        load_timeseries(_write(tmp_path, "x.csv", "a,b\nfoo,2\n3,4\n"), transpose = False)
    with pytest.raises(ParseError):
        load_timeseries(_write(tmp_path, "y.csv", "a,b\n1,2\n3,4,5\n"))
    with pytest.raises(ParseError, match = "Duplicate"):
        load_timeseries(_write(tmp_path, "z.csv", "a,a\n1,2\n3,4\n"))

def test_roi_map_order(tmp_path):
    roi = load_roi_map(_write(tmp_path, "roi.csv", ROI_MAP))
    assert roi.ordered_names == ["lA", "lB", "rA", "rB"]
    assert roi.permutation(["lA", "rA", "lB", "rB"]) == [0, 2, 1, 3]
    assert roi.lobes is None

    X = load_timeseries(_write(tmp_path, "x.csv", "lA,rA,lB,rB\n1,2,3,4\n5,6,7,8\n"))
    ordered, part, permutation = order_by_hemisphere(X, roi)
    assert ordered.names == ["lA", "lB", "rA", "rB"]
    assert np.array_equal(ordered.data[0], [1, 3, 2, 4])
    assert part.q == 2

def test_roi_map_errors(tmp_path):
    with pytest.raises(ParseError, match = "homolog"):
        load_roi_map(_write(tmp_path, "a.csv", "name,hemisphere\nlA,L\nrA,R\n"))
    with pytest.raises(ParseError):
        RoiMap(["lA", "rA", "lB", "rB"], ["L", "R", "L", "R"], ["rA", "lB", "rB", "lB"])
    with pytest.raises(ParseError):
        RoiMap(["lA", "rA"], ["L", "L"], ["rA", "lA"])
    roi = RoiMap(["lA", "rA"], ["L", "R"], ["rA", "lA"])
    with pytest.raises(InvalidInputError):
        roi.permutation(["lA", "rX"])

def test_write_residuals(tmp_path):
    X = load_timeseries(_write(tmp_path, "x.csv", "lA,rA\n1.5,2\n3,4\n"))
    path = os.path.join(str(tmp_path), "res.csv")
    write_residuals(X, path)
    with open(path) as f:
        assert f.read().splitlines() == ["lA,rA", "1.5,2.0", "3.0,4.0"]

def test_model_json_round_trip(tmp_path):
    model_dict = _model_dict()
    assert model_dict["edges"] == [[1, 0], [3, 0], [3, 2]]
    assert model_dict["tied_edge_pairs"] == [[1, 0]]
    assert model_dict["tied_vertex_pairs"] == [0]
    first = os.path.join(str(tmp_path), "a.json")
    second = os.path.join(str(tmp_path), "b.json")
    save_model_json(model_dict, first)
    save_model_json(load_model_json(first), second)
    with open(first) as f, open(second) as g:
        assert f.read() == g.read()
    assert np.array_equal(theta_from_model_dict(load_model_json(first)), THETA)

def test_model_json_requires_fields(tmp_path):
    with pytest.raises(ParseError):
        load_model_json(_write(tmp_path, "m.json", '{"p": 4}'))
    with pytest.raises(ParseError):
        load_model_json(_write(tmp_path, "n.json", "{not json"))

def test_intersection():
    single = _model_dict()
    assert intersect_models([single]) == single

    other = THETA.copy()
    other[3, 0] = other[0, 3] = 0.0
    other[3, 3] = 2.0
    shared = intersect_models([single, _model_dict(other), single])
    assert shared["n_models"] == 3
    assert shared["edges"] == [[1, 0], [3, 2]]
    assert shared["tied_edge_pairs"] == [[1, 0]]
    assert shared["tied_vertex_pairs"] == [0]

    untied = THETA.copy()
    untied[2, 3] = untied[3, 2] = 0.7
    untied[2, 2] = 2.5
    disjoint = intersect_models([single, _model_dict(untied)])
    assert disjoint["tied_edge_pairs"] == [] and disjoint["tied_vertex_pairs"] == []

    renamed = dict(single, names = ["a", "b", "c", "d"])
    with pytest.raises(InvalidInputError):
        intersect_models([single, renamed])

def test_symmetry_dot_counts():
    dot = symmetry_dot(_model_dict())
    lines = dot.splitlines()
    assert lines[0] == "graph symmetry {" and lines[-1] == "}"
    assert sum(" -- " in i for i in lines) == 1
    assert sum("fillcolor=gray" in i for i in lines) == 1
    assert '  n0 [label="lA/rA", style=filled, fillcolor=gray];' in lines

def test_manifest(tmp_path):
    manifest = Manifest(str(tmp_path))
    manifest.record("load", "done", "run_config.json")
    manifest.record("detrend", "failed")
    with open(os.path.join(str(tmp_path), "MANIFEST")) as f:
        assert f.read() == "load\tdone\trun_config.json\ndetrend\tfailed\t\n"
