"""
╔═════════════════════════════════════════════════════╗
║                     file_io.py                      ║
╠═════════════════════════════════════════════════════╣
║    Description: Utility functions for file I/O      ║
╠═════════════════════════════════════════════════════╣
║   Time series and ROI maps in, residuals, tables,   ║
║       model JSON, DOT graphs and MANIFEST out       ║
╚═════════════════════════════════════════════════════╝
"""

import os
import sys
import json

import numpy as np
import pandas as pd

from utils import InvalidInputError, ParseError
from linalg_utils import HemispherePartition, ZERO_TOL
from detrending import TimeSeriesMatrix

OPTIONAL_ROI_COLUMNS = ["LOBE_COL"]

def _is_number(text):
    try:
        float(text)
    except (TypeError, ValueError):
        return False
    return True

def load_timeseries(path, transpose = None):
    """
    Load a multivariate time series from a CSV file.

    Two layouts are accepted: T x p with a header row of series names, or p x T with the names
    in the first column (and an optional header row). The p x T layout is recognized when every
    cell of the first column below the first row is non-numeric; `transpose` = True or False
    forces one layout.

    Args:
        path (str): Path to the CSV file.
        transpose (bool): None to auto-detect, True for p x T, False for T x p.

    Returns:
        TimeSeriesMatrix: The validated T x p matrix.

    Raises:
        ParseError: Ragged rows, duplicate names, empty, non-numeric or non-finite cells.
    """
    try:
        raw = pd.read_csv(path, header = None, dtype = str, keep_default_na = False, skip_blank_lines = True)
    except pd.errors.ParserError as e:
        raise ParseError("Cannot parse %s: ragged rows (%s)." % (path, str(e).strip()))
    except pd.errors.EmptyDataError:
        raise ParseError("%s is empty." % path)
    raw = raw.fillna("")
    if raw.shape[0] < 2 or raw.shape[1] < 2:
        raise ParseError("%s must hold at least one name and one value per series." % path)

    if transpose is None:
        transpose = not any(_is_number(i) for i in raw.iloc[1:, 0])

    if transpose:
        header_present = not any(_is_number(i) for i in raw.iloc[0, 1:])
        body = raw.iloc[1:] if header_present else raw
        names = [str(i).strip() for i in body.iloc[:, 0]]
        # file coordinates: row of the series, column of the time point
        cells = body.iloc[:, 1:].T
        row_offset = 2 if header_present else 1
        locate = lambda t, j: "row %d, column %d (%s)" % (j + row_offset, t + 2, names[j])
    else:
        names = [str(i).strip() for i in raw.iloc[0]]
        cells = raw.iloc[1:]
        locate = lambda t, j: "row %d, column %d (%s)" % (t + 2, j + 1, names[j])

    empty_names = [i + 1 for i, name in enumerate(names) if not name]
    if empty_names:
        raise ParseError("Series without a name in %s:" % path, ["series %d" % i for i in empty_names])
    duplicated = sorted(set(i for i in names if names.count(i) > 1))
    if duplicated:
        raise ParseError("Duplicate series names in %s:" % path, duplicated)

    values = cells.apply(lambda col: pd.to_numeric(col.str.strip(), errors = "coerce")).to_numpy(dtype = float)
    bad = np.argwhere(~np.isfinite(values))
    if len(bad):
        locations = []
        for t, j in bad:
            text = cells.iat[t, j].strip()
            locations.append("%s: %s" % (locate(t, j), "empty" if not text else repr(text)))
        raise ParseError("Found %d empty, non-numeric or non-finite cell(s) in %s:" % (len(bad), path), locations)

    return TimeSeriesMatrix(values, names)

def load_roi_col_settings(settings_path = None):
    """Read the KEY = value lines of roi_col_settings.txt, skipping comments."""
    if settings_path is None:
        settings_path = os.path.join(os.path.dirname(os.path.abspath(__file__)), "roi_col_settings.txt")
        if not os.path.exists(settings_path):
            # installed by setup.py as a data file
            settings_path = os.path.join(sys.prefix, "roi_col_settings.txt")
    roi_cols = {}
    with open(settings_path) as f:
        for line in f:
            record = line.strip()
            if record and not record.startswith("#"):
                key, value = map(str.strip, record.split("="))
                roi_cols[key] = value

    return roi_cols

class RoiMap:
    """
    Hemisphere and homolog assignment of the regions.

    The induced order lists the left regions in map order followed by their homologs in the
    same order, so that region i and region i + q are homologous.
    """
    def __init__(self, names, hemispheres, homologs, lobes = None):
        self.names = [str(i) for i in names]
        self.hemispheres = [str(i).strip().upper() for i in hemispheres]
        self.homologs = [str(i) for i in homologs]
        self.lobes = list(lobes) if lobes is not None else None
        self._validate()

    def _validate(self):
        problems = []
        duplicated = sorted(set(i for i in self.names if self.names.count(i) > 1))
        problems += ["duplicate region %s" % i for i in duplicated]
        lookup = dict(zip(self.names, range(len(self.names))))
        for name, side, homolog in zip(self.names, self.hemispheres, self.homologs):
            if side not in ("L", "R"):
                problems.append("%s: hemisphere must be L or R, got %s" % (name, side))
                continue
            if homolog not in lookup:
                problems.append("%s: homolog %s is not in the map" % (name, homolog))
                continue
            k = lookup[homolog]
            if self.hemispheres[k] == side:
                problems.append("%s: homolog %s lies in the same hemisphere" % (name, homolog))
            if self.homologs[k] != name:
                problems.append("%s: homolog %s points back to %s" % (name, homolog, self.homologs[k]))
        if problems:
            raise ParseError("Invalid ROI map:", problems)

    @property
    def ordered_names(self):
        left = [name for name, side in zip(self.names, self.hemispheres) if side == "L"]
        lookup = dict(zip(self.names, self.homologs))
        return left + [lookup[name] for name in left]

    def partition(self):
        return HemispherePartition(len(self.names))

    def permutation(self, data_names):
        """Indices into `data_names` that put the columns in the induced order."""
        missing = sorted(set(self.names) - set(data_names))
        extra = sorted(set(data_names) - set(self.names))
        if missing or extra:
            raise InvalidInputError("ROI map and data columns differ: missing from data %s, not in map %s." % (missing[:10], extra[:10]))
        position = {name : i for i, name in enumerate(data_names)}
        return [position[name] for name in self.ordered_names]

def load_roi_map(path, settings_path = None):
    roi_cols = load_roi_col_settings(settings_path)
    try:
        table = pd.read_csv(path, dtype = str, keep_default_na = False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ParseError("Cannot parse ROI map %s: %s" % (path, str(e).strip()))

    necessary_columns = [value for key, value in roi_cols.items() if key not in OPTIONAL_ROI_COLUMNS]
    no_columns = [col for col in necessary_columns if col not in table.columns]
    if no_columns:
        raise ParseError("Cannot find column(s) in the ROI map %s:" % path, no_columns)

    lobe_col = roi_cols.get("LOBE_COL")
    lobes = table[lobe_col].tolist() if lobe_col in table.columns else None

    return RoiMap(table[roi_cols["ROI_NAME_COL"]].str.strip().tolist(),
                  table[roi_cols["HEMISPHERE_COL"]].tolist(),
                  table[roi_cols["HOMOLOG_COL"]].str.strip().tolist(),
                  lobes)

def order_by_hemisphere(X, roi_map = None):
    """
    Reorder the columns so that the first q are left regions and i + q is the homolog of i.

    Returns:
    - tuple: (reordered TimeSeriesMatrix, HemispherePartition, permutation as a list of the
      original column indices).
    """
    if roi_map is None:
        part = HemispherePartition(X.p)
        return X, part, list(range(X.p))
    permutation = roi_map.permutation(X.names)
    ordered = TimeSeriesMatrix(X.data[:, permutation], [X.names[i] for i in permutation], X.time_index)

    return ordered, roi_map.partition(), permutation

def write_residuals(X, path):
    X.to_frame().to_csv(path, index = False)

def write_table(table, path):
    table.to_csv(path, sep = "\t", index = False)

def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError("Object of type %s is not JSON serializable" % type(obj).__name__)

def dump_json(obj):
    return json.dumps(obj, sort_keys = True, indent = 2, default = _json_default) + "\n"

def write_json(obj, path):
    with open(path, "w") as f:
        f.write(dump_json(obj))

def model_to_dict(Theta_hat, model, names, permutation, lambda1 = None, lambda2 = None, score = None, criterion = None):
    """
    JSON-ready description of a selected model.

    Edges are [i, j] index pairs (i > j) into `names`, which are in hemisphere order; tied edge
    pairs are given by their LL member and tied vertex pairs by their left vertex.
    """
    Theta_hat = np.asarray(Theta_hat, dtype = float)
    rows, cols = np.tril_indices(Theta_hat.shape[0])
    keep = np.abs(Theta_hat[rows, cols]) > ZERO_TOL

    return {"p" : int(model.p),
            "names" : list(names),
            "permutation" : [int(i) for i in permutation],
            "lambda1" : lambda1,
            "lambda2" : lambda2,
            "criterion" : criterion,
            "ebic" : None if score is None else float(score.ebic),
            "bic" : None if score is None else float(score.bic),
            "d" : None if score is None else int(score.d),
            "edges" : [[int(i), int(j)] for i, j in model.edges],
            "tied_edge_pairs" : [[int(i), int(j)] for i, j in model.tied_edge_pairs()],
            "tied_vertex_pairs" : sorted(int(i) for i in model.tied_vertex_pairs()),
            "theta" : [[int(i), int(j), float(Theta_hat[i, j])] for i, j in zip(rows[keep], cols[keep])]}

def save_model_json(model_dict, path):
    write_json(model_dict, path)

def load_model_json(path):
    try:
        with open(path) as f:
            model_dict = json.load(f)
    except ValueError as e:
        raise ParseError("Cannot parse model file %s: %s" % (path, e))
    required = ["p", "names", "edges", "tied_edge_pairs", "tied_vertex_pairs"]
    no_keys = [key for key in required if key not in model_dict]
    if no_keys:
        raise ParseError("Model file %s lacks the field(s):" % path, no_keys)

    return model_dict

def theta_from_model_dict(model_dict):
    p = model_dict["p"]
    Theta = np.zeros((p, p))
    for i, j, value in model_dict.get("theta", []):
        Theta[i, j] = Theta[j, i] = value
    return Theta

def intersect_models(models):
    """
    Shared graph of several models: edges, tied edge pairs and tied vertex pairs present in all.

    The models must share p and the ordered region names.
    """
    if not models:
        raise InvalidInputError("Nothing to intersect.")
    first = models[0]
    for k, other in enumerate(models[1:], start = 2):
        if other["p"] != first["p"] or other["names"] != first["names"]:
            raise InvalidInputError("Model %d has a different ROI map from model 1." % k)

    def shared(key):
        sets = [set(tuple(i) if isinstance(i, list) else i for i in m[key]) for m in models]
        common = set.intersection(*sets)
        return sorted(list(i) if isinstance(i, tuple) else i for i in common)

    if len(models) == 1:
        return dict(first)

    return {"p" : first["p"],
            "names" : list(first["names"]),
            "permutation" : list(first.get("permutation", range(first["p"]))),
            "lambda1" : None,
            "lambda2" : None,
            "criterion" : None,
            "ebic" : None,
            "bic" : None,
            "d" : None,
            "n_models" : len(models),
            "edges" : shared("edges"),
            "tied_edge_pairs" : shared("tied_edge_pairs"),
            "tied_vertex_pairs" : shared("tied_vertex_pairs"),
            "theta" : []}

def symmetry_dot(model_dict):
    """
    DOT text of the symmetry graph.

    One node per homolog pair, shaded when the two diagonal concentrations are tied; one edge per
    tied pair of nonzero off-diagonal concentrations.
    """
    q = model_dict["p"] // 2
    names = model_dict["names"]
    shaded = set(model_dict["tied_vertex_pairs"])
    lines = ["graph symmetry {"]
    for i in range(q):
        attributes = 'label="%s/%s"' % (names[i], names[i + q])
        if i in shaded:
            attributes += ", style=filled, fillcolor=gray"
        lines.append("  n%d [%s];" % (i, attributes))
    for i, j in model_dict["tied_edge_pairs"]:
        lines.append("  n%d -- n%d;" % (i, j))
    lines.append("}")

    return "\n".join(lines) + "\n"

def write_dot(model_dict, path):
    with open(path, "w") as f:
        f.write(symmetry_dot(model_dict))

class Manifest:
    """Tab-separated `stage  status  file` lines, rewritten after every stage."""
    def __init__(self, out_dir, file_name = "MANIFEST"):
        self.path = os.path.join(out_dir, file_name)
        self.records = []

    def record(self, stage, status, file_name = ""):
        self.records.append((stage, status, file_name))
        with open(self.path, "w") as f:
            for record in self.records:
                f.write("\t".join(record) + "\n")
