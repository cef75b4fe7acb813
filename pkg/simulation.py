"""
╔═════════════════════════════════════════════════════╗
║                   simulation.py                     ║
╠═════════════════════════════════════════════════════╣
║   Description: Synthetic symmetric precision        ║
║   matrices, recovery metrics and the oracle-tuned   ║
║                  benchmark protocol                 ║
╚═════════════════════════════════════════════════════╝
"""

from fractions import Fraction

import numpy as np
import pandas as pd
import scipy.linalg
import networkx as nx

from utils import SymGLError, InvalidInputError, run_chunked_jobs, resolve_logger
from linalg_utils import HemispherePartition, check_positive_definite, empirical_second_moment, ZERO_TOL, TIE_TOL
from sgl_solver import SglProblem, SolverConfig, SglSolution, fit_sgl, count_edges, tied_pairs
from model_selection import ColoredModel, log_grid, lambda_max

# magnitude range of nonzero off-diagonal concentrations and the diagonal dominance margin
VALUE_RANGE = (0.3, 0.7)
DIAGONAL_MARGIN = 0.5

BISECTION_STEPS = 40
BISECTION_LOWER = 1e-4
LAMBDA2_RATIO_RANGE = (1e-3, 10.0)
N_LAMBDA2 = 10

METRIC_NAMES = ["ePPV", "eTPR", "eTNR", "sPPV", "sTPR", "sTNR"]

class SimScenario:
    def __init__(self, p, edge_density, sym_fraction, n, replicates = 9, seed = 123, n_matrices = 1, name = "custom"):
        if int(p) != p or p < 2 or p % 2 != 0:
            raise InvalidInputError("p must be an even integer >= 2, got %s." % p)
        if not 0 < edge_density < 1:
            raise InvalidInputError("Edge density must lie in (0, 1), got %s." % edge_density)
        if not 0 <= sym_fraction <= 1:
            raise InvalidInputError("Symmetric fraction must lie in [0, 1], got %s." % sym_fraction)
        if int(n) != n or n < 2:
            raise InvalidInputError("Sample size must be an integer >= 2, got %s." % n)
        if replicates < 1 or n_matrices < 1:
            raise InvalidInputError("Replicates and matrices must be positive.")

        self.p = int(p)
        self.q = self.p // 2
        self.edge_density = float(edge_density)
        self.sym_fraction = float(sym_fraction)
        self.n = int(n)
        self.replicates = int(replicates)
        self.seed = int(seed)
        self.n_matrices = int(n_matrices)
        self.name = name

    @classmethod
    def preset(cls, name, **overrides):
        """The two benchmark environments: A (sparser, few ties) and B (denser, more ties)."""
        presets = {"A" : {"p" : 70, "edge_density" : 0.231, "sym_fraction" : 0.108, "n" : 400, "replicates" : 9, "n_matrices" : 4},
                   "B" : {"p" : 70, "edge_density" : 0.316, "sym_fraction" : 0.301, "n" : 400, "replicates" : 9, "n_matrices" : 4}}
        if name not in presets:
            raise InvalidInputError("Unknown scenario preset: %s." % name)
        params = dict(presets[name])
        params.update({k : v for k, v in overrides.items() if v is not None})

        return cls(name = name, **params)

    def to_dict(self):
        return {"name" : self.name, "p" : self.p, "edge_density" : self.edge_density, "sym_fraction" : self.sym_fraction,
                "n" : self.n, "replicates" : self.replicates, "n_matrices" : self.n_matrices, "seed" : self.seed}

class GroundTruth:
    def __init__(self, graph, Theta_true, sym_pairs, sym_vertices, n_both, part):
        self.graph = graph
        self.Theta_true = Theta_true
        self.sym_pairs = sym_pairs
        self.sym_vertices = sym_vertices
        self.n_both = n_both
        self.part = part

    @property
    def realized_sym_fraction(self):
        return len(self.sym_pairs) / self.n_both if self.n_both else np.nan

class MetricsReport:
    """
    Edge and symmetry recovery counts with their six ratios.

    Ratios are stored as floats in [0, 1] and are NaN when their denominator is 0;
    `exact(name)` returns the same quotient as a Fraction.
    """
    _quotients = {"ePPV" : ("eTP", "edges_hat"),
                  "eTPR" : ("eTP", "eP"),
                  "eTNR" : ("eTN", "eN"),
                  "sPPV" : ("sTP", "symm_hat"),
                  "sTPR" : ("sTP", "sP"),
                  "sTNR" : ("sTN", "sN")}

    def __init__(self, eTP, eTN, eP, eN, edges_hat, sTP, sTN, sP, sN, symm_hat):
        self.eTP, self.eTN, self.eP, self.eN, self.edges_hat = eTP, eTN, eP, eN, edges_hat
        self.sTP, self.sTN, self.sP, self.sN, self.symm_hat = sTP, sTN, sP, sN, symm_hat
        for name, (num, den) in self._quotients.items():
            den_value = getattr(self, den)
            setattr(self, name, getattr(self, num) / den_value if den_value else np.nan)

    def exact(self, name):
        num, den = self._quotients[name]
        den_value = getattr(self, den)
        return Fraction(getattr(self, num), den_value) if den_value else None

    def to_dict(self):
        keys = ["eTP", "eTN", "eP", "eN", "edges_hat", "sTP", "sTN", "sP", "sN", "symm_hat"] + METRIC_NAMES
        return {k : getattr(self, k) for k in keys}

def gen_graph(p, density, rng):
    """
    Uniform random graph with exactly round(density p (p - 1) / 2) edges.

    Returns:
    - list: sorted (i, j) tuples with i > j.
    """
    if not 0 < density < 1:
        raise InvalidInputError("Edge density must lie in (0, 1), got %s." % density)
    n_edges = int(round(density * p * (p - 1) / 2))
    graph = nx.gnm_random_graph(p, n_edges, seed = int(rng.integers(2 ** 31 - 1)))

    return sorted((max(i, j), min(i, j)) for i, j in graph.edges())

def gen_precision(graph, part, sym_fraction, rng, logger = None):
    """
    Positive definite concentration matrix on `graph` with tied homologous entries.

    Nonzero off-diagonals are uniform on [-0.7, -0.3] U [0.3, 0.7]. Of the LL edges whose RR
    homolog is also an edge, round(sym_fraction * count) are tied by copying the LL value.
    The diagonal is the absolute row sum plus 0.5. A vertex pair (i, i') whose incident LL and RR
    edges are all tied (at least one) gets both diagonals set to the larger of the two, not
    their mean: the mean can fall below the absolute off-diagonal sum of one of the two rows, while
    the larger value keeps both rows strictly diagonally dominant.
    """
    logger = resolve_logger(logger)
    p, q = part.p, part.q
    Theta = np.zeros((p, p))
    lo, hi = VALUE_RANGE
    for i, j in graph:
        value = rng.choice([-1.0, 1.0]) * rng.uniform(lo, hi)
        Theta[i, j] = Theta[j, i] = value

    edge_set = set(graph)
    both = [(i, j) for i, j in graph if i < q and (i + q, j + q) in edge_set]
    n_tie = int(round(sym_fraction * len(both)))
    if not both and sym_fraction > 0:
        logger.warning("No homologous edge pair is present in the graph; no ties are planted.")
    chosen = sorted(rng.choice(len(both), n_tie, replace = False).tolist()) if n_tie else []
    sym_pairs = [both[k] for k in chosen]
    for i, j in sym_pairs:
        Theta[i + q, j + q] = Theta[j + q, i + q] = Theta[i, j]

    np.fill_diagonal(Theta, np.abs(Theta).sum(axis = 1) + DIAGONAL_MARGIN)

    tied_set = set(sym_pairs)
    sym_vertices = []
    for v in range(q):
        ll_edges = [(i, j) for i, j in graph if i < q and v in (i, j)]
        rr_edges = [(i - q, j - q) for i, j in graph if j >= q and v + q in (i, j)]
        if ll_edges and all(e in tied_set for e in ll_edges) and all(e in tied_set for e in rr_edges):
            value = max(Theta[v, v], Theta[v + q, v + q])
            Theta[v, v] = Theta[v + q, v + q] = value
            sym_vertices.append(v)

    check_positive_definite(Theta, "Simulated concentration matrix")

    return GroundTruth(list(graph), Theta, sym_pairs, sym_vertices, len(both), part)

def sample_mvn(Theta_true, n, rng):
    """n i.i.d. rows from N(0, Theta_true^-1), through the Cholesky factor of the covariance."""
    check_positive_definite(Theta_true, "Concentration matrix")
    Sigma = scipy.linalg.inv(Theta_true)
    L = scipy.linalg.cholesky((Sigma + Sigma.T) / 2, lower = True)

    return rng.standard_normal((int(n), Theta_true.shape[0])) @ L.T

def _estimated_structure(est, part, zero_tol, tie_tol):
    if isinstance(est, ColoredModel):
        return set(est.edges), set(est.tied_edge_pairs())
    Theta_hat = est.Theta_hat if isinstance(est, SglSolution) else np.asarray(est)
    rows, cols = np.tril_indices(part.p, k = -1)
    present = np.abs(Theta_hat[rows, cols]) > zero_tol
    edges = set((int(i), int(j)) for i, j in zip(rows[present], cols[present]))
    offdiag, diag = tied_pairs(Theta_hat, part, zero_tol, tie_tol)

    return edges, set(offdiag)

def compute_metrics(truth, est, zero_tol = ZERO_TOL, tie_tol = TIE_TOL):
    """
    Recovery metrics of an estimate against the ground truth.

    Edges range over the p (p - 1) / 2 vertex pairs. Symmetries range over the q (q - 1) / 2
    homologous off-diagonal pairs; a pair counts as an estimated symmetry when both entries are
    nonzero and tied.
    """
    part = truth.part
    est_edges, est_sym = _estimated_structure(est, part, zero_tol, tie_tol)
    true_edges = set(truth.graph)
    true_sym = set(truth.sym_pairs)

    n_pairs = part.p * (part.p - 1) // 2
    eP = len(true_edges)
    eN = n_pairs - eP
    eTP = len(est_edges & true_edges)
    eTN = eN - (len(est_edges) - eTP)

    n_sym_pairs = part.q * (part.q - 1) // 2
    sP = len(true_sym)
    sN = n_sym_pairs - sP
    sTP = len(est_sym & true_sym)
    sTN = sN - (len(est_sym) - sTP)

    return MetricsReport(eTP, eTN, eP, eN, len(est_edges), sTP, sTN, sP, sN, len(est_sym))

def match_edge_count(S, n, part, target, cfg, max_steps = BISECTION_STEPS):
    """
    Bisection on log(lambda1), lambda2 = 0, until the fit has target +/- 1 edges.

    Returns:
    - SglSolution or None: the matching fit, None when bisection fails.
    """
    hi = lambda_max(S)
    if hi <= 0:
        return None
    lo = BISECTION_LOWER * hi
    for _ in range(max_steps):
        mid = np.sqrt(lo * hi)
        sol = fit_sgl(SglProblem(S, n, part, mid, 0.0), cfg)
        edges = count_edges(sol.Theta_hat)
        if abs(edges - target) <= 1:
            return sol
        if edges > target:
            lo = mid
        else:
            hi = mid

    return None

def _metrics_row(label, sol, truth):
    metrics = compute_metrics(truth, sol)
    row = {"method" : label, "lambda1" : sol.lambda1, "lambda2" : sol.lambda2, "converged" : bool(sol.converged)}
    row.update({name : 100 * getattr(metrics, name) for name in METRIC_NAMES})
    row.update({"edges" : metrics.edges_hat, "symm" : metrics.symm_hat})

    return row

def oracle_replicate(job, part, cfg):
    """
    One replicate of the oracle protocol.

    Returns:
    - dict: {"rows": Table-1 rows, "failed": bool, "message": str}.
    """
    matrix_index, replicate_index, Y, truth = job
    n = Y.shape[0]
    S = empirical_second_moment(Y)
    header = {"matrix" : matrix_index, "replicate" : replicate_index}
    try:
        gl = match_edge_count(S, n, part, len(truth.graph), cfg)
        if gl is None:
            return {"rows" : [], "failed" : True, "message" : "edge-count bisection failed", **header}

        rows = [dict(header, selected = False, **_metrics_row("gl", gl, truth))]
        lo, hi = LAMBDA2_RATIO_RANGE
        for lambda2 in log_grid(lo * gl.lambda1, hi * gl.lambda1, N_LAMBDA2):
            sol = fit_sgl(SglProblem(S, n, part, gl.lambda1, lambda2), cfg)
            rows.append(dict(header, selected = False, **_metrics_row("sgl", sol, truth)))
    except SymGLError as e:
        return {"rows" : [], "failed" : True, "message" : str(e), **header}

    sgl_rows = [i for i in rows if i["method"] == "sgl"]
    sums = [np.nan_to_num(i["sTPR"]) + np.nan_to_num(i["sTNR"]) for i in sgl_rows]
    sgl_rows[int(np.argmax(sums))]["selected"] = True

    return {"rows" : rows, "failed" : False, "message" : "", **header}

def summarize_replicates(table1, scenario_name):
    """Mean and standard deviation of the six ratios, #edges and #symm for gl and the selected sgl rows."""
    rows = []
    for method, subset in (("gl", table1[table1["method"] == "gl"]),
                           ("sgl", table1[(table1["method"] == "sgl") & table1["selected"]])):
        row = {"scenario" : scenario_name, "method" : method, "n_replicates" : len(subset)}
        for column in METRIC_NAMES + ["edges", "symm"]:
            values = subset[column].astype(float)
            row[column + "_mean"] = values.mean()
            row[column + "_sd"] = values.std(ddof = 1) if len(values) > 1 else np.nan
        rows.append(row)

    return pd.DataFrame(rows)

class OracleResult:
    def __init__(self, table1, table2, sidecar, truths):
        self.table1 = table1
        self.table2 = table2
        self.sidecar = sidecar
        self.truths = truths

def oracle_experiment(scenario, cfg = None, n_threads = 1, logger = None):
    """
    Oracle-tuned benchmark of one scenario.

    One graph is drawn for the scenario, `n_matrices` concentration matrices on it, and
    `replicates` samples of size n from each. Per replicate, lambda1 is matched to the true edge
    count with lambda2 = 0 (the gl row), then 10 log-spaced lambda2 values over
    [1e-3, 10] lambda1 are fitted and the one maximizing sTPR + sTNR is marked as selected.
    All randomness is drawn up front from the scenario seed.

    Returns:
    - OracleResult: Table-1 rows (percentages), Table-2 summary, a JSON-ready sidecar and the
      ground truths.
    """
    logger = resolve_logger(logger)
    cfg = cfg if cfg is not None else SolverConfig()
    rng = np.random.default_rng(scenario.seed)
    part = HemispherePartition(scenario.p)

    graph = gen_graph(scenario.p, scenario.edge_density, rng)
    logger.info("Scenario %s: %d edges on %d vertices." % (scenario.name, len(graph), scenario.p))
    truths, jobs = [], []
    for m in range(scenario.n_matrices):
        truth = gen_precision(graph, part, scenario.sym_fraction, rng, logger)
        truths.append(truth)
        logger.info("Matrix %d: %d of %d homologous edge pairs tied, %d tied diagonals." % (m, len(truth.sym_pairs), truth.n_both, len(truth.sym_vertices)))
        for r in range(scenario.replicates):
            jobs.append((m, r, sample_mvn(truth.Theta_true, scenario.n, rng), truth))

    outputs = run_chunked_jobs(oracle_replicate, jobs, n_threads, part, cfg)
    rows, failures = [], []
    for output in outputs:
        if output["failed"]:
            logger.warning("Replicate %d of matrix %d excluded: %s" % (output["replicate"], output["matrix"], output["message"]))
            failures.append({"matrix" : output["matrix"], "replicate" : output["replicate"], "message" : output["message"]})
            continue
        logger.info("Replicate %d of matrix %d done." % (output["replicate"], output["matrix"]))
        rows += output["rows"]

    columns = ["matrix", "replicate", "method", "lambda1", "lambda2"] + METRIC_NAMES + ["edges", "symm", "selected", "converged"]
    table1 = pd.DataFrame(rows).reindex(columns = columns)
    table1.insert(0, "scenario", scenario.name)
    table2 = summarize_replicates(table1, scenario.name)
    sidecar = {"scenario" : scenario.to_dict(),
               "solver" : cfg.to_dict(),
               "graph_edges" : len(graph),
               "realized_sym_fraction" : [t.realized_sym_fraction for t in truths],
               "tied_pairs" : [len(t.sym_pairs) for t in truths],
               "tied_vertices" : [len(t.sym_vertices) for t in truths],
               "lambda2_grid" : {"n" : N_LAMBDA2, "ratio_range" : list(LAMBDA2_RATIO_RANGE)},
               "failures" : failures}

    return OracleResult(table1, table2, sidecar, truths)
