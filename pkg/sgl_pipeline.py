"""
╔═════════════════════════════════════════════════════╗
║                  sgl_pipeline.py                    ║
╠═════════════════════════════════════════════════════╣
║   Description: Main functions of the SymGL commands ║
╚═════════════════════════════════════════════════════╝
"""

import os

import pandas as pd

from utils import SymGLError, ConfigError, InvalidInputError, get_symgl_logger, welcome, resolve_logger, log_list
from linalg_utils import HemispherePartition, empirical_second_moment
from detrending import detrend, DCS_MIN_LENGTH
from sgl_solver import SglProblem, SolverConfig, fit_sgl
from model_selection import (grid_select, extract_colored_model, rcon_mle, model_loglik, score_model,
                             summary_row, symmetry_report)
from simulation import SimScenario, oracle_experiment
from file_io import (load_timeseries, load_roi_map, order_by_hemisphere, write_residuals, write_table, write_json,
                     model_to_dict, save_model_json, load_model_json, theta_from_model_dict, intersect_models,
                     write_dot, Manifest)

DETREND_METHODS = ("var1", "dcs", "henderson", "none")

class RunConfig:
    """
    Options of one run of the detrend -> select -> report pipeline.

    Every stage is deterministic; seed is only written to run_config.json with the other options.
    """
    def __init__(self, input, out, method = "henderson", h = 6, henderson_method = "wls", transpose = None, roi_map = None,
                 lambda1_grid = None, lambda2_grid = None, gamma = 0.5, criterion = "ebic",
                 rho1 = 1.0, rho2 = 1.0, tol = 1e-6, inner_tol = 1e-8, max_iter = 2000, max_inner = 5000, inner_solver = "admm",
                 seed = 123, n_threads = 1):
        self.input = input
        self.out = out
        self.method = method
        self.h = h
        self.henderson_method = henderson_method
        self.transpose = transpose
        self.roi_map = roi_map
        self.lambda1_grid = lambda1_grid
        self.lambda2_grid = lambda2_grid
        self.gamma = gamma
        self.criterion = criterion
        self.rho1 = rho1
        self.rho2 = rho2
        self.tol = tol
        self.inner_tol = inner_tol
        self.max_iter = max_iter
        self.max_inner = max_inner
        self.inner_solver = inner_solver
        self.seed = seed
        self.n_threads = n_threads

    def solver_config(self):
        try:
            return SolverConfig(self.rho1, self.rho2, self.tol, self.inner_tol, self.max_iter, self.max_inner, self.inner_solver)
        except InvalidInputError as e:
            raise ConfigError(str(e))

    def validate(self):
        if not os.path.exists(self.input):
            raise ConfigError("Input file does not exist: %s" % self.input)
        if self.roi_map is not None and not os.path.exists(self.roi_map):
            raise ConfigError("ROI map does not exist: %s" % self.roi_map)
        if self.method not in DETREND_METHODS:
            raise ConfigError("Unknown detrending method: %s" % self.method)
        if self.method == "henderson" and (int(self.h) != self.h or self.h < 2):
            raise ConfigError("Henderson half-width must be an integer >= 2, got %s." % self.h)
        if self.henderson_method not in ("wls", "literal"):
            raise ConfigError("Unknown Henderson weighting: %s" % self.henderson_method)
        if not 0 <= self.gamma <= 1:
            raise ConfigError("gamma must lie in [0, 1], got %s." % self.gamma)
        if self.criterion not in ("ebic", "bic"):
            raise ConfigError("Unknown criterion: %s" % self.criterion)
        for name, grid in (("lambda1", self.lambda1_grid), ("lambda2", self.lambda2_grid)):
            if grid is not None and (len(grid) == 0 or any(i <= 0 for i in grid)):
                raise ConfigError("The %s grid must be nonempty and positive." % name)
        if self.n_threads < 1:
            raise ConfigError("n_threads must be at least 1.")
        self.solver_config()

    def validate_data(self, X):
        """Preconditions that depend on the loaded series."""
        if X.p % 2 != 0:
            raise ConfigError("The number of series must be even (left and right hemispheres), got %d." % X.p)
        if self.method == "var1" and X.T < X.p + 2:
            raise ConfigError("VAR(1) needs at least p + 2 = %d time points, got %d." % (X.p + 2, X.T))
        if self.method == "dcs" and X.T < DCS_MIN_LENGTH:
            raise ConfigError("DCS detrending needs at least %d time points, got %d." % (DCS_MIN_LENGTH, X.T))
        if self.method == "henderson" and X.T <= 2 * self.h:
            raise ConfigError("Henderson filter with h = %d needs more than %d time points, got %d." % (self.h, 2 * self.h, X.T))

    def to_dict(self):
        record = dict(self.__dict__)
        del record["out"]
        return record

def _load_ordered(input, transpose, roi_map, logger):
    logger.info("Load time series: %s" % input)
    X = load_timeseries(input, transpose)
    roi = load_roi_map(roi_map) if roi_map is not None else None
    X, part, permutation = order_by_hemisphere(X, roi)
    logger.info("%d time points, %d series (q = %d per hemisphere)." % (X.T, X.p, part.q))
    log_list(logger, "Homolog pairs", ["%s / %s" % (X.names[i], X.names[j]) for i, j in part.homolog_pairs()])

    return X, part, permutation

def tied_pairs_frame(model_dict):
    """Symmetry report built from the tied pair lists alone, for models without concentration values."""
    q = model_dict["p"] // 2
    names = model_dict["names"]
    rows = [{"type" : "vertex", "left" : names[i], "right" : names[i + q]} for i in model_dict["tied_vertex_pairs"]]
    rows += [{"type" : "edge", "left" : "%s-%s" % (names[i], names[j]), "right" : "%s-%s" % (names[i + q], names[j + q])}
             for i, j in model_dict["tied_edge_pairs"]]

    return pd.DataFrame(rows).reindex(columns = ["type", "left", "right", "value_left", "value_right", "partial_var",
                                                 "partial_corr", "reg_coef_ij", "reg_coef_ji"])

def write_report(model_dict, out, prefix, logger):
    """DOT symmetry graph and symmetry report of a model dict."""
    dot_file = os.path.join(out, "%s_symmetry.dot" % prefix)
    report_file = os.path.join(out, "%s_symmetry_report.tsv" % prefix)
    write_dot(model_dict, dot_file)
    if model_dict.get("theta"):
        report = symmetry_report(theta_from_model_dict(model_dict), HemispherePartition(model_dict["p"]), model_dict["names"])
    else:
        report = tied_pairs_frame(model_dict)
    write_table(report, report_file)
    logger.info("Symmetry graph: %s; symmetry report: %s" % (dot_file, report_file))

    return dot_file, report_file

def run_pipeline(cfg, logger = None):
    """
    Detrend, select penalties, refit and report.

    Every output file is listed in the MANIFEST of the output directory with its stage and
    status; a failing stage is recorded as failed and its error re-raised, keeping the
    outputs of earlier stages.

    Returns:
    - dict: stage name -> output file path.
    """
    logger = resolve_logger(logger)
    cfg.validate()
    if not os.path.exists(cfg.out):
        os.makedirs(cfg.out)

    # static parameters for SymGL
    residual_file_name = "residuals.csv"
    detrend_diagnostics_file_name = "detrend_diagnostics.json"
    trace_file_name = "selection_trace.tsv"
    model_file_name = "selected_model.json"
    summary_file_name = "summary.tsv"
    config_file_name = "run_config.json"

    manifest = Manifest(cfg.out)
    bundle = {}
    stage = "load"
    try:
        write_json(cfg.to_dict(), os.path.join(cfg.out, config_file_name))
        X, part, permutation = _load_ordered(cfg.input, cfg.transpose, cfg.roi_map, logger)
        cfg.validate_data(X)
        manifest.record(stage, "done", config_file_name)

        stage = "detrend"
        if cfg.method == "none":
            residuals = X
            manifest.record(stage, "skipped")
        else:
            logger.info("Detrend by %s..." % cfg.method)
            residuals, diagnostics = detrend(X, cfg.method, cfg.h, cfg.henderson_method, cfg.n_threads, logger)
            write_residuals(residuals, os.path.join(cfg.out, residual_file_name))
            write_json(diagnostics, os.path.join(cfg.out, detrend_diagnostics_file_name))
            manifest.record(stage, "done", residual_file_name)
            manifest.record(stage, "done", detrend_diagnostics_file_name)
            bundle["residuals"] = os.path.join(cfg.out, residual_file_name)

        stage = "select"
        S = empirical_second_moment(residuals.data)
        n = residuals.T
        selection = grid_select(S, n, part, cfg.lambda1_grid, cfg.lambda2_grid, cfg.gamma, cfg.solver_config(),
                                cfg.criterion, cfg.n_threads, logger)
        write_table(selection.trace, os.path.join(cfg.out, trace_file_name))
        manifest.record(stage, "done", trace_file_name)
        bundle["trace"] = os.path.join(cfg.out, trace_file_name)

        stage = "report"
        best = selection.best
        model_dict = model_to_dict(best.Theta_hat, selection.model, residuals.names, permutation,
                                   best.lambda1, best.lambda2, selection.score, cfg.criterion)
        save_model_json(model_dict, os.path.join(cfg.out, model_file_name))
        manifest.record(stage, "done", model_file_name)
        summary = pd.DataFrame([summary_row("gl", selection.gl_best, selection.gl_model, selection.gl_score, part, cfg.criterion),
                                summary_row("sgl", best, selection.model, selection.score, part, cfg.criterion)])
        write_table(summary, os.path.join(cfg.out, summary_file_name))
        manifest.record(stage, "done", summary_file_name)
        dot_file, report_file = write_report(model_dict, cfg.out, "selected", logger)
        manifest.record(stage, "done", os.path.basename(dot_file))
        manifest.record(stage, "done", os.path.basename(report_file))
        bundle.update({"model" : os.path.join(cfg.out, model_file_name), "summary" : os.path.join(cfg.out, summary_file_name),
                       "dot" : dot_file, "symmetry_report" : report_file})
    except Exception:
        manifest.record(stage, "failed")
        raise

    logger.info("Done!")

    return bundle

def symgl_detrend(input, out, method, h, henderson_method, transpose, roi_map, n_threads):
    logger = get_symgl_logger()
    welcome(logger, "detrend")
    logger.info("Output files will be at: %s" % out)
    if not os.path.exists(out):
        os.makedirs(out)

    cfg = RunConfig(input, out, method, h, henderson_method, transpose, roi_map, n_threads = n_threads)
    cfg.validate()
    X, part, permutation = _load_ordered(input, transpose, roi_map, logger)
    cfg.validate_data(X)
    residuals, diagnostics = detrend(X, method, h, henderson_method, n_threads, logger)
    write_residuals(residuals, os.path.join(out, "residuals.csv"))
    write_json(diagnostics, os.path.join(out, "detrend_diagnostics.json"))
    logger.info("Done!")

def symgl_fit(input, out, lambda1, lambda2, transpose, roi_map, rho1, rho2, tol, inner_tol, max_iter, max_inner, inner_solver):
    logger = get_symgl_logger()
    welcome(logger, "fit")
    logger.info("Output files will be at: %s" % out)
    if not os.path.exists(out):
        os.makedirs(out)

    cfg = RunConfig(input, out, "none", transpose = transpose, roi_map = roi_map, rho1 = rho1, rho2 = rho2, tol = tol,
                    inner_tol = inner_tol, max_iter = max_iter, max_inner = max_inner, inner_solver = inner_solver)
    cfg.validate()
    if lambda1 < 0 or lambda2 < 0:
        raise ConfigError("Penalties must be nonnegative.")
    X, part, permutation = _load_ordered(input, transpose, roi_map, logger)
    cfg.validate_data(X)

    S = empirical_second_moment(X.data)
    sol = fit_sgl(SglProblem(S, X.T, part, lambda1, lambda2), cfg.solver_config(), logger = logger)
    logger.info("Fit: %d outer iterations, converged = %s, objective = %.6f, KKT residual = %.2e" % (sol.outer_iters, sol.converged, sol.objective, sol.kkt_residual))
    model = extract_colored_model(sol.Theta_hat, part)
    try:
        Theta_mle, l = rcon_mle(S, X.T, model)
        score = score_model(model_loglik(l, X.T), X.T, part.p, model.n_params, 0.0)
    except SymGLError as e:
        logger.warning("Colored model refit failed: %s" % e)
        score = None

    model_dict = model_to_dict(sol.Theta_hat, model, X.names, permutation, lambda1, lambda2, score, "bic" if score is not None else None)
    save_model_json(model_dict, os.path.join(out, "fit_model.json"))
    write_json({"objective" : sol.objective, "outer_iters" : sol.outer_iters, "converged" : sol.converged,
                "kkt_residual" : sol.kkt_residual, "solver" : cfg.solver_config().to_dict()},
               os.path.join(out, "fit_solver.json"))
    write_report(model_dict, out, "fit", logger)
    logger.info("Done!")

def symgl_select(input, out, lambda1_grid, lambda2_grid, gamma, criterion, transpose, roi_map, rho1, rho2, tol, inner_tol, max_iter, max_inner, inner_solver, n_threads):
    logger = get_symgl_logger()
    welcome(logger, "select")
    logger.info("Output files will be at: %s" % out)
    cfg = RunConfig(input, out, "none", transpose = transpose, roi_map = roi_map, lambda1_grid = lambda1_grid,
                    lambda2_grid = lambda2_grid, gamma = gamma, criterion = criterion, rho1 = rho1, rho2 = rho2, tol = tol,
                    inner_tol = inner_tol, max_iter = max_iter, max_inner = max_inner, inner_solver = inner_solver, n_threads = n_threads)
    run_pipeline(cfg, logger)

def symgl_pipeline(input, out, method, h, henderson_method, lambda1_grid, lambda2_grid, gamma, criterion, transpose, roi_map, rho1, rho2, tol, inner_tol, max_iter, max_inner, inner_solver, seed, n_threads):
    logger = get_symgl_logger()
    welcome(logger, "pipeline")
    logger.info("Output files will be at: %s" % out)
    cfg = RunConfig(input, out, method, h, henderson_method, transpose, roi_map, lambda1_grid, lambda2_grid, gamma, criterion,
                    rho1, rho2, tol, inner_tol, max_iter, max_inner, inner_solver, seed, n_threads)
    run_pipeline(cfg, logger)

def symgl_simulate(out, scenario, p, edge_density, sym_fraction, n, replicates, n_matrices, seed, rho1, rho2, tol, inner_tol, max_iter, max_inner, inner_solver, n_threads):
    logger = get_symgl_logger()
    welcome(logger, "simulate")
    logger.info("Output files will be at: %s" % out)
    if not os.path.exists(out):
        os.makedirs(out)

    try:
        if scenario is not None:
            sim = SimScenario.preset(scenario, p = p, edge_density = edge_density, sym_fraction = sym_fraction, n = n,
                                     replicates = replicates, n_matrices = n_matrices, seed = seed)
        else:
            if p is None or edge_density is None or sym_fraction is None or n is None:
                raise ConfigError("Without --scenario, --p, --density, --sym-fraction and --n are required.")
            sim = SimScenario(p, edge_density, sym_fraction, n, replicates or 9, seed, n_matrices or 1)
        cfg = SolverConfig(rho1, rho2, tol, inner_tol, max_iter, max_inner, inner_solver)
    except InvalidInputError as e:
        raise ConfigError(str(e))

    result = oracle_experiment(sim, cfg, n_threads, logger)
    write_table(result.table1, os.path.join(out, "table1_%s.tsv" % sim.name))
    write_table(result.table2, os.path.join(out, "table2_%s.tsv" % sim.name))
    write_json(result.sidecar, os.path.join(out, "simulation_%s.json" % sim.name))
    logger.info("Done!")

def symgl_intersect(models, out):
    logger = get_symgl_logger()
    welcome(logger, "intersect")
    if not os.path.exists(out):
        os.makedirs(out)

    model_dicts = [load_model_json(i) for i in models]
    shared = intersect_models(model_dicts)
    logger.info("Intersection of %d models: %d edges, %d tied edge pairs, %d tied vertex pairs." % (
        len(model_dicts), len(shared["edges"]), len(shared["tied_edge_pairs"]), len(shared["tied_vertex_pairs"])))
    save_model_json(shared, os.path.join(out, "intersection.json"))
    write_report(shared, out, "intersection", logger)
    logger.info("Done!")

def symgl_report(model, out):
    logger = get_symgl_logger()
    welcome(logger, "report")
    if not os.path.exists(out):
        os.makedirs(out)

    model_dict = load_model_json(model)
    prefix = os.path.splitext(os.path.basename(model))[0]
    write_report(model_dict, out, prefix, logger)
    logger.info("Done!")
