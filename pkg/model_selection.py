"""
╔═════════════════════════════════════════════════════╗
║                 model_selection.py                  ║
╠═════════════════════════════════════════════════════╣
║   Description: Colored (RCON) models, maximum       ║
║   likelihood refits, BIC / eBIC and grid search     ║
╚═════════════════════════════════════════════════════╝
"""

import numpy as np
import pandas as pd
import scipy.linalg

from utils import SymGLError, InvalidInputError, ConvergenceError, run_chunked_jobs, resolve_logger
from linalg_utils import as_sym_matrix, is_positive_definite, partial_stats, is_tied, ZERO_TOL, TIE_TOL
from sgl_solver import SglProblem, SolverConfig, fit_sgl, count_edges, tied_pairs, symmetric_edge_pairs

class ColoredModel:
    """
    Gaussian graphical model with homolog-pair equality constraints.

    Vertex classes are singletons (i, ) or homolog pairs (i, i'); edge classes are singletons
    [(i, j)] or homolog pairs [(i, j), (i', j')], with i > j in every edge tuple. Each class c
    owns one free parameter eta_c and contributes eta_c T_c to Theta, T_c being the symmetric
    0/1 indicator of its positions.
    """
    def __init__(self, part, edges, vertex_classes, edge_classes):
        self.part = part
        self.p = part.p
        self.edges = sorted(edges)
        self.vertex_classes = vertex_classes
        self.edge_classes = edge_classes

    @property
    def n_params(self):
        return len(self.vertex_classes) + len(self.edge_classes)

    def class_positions(self):
        """Positions (i, j), i >= j, of every class: vertex classes first, then edge classes."""
        return [[(i, i) for i in c] for c in self.vertex_classes] + [list(c) for c in self.edge_classes]

    def basis(self):
        mats = []
        for positions in self.class_positions():
            T_c = np.zeros((self.p, self.p))
            for i, j in positions:
                T_c[i, j] = T_c[j, i] = 1.0
            mats.append(T_c)
        return mats

    def to_matrix(self, eta):
        Theta = np.zeros((self.p, self.p))
        for value, positions in zip(eta, self.class_positions()):
            for i, j in positions:
                Theta[i, j] = Theta[j, i] = value
        return Theta

    def tied_edge_pairs(self):
        return [c[0] for c in self.edge_classes if len(c) == 2]

    def tied_vertex_pairs(self):
        return [c[0] for c in self.vertex_classes if len(c) == 2]

class ModelScore:
    def __init__(self, loglik, d, bic, ebic, gamma):
        self.loglik = loglik
        self.d = d
        self.bic = bic
        self.ebic = ebic
        self.gamma = gamma

    def value(self, criterion):
        return self.ebic if criterion == "ebic" else self.bic

class SelectionResult:
    def __init__(self, best, model, score, trace, gl_best, gl_model, gl_score, criterion):
        self.best = best
        self.model = model
        self.score = score
        self.trace = trace
        self.gl_best = gl_best
        self.gl_model = gl_model
        self.gl_score = gl_score
        self.criterion = criterion

def extract_colored_model(Theta_hat, part, zero_tol = ZERO_TOL, tie_tol = TIE_TOL):
    Theta_hat = np.asarray(Theta_hat, dtype = float)
    if Theta_hat.shape != (part.p, part.p):
        raise InvalidInputError("Estimate of shape %s does not match a partition of %d variables." % (Theta_hat.shape, part.p))
    q = part.q

    vertex_classes = []
    for i in range(q):
        if is_tied(Theta_hat[i, i], Theta_hat[i + q, i + q], tie_tol):
            vertex_classes.append((i, i + q))
        else:
            vertex_classes += [(i, ), (i + q, )]

    rows, cols = np.tril_indices(part.p, k = -1)
    present = np.abs(Theta_hat[rows, cols]) > zero_tol
    edges = [(int(i), int(j)) for i, j in zip(rows[present], cols[present])]
    edge_set = set(edges)

    edge_classes = []
    for i, j in edges:
        if i < q:
            homolog = (i + q, j + q)
            if homolog in edge_set and is_tied(Theta_hat[i, j], Theta_hat[homolog], tie_tol):
                edge_classes.append([(i, j), homolog])
                continue
        elif j >= q and (i - q, j - q) in edge_set and is_tied(Theta_hat[i - q, j - q], Theta_hat[i, j], tie_tol):
            # already in the class of its LL homolog
            continue
        edge_classes.append([(i, j)])

    return ColoredModel(part, edges, sorted(vertex_classes), sorted(edge_classes))

def _loglik(Theta, S):
    L = scipy.linalg.cholesky(Theta, lower = True)
    return 2.0 * np.sum(np.log(np.diag(L))) - np.sum(S * Theta)

def rcon_mle(S, n, model, tol = 1e-8, max_iter = 500, logger = None):
    """
    Maximum likelihood estimate of Theta in a colored model by Newton's method on the class
    parameters.

    The gradient is g_c = tr(T_c (Theta^-1 - S)) and the Hessian -tr(T_c Theta^-1 T_c' Theta^-1);
    steps are halved until Theta stays positive definite and the log-likelihood does not drop.
    The start diag(1/s_ii), averaged within tied vertex classes, is feasible for every model.

    Parameters:
    - S (np.ndarray): Sample second-moment matrix.
    - n (int): Sample size.
    - model (ColoredModel): The colored model.
    - tol (float): Stop when max_c |g_c| < tol.

    Returns:
    - tuple: (Theta_mle, l) with l = log det Theta_mle - tr(S Theta_mle).
    """
    S = as_sym_matrix(S, "Sample covariance")
    if S.shape[0] != model.p:
        raise InvalidInputError("Sample covariance and model dimensions differ.")
    if int(n) != n or n < 1:
        raise InvalidInputError("Sample size must be a positive integer, got %s." % n)
    s_diag = np.diag(S)
    if np.any(s_diag <= 0):
        raise ConvergenceError("Likelihood is unbounded: sample covariance has a zero diagonal entry.",
                               {"zero_variance" : np.where(s_diag <= 0)[0].tolist()})

    classes = model.class_positions()
    d = len(classes)
    # ordered positions (a, b) of every T_c and their class membership
    a_idx, b_idx, owner = [], [], []
    for c, positions in enumerate(classes):
        for i, j in positions:
            a_idx.append(i)
            b_idx.append(j)
            owner.append(c)
            if i != j:
                a_idx.append(j)
                b_idx.append(i)
                owner.append(c)
    a_idx, b_idx, owner = np.array(a_idx), np.array(b_idx), np.array(owner)
    C = np.zeros((len(owner), d))
    C[np.arange(len(owner)), owner] = 1.0

    eta = np.zeros(d)
    for c, vertex_class in enumerate(model.vertex_classes):
        eta[c] = np.mean(1.0 / s_diag[list(vertex_class)])
    Theta = model.to_matrix(eta)
    l_old = _loglik(Theta, S)

    for it in range(1, max_iter + 1):
        W = scipy.linalg.inv(Theta)
        g = C.T @ (W - S)[b_idx, a_idx]
        if np.max(np.abs(g)) < tol:
            return (Theta + Theta.T) / 2, l_old

        M = W[np.ix_(b_idx, a_idx)] * W[np.ix_(b_idx, a_idx)].T
        neg_hessian = C.T @ M @ C
        try:
            direction = scipy.linalg.solve(neg_hessian, g, assume_a = "pos")
        except (np.linalg.LinAlgError, ValueError):
            direction = g

        step = 1.0
        while step > 1e-12:
            candidate = model.to_matrix(eta + step * direction)
            if is_positive_definite(candidate):
                l_new = _loglik(candidate, S)
                if l_new >= l_old - 1e-12 * max(1.0, abs(l_old)):
                    break
            step /= 2
        else:
            if np.max(np.abs(g)) < 1e-6:
                return (Theta + Theta.T) / 2, l_old
            raise ConvergenceError("RCON likelihood maximisation stalled.",
                                   {"iterations" : it, "max_gradient" : float(np.max(np.abs(g))), "loglik" : float(l_old)})

        eta = eta + step * direction
        Theta = candidate
        l_old = l_new
        if not np.all(np.isfinite(eta)) or np.abs(eta).max() > 1e12:
            break

    raise ConvergenceError("RCON likelihood maximisation did not converge in %d iterations." % max_iter,
                           {"iterations" : max_iter, "loglik" : float(l_old), "max_abs_eta" : float(np.abs(eta).max())})

def likelihood_equation_residual(Theta, S, model):
    """max_c |tr(T_c (Theta^-1 - S))|."""
    G = scipy.linalg.inv(Theta) - S
    return max(abs(np.sum(T_c * G)) for T_c in model.basis())

def model_loglik(l, n):
    """(n / 2) l, the log-likelihood of the sample up to a constant."""
    return n / 2.0 * l

def score_model(loglik, n, p, d, gamma):
    """
    BIC and extended BIC, -2 l + log(n) d + 4 d gamma log(p).

    Example usage:
    >>> round(score_model(-100.0, 400, 70, 10, 0.5).ebic, 3)
    344.885
    """
    if n < 1:
        raise InvalidInputError("Sample size must be positive.")
    if not 0 <= gamma <= 1:
        raise InvalidInputError("gamma must lie in [0, 1], got %s." % gamma)
    bic = -2.0 * loglik + np.log(n) * d
    ebic = bic + 4.0 * d * gamma * np.log(p)

    return ModelScore(loglik, d, bic, ebic, gamma)

def log_grid(lo, hi, n):
    if lo <= 0 or hi < lo or n < 1:
        raise InvalidInputError("Invalid grid: [%s, %s] with %s points." % (lo, hi, n))
    if n == 1:
        return np.array([float(hi)])
    return np.geomspace(lo, hi, n)

def lambda_max(S):
    S = np.asarray(S)
    off = np.abs(S[~np.eye(S.shape[0], dtype = bool)])
    return float(off.max()) if off.size else 0.0

def default_grids(S, n_lambda1 = 30, n_lambda2 = 20):
    """
    lambda1: n_lambda1 values log-spaced over [0.01, 1] lambda_max,
    lambda2: n_lambda2 values log-spaced over [1e-4, 1] lambda_max,
    with lambda_max the largest off-diagonal |s_ij|.
    """
    top = lambda_max(S)
    if top <= 0:
        raise InvalidInputError("Sample covariance has no nonzero off-diagonal entry; no default penalty grid.")

    return log_grid(0.01 * top, top, n_lambda1), log_grid(1e-4 * top, top, n_lambda2)

def summary_row(method, sol, model, score, part, criterion):
    """One row of the summary table for the fit `sol` and its refitted model."""
    offdiag, diag = tied_pairs(sol.Theta_hat, part)
    edges = count_edges(sol.Theta_hat)
    return {"method" : method,
            "criterion" : criterion,
            "lambda1" : sol.lambda1,
            "lambda2" : sol.lambda2,
            "edges" : edges,
            "density" : edges / (part.p * (part.p - 1) / 2),
            "sym_edges" : len(symmetric_edge_pairs(sol.Theta_hat, part)),
            "sym_offdiag" : len(offdiag),
            "sym_diag" : len(diag),
            "d" : score.d,
            "loglik" : score.loglik,
            "bic" : score.bic,
            "ebic" : score.ebic}

def evaluate_point(job, S, n, part, gamma, cfg):
    """
    Fit, color, refit and score one (lambda1, lambda2) grid point.

    Returns:
    - dict: the trace record plus the solution, model and score (None when infeasible).
    """
    stage, lambda1, lambda2 = job
    record = {"stage" : stage, "lambda1" : lambda1, "lambda2" : lambda2}
    try:
        sol = fit_sgl(SglProblem(S, n, part, lambda1, lambda2), cfg)
        model = extract_colored_model(sol.Theta_hat, part)
        Theta_mle, l = rcon_mle(S, n, model)
        score = score_model(model_loglik(l, n), n, part.p, model.n_params, gamma)
    except SymGLError as e:
        record.update({"feasible" : False, "error" : str(e)})
        return {"record" : record, "sol" : None, "model" : None, "score" : None}

    record.update(summary_row("sgl", sol, model, score, part, None))
    del record["method"], record["criterion"]
    record.update({"converged" : bool(sol.converged), "feasible" : True, "error" : ""})

    return {"record" : record, "sol" : sol, "model" : model, "score" : score}

def _run_stage(jobs, S, n, part, gamma, cfg, criterion, n_threads, logger):
    outputs = run_chunked_jobs(evaluate_point, jobs, n_threads, S, n, part, gamma, cfg)
    best = None
    for output in outputs:
        record = output["record"]
        if not record["feasible"]:
            logger.warning("Grid point lambda1 = %g, lambda2 = %g is infeasible: %s" % (record["lambda1"], record["lambda2"], record["error"]))
            continue
        logger.info("lambda1 = %.4g, lambda2 = %.4g: %d edges, %d tied pairs, %s = %.4f" % (
            record["lambda1"], record["lambda2"], record["edges"], record["sym_offdiag"] + record["sym_diag"], criterion, record[criterion]))
        if best is None or record[criterion] < best["record"][criterion]:
            best = output
    if best is None:
        raise ConvergenceError("Every grid point of the %s stage is infeasible." % jobs[0][0])

    return outputs, best

def grid_select(S, n, part, lambda1_grid = None, lambda2_grid = None, gamma = 0.5, cfg = None, criterion = "ebic", n_threads = 1, logger = None):
    """
    Two-stage penalty selection.

    Stage 1 holds lambda2 at the smallest grid value and picks lambda1 by the criterion of the
    refitted colored model; stage 2 sweeps lambda2 at that lambda1. Every grid point is fitted
    from a cold start.

    Parameters:
    - S (np.ndarray): Sample second-moment matrix.
    - n (int): Sample size.
    - part (HemispherePartition): Hemisphere partition.
    - lambda1_grid, lambda2_grid (array-like): Penalty grids; defaults from `default_grids`.
    - gamma (float): eBIC parameter in [0, 1].
    - cfg (SolverConfig): Solver settings.
    - criterion (str): "ebic" or "bic".
    - n_threads (int): Worker processes for the grid points.

    Returns:
    - SelectionResult: selected fit, colored model, score, the trace DataFrame and the
      stage-1 winner as the graphical lasso comparison fit.
    """
    logger = resolve_logger(logger)
    cfg = cfg if cfg is not None else SolverConfig()
    if criterion not in ("ebic", "bic"):
        raise InvalidInputError("Unknown criterion: %s." % criterion)
    default1, default2 = (None, None)
    if lambda1_grid is None or lambda2_grid is None:
        default1, default2 = default_grids(S)
    lambda1_grid = np.asarray(default1 if lambda1_grid is None else lambda1_grid, dtype = float)
    lambda2_grid = np.asarray(default2 if lambda2_grid is None else lambda2_grid, dtype = float)
    for name, grid in (("lambda1", lambda1_grid), ("lambda2", lambda2_grid)):
        if grid.size == 0 or np.any(grid <= 0) or not np.all(np.isfinite(grid)):
            raise InvalidInputError("The %s grid must be nonempty and positive." % name)

    lambda2_min = float(lambda2_grid.min())
    logger.info("Stage 1: %d lambda1 values at lambda2 = %g." % (len(lambda1_grid), lambda2_min))
    stage1, gl = _run_stage([("lambda1", float(i), lambda2_min) for i in lambda1_grid], S, n, part, gamma, cfg, criterion, n_threads, logger)
    lambda1_best = gl["record"]["lambda1"]

    logger.info("Stage 2: %d lambda2 values at lambda1 = %g." % (len(lambda2_grid), lambda1_best))
    stage2, best = _run_stage([("lambda2", lambda1_best, float(i)) for i in lambda2_grid], S, n, part, gamma, cfg, criterion, n_threads, logger)

    columns = ["stage", "lambda1", "lambda2", "edges", "density", "sym_edges", "sym_offdiag", "sym_diag",
               "d", "loglik", "bic", "ebic", "converged", "feasible", "error"]
    trace = pd.DataFrame([i["record"] for i in stage1 + stage2]).reindex(columns = columns)
    logger.info("Selected lambda1 = %g, lambda2 = %g (%s = %.4f)." % (best["record"]["lambda1"], best["record"]["lambda2"], criterion, best["record"][criterion]))

    return SelectionResult(best["sol"], best["model"], best["score"], trace, gl["sol"], gl["model"], gl["score"], criterion)

def symmetry_report(Theta_hat, part, names = None, zero_tol = ZERO_TOL, tie_tol = TIE_TOL):
    """
    Tied homologous concentrations and what they imply.

    A tied diagonal pair has equal partial variances. A tied edge pair whose four vertices are
    diagonally tied also has equal partial correlations and equal regression coefficients.

    Returns:
    - pd.DataFrame: one row per tied pair.
    """
    Theta_hat = np.asarray(Theta_hat, dtype = float)
    q = part.q
    names = names if names is not None else ["V%d" % (i + 1) for i in range(part.p)]
    offdiag, diag = tied_pairs(Theta_hat, part, zero_tol, tie_tol)
    try:
        stats = partial_stats(Theta_hat)
    except SymGLError:
        stats = None

    rows = []
    for i in diag:
        rows.append({"type" : "vertex",
                     "left" : names[i],
                     "right" : names[i + q],
                     "value_left" : Theta_hat[i, i],
                     "value_right" : Theta_hat[i + q, i + q],
                     "partial_var" : stats.partial_var[i] if stats is not None else np.nan})
    diag_set = set(diag)
    for i, j in offdiag:
        row = {"type" : "edge",
               "left" : "%s-%s" % (names[i], names[j]),
               "right" : "%s-%s" % (names[i + q], names[j + q]),
               "value_left" : Theta_hat[i, j],
               "value_right" : Theta_hat[i + q, j + q]}
        if stats is not None and i in diag_set and j in diag_set:
            row["partial_corr"] = stats.partial_corr[i, j]
            row["reg_coef_ij"] = stats.reg_coef[i, j]
            row["reg_coef_ji"] = stats.reg_coef[j, i]
        rows.append(row)

    columns = ["type", "left", "right", "value_left", "value_right", "partial_var", "partial_corr", "reg_coef_ij", "reg_coef_ji"]
    return pd.DataFrame(rows).reindex(columns = columns)
