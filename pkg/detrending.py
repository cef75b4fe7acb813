"""
╔═════════════════════════════════════════════════════╗
║                   detrending.py                     ║
╠═════════════════════════════════════════════════════╣
║  Description: Signal removal from multivariate time ║
║     series: VAR(1), Student-t score-driven level    ║
║            and Henderson trend filters              ║
╚═════════════════════════════════════════════════════╝
"""

import numpy as np
import pandas as pd
import scipy.optimize
import scipy.stats
from statsmodels.tsa.api import VAR

from utils import SymGLError, InvalidInputError, RankDeficiencyError, run_chunked_jobs, resolve_logger

DCS_MIN_LENGTH = 50
DCS_NU_STARTS = (5.0, 30.0, 200.0)
DCS_MAX_NU = 1e6
# |a| bound on phi = tanh(a)
DCS_MAX_ATANH_PHI = 8.0

class TimeSeriesMatrix:
    """T x p observations; rows are time points, columns are named series."""
    def __init__(self, data, names = None, time_index = None):
        data = np.array(data, dtype = float)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise InvalidInputError("Time series must be a nonempty T x p matrix, got shape %s." % (data.shape, ))
        if not np.all(np.isfinite(data)):
            bad = np.argwhere(~np.isfinite(data))
            raise InvalidInputError("Time series contains %d non-finite cells, first at row %d, column %d." % (len(bad), bad[0][0], bad[0][1]))
        if names is None:
            names = ["V%d" % (i + 1) for i in range(data.shape[1])]
        names = [str(i) for i in names]
        if len(names) != data.shape[1]:
            raise InvalidInputError("%d names given for %d series." % (len(names), data.shape[1]))
        if len(set(names)) != len(names):
            raise InvalidInputError("Series names must be unique.")
        if time_index is None:
            time_index = np.arange(data.shape[0])

        self.data = data
        self.names = names
        self.time_index = np.asarray(time_index)

    @property
    def T(self):
        return self.data.shape[0]

    @property
    def p(self):
        return self.data.shape[1]

    def column(self, name):
        return self.data[:, self.names.index(name)]

    def select(self, names):
        idx = [self.names.index(i) for i in names]
        return TimeSeriesMatrix(self.data[:, idx], names, self.time_index)

    def to_frame(self):
        return pd.DataFrame(self.data, columns = self.names, index = self.time_index)

class Var1Fit:
    def __init__(self, Phi, residuals, means):
        self.Phi = Phi
        self.residuals = residuals
        self.means = means
        self.spectral_radius = float(np.max(np.abs(np.linalg.eigvals(Phi))))
        self.stable = self.spectral_radius < 1

class DcsFit:
    def __init__(self, omega, phi, kappa, sigma, nu, mu_path, u_path, loglik, diagnostics):
        self.omega = omega
        self.phi = phi
        self.kappa = kappa
        self.sigma = sigma
        self.nu = nu
        self.mu_path = mu_path
        self.u_path = u_path
        self.residuals = None
        self.loglik = loglik
        self.diagnostics = diagnostics

    def params(self):
        return {"omega" : self.omega, "phi" : self.phi, "kappa" : self.kappa, "sigma" : self.sigma, "nu" : self.nu}

class HendersonFilter:
    def __init__(self, h, weights, method = "wls"):
        self.h = h
        self.weights = weights
        self.method = method

    def __len__(self):
        return len(self.weights)

def fit_var1(X):
    """
    Least-squares VAR(1) on the column-centred series.

    Parameters:
    - X (TimeSeriesMatrix): T x p series with T >= p + 2.

    Returns:
    - Var1Fit: Phi (p x p), the (T - 1) x p residuals y_t = x_t - Phi x_(t-1) and the
      stability flag of Phi.
    """
    if X.T < X.p + 2:
        raise InvalidInputError("VAR(1) needs at least p + 2 = %d time points, got %d." % (X.p + 2, X.T))

    means = X.data.mean(axis = 0)
    centered = X.data - means
    lagged = centered[:-1]
    rank = np.linalg.matrix_rank(lagged.T @ lagged)
    if rank < X.p:
        raise RankDeficiencyError("Lagged Gram matrix of the VAR(1) regression has rank %d < %d." % (rank, X.p))

    results = VAR(centered).fit(maxlags = 1, trend = "n")
    Phi = np.asarray(results.coefs[0])
    residuals = np.asarray(results.resid)

    return Var1Fit(Phi, residuals, means)

def dcs_score(v, sigma, nu):
    """
    Student-t score of the location, scaled to unit slope at zero.

    Example usage:
    >>> dcs_score(1.0, 1.0, 5.0)
    0.8333333333333334
    """
    return v / (1.0 + v ** 2 / (nu * sigma ** 2))

def dcs_filter(x, omega, phi, kappa, sigma, nu):
    """
    Run the level recursion mu_t = omega + phi mu_(t-1) + kappa u_(t-1), started at mu_1 = x_1.

    Returns:
    - tuple: (mu_path, u_path) as arrays of length T.
    """
    T = len(x)
    mu = np.empty(T)
    u = np.empty(T)
    scale = nu * sigma ** 2
    mu_t = x[0]
    for t in range(T):
        if t > 0:
            mu_t = omega + phi * mu_t + kappa * u[t - 1]
        v_t = x[t] - mu_t
        mu[t] = mu_t
        u[t] = v_t / (1.0 + v_t * v_t / scale)

    return mu, u

def _dcs_unpack(params):
    omega, a, kappa, b, c = params
    phi = np.tanh(np.clip(a, -DCS_MAX_ATANH_PHI, DCS_MAX_ATANH_PHI))
    sigma = np.exp(b)
    nu = 2.0 + np.exp(min(c, np.log(DCS_MAX_NU)))

    return omega, phi, kappa, sigma, nu

def dcs_loglik(x, omega, phi, kappa, sigma, nu):
    mu, u = dcs_filter(x, omega, phi, kappa, sigma, nu)
    return float(np.sum(scipy.stats.t.logpdf(x - mu, df = nu, scale = sigma))), mu, u

def _dcs_negloglik(params, x):
    omega, phi, kappa, sigma, nu = _dcs_unpack(params)
    value, mu, u = dcs_loglik(x, omega, phi, kappa, sigma, nu)
    if not np.isfinite(value):
        return 1e300

    return -value

def fit_dcs(x, max_iter = 2000):
    """
    Maximum likelihood fit of the first-order Student-t score-driven level model.

    phi = tanh(a), sigma = exp(b) and nu = 2 + exp(c) keep |phi| < 1, sigma > 0 and nu > 2.
    Each of three deterministic starts runs Nelder-Mead followed by an L-BFGS-B refinement
    and the best likelihood wins.

    Parameters:
    - x (np.ndarray): Series of length T >= 50.
    - max_iter (int): Iteration cap of each optimizer call.

    Returns:
    - DcsFit: Parameters, filtered level, scores, residuals x_t - mu_t, maximized
      log-likelihood (None for a constant series) and optimizer diagnostics.
    """
    x = np.asarray(x, dtype = float)
    if x.ndim != 1:
        raise InvalidInputError("DCS fitting expects a single series.")
    if len(x) < DCS_MIN_LENGTH:
        raise InvalidInputError("DCS fitting needs at least %d time points, got %d." % (DCS_MIN_LENGTH, len(x)))
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("Series contains non-finite values.")

    scale = np.std(x)
    if scale <= 1e-12 * max(1.0, np.abs(x).max()):
        # flat likelihood: the level is the constant itself
        T = len(x)
        fit = DcsFit(float(x[0]), 0.0, 0.0, np.finfo(float).eps * max(1.0, abs(x[0])), 2.0 + DCS_MAX_NU,
                     np.full(T, x[0]), np.zeros(T), None,
                     {"converged" : False, "degenerate" : True, "message" : "constant series", "nfev" : 0})
        fit.residuals = x - fit.mu_path
        return fit

    mean = np.mean(x)
    best = None
    nfev = 0
    for nu0 in DCS_NU_STARTS:
        phi0 = 0.5
        start = np.array([mean * (1 - phi0), np.arctanh(phi0), 0.5, np.log(scale), np.log(nu0 - 2.0)])
        simplex = scipy.optimize.minimize(_dcs_negloglik, start, args = (x, ), method = "Nelder-Mead",
                                          options = {"maxiter" : max_iter, "xatol" : 1e-8, "fatol" : 1e-10})
        refined = scipy.optimize.minimize(_dcs_negloglik, simplex.x, args = (x, ), method = "L-BFGS-B",
                                          bounds = [(None, None), (-DCS_MAX_ATANH_PHI, DCS_MAX_ATANH_PHI), (None, None),
                                                    (None, None), (None, np.log(DCS_MAX_NU))],
                                          options = {"maxiter" : max_iter})
        nfev += simplex.nfev + refined.nfev
        result = refined if refined.fun <= simplex.fun else simplex
        if best is None or result.fun < best.fun:
            best = result

    omega, phi, kappa, sigma, nu = _dcs_unpack(best.x)
    loglik, mu, u = dcs_loglik(x, omega, phi, kappa, sigma, nu)
    diagnostics = {"converged" : bool(best.success), "degenerate" : False, "message" : str(best.message), "nfev" : int(nfev)}
    fit = DcsFit(float(omega), float(phi), float(kappa), float(sigma), float(nu), mu, u, loglik, diagnostics)
    fit.residuals = x - mu

    return fit

def henderson_kernel(h):
    j = np.arange(-h, h + 1, dtype = float)
    return ((h + 1) ** 2 - j ** 2) * ((h + 2) ** 2 - j ** 2) * ((h + 3) ** 2 - j ** 2)

def henderson_weights(h, method = "wls"):
    """
    Symmetric 2h + 1 term Henderson trend weights.

    "wls" returns the equivalent kernel of a local cubic fitted by weighted least squares with
    the Henderson kernel as weights, i.e. the row of (X^T W X)^-1 X^T W that extracts the level.
    "literal" normalises the kernel itself to unit sum; it does not reproduce cubics.

    Example usage:
    >>> round(henderson_weights(6).weights[6], 4)
    0.2401
    """
    if int(h) != h or h < 2:
        raise InvalidInputError("Henderson half-width must be an integer >= 2, got %s." % h)
    h = int(h)
    kernel = henderson_kernel(h)
    if method == "literal":
        return HendersonFilter(h, kernel / kernel.sum(), method)
    if method != "wls":
        raise InvalidInputError("Unknown Henderson weighting: %s." % method)

    j = np.arange(-h, h + 1, dtype = float)
    design = np.vander(j, 4, increasing = True)
    weighted = design.T * kernel
    weights = np.linalg.solve(weighted @ design, weighted)[0]
    weights = (weights + weights[::-1]) / 2

    return HendersonFilter(h, weights, method)

def apply_filter(x, f):
    """
    Trend and residuals on the interior t = h + 1 .. T - h; the 2h boundary points are dropped.

    Returns:
    - tuple: (mu, residuals), each of length T - 2h.
    """
    x = np.asarray(x, dtype = float)
    if len(x) <= 2 * f.h:
        raise InvalidInputError("Henderson filter with h = %d needs more than %d time points, got %d." % (f.h, 2 * f.h, len(x)))
    mu = np.convolve(x, f.weights[::-1], mode = "valid")

    return mu, x[f.h:len(x) - f.h] - mu

def _dcs_column_job(job):
    name, x = job
    try:
        return fit_dcs(x)
    except SymGLError as e:
        return e

def _henderson_column_job(job, f):
    name, x = job
    try:
        return apply_filter(x, f)
    except SymGLError as e:
        return e

def _raise_for_column(err, name):
    raise type(err)("Series %s: %s" % (name, err))

def detrend(X, method, h = 6, henderson_method = "wls", n_threads = 1, logger = None):
    """
    Residual matrix of X after removing the temporal signal.

    Parameters:
    - X (TimeSeriesMatrix): T x p observations.
    - method (str): "var1" (joint), "dcs" or "henderson" (column by column).
    - h (int): Henderson half-width.
    - henderson_method (str): "wls" or "literal" Henderson weights.
    - n_threads (int): Worker processes for the column-wise methods.
    - logger (logging.Logger): Progress messages.

    Returns:
    - tuple: (TimeSeriesMatrix of residuals with T - 1, T or T - 2h rows, diagnostics dict).
    """
    logger = resolve_logger(logger)
    jobs = [(name, X.data[:, i]) for i, name in enumerate(X.names)]

    if method == "var1":
        fit = fit_var1(X)
        residuals = TimeSeriesMatrix(fit.residuals, X.names, X.time_index[1:])
        diagnostics = {"method" : "var1", "spectral_radius" : fit.spectral_radius, "stable" : bool(fit.stable),
                       "Phi" : fit.Phi.tolist()}
        if not fit.stable:
            logger.warning("Estimated VAR(1) is not stable (spectral radius %.4f)." % fit.spectral_radius)

    elif method == "dcs":
        fits = run_chunked_jobs(_dcs_column_job, jobs, n_threads)
        for (name, _), fit in zip(jobs, fits):
            if isinstance(fit, SymGLError):
                _raise_for_column(fit, name)
        residuals = TimeSeriesMatrix(np.column_stack([fit.residuals for fit in fits]), X.names, X.time_index)
        columns = []
        for name, fit in zip(X.names, fits):
            record = {"name" : name, "loglik" : fit.loglik}
            record.update(fit.params())
            record.update(fit.diagnostics)
            columns.append(record)
            if not fit.diagnostics["converged"]:
                logger.warning("DCS fit of series %s flagged: %s" % (name, fit.diagnostics["message"]))
        diagnostics = {"method" : "dcs", "columns" : columns}

    elif method == "henderson":
        f = henderson_weights(h, henderson_method)
        outputs = run_chunked_jobs(_henderson_column_job, jobs, n_threads, f)
        for (name, _), output in zip(jobs, outputs):
            if isinstance(output, SymGLError):
                _raise_for_column(output, name)
        residuals = TimeSeriesMatrix(np.column_stack([i[1] for i in outputs]), X.names, X.time_index[f.h:X.T - f.h])
        diagnostics = {"method" : "henderson", "h" : f.h, "weighting" : f.method, "weights" : f.weights.tolist()}

    else:
        raise InvalidInputError("Unknown detrending method: %s." % method)

    logger.info("Detrending by %s: %d x %d input, %d x %d residuals." % (method, X.T, X.p, residuals.T, residuals.p))

    return residuals, diagnostics
