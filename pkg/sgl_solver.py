"""
╔═════════════════════════════════════════════════════╗
║                   sgl_solver.py                     ║
╠═════════════════════════════════════════════════════╣
║   Description: Symmetric graphical lasso by nested  ║
║                        ADMM                         ║
╚═════════════════════════════════════════════════════╝

Solves

    min_Theta  -log det Theta + tr(S Theta) + lambda1 ||Theta||_1 + lambda2 ||Theta_LL - Theta_RR||_1

over positive definite Theta. The outer ADMM splits Theta = Z; the Z-step is a fused lasso
signal approximator on myvec(Z), solved for lambda1 = 0 by an inner ADMM and then
soft-thresholded by lambda1 / rho1.
"""

import numpy as np
import scipy.linalg

from utils import InvalidInputError, DomainError, resolve_logger
from linalg_utils import (as_sym_matrix, check_positive_definite, is_positive_definite, myvec, unstack,
                          soft_threshold, sym_eigen, vech_indices, is_tied, ZERO_TOL, TIE_TOL)

class SglProblem:
    def __init__(self, S, n, part, lambda1, lambda2):
        S = as_sym_matrix(S, "Sample covariance")
        if S.shape[0] != part.p:
            raise InvalidInputError("Sample covariance is %d x %d but the partition has %d variables." % (S.shape[0], S.shape[0], part.p))
        if np.any(np.diag(S) < 0):
            raise InvalidInputError("Sample covariance has negative diagonal entries.")
        if int(n) != n or n < 1:
            raise InvalidInputError("Sample size must be a positive integer, got %s." % n)
        for name, value in (("lambda1", lambda1), ("lambda2", lambda2)):
            if not np.isfinite(value) or value < 0:
                raise InvalidInputError("%s must be a finite nonnegative number, got %s." % (name, value))

        self.S = S
        self.n = int(n)
        self.part = part
        self.lambda1 = float(lambda1)
        self.lambda2 = float(lambda2)

    def with_penalties(self, lambda1, lambda2):
        return SglProblem(self.S, self.n, self.part, lambda1, lambda2)

class SolverConfig:
    """
    Step sizes and stopping rules of the nested ADMM.

    rho1, rho2: outer and inner augmented Lagrangian parameters.
    tol: outer stop when ||Theta^m - Theta^(m-1)||_F / ||Theta^(m-1)||_F < tol.
    inner_tol: inner primal/dual residual tolerance.
    inner_solver: "admm" runs the inner ADMM, "pairwise" uses the closed-form
                  solution of the separable two-point problems.
    """
    def __init__(self, rho1 = 1.0, rho2 = 1.0, tol = 1e-6, inner_tol = 1e-8, max_outer = 2000, max_inner = 5000, inner_solver = "admm"):
        for name, value in (("rho1", rho1), ("rho2", rho2), ("tol", tol), ("inner_tol", inner_tol)):
            if not np.isfinite(value) or value <= 0:
                raise InvalidInputError("%s must be positive, got %s." % (name, value))
        for name, value in (("max_outer", max_outer), ("max_inner", max_inner)):
            if int(value) != value or value < 1:
                raise InvalidInputError("%s must be a positive integer, got %s." % (name, value))
        if inner_solver not in ("admm", "pairwise"):
            raise InvalidInputError("Unknown inner solver: %s." % inner_solver)

        self.rho1 = float(rho1)
        self.rho2 = float(rho2)
        self.tol = float(tol)
        self.inner_tol = float(inner_tol)
        self.max_outer = int(max_outer)
        self.max_inner = int(max_inner)
        self.inner_solver = inner_solver

    def to_dict(self):
        return {"rho1" : self.rho1, "rho2" : self.rho2, "tol" : self.tol, "inner_tol" : self.inner_tol,
                "max_outer" : self.max_outer, "max_inner" : self.max_inner, "inner_solver" : self.inner_solver}

class InnerState:
    """Inner ADMM variables; v and t live on the q(q+1)/2 fused differences."""
    def __init__(self, part):
        self.z = np.zeros(part.stacked_length)
        self.v = np.zeros(part.n_half)
        self.t = np.zeros(part.n_half)
        self.converged = True
        self.iters = 0

class SolverState:
    def __init__(self, part, Theta = None, Z = None, U = None):
        self.Theta = Theta
        self.Z = np.zeros((part.p, part.p)) if Z is None else Z
        self.U = np.zeros((part.p, part.p)) if U is None else U
        self.iter = 0
        self.inner = InnerState(part)

class SglSolution:
    def __init__(self, Theta_hat, objective, outer_iters, converged, kkt_residual, lambda1, lambda2, state, history):
        self.Theta_hat = Theta_hat
        self.objective = objective
        self.outer_iters = outer_iters
        self.converged = converged
        self.kkt_residual = kkt_residual
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.state = state
        self.history = history

def objective(Theta, prob):
    try:
        L = scipy.linalg.cholesky(Theta, lower = True)
    except (np.linalg.LinAlgError, ValueError):
        raise DomainError("Objective is undefined: Theta is not positive definite.")
    q = prob.part.q
    log_det = 2.0 * np.sum(np.log(np.diag(L)))

    return (-log_det + np.sum(prob.S * Theta)
            + prob.lambda1 * np.abs(Theta).sum()
            + prob.lambda2 * np.abs(Theta[:q, :q] - Theta[q:, q:]).sum())

def theta_update(Z, U, S, rho1):
    """
    Closed-form minimiser of -log det Theta + tr(S Theta) + rho1 / 2 ||Theta - Z + U||_F^2.

    Example usage:
    >>> theta_update(np.zeros((1, 1)), np.zeros((1, 1)), np.ones((1, 1)), 1.0)
    array([[0.61803399]])
    """
    if rho1 <= 0:
        raise InvalidInputError("rho1 must be positive.")
    Z, U, S = np.atleast_2d(Z), np.atleast_2d(U), np.atleast_2d(S)
    if not (Z.shape == U.shape == S.shape):
        raise InvalidInputError("Z, U and S must have the same shape.")

    Q, d = sym_eigen(rho1 * (Z - U) - S)
    d_tilde = (d + np.sqrt(d ** 2 + 4 * rho1)) / (2 * rho1)
    Theta = (Q * d_tilde) @ Q.T

    return (Theta + Theta.T) / 2

def fused_differences(z, m):
    return z[:m] - z[m:2 * m]

def inner_z_step(b, v, t, rho2):
    """
    z = (I + rho2 F^T F)^-1 {b + rho2 F^T (v - t)} with F = [I -I O].

    The system decouples into 2 x 2 blocks, one per fused pair; the LR part passes through.

    Example usage:
    >>> inner_z_step(np.array([3.0, 1.0, 5.0]), np.zeros(1), np.zeros(1), 1.0)
    array([2.33333333, 1.66666667, 5.        ])
    """
    m = len(v)
    r = np.array(b, dtype = float)
    r[:m] += rho2 * (v - t)
    r[m:2 * m] -= rho2 * (v - t)

    z = r.copy()
    ra, rb = r[:m], r[m:2 * m]
    z[:m] = ((1 + rho2) * ra + rho2 * rb) / (1 + 2 * rho2)
    z[m:2 * m] = (rho2 * ra + (1 + rho2) * rb) / (1 + 2 * rho2)

    return z

def fused_pair_solution(b, m, lambda2p, tied = None, signs = None):
    """
    Exact solution of min_z 1/2 ||z - b||^2 + lambda2p ||F z||_1, pair by pair.

    Without an active set the pattern is read off b: a pair is tied when |b_a - b_b| <= 2 lambda2p.
    With an active set (tied mask and signs of the nonzero differences) the pattern is imposed.
    """
    z = np.array(b, dtype = float)
    ba, bb = z[:m].copy(), z[m:2 * m].copy()
    diff = ba - bb
    if tied is None:
        tied = np.abs(diff) <= 2 * lambda2p
        signs = np.sign(diff)

    mean = (ba + bb) / 2
    z[:m] = np.where(tied, mean, ba - lambda2p * signs)
    z[m:2 * m] = np.where(tied, mean, bb + lambda2p * signs)

    return z

def inner_admm(b, lambda2p, rho2, inner, inner_tol, max_inner):
    """
    Inner ADMM on the generalized lasso min_z 1/2 ||z - b||^2 + lambda2p ||F z||_1, warm started
    from inner.v and inner.t.

    When the residuals meet inner_tol each pair is finalised on the active set of the last v:
    v_k = 0 ties the pair at its mean, v_k != 0 shifts it by lambda2p with the sign of v_k.
    Otherwise the last z iterate is returned as it is and inner.converged is False.
    """
    m = len(inner.v)
    v, t = inner.v, inner.t
    sqrt_m, sqrt_n = np.sqrt(m), np.sqrt(len(b))
    converged = False

    for it in range(1, max_inner + 1):
        z = inner_z_step(b, v, t, rho2)
        Fz = fused_differences(z, m)
        v_old = v
        v = soft_threshold(Fz + t, lambda2p / rho2)
        t = t + Fz - v

        r_norm = np.linalg.norm(Fz - v)
        s_norm = rho2 * np.sqrt(2.0) * np.linalg.norm(v - v_old)
        eps_pri = sqrt_m * inner_tol + inner_tol * max(np.linalg.norm(Fz), np.linalg.norm(v))
        eps_dual = sqrt_n * inner_tol + inner_tol * rho2 * np.sqrt(2.0) * np.linalg.norm(t)
        if r_norm <= eps_pri and s_norm <= eps_dual:
            converged = True
            break

    if converged:
        # t_k = v_k / |v_k| lambda2p / rho2 on shifted pairs, |t_k| <= lambda2p / rho2 on tied ones
        z = fused_pair_solution(b, m, lambda2p, v == 0, np.sign(v))

    inner.v, inner.t, inner.z = v, t, z
    inner.converged = converged
    inner.iters = it

    return z

def z_update(Theta, U, prob, cfg, inner = None):
    """
    Z-step of the outer ADMM.

    b = myvec(Theta) + myvec(U) is fused with lambda2 / rho1 (lambda1 = 0 problem), then
    soft-thresholded element-wise by lambda1 / rho1. Entries of the LR block are only
    soft-thresholded.
    """
    part = prob.part
    m = part.n_half
    if inner is None:
        inner = InnerState(part)
    b = myvec(Theta, part) + myvec(U, part)
    lambda1p = prob.lambda1 / cfg.rho1
    lambda2p = prob.lambda2 / cfg.rho1

    if lambda2p == 0:
        z_fused = b
        inner.converged, inner.iters = True, 0
    elif cfg.inner_solver == "pairwise":
        z_fused = fused_pair_solution(b, m, lambda2p)
        inner.converged, inner.iters = True, 0
    else:
        z_fused = inner_admm(b, lambda2p, cfg.rho2, inner, cfg.inner_tol, cfg.max_inner)

    return unstack(soft_threshold(z_fused, lambda1p), part)

def _interval(x, zero_tol):
    """Subdifferential of |x| as [lower, upper] bounds."""
    lower = np.where(np.abs(x) <= zero_tol, -1.0, np.sign(x))
    upper = np.where(np.abs(x) <= zero_tol, 1.0, np.sign(x))
    return lower, upper

def _distance_to_interval(x, lower, upper):
    return np.maximum(0.0, np.maximum(lower - x, x - upper))

def kkt_check(sol, prob, zero_tol = ZERO_TOL, tie_tol = TIE_TOL):
    """
    Max-norm violation of Theta^-1 - S in lambda1 d||Theta||_1 + lambda2 d||Theta_LL - Theta_RR||_1.

    For a fused pair (g1, g2) the shared fusion subgradient w = lambda2 c is chosen to minimise
    max(dist(g1 - w, lambda1 A1), dist(g2 + w, lambda1 A2)); this piecewise-linear convex
    problem attains its minimum at an endpoint, a breakpoint or a crossing, all enumerated.
    """
    Theta = sol.Theta_hat if isinstance(sol, SglSolution) else np.asarray(sol)
    check_positive_definite(Theta, "Estimated concentration matrix")
    part = prob.part
    q = part.q
    lambda1, lambda2 = prob.lambda1, prob.lambda2

    G = scipy.linalg.inv(Theta) - prob.S
    G = (G + G.T) / 2

    # LR block
    theta_lr = Theta[:q, q:]
    lower, upper = _interval(theta_lr, zero_tol)
    violation_lr = _distance_to_interval(G[:q, q:], lambda1 * lower, lambda1 * upper)

    # fused LL / RR pairs
    rows, cols = vech_indices(q)
    x1, x2 = Theta[rows, cols], Theta[rows + q, cols + q]
    g1, g2 = G[rows, cols], G[rows + q, cols + q]
    a1l, a1u = _interval(x1, zero_tol)
    a2l, a2u = _interval(x2, zero_tol)
    a1l, a1u, a2l, a2u = lambda1 * a1l, lambda1 * a1u, lambda1 * a2l, lambda1 * a2u
    tied = is_tied(x1, x2, tie_tol)
    c_sign = np.sign(x1 - x2)
    wl = lambda2 * np.where(tied, -1.0, c_sign)
    wu = lambda2 * np.where(tied, 1.0, c_sign)

    candidates = np.stack([wl, wu,
                           g1 - a1l, g1 - a1u,
                           a2l - g2, a2u - g2,
                           (g1 - a1u - g2 + a2u) / 2,
                           (a2l - g2 - a1l + g1) / 2], axis = 1)
    candidates = np.clip(candidates, wl[:, None], wu[:, None])
    f1 = _distance_to_interval(g1[:, None] - candidates, a1l[:, None], a1u[:, None])
    f2 = _distance_to_interval(g2[:, None] + candidates, a2l[:, None], a2u[:, None])
    violation_pairs = np.min(np.maximum(f1, f2), axis = 1)

    return float(max(violation_lr.max(initial = 0.0), violation_pairs.max(initial = 0.0)))

def fit_sgl(prob, cfg = None, init = None, logger = None):
    """
    Symmetric graphical lasso by the nested ADMM.

    Parameters:
    - prob (SglProblem): Sample covariance, partition and penalties.
    - cfg (SolverConfig): Step sizes and stopping rules; defaults when None.
    - init (SolverState): Optional warm start; Z = U = 0 otherwise.
    - logger (logging.Logger): Receives non-convergence warnings.

    Returns:
    - SglSolution: Z at the last iterate as Theta_hat (exact zeros and ties), its objective,
      iteration count, convergence flag, KKT residual and the per-iteration history.
    """
    logger = resolve_logger(logger)
    cfg = cfg if cfg is not None else SolverConfig()
    part = prob.part
    if prob.lambda1 == 0 and np.any(np.diag(prob.S) <= 0):
        raise InvalidInputError("With lambda1 = 0 the sample covariance needs a positive diagonal.")

    state = init if init is not None else SolverState(part)
    Z, U = state.Z.copy(), state.U.copy()
    inner = state.inner
    Theta_prev = state.Theta
    history = []
    outer_converged = False

    for it in range(1, cfg.max_outer + 1):
        Theta = theta_update(Z, U, prob.S, cfg.rho1)
        Z_old = Z
        Z = z_update(Theta, U, prob, cfg, inner)
        U = U + Theta - Z

        rel_change = np.inf
        if Theta_prev is not None:
            rel_change = np.linalg.norm(Theta - Theta_prev) / np.linalg.norm(Theta_prev)
        history.append({"iter" : it,
                        "objective" : objective(Theta, prob),
                        "rel_change" : rel_change,
                        "primal_residual" : np.linalg.norm(Theta - Z),
                        "dual_residual" : cfg.rho1 * np.linalg.norm(Z - Z_old),
                        "inner_iters" : inner.iters})
        Theta_prev = Theta
        if rel_change < cfg.tol:
            outer_converged = True
            break

    state.Theta, state.Z, state.U, state.iter, state.inner = Theta, Z, U, it, inner
    converged = outer_converged and inner.converged
    if not outer_converged:
        logger.warning("Symmetric graphical lasso did not converge in %d iterations (lambda1 = %g, lambda2 = %g)." % (cfg.max_outer, prob.lambda1, prob.lambda2))
    elif not inner.converged:
        logger.warning("Inner fused-lasso solver hit %d iterations at the last outer step (lambda1 = %g, lambda2 = %g)." % (cfg.max_inner, prob.lambda1, prob.lambda2))

    Theta_hat = Z.copy()
    if is_positive_definite(Theta_hat):
        obj = objective(Theta_hat, prob)
        kkt = kkt_check(Theta_hat, prob)
    else:
        logger.warning("Sparse iterate is not positive definite (lambda1 = %g, lambda2 = %g); reporting it as not converged." % (prob.lambda1, prob.lambda2))
        converged = False
        obj, kkt = np.inf, np.inf

    return SglSolution(Theta_hat, obj, it, converged, kkt, prob.lambda1, prob.lambda2, state, history)

def fit_glasso(S, n, part, lambda1, cfg = None, logger = None):
    """Plain graphical lasso: the lambda2 = 0 case of fit_sgl."""
    return fit_sgl(SglProblem(S, n, part, lambda1, 0.0), cfg, logger = logger)

def count_edges(Theta_hat, zero_tol = ZERO_TOL):
    """Number of unordered off-diagonal pairs with |theta_ij| > zero_tol."""
    Theta_hat = np.asarray(Theta_hat)
    rows, cols = np.triu_indices(Theta_hat.shape[0], k = 1)

    return int(np.sum(np.abs(Theta_hat[rows, cols]) > zero_tol))

def tied_pairs(Theta_hat, part, zero_tol = ZERO_TOL, tie_tol = TIE_TOL):
    """
    Exactly tied homologous concentrations.

    Returns:
    - tuple: (offdiag, diag) where offdiag lists the (i, j), i > j, of LL edges whose RR homolog
      is present and equal, and diag lists the left vertices i with theta_ii tied to theta_i'i'.
    """
    Theta_hat = np.asarray(Theta_hat)
    q = part.q
    offdiag, diag = [], []
    rows, cols = vech_indices(q)
    for i, j in zip(rows, cols):
        a, b = Theta_hat[i, j], Theta_hat[i + q, j + q]
        if i == j:
            if is_tied(a, b, tie_tol):
                diag.append(int(i))
        elif abs(a) > zero_tol and abs(b) > zero_tol and is_tied(a, b, tie_tol):
            offdiag.append((int(i), int(j)))

    return offdiag, diag

def symmetric_edge_pairs(Theta_hat, part, zero_tol = ZERO_TOL):
    """LL edges whose RR homolog is also an edge, whatever the two values."""
    Theta_hat = np.asarray(Theta_hat)
    q = part.q
    rows, cols = np.tril_indices(q, k = -1)
    present = (np.abs(Theta_hat[rows, cols]) > zero_tol) & (np.abs(Theta_hat[rows + q, cols + q]) > zero_tol)

    return [(int(i), int(j)) for i, j in zip(rows[present], cols[present])]
