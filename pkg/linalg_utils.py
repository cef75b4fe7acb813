"""
╔═════════════════════════════════════════════════════╗
║                  linalg_utils.py                    ║
╠═════════════════════════════════════════════════════╣
║    Description: Symmetric-matrix primitives, the    ║
║         hemisphere partition and stacking           ║
╚═════════════════════════════════════════════════════╝
"""

import numpy as np
import scipy.linalg
from sklearn.covariance import empirical_covariance

from utils import InvalidInputError, DomainError

class HemispherePartition:
    """
    Vertices 0..q-1 are the left hemisphere, q..p-1 the right one, and the homolog of
    vertex i is i + q.
    """
    def __init__(self, p):
        if int(p) != p or p < 2 or p % 2 != 0:
            raise InvalidInputError("The number of variables must be an even integer >= 2, got %s." % p)
        self.p = int(p)
        self.q = self.p // 2
        self.left = np.arange(self.q)
        self.right = np.arange(self.q, self.p)

    def __eq__(self, obj):
        return isinstance(obj, HemispherePartition) and self.p == obj.p

    def __repr__(self):
        return "HemispherePartition(p=%d)" % self.p

    def homolog(self, i):
        if i < 0 or i >= self.p:
            raise InvalidInputError("Vertex %d is outside 0..%d." % (i, self.p - 1))
        return i + self.q if i < self.q else i - self.q

    def homolog_pairs(self):
        return [(i, i + self.q) for i in range(self.q)]

    def side(self, i):
        return "L" if i < self.q else "R"

    @property
    def n_half(self):
        """Length of vech of a q x q block."""
        return self.q * (self.q + 1) // 2

    @property
    def stacked_length(self):
        return self.q * (self.q + 1) + self.q ** 2

class PartialStats:
    def __init__(self, partial_corr, partial_var, reg_coef):
        self.partial_corr = partial_corr
        self.partial_var = partial_var
        self.reg_coef = reg_coef

def as_sym_matrix(A, name = "matrix", rtol = 1e-8):
    """
    Validate a square, finite, symmetric matrix and return its exactly symmetric copy.

    Parameters:
    - A (array-like): Candidate matrix.
    - name (str): Name used in error messages.
    - rtol (float): Relative asymmetry tolerated before rejecting the input.

    Returns:
    - np.ndarray: (A + A^T) / 2, so that (i, j) and (j, i) hold one value.
    """
    A = np.array(A, dtype = float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInputError("%s must be a square matrix, got shape %s." % (name, A.shape))
    if A.shape[0] < 1:
        raise InvalidInputError("%s is empty." % name)
    if not np.all(np.isfinite(A)):
        raise InvalidInputError("%s contains non-finite entries." % name)
    scale = max(1.0, np.abs(A).max())
    if np.abs(A - A.T).max() > rtol * scale:
        raise InvalidInputError("%s is not symmetric." % name)

    return (A + A.T) / 2

def is_positive_definite(A):
    try:
        scipy.linalg.cholesky(A, lower = True)
    except (np.linalg.LinAlgError, ValueError):
        return False
    return True

def check_positive_definite(A, name = "matrix"):
    if not np.all(np.isfinite(A)) or not is_positive_definite(A):
        raise DomainError("%s is not positive definite." % name)

def vech_indices(q):
    """
    Row and column indices of the lower triangle (diagonal included) of a q x q block,
    in column-major order.

    Example usage:
    >>> vech_indices(2)
    (array([0, 1, 1]), array([0, 0, 1]))
    """
    cols, rows = np.triu_indices(q)
    return rows, cols

def vech(A):
    rows, cols = vech_indices(A.shape[0])
    return A[rows, cols]

def myvec(Q, part):
    """
    Stack a symmetric matrix as [vech(Q_LL) | vech(Q_RR) | vec(Q_LR)].

    Position k of the first block and position k of the second block hold the homologous
    entries theta_ij and theta_i'j', which is what the fusion penalty pairs.

    Example usage:
    >>> Q = np.array([[1, 2, 7, 8], [2, 3, 9, 10], [7, 9, 4, 5], [8, 10, 5, 6]])
    >>> myvec(Q, HemispherePartition(4))
    array([ 1.,  2.,  3.,  4.,  5.,  6.,  7.,  9.,  8., 10.])
    """
    Q = np.asarray(Q, dtype = float)
    if Q.shape != (part.p, part.p):
        raise InvalidInputError("Matrix of shape %s does not match a partition of %d variables." % (Q.shape, part.p))
    q = part.q

    return np.concatenate([vech(Q[:q, :q]), vech(Q[q:, q:]), Q[:q, q:].ravel(order = "F")])

def unstack(z, part):
    z = np.asarray(z, dtype = float)
    if z.shape != (part.stacked_length,):
        raise InvalidInputError("Stacked vector of length %d does not match a partition of %d variables." % (z.size, part.p))
    q, m = part.q, part.n_half
    rows, cols = vech_indices(q)

    Q = np.zeros((part.p, part.p))
    Q[rows, cols] = z[:m]
    Q[cols, rows] = z[:m]
    Q[rows + q, cols + q] = z[m:2 * m]
    Q[cols + q, rows + q] = z[m:2 * m]
    lr = z[2 * m:].reshape((q, q), order = "F")
    Q[:q, q:] = lr
    Q[q:, :q] = lr.T

    return Q

def soft_threshold(x, kappa):
    """
    Soft thresholding operator, element-wise on arrays.

    Example usage:
    >>> soft_threshold(np.array([1.5, -0.3, -2.0]), 0.5)
    array([ 1. , -0. , -1.5])
    """
    if np.any(np.asarray(kappa) < 0):
        raise InvalidInputError("The threshold must be nonnegative.")

    return np.sign(x) * np.maximum(np.abs(x) - kappa, 0.0)

def partial_stats(Theta):
    """
    Partial correlations, partial variances and regression coefficients implied by a
    concentration matrix.

    Parameters:
    - Theta (np.ndarray): Positive definite concentration matrix.

    Returns:
    - PartialStats: partial_corr[i, j] = -theta_ij / sqrt(theta_ii theta_jj),
      reg_coef[i, j] = -theta_ij / theta_ii (coefficient of Y_j in the regression of Y_i),
      partial_var[i] = 1 / theta_ii.
    """
    Theta = as_sym_matrix(Theta, "Concentration matrix")
    diagonal = np.diag(Theta).copy()
    if np.any(diagonal <= 0):
        raise DomainError("Concentration matrix has nonpositive diagonal entries.")
    check_positive_definite(Theta, "Concentration matrix")

    scale = np.sqrt(diagonal)
    partial_corr = -Theta / np.outer(scale, scale)
    np.fill_diagonal(partial_corr, 1.0)
    reg_coef = -Theta / diagonal[:, None]
    np.fill_diagonal(reg_coef, 0.0)

    return PartialStats(partial_corr, 1.0 / diagonal, reg_coef)

def sym_eigen(A):
    """
    Eigendecomposition A = Q diag(d) Q^T of a symmetric matrix.

    Returns:
    - tuple: (Q, d) with orthonormal columns in Q and ascending eigenvalues d.
    """
    A = np.asarray(A, dtype = float)
    if not np.all(np.isfinite(A)):
        raise InvalidInputError("Cannot eigendecompose a matrix with non-finite entries.")
    d, Q = scipy.linalg.eigh(A)

    return Q, d

def empirical_second_moment(Y):
    """S = n^-1 sum_i y_i y_i^T, without centering."""
    Y = np.asarray(Y, dtype = float)
    if Y.ndim != 2 or Y.shape[0] < 1:
        raise InvalidInputError("Expected an n x p data matrix.")

    return empirical_covariance(Y, assume_centered = True)

# The solver produces exact zeros and ties; these only absorb floating-point noise.
ZERO_TOL = 1e-9
TIE_TOL = 1e-9

def is_tied(a, b, tie_tol = TIE_TOL):
    """Element-wise |a - b| <= tie_tol * max(1, |a|)."""
    a = np.asarray(a, dtype = float)
    b = np.asarray(b, dtype = float)

    return np.abs(a - b) <= tie_tol * np.maximum(1.0, np.abs(a))
