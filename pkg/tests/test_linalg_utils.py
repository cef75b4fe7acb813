import numpy as np
import pytest

from utils import InvalidInputError, DomainError
from linalg_utils import (HemispherePartition, as_sym_matrix, is_positive_definite, vech, myvec, unstack,
                          soft_threshold, partial_stats, sym_eigen, empirical_second_moment, is_tied)

Q_EXAMPLE = np.array([[1, 2, 7, 8],
                      [2, 3, 9, 10],
                      [7, 9, 4, 5],
                      [8, 10, 5, 6]], dtype = float)

def test_partition_layout():
    part = HemispherePartition(6)
    assert part.q == 3
    assert part.homolog(0) == 3
    assert part.homolog(5) == 2
    assert part.homolog_pairs() == [(0, 3), (1, 4), (2, 5)]
    assert part.side(2) == "L" and part.side(3) == "R"
    assert part.n_half == 6
    assert part.stacked_length == 21

def test_partition_rejects_odd_p():
    with pytest.raises(InvalidInputError):
        HemispherePartition(5)
    with pytest.raises(InvalidInputError):
        HemispherePartition(0)

def test_myvec_example(part4):
    assert np.array_equal(myvec(Q_EXAMPLE, part4), [1, 2, 3, 4, 5, 6, 7, 9, 8, 10])

def test_vech_is_column_major_lower_triangle():
    A = np.array([[1, 2, 4],
                  [2, 3, 5],
                  [4, 5, 6]], dtype = float)
    assert np.array_equal(vech(A), [1, 2, 4, 3, 5, 6])

def test_is_positive_definite():
    assert is_positive_definite(np.eye(3))
    assert not is_positive_definite(np.diag([1.0, -1.0]))
    assert not is_positive_definite(np.ones((2, 2)))
    assert not is_positive_definite(np.array([[1.0, np.nan], [np.nan, 1.0]]))

def test_myvec_length_for_seventy_regions():
    part = HemispherePartition(70)
    assert part.stacked_length == 2485
    assert myvec(np.eye(70), part).shape == (2485, )

def test_unstack_inverts_myvec(rng, part6):
    A = rng.standard_normal((6, 6))
    A = A + A.T
    assert np.array_equal(unstack(myvec(A, part6), part6), A)

def test_fused_positions_are_homologous(rng, part6):
    A = rng.standard_normal((6, 6))
    A = A + A.T
    z = myvec(A, part6)
    m = part6.n_half
    q = part6.q
    k = 0
    for j in range(q):
        for i in range(j, q):
            assert z[k] == A[i, j]
            assert z[m + k] == A[i + q, j + q]
            k += 1

def test_stacking_dimension_mismatch(part4):
    with pytest.raises(InvalidInputError):
        myvec(np.eye(6), part4)
    with pytest.raises(InvalidInputError):
        unstack(np.zeros(9), part4)

def test_as_sym_matrix_validation():
    with pytest.raises(InvalidInputError):
        as_sym_matrix(np.ones((2, 3)))
    with pytest.raises(InvalidInputError):
        as_sym_matrix(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(InvalidInputError):
        as_sym_matrix(np.array([[1.0, np.nan], [np.nan, 1.0]]))

def test_soft_threshold_examples():
    assert np.allclose(soft_threshold(np.array([1.5, -0.3, -2.0]), 0.5), [1.0, 0.0, -1.5])
    assert soft_threshold(0.5, 0.5) == 0.0
    with pytest.raises(InvalidInputError):
        soft_threshold(np.ones(2), -1.0)

def test_soft_threshold_is_contraction(rng):
    x, y = rng.standard_normal(200), rng.standard_normal(200)
    for kappa in (0.0, 0.1, 1.0):
        assert np.all(np.abs(soft_threshold(x, kappa) - soft_threshold(y, kappa)) <= np.abs(x - y) + 1e-15)
        assert np.all(np.abs(soft_threshold(x, kappa)) <= np.abs(x))

def test_partial_stats_two_by_two():
    stats = partial_stats(np.array([[2.0, -1.0], [-1.0, 2.0]]))
    assert stats.partial_corr[0, 1] == pytest.approx(0.5)
    assert np.allclose(stats.partial_var, [0.5, 0.5])
    assert stats.reg_coef[0, 1] == pytest.approx(0.5)

def test_partial_stats_regression_identity(rng):
    A = rng.standard_normal((5, 5))
    Theta = A @ A.T + 5 * np.eye(5)
    stats = partial_stats(Theta)
    assert np.allclose(stats.reg_coef * stats.reg_coef.T, stats.partial_corr ** 2 - np.eye(5))

def test_partial_stats_rejects_indefinite():
    with pytest.raises(DomainError):
        partial_stats(np.array([[1.0, 2.0], [2.0, 1.0]]))

def test_sym_eigen_reconstructs(rng):
    A = rng.standard_normal((6, 6))
    A = A + A.T
    Q, d = sym_eigen(A)
    assert np.allclose((Q * d) @ Q.T, A)
    assert np.allclose(Q.T @ Q, np.eye(6))
    assert np.all(np.diff(d) >= 0)

def test_empirical_second_moment_is_uncentered(rng):
    Y = rng.standard_normal((50, 4)) + 3.0
    assert np.allclose(empirical_second_moment(Y), Y.T @ Y / 50)

def test_is_tied_scale():
    assert is_tied(1e6, 1e6 + 1e-4)
    assert not is_tied(1.0, 1.0 + 1e-6)
