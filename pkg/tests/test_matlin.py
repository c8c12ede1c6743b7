import numpy as np
import pytest

from orthlyap.errors import InputError, SingularSylvester, TargetNotBlockClosed
from orthlyap.matlin import (
    matrix_from_json,
    matrix_to_json,
    real_schur,
    reorder_schur,
    solve_sylvester_special,
    symmetric_eig,
)
from oracles import random_hurwitz


def charpoly_roots(A):
    """Eigenvalues via Faddeev-LeVerrier coefficients, independent of any Schur code."""
    n = A.shape[0]
    M = np.zeros_like(A)
    coeffs = [1.0]
    for k in range(1, n + 1):
        M = A @ M + coeffs[-1] * np.eye(n)
        coeffs.append(-np.trace(A @ M) / k)
    return np.roots(coeffs)


def sorted_complex(z):
    z = np.asarray(z, dtype=complex)
    return z[np.lexsort((np.round(z.imag, 6), np.round(z.real, 6)))]


def assert_schur_invariants(s, F):
    n = F.shape[0]
    assert np.linalg.norm(s.U.T @ s.U - np.eye(n)) <= n * 1e-12
    assert np.linalg.norm(s.U @ s.R @ s.U.T - F) <= 1e-10 * max(1.0, np.linalg.norm(F))
    assert np.all(np.tril(s.R, -2) == 0)
    for b in s.blocks:
        if b.size == 2:
            assert abs(b.eigenvalues[0].imag) > 0


# -- real Schur --------------------------------------------------------------------

def test_diagonal_matrix_is_its_own_schur_form():
    F = np.diag([3.0, -1.0, 2.0])
    s = real_schur(F)
    np.testing.assert_allclose(np.abs(s.U), np.eye(3), atol=1e-15)
    np.testing.assert_allclose(s.R, F, atol=1e-15)


def test_schur_of_example2_matrix():
    F = np.array([[1.0, 1.0], [0.0, 0.0]])
    s = real_schur(F)
    assert s.R[1, 0] == 0.0
    assert sorted(np.diag(s.R)) == pytest.approx([0.0, 1.0], abs=1e-14)
    assert np.linalg.norm(s.U @ s.R @ s.U.T - F) <= 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_schur_eigenvalues_match_characteristic_polynomial(seed):
    F = np.random.default_rng(seed).normal(size=(6, 6))
    s = real_schur(F)
    assert_schur_invariants(s, F)
    np.testing.assert_allclose(sorted_complex(s.eigenvalues), sorted_complex(charpoly_roots(F)), atol=1e-8)


def test_schur_rejects_non_square():
    with pytest.raises(InputError, match="square"):
        real_schur(np.ones((2, 3)))


# -- reordering --------------------------------------------------------------------

def test_hand_derived_reordering_of_example2_matrix():
    F = np.array([[1.0, 1.0], [0.0, 0.0]])
    r = reorder_schur(real_schur(F), [1.0])
    # R' = [[0, 1], [0, 1]] and U' = [(1,-1)/sqrt2, (1,1)/sqrt2], each up to column sign
    D = np.diag(np.sign(np.diag(r.U.T @ np.array([[1, 1], [-1, 1]]) / np.sqrt(2))))
    np.testing.assert_allclose(r.U @ D, np.array([[1, 1], [-1, 1]]) / np.sqrt(2), atol=1e-12)
    np.testing.assert_allclose(D @ r.R @ D, [[0.0, 1.0], [0.0, 1.0]], atol=1e-12)
    assert np.linalg.norm(r.U @ r.R @ r.U.T - F) <= 1e-12


def test_whole_spectrum_target_keeps_matrix():
    F = np.random.default_rng(3).normal(size=(5, 5))
    s = real_schur(F)
    r = reorder_schur(s, list(s.eigenvalues))
    assert_schur_invariants(r, F)
    np.testing.assert_allclose(sorted_complex(np.linalg.eigvals(r.trailing(5))), sorted_complex(s.eigenvalues), atol=1e-8)


@pytest.mark.parametrize("seed", range(20))
def test_random_reordering_moves_target_to_trailing_block(seed):
    rng = np.random.default_rng(100 + seed)
    F = rng.normal(size=(8, 8))
    s = real_schur(F)
    # pick whole blocks until at least three eigenvalues are selected
    order = rng.permutation(len(s.blocks))
    target, size = [], 0
    for k in order:
        if size >= 3:
            break
        target.extend(s.blocks[k].eigenvalues)
        size += s.blocks[k].size
    r = reorder_schur(s, target)
    assert_schur_invariants(r, F)
    np.testing.assert_allclose(sorted_complex(r.eigenvalues), sorted_complex(s.eigenvalues), atol=1e-8)
    trailing = np.linalg.eigvals(r.trailing(size))
    np.testing.assert_allclose(sorted_complex(trailing), sorted_complex(target), atol=1e-8)


def test_target_splitting_a_conjugate_pair_is_rejected():
    F = np.array([[0.0, -2.0, 0.0], [2.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    s = real_schur(F)
    with pytest.raises(TargetNotBlockClosed):
        reorder_schur(s, [2j])


# -- Sylvester ---------------------------------------------------------------------

def test_sylvester_closed_forms():
    np.testing.assert_allclose(solve_sylvester_special(-np.eye(2)).X, -np.eye(2), atol=1e-14)
    np.testing.assert_allclose(solve_sylvester_special(np.diag([1.0, 2.0])).X, np.diag([1.0, 0.5]), atol=1e-14)


def test_sylvester_detects_opposite_eigenvalues():
    with pytest.raises(SingularSylvester):
        solve_sylvester_special(np.diag([1.0, -1.0]))
    with pytest.raises(SingularSylvester):
        solve_sylvester_special(np.array([[0.0, 1.0], [-1.0, 0.0]]))


@pytest.mark.parametrize("seed", range(10))
def test_sylvester_on_hurwitz_matrices(seed):
    rng = np.random.default_rng(seed)
    F = random_hurwitz(rng, int(rng.integers(1, 9)))
    sol = solve_sylvester_special(F)
    X = sol.X
    assert np.linalg.norm(X @ F.T + F @ X - 2 * np.eye(len(F))) <= 1e-9 * max(1.0, np.linalg.norm(F) * np.linalg.norm(X))
    assert np.linalg.norm(X - X.T) <= 1e-10 * np.linalg.norm(X)
    assert np.max(np.linalg.eigvalsh(X)) < 0


def test_sylvester_of_symmetric_matrix_is_inverse(rng):
    Q, _ = np.linalg.qr(rng.normal(size=(5, 5)))
    F = Q @ np.diag([3.0, 1.5, 0.7, -0.4, -2.0]) @ Q.T
    np.testing.assert_allclose(solve_sylvester_special(F).X, np.linalg.inv(F), atol=1e-9)


# -- symmetric eigensolver ---------------------------------------------------------

def test_symmetric_eig_examples():
    e = symmetric_eig(np.eye(3))
    np.testing.assert_allclose(e.eigenvalues, 1.0)
    np.testing.assert_allclose(np.abs(e.Q), np.eye(3), atol=1e-15)
    np.testing.assert_allclose(symmetric_eig(0.5 * np.ones((2, 2))).eigenvalues, [0.0, 1.0], atol=1e-15)


def test_symmetric_eig_reconstruction(rng):
    A = rng.normal(size=(7, 7))
    S = A + A.T
    e = symmetric_eig(S)
    assert np.all(np.diff(e.eigenvalues) >= 0)
    assert np.linalg.norm(e.Q @ e.Lambda @ e.Q.T - S) <= 1e-10 * max(1.0, np.linalg.norm(S))


def test_symmetric_eig_rejects_asymmetric():
    with pytest.raises(InputError):
        symmetric_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))


# -- JSON ------------------------------------------------------------------------

def test_matrix_json_round_trip(rng):
    M = rng.normal(size=(3, 3))
    obj = matrix_to_json(M)
    assert obj["rows"] == 3 and obj["cols"] == 3
    np.testing.assert_array_equal(matrix_from_json(obj), M)
    np.testing.assert_array_equal(matrix_from_json([[1, 2], [3, 4]]), [[1, 2], [3, 4]])
    with pytest.raises(InputError):
        matrix_from_json({"rows": 2, "cols": 2, "data": [[1, 2, 3]]})
