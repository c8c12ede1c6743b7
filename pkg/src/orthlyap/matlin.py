"""Dense real kernels: real Schur form, Schur block reordering, the special
Sylvester equation ``X F^T + F X = 2 I`` and the symmetric eigensolver.

The Hessenberg/QR factorizations are delegated to LAPACK through scipy and
numpy.  Block reordering and the Sylvester solve are done here: reordering
swaps adjacent 1x1/2x2 diagonal blocks with the direct-swap method, and the
Sylvester equation is solved by Bartels-Stewart back substitution on the
quasi-triangular Schur factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg

from .errors import (
    InputError,
    NoConvergence,
    SingularSylvester,
    SwapIllConditioned,
    TargetNotBlockClosed,
)

DEFAULT_TOL = 1e-8


def as_square(F, name: str = "matrix") -> np.ndarray:
    A = np.array(F, dtype=float)
    if A.ndim == 0:
        A = A.reshape(1, 1)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InputError(f"{name} must be square")
    if not np.all(np.isfinite(A)):
        raise InputError(f"{name} has non-finite entries")
    return A


def _block_eigenvalues(B: np.ndarray) -> tuple[complex, ...]:
    if B.shape == (1, 1):
        return (complex(B[0, 0]),)
    a, b, c, d = B[0, 0], B[0, 1], B[1, 0], B[1, 1]
    mean = 0.5 * (a + d)
    disc = 0.25 * (a - d) ** 2 + b * c
    if disc >= 0:
        r = np.sqrt(disc)
        return (complex(mean + r), complex(mean - r))
    r = np.sqrt(-disc)
    return (complex(mean, r), complex(mean, -r))


@dataclass(frozen=True)
class SchurBlock:
    start: int
    size: int
    eigenvalues: tuple[complex, ...]


@dataclass(frozen=True)
class RealSchur:
    """``F = U R U^T`` with ``U`` orthogonal and ``R`` upper quasi-triangular."""

    U: np.ndarray
    R: np.ndarray
    blocks: tuple[SchurBlock, ...] = field(default=())

    @property
    def n(self) -> int:
        return self.R.shape[0]

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([lam for b in self.blocks for lam in b.eigenvalues], dtype=complex)

    def reconstruct(self) -> np.ndarray:
        return self.U @ self.R @ self.U.T

    def trailing(self, size: int) -> np.ndarray:
        return self.R[self.n - size:, self.n - size:]


def _scan_blocks(R: np.ndarray) -> tuple[SchurBlock, ...]:
    n = R.shape[0]
    blocks = []
    i = 0
    while i < n:
        if i + 1 < n and R[i + 1, i] != 0.0:
            blocks.append(SchurBlock(i, 2, _block_eigenvalues(R[i:i + 2, i:i + 2])))
            i += 2
        else:
            blocks.append(SchurBlock(i, 1, (complex(R[i, i]),)))
            i += 1
    return tuple(blocks)


def _rebuild_blocks(R: np.ndarray, sizes: Sequence[int]) -> tuple[SchurBlock, ...]:
    blocks = []
    start = 0
    for s in sizes:
        blocks.append(SchurBlock(start, s, _block_eigenvalues(R[start:start + s, start:start + s])))
        start += s
    return tuple(blocks)


def _check_schur(s: RealSchur, F: np.ndarray):
    n = s.n
    orth = np.linalg.norm(s.U.T @ s.U - np.eye(n))
    if orth > max(n, 1) * 1e-12:
        raise NoConvergence(f"Schur vectors lost orthogonality ({orth:.3g})")
    scale = max(1.0, np.linalg.norm(F))
    resid = np.linalg.norm(s.reconstruct() - F)
    if resid > 1e-10 * scale:
        raise NoConvergence(f"Schur residual {resid:.3g} exceeds tolerance")
    for b in s.blocks:
        if b.size == 2 and abs(b.eigenvalues[0].imag) == 0.0:
            raise NoConvergence(f"2x2 Schur block at {b.start} has real eigenvalues")


def real_schur(F) -> RealSchur:
    """Real Schur decomposition ``F = U R U^T`` (LAPACK ``gees``)."""
    A = as_square(F, "F")
    try:
        R, U = scipy.linalg.schur(A, output="real")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NoConvergence(f"real Schur decomposition failed: {exc}") from None
    n = A.shape[0]
    for i in range(n - 1):
        if abs(R[i + 1, i]) <= 1e-300:
            R[i + 1, i] = 0.0
    R[np.tril_indices(n, -2)] = 0.0
    s = RealSchur(U, R, _scan_blocks(R))
    _check_schur(s, A)
    return s


def _solve_small_sylvester(A: np.ndarray, B: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Solve ``A X + X B = C`` for blocks of size at most 2 (Kronecker form)."""
    p, q = A.shape[0], B.shape[0]
    K = np.kron(np.eye(q), A) + np.kron(B.T, np.eye(p))
    x = np.linalg.solve(K, C.reshape(-1, order="F"))
    return x.reshape((p, q), order="F")


def _swap_adjacent(R: np.ndarray, U: np.ndarray, k: int, p: int, q: int):
    """Swap the p x p block at ``k`` with the following q x q block, in place."""
    m = p + q
    A = R[k:k + m, k:k + m]
    A11, A12, A22 = A[:p, :p], A[:p, p:], A[p:, p:]
    try:
        X = _solve_small_sylvester(A11, -A22, A12)
    except np.linalg.LinAlgError:
        raise SwapIllConditioned(f"blocks at {k} share eigenvalues; swap is singular") from None
    M = np.vstack([-X, np.eye(q)])
    Q, _ = np.linalg.qr(M, mode="complete")
    trial = Q.T @ A @ Q
    leak = np.linalg.norm(trial[q:, :q])
    if not np.isfinite(leak) or leak > 1e-9 * max(1.0, np.linalg.norm(A)):
        raise SwapIllConditioned(f"block swap at {k} is ill-conditioned (leak {leak:.3g})")
    R[k:k + m, :] = Q.T @ R[k:k + m, :]
    R[:, k:k + m] = R[:, k:k + m] @ Q
    U[:, k:k + m] = U[:, k:k + m] @ Q
    R[k + q:k + m, k:k + q] = 0.0
    if q == 2:
        _standardize_2x2(R, U, k)
    if p == 2:
        _standardize_2x2(R, U, k + q)


def _standardize_2x2(R: np.ndarray, U: np.ndarray, k: int):
    """Rotate the 2x2 block at ``k`` so its diagonal entries are equal."""
    a, b, c, d = R[k, k], R[k, k + 1], R[k + 1, k], R[k + 1, k + 1]
    # equal diagonal after G^T B G  <=>  tan(2 theta) = (d - a) / (b + c)
    theta = 0.5 * np.arctan2(d - a, b + c) if (b + c) != 0 or (d - a) != 0 else 0.0
    cs, sn = np.cos(theta), np.sin(theta)
    G = np.array([[cs, -sn], [sn, cs]])
    R[k:k + 2, :] = G.T @ R[k:k + 2, :]
    R[:, k:k + 2] = R[:, k:k + 2] @ G
    U[:, k:k + 2] = U[:, k:k + 2] @ G


def _same_spectrum(a: SchurBlock, b: SchurBlock, tol: float) -> bool:
    if a.size != b.size:
        return False
    return all(abs(x - y) <= tol for x, y in zip(sorted(a.eigenvalues, key=_ckey), sorted(b.eigenvalues, key=_ckey)))


def _ckey(z: complex):
    return (round(z.real, 12), round(z.imag, 12))


def reorder_blocks(s: RealSchur, select: Sequence[bool], tol: float = DEFAULT_TOL) -> RealSchur:
    """Move the selected diagonal blocks to the trailing part of ``R``.

    Relative order within the selected and unselected groups is kept.
    Adjacent blocks with the same spectrum are relabelled instead of swapped.
    """
    if len(select) != len(s.blocks):
        raise ValueError("one selection flag per Schur block is required")
    R = s.R.copy()
    U = s.U.copy()
    blocks = list(s.blocks)
    flags = list(bool(f) for f in select)
    scale = tol * max(1.0, np.linalg.norm(s.R))
    moved = True
    while moved:
        moved = False
        for i in range(len(blocks) - 1):
            if not flags[i] or flags[i + 1]:
                continue
            a, b = blocks[i], blocks[i + 1]
            if not _same_spectrum(a, b, scale):
                _swap_adjacent(R, U, a.start, a.size, b.size)
            sizes = [bl.size for bl in blocks]
            sizes[i], sizes[i + 1] = sizes[i + 1], sizes[i]
            flags[i], flags[i + 1] = flags[i + 1], flags[i]
            blocks = list(_rebuild_blocks(R, sizes))
            moved = True
    out = RealSchur(U, R, tuple(blocks))
    F = s.reconstruct()
    _check_schur(out, F)
    before = np.sort_complex(s.eigenvalues)
    after = np.sort_complex(out.eigenvalues)
    if np.max(np.abs(before - after), initial=0.0) > 1e-8 * max(1.0, np.linalg.norm(F)):
        raise SwapIllConditioned("reordering perturbed the spectrum beyond 1e-8")
    return out


def select_target_blocks(s: RealSchur, target: Sequence[complex], tol: float = DEFAULT_TOL) -> list[bool]:
    """Flag the blocks whose eigenvalues make up ``target`` (matched within tolerance)."""
    scale = tol * max(1.0, np.linalg.norm(s.R))
    remaining = [complex(z) for z in target]
    flags = []
    for b in s.blocks:
        hits = []
        pool = list(remaining)
        for lam in b.eigenvalues:
            j = next((k for k, mu in enumerate(pool) if abs(lam - mu) <= scale), None)
            if j is not None:
                hits.append(pool.pop(j))
        if len(hits) == b.size:
            remaining = pool
            flags.append(True)
        elif hits and b.size == 2:
            raise TargetNotBlockClosed(
                f"target splits the conjugate pair {b.eigenvalues[0]:.6g}, {b.eigenvalues[1]:.6g}"
            )
        else:
            flags.append(False)
    if remaining:
        raise TargetNotBlockClosed(f"target eigenvalues {remaining} are not in the spectrum")
    return flags


def reorder_schur(s: RealSchur, target: Sequence[complex], tol: float = DEFAULT_TOL) -> RealSchur:
    """Reorder ``s`` so that the eigenvalues in ``target`` occupy the trailing block.

    ``target`` must be a union of whole block spectra: both members of a
    complex-conjugate pair, or neither.  Eigenvalues match when
    ``|lambda - mu| <= tol * max(1, ||F||_F)``.
    """
    return reorder_blocks(s, select_target_blocks(s, target, tol), tol)


# -- Sylvester ---------------------------------------------------------------

@dataclass(frozen=True)
class SylvesterSolution:
    X: np.ndarray
    residual: float


def solve_lyapunov_quasi_triangular(R: np.ndarray, blocks: Sequence[SchurBlock], C: np.ndarray) -> np.ndarray:
    """Solve ``R Y + Y R^T = C`` with ``R`` upper quasi-triangular.

    Back substitution over block rows and columns, both from the bottom:
    ``R_ii Y_ij + Y_ij R_jj^T = C_ij - sum_{k>i} R_ik Y_kj - sum_{l>j} Y_il R_jl^T``.
    """
    n = R.shape[0]
    Y = np.zeros((n, n))
    idx = [slice(b.start, b.start + b.size) for b in blocks]
    m = len(blocks)
    for bi in range(m - 1, -1, -1):
        si = idx[bi]
        tail_i = slice(si.stop, n)
        for bj in range(m - 1, -1, -1):
            sj = idx[bj]
            tail_j = slice(sj.stop, n)
            rhs = C[si, sj] - R[si, tail_i] @ Y[tail_i, sj] - Y[si, tail_j] @ R[sj, tail_j].T
            Y[si, sj] = _solve_small_sylvester(R[si, si], R[sj, sj].T, rhs)
    return Y


def check_sylvester_solvable(eigenvalues: Sequence[complex], scale: float, tol: float = DEFAULT_TOL):
    lam = np.asarray(eigenvalues, dtype=complex)
    if lam.size == 0:
        return
    sums = np.abs(lam[:, None] + lam[None, :])
    worst = float(np.min(sums))
    if worst <= tol * scale:
        i, j = np.unravel_index(int(np.argmin(sums)), sums.shape)
        raise SingularSylvester(
            f"eigenvalues {lam[i]:.6g} and {lam[j]:.6g} sum to {worst:.3g}; "
            "X F^T + F X = 2I has no unique solution"
        )


def solve_sylvester_special(F, tol: float = DEFAULT_TOL, schur: RealSchur | None = None) -> SylvesterSolution:
    """Unique symmetric solution of ``X F^T + F X = 2 I``.

    Raises :class:`SingularSylvester` when two eigenvalues of ``F`` (the same
    one counted twice included) sum to zero within
    ``tol * max(1, ||F||_F)``.
    """
    A = as_square(F, "F")
    n = A.shape[0]
    s = schur if schur is not None else real_schur(A)
    check_sylvester_solvable(s.eigenvalues, max(1.0, np.linalg.norm(A)), tol)
    Y = solve_lyapunov_quasi_triangular(s.R, s.blocks, 2.0 * np.eye(n))
    X = s.U @ Y @ s.U.T
    X = 0.5 * (X + X.T)
    residual = float(np.linalg.norm(X @ A.T + A @ X - 2.0 * np.eye(n)))
    if not np.isfinite(residual):
        raise SingularSylvester("Sylvester solve produced non-finite values")
    return SylvesterSolution(X, residual)


# -- symmetric eigenproblem --------------------------------------------------

class SymmetricEig(NamedTuple):
    Q: np.ndarray
    eigenvalues: np.ndarray

    @property
    def Lambda(self) -> np.ndarray:
        return np.diag(self.eigenvalues)


def symmetric_eig(S) -> SymmetricEig:
    """``S = Q diag(lam) Q^T`` with eigenvalues ascending (LAPACK ``syevd``)."""
    A = as_square(S, "S")
    norm = np.linalg.norm(A)
    if np.linalg.norm(A - A.T) > 1e-10 * max(norm, np.finfo(float).tiny):
        raise InputError("matrix is not symmetric")
    A = 0.5 * (A + A.T)
    try:
        lam, Q = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(f"symmetric eigensolver failed: {exc}") from None
    if np.linalg.norm(Q @ np.diag(lam) @ Q.T - A) > 1e-10 * max(1.0, norm):
        raise NoConvergence("symmetric eigendecomposition residual too large")
    return SymmetricEig(Q, lam)


def matrix_to_json(M) -> dict:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return {"rows": int(M.shape[0]), "cols": int(M.shape[1]), "data": M.tolist()}


def matrix_from_json(obj) -> np.ndarray:
    """Accepts ``{"rows", "cols", "data"}`` or a bare nested list."""
    if isinstance(obj, dict):
        if "data" not in obj:
            raise InputError("matrix object needs a 'data' field")
        data = obj["data"]
    else:
        data = obj
    try:
        M = np.array(data, dtype=float)
    except (TypeError, ValueError):
        raise InputError("matrix data must be a rectangular array of numbers") from None
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2:
        raise InputError("matrix data must be two-dimensional")
    if isinstance(obj, dict):
        rows, cols = obj.get("rows", M.shape[0]), obj.get("cols", M.shape[1])
        if (rows, cols) != M.shape:
            raise InputError(f"declared shape {rows}x{cols} does not match data {M.shape[0]}x{M.shape[1]}")
    return M
