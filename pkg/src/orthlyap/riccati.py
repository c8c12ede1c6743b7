"""Symmetric solutions of ``G F + F^T G = 2 G^2`` with ``tr G = tr F``.

:func:`construct_G` is the constructive route: split the spectrum of ``F``
into a part with no zero pair sums and a zero-sum remainder, move the first
part to the trailing block of a real Schur form, solve the special
Sylvester equation there and invert.  :func:`enumerate_care_solutions`
lists every solution from Jordan chains of

    T = [[-F, 2I],
         [ 0,  F^T]]

as ``X = Z Y^{-1}`` over chain-prefix selections whose top half ``Y`` is
invertible.
"""

from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import matlin
from .errors import (
    IllConditionedInverse,
    InputError,
    JordanRequired,
    NoConvergence,
    TooLarge,
)
from .lyapunov import LyapunovCandidate, quadratic_candidate

log = logging.getLogger(__name__)

SYLVESTER_DIRECT = "sylvester-direct"
SCHUR_PARTITION = "schur-partition"
ENUMERATED = "enumerated"

MAX_INVERSE_CONDITION = 1e12


def sare_residual(G: np.ndarray, F: np.ndarray) -> float:
    return float(np.linalg.norm(G @ F + F.T @ G - 2.0 * G @ G))


@dataclass
class SareSolution:
    G: np.ndarray
    residual: float
    trace_gap: float
    provenance: str
    eigenvalues: tuple[complex, ...] | None = None
    columns: tuple[int, ...] | None = None

    @property
    def is_symmetric(self) -> bool:
        return bool(np.linalg.norm(self.G - self.G.T) <= 1e-10 * max(1.0, np.linalg.norm(self.G)))

    def to_dict(self) -> dict:
        out = {
            "G": matlin.matrix_to_json(self.G),
            "residual": self.residual,
            "trace_gap": self.trace_gap,
            "provenance": self.provenance,
            "symmetric": self.is_symmetric,
        }
        if self.eigenvalues is not None:
            out["eigenvalues"] = [[z.real, z.imag] for z in self.eigenvalues]
        if self.columns is not None:
            out["columns"] = list(self.columns)
        return out


def _make_solution(G, F, provenance, eigenvalues=None, columns=None) -> SareSolution:
    return SareSolution(
        G=G,
        residual=sare_residual(G, F),
        trace_gap=float(abs(np.trace(G) - np.trace(F))),
        provenance=provenance,
        eigenvalues=eigenvalues,
        columns=columns,
    )


# -- spectrum partition ------------------------------------------------------

@dataclass
class SpectrumPartition:
    sigma1: list[complex]
    sigma2: list[complex]
    tolerance: float
    sigma1_index: list[int] = field(default_factory=list)
    sigma2_index: list[int] = field(default_factory=list)

    def check(self) -> dict[str, bool]:
        """Evaluate the four defining properties of the split."""
        tol = self.tolerance
        s1 = np.asarray(self.sigma1, dtype=complex)
        s2 = np.asarray(self.sigma2, dtype=complex)
        n = len(s1) + len(s2)

        def closed(vals):
            rest = list(vals)
            while rest:
                z = rest.pop()
                if abs(z.imag) <= tol:
                    continue
                j = next((k for k, w in enumerate(rest) if abs(w - z.conjugate()) <= tol), None)
                if j is None:
                    return False
                rest.pop(j)
            return True

        no_zero_sums = bool(s1.size == 0 or np.min(np.abs(s1[:, None] + s1[None, :])) > tol)
        return {
            "conjugate_closed": closed(s1) and closed(s2),
            "no_zero_pair_sums": no_zero_sums,
            "sigma2_sums_to_zero": bool(abs(s2.sum()) <= max(n, 1) * tol),
            "covers_spectrum": sorted(self.sigma1_index + self.sigma2_index) == list(range(n)),
        }


def partition_spectrum(eigs: Sequence[complex], tol: float = matlin.DEFAULT_TOL) -> SpectrumPartition:
    """Greedily move zero-sum pairs out of the spectrum.

    Repeatedly find the first pair ``(i, j)``, ``i <= j``, of remaining
    eigenvalues with ``|lambda_i + lambda_j| <= tol`` and move it to the
    second set; ``i == j`` (a zero eigenvalue) moves one eigenvalue.
    ``tol`` is absolute.
    """
    remaining = [(k, complex(z)) for k, z in enumerate(eigs)]
    moved: list[tuple[int, complex]] = []
    while True:
        hit = None
        for a in range(len(remaining)):
            for b in range(a, len(remaining)):
                if abs(remaining[a][1] + remaining[b][1]) <= tol:
                    hit = (a, b)
                    break
            if hit:
                break
        if hit is None:
            break
        a, b = hit
        if a == b:
            moved.append(remaining.pop(a))
        else:
            second = remaining.pop(b)
            moved.append(remaining.pop(a))
            moved.append(second)
    return SpectrumPartition(
        sigma1=[z for _, z in remaining],
        sigma2=[z for _, z in moved],
        tolerance=tol,
        sigma1_index=[k for k, _ in remaining],
        sigma2_index=[k for k, _ in moved],
    )


# -- constructive solver -----------------------------------------------------

def _inverse_symmetric(X: np.ndarray) -> np.ndarray:
    eig = matlin.symmetric_eig(0.5 * (X + X.T))
    mu = eig.eigenvalues
    if np.min(np.abs(mu)) == 0.0:
        raise IllConditionedInverse("Sylvester solution is singular", np.inf)
    cond = float(np.max(np.abs(mu)) / np.min(np.abs(mu)))
    if cond > MAX_INVERSE_CONDITION:
        raise IllConditionedInverse(f"Sylvester solution has condition number {cond:.3g}", cond)
    return (eig.Q / mu) @ eig.Q.T


def construct_G(F, tol: float = matlin.DEFAULT_TOL) -> SareSolution:
    """Real symmetric ``G`` with ``G F + F^T G = 2 G^2`` and ``tr G = tr F``.

    Steps: real Schur form of ``F``; split the spectrum into ``sigma1`` (no
    two members summing to zero) and ``sigma2`` (zero-sum remainder);
    reorder so ``sigma1`` fills the trailing block ``R22``; solve
    ``X R22^T + R22 X = 2I``; ``G = U2 X^{-1} U2^T`` where ``U2`` spans the
    trailing Schur vectors.  Pair sums count as zero below
    ``tol * max(1, ||F||_F)``.

    If ``sigma1`` is empty the result is ``G = 0`` with a warning: the
    resulting ``V`` vanishes identically.
    """
    A = matlin.as_square(F, "F")
    n = A.shape[0]
    scale = max(1.0, np.linalg.norm(A))
    schur = matlin.real_schur(A)
    owner = [bi for bi, b in enumerate(schur.blocks) for _ in b.eigenvalues]
    part = partition_spectrum(schur.eigenvalues, tol * scale)

    in_sigma1 = set(part.sigma1_index)
    select = []
    for bi, b in enumerate(schur.blocks):
        members = [k for k, o in enumerate(owner) if o == bi]
        flags = {k in in_sigma1 for k in members}
        if len(flags) != 1:
            raise NoConvergence(f"spectrum split separates the conjugate pair in Schur block {bi}")
        select.append(flags.pop())

    provenance = SYLVESTER_DIRECT if not part.sigma2 else SCHUR_PARTITION
    p = len(part.sigma1)
    if p == 0:
        warnings.warn("no eigenvalue survives the zero-sum split; G = 0 and V vanishes identically", RuntimeWarning)
        G = np.zeros((n, n))
    else:
        ordered = matlin.reorder_blocks(schur, select, tol)
        R22 = ordered.trailing(p)
        k0 = n - p
        sub_blocks = tuple(
            matlin.SchurBlock(b.start - k0, b.size, b.eigenvalues) for b in ordered.blocks if b.start >= k0
        )
        local = matlin.RealSchur(np.eye(p), R22, sub_blocks)
        X = matlin.solve_sylvester_special(R22, tol, schur=local).X
        G2 = _inverse_symmetric(X)
        U2 = ordered.U[:, k0:]
        G = U2 @ G2 @ U2.T
        G = 0.5 * (G + G.T)

    sol = _make_solution(G, A, provenance, eigenvalues=tuple(part.sigma1))
    if sol.residual > 1e-8 * scale**2:
        raise NoConvergence(f"SARE residual {sol.residual:.3g} exceeds tolerance")
    if sol.trace_gap > 1e-8 * max(1.0, abs(np.trace(A))):
        raise NoConvergence(f"trace gap {sol.trace_gap:.3g} exceeds tolerance")
    return sol


# -- enumeration via Jordan chains ------------------------------------------

def hamiltonian_like(F) -> np.ndarray:
    """The coefficient matrix ``T = [[-F, 2I], [0, F^T]]``."""
    A = matlin.as_square(F, "F")
    n = A.shape[0]
    return np.block([[-A, 2.0 * np.eye(n)], [np.zeros((n, n)), A.T]])


@dataclass
class JordanChain:
    eigenvalue: complex
    columns: tuple[int, ...]


@dataclass
class JordanData:
    """Columns of ``P`` grouped into Jordan chains of ``T``."""

    P: np.ndarray
    chains: list[JordanChain]

    def validate(self, T: np.ndarray, tol: float = 1e-8):
        m = T.shape[0]
        if self.P.shape != (m, m):
            raise InputError(f"Jordan matrix P must be {m}x{m}")
        used = sorted(c for ch in self.chains for c in ch.columns)
        if used != list(range(m)):
            raise InputError("Jordan chains must use every column of P exactly once")
        if np.linalg.cond(self.P) > 1e12:
            raise InputError("Jordan matrix P is singular")
        scale = max(1.0, np.linalg.norm(T))
        for ch in self.chains:
            prev = None
            for c in ch.columns:
                eta = self.P[:, c]
                target = ch.eigenvalue * eta + (prev if prev is not None else 0.0)
                err = np.linalg.norm(T @ eta - target)
                if err > tol * scale * max(1.0, np.linalg.norm(eta)):
                    raise InputError(f"column {c} violates the Jordan chain relation (error {err:.3g})")
                prev = eta

    def to_dict(self) -> dict:
        P = np.asarray(self.P, dtype=complex)
        return {
            "P": [[[z.real, z.imag] for z in row] for row in P],
            "chains": [
                {"eigenvalue": [ch.eigenvalue.real, ch.eigenvalue.imag], "columns": list(ch.columns)}
                for ch in self.chains
            ],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "JordanData":
        try:
            rows = obj["P"]
            P = np.array([[_complex(v) for v in row] for row in rows], dtype=complex)
            chains = [
                JordanChain(_complex(ch["eigenvalue"]), tuple(int(c) for c in ch["columns"]))
                for ch in obj["chains"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed Jordan data: {exc}") from None
        return cls(P, chains)


def _complex(v) -> complex:
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ValueError("complex numbers are [re, im] pairs")
        return complex(float(v[0]), float(v[1]))
    return complex(float(v))


def auto_jordan(T: np.ndarray, tol: float = 1e-8) -> JordanData:
    """Eigenvector basis of ``T``; raises :class:`JordanRequired` if ``T`` is defective."""
    w, V = np.linalg.eig(T)
    m = T.shape[0]
    scale = max(1.0, np.linalg.norm(T))
    V = V / np.linalg.norm(V, axis=0)
    cluster_tol = max(1e-6 * scale, tol * scale)
    seen = np.zeros(m, dtype=bool)
    for i in range(m):
        if seen[i]:
            continue
        group = np.flatnonzero(np.abs(w - w[i]) <= cluster_tol)
        seen[group] = True
        if len(group) > 1:
            sv = np.linalg.svd(V[:, group], compute_uv=False)
            if sv[-1] < 1e-6:
                raise JordanRequired(
                    f"T has a defective eigenvalue {w[i] + 0:.6g}; supply Jordan chains explicitly"
                )
    if np.linalg.cond(V) > 1e10:
        raise JordanRequired("eigenvector basis of T is numerically singular; supply Jordan chains explicitly")
    chains = [JordanChain(complex(w[k]), (k,)) for k in range(m)]
    return JordanData(V.astype(complex), chains)


def _conjugate_closed(values: list[complex], tol: float) -> bool:
    rest = list(values)
    while rest:
        z = rest.pop()
        if abs(z.imag) <= tol:
            continue
        j = next((k for k, w in enumerate(rest) if abs(w - z.conjugate()) <= tol), None)
        if j is None:
            return False
        rest.pop(j)
    return True


def enumerate_care_solutions(
    F,
    jordan: JordanData | None = None,
    max_dim: int = 4,
    tol: float = matlin.DEFAULT_TOL,
) -> list[SareSolution]:
    """All real solutions ``X = Z Y^{-1}`` of ``X F + F^T X = 2 X^2``.

    Every selection of ``n`` columns that is a union of Jordan-chain
    prefixes is tried; selections with singular ``Y``, or whose eigenvalues
    are not closed under conjugation, are skipped.  Duplicates within
    ``tol`` are removed.  Without ``jordan`` the chains come from an
    eigendecomposition, which requires ``T`` to be diagonalizable.
    """
    A = matlin.as_square(F, "F")
    n = A.shape[0]
    if n > max_dim:
        raise TooLarge(f"enumeration is limited to n <= {max_dim} (got {n})")
    T = hamiltonian_like(A)
    if jordan is None:
        jordan = auto_jordan(T, tol)
    else:
        jordan.validate(T)
    scale = max(1.0, np.linalg.norm(A))
    P = np.asarray(jordan.P, dtype=complex)
    chains = jordan.chains

    out: list[SareSolution] = []
    ranges = [range(len(ch.columns) + 1) for ch in chains]
    for lengths in itertools.product(*ranges):
        if sum(lengths) != n:
            continue
        cols = tuple(sorted(c for ch, l in zip(chains, lengths) for c in ch.columns[:l]))
        lams = [ch.eigenvalue for ch, l in zip(chains, lengths) for _ in range(l)]
        if not _conjugate_closed(lams, 1e-6 * max(1.0, np.linalg.norm(T))):
            continue
        V = P[:, list(cols)]
        Y, Z = V[:n], V[n:]
        if np.linalg.cond(Y) > 1e12:
            continue
        X = np.linalg.solve(Y.T, Z.T).T
        if np.linalg.norm(X.imag) > 1e-8 * max(1.0, np.linalg.norm(X)):
            continue
        X = X.real.copy()
        X[np.abs(X) < 1e-15 * max(1.0, np.abs(X).max())] = 0.0
        if any(np.max(np.abs(X - s.G)) <= tol for s in out):
            continue
        sol = _make_solution(X, A, ENUMERATED, eigenvalues=tuple(complex(z) for z in lams), columns=cols)
        if sol.residual > 1e-8 * scale**2:
            log.warning("dropping selection %s: residual %.3g", cols, sol.residual)
            continue
        out.append(sol)
    out.sort(key=lambda s: s.columns)
    return out


@dataclass
class TraceIdentityReport:
    lhs: float
    rhs: complex
    gap: float
    passed: bool

    def to_dict(self) -> dict:
        return {"trace": self.lhs, "eigenvalue_sum": [self.rhs.real, self.rhs.imag], "gap": self.gap, "passed": self.passed}


def trace_identity_check(F, sol: SareSolution) -> TraceIdentityReport:
    """Compare ``tr(-F + 2G)`` with the sum of the selected eigenvalues of ``T``."""
    A = matlin.as_square(F, "F")
    if sol.eigenvalues is None:
        raise InputError("solution carries no selected eigenvalues")
    lhs = float(np.trace(-A + 2.0 * sol.G))
    rhs = complex(sum(sol.eigenvalues))
    gap = float(abs(lhs - rhs))
    return TraceIdentityReport(lhs, rhs, gap, gap <= 1e-8 * max(1.0, np.linalg.norm(A)))


def lyapunov_quadratic(G) -> LyapunovCandidate:
    """Quadratic candidate ``V(x) = -x^T G x / 2`` with gradient ``-G x``."""
    return quadratic_candidate(G)
