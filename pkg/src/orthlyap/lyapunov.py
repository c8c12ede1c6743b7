"""Lyapunov function candidates ``V`` with ``grad V = -g`` and ``V(0) = 0``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import expr as ex
from .calculus import VectorField, potential_many

POSITIVE_DEFINITE = "positive-definite"
NEGATIVE_DEFINITE = "negative-definite"
INDEFINITE_OR_SEMIDEFINITE = "indefinite-or-semidefinite"


@dataclass
class LyapunovCandidate:
    """Evaluator for ``V`` and its gradient ``-g``.

    ``kind`` is ``"quadratic"`` for ``V(x) = -x^T G x / 2``, ``"expression"``
    for a closed-form potential, or ``"line-integral"`` when ``V`` is
    reconstructed from ``g`` by quadrature.
    """

    g: VectorField
    kind: str
    _V_many: Callable[[np.ndarray], np.ndarray]
    G: np.ndarray | None = None
    classification: str | None = None
    eigenvalues: np.ndarray | None = None

    @property
    def dimension(self) -> int:
        return self.g.dimension

    def V_many(self, points) -> np.ndarray:
        P = np.asarray(points, dtype=float)
        if P.ndim == 1:
            P = P[None, :]
        return self._V_many(P)

    def V(self, x) -> float:
        return float(self.V_many(np.asarray(x, dtype=float)[None, :])[0])

    def grad_many(self, points) -> np.ndarray:
        return -self.g.evaluate_many(points)

    def grad(self, x) -> np.ndarray:
        return self.grad_many(np.asarray(x, dtype=float)[None, :])[0]


def classify_symmetric(S: np.ndarray, tol: float = 0.0) -> tuple[str, np.ndarray]:
    from .matlin import symmetric_eig

    lam = symmetric_eig(S).eigenvalues
    if np.all(lam > tol):
        return POSITIVE_DEFINITE, lam
    if np.all(lam < -tol):
        return NEGATIVE_DEFINITE, lam
    return INDEFINITE_OR_SEMIDEFINITE, lam


def quadratic_candidate(G) -> LyapunovCandidate:
    """``V(x) = -x^T G x / 2`` for symmetric ``G``, classified through ``-G``."""
    G = np.array(G, dtype=float)
    G = 0.5 * (G + G.T)
    label, lam = classify_symmetric(-G)

    def V_many(P):
        return -0.5 * np.einsum("mi,ij,mj->m", P, G, P)

    return LyapunovCandidate(VectorField.linear(G), "quadratic", V_many, G=G, classification=label, eigenvalues=lam)


def expression_candidate(V: "ex.Expr", g: VectorField) -> LyapunovCandidate:
    """Candidate with a closed-form potential ``V`` (e.g. ``beta(Theta(0)) - beta(Theta)``)."""

    def V_many(P):
        return ex.evaluate_many(V, P)

    return LyapunovCandidate(g, "expression", V_many)


def line_integral_candidate(g: VectorField, quadrature_order: int = 64) -> LyapunovCandidate:
    """``V(x) = -int_0^1 <g(t x), x> dt``; ``g`` should be curl-free."""

    def V_many(P):
        return potential_many(g, P, quadrature_order)

    return LyapunovCandidate(g, "line-integral", V_many)
