"""Orthogonal decompositions ``f = g + h``: ``g`` curl-free, ``h`` divergence-free,
``<g, h> = 0`` pointwise.

Builders construct ``(g, h)`` from level-set ansatz data; the certificate
re-checks all conditions numerically on a grid, which doubles as a
regression test of the symbolic differentiation pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import expr as ex
from .calculus import (
    FINITE_DIFFERENCE,
    SYMBOLIC,
    GridSpec,
    VectorField,
    curl_many,
    divergence_many,
)
from .errors import DimensionMismatch, InputError

T_NAMES = ("t",)
SYMBOLIC_TOL = 1e-9
FD_TOL = 1e-6
DEFAULT_HALF_WIDTH = 2.0
DEFAULT_RES = 50


def parse_profile(text: str) -> ex.Expr:
    """Parse a univariate function of ``t``."""
    return ex.parse(text, 1, names=T_NAMES)


def compose(profile: ex.Expr, theta: ex.Expr) -> ex.Expr:
    """``profile(theta)``: substitute ``theta`` for ``t``."""
    return ex.substitute(profile, {1: theta})


@dataclass(frozen=True)
class Ansatz2D:
    theta: ex.Expr
    alpha: ex.Expr
    beta: ex.Expr

    def __post_init__(self):
        if max(ex.variables(self.theta), default=1) > 2:
            raise InputError("theta may only use x1 and x2")
        for name, e in (("alpha", self.alpha), ("beta", self.beta)):
            if max(ex.variables(e), default=1) > 1:
                raise InputError(f"{name} must be a function of t only")

    @classmethod
    def from_strings(cls, theta: str, alpha: str, beta: str) -> "Ansatz2D":
        return cls(ex.parse(theta, 2), parse_profile(alpha), parse_profile(beta))


@dataclass(frozen=True)
class AnsatzND:
    n: int
    theta: ex.Expr
    beta: ex.Expr
    alpha: Mapping[tuple[int, int], ex.Expr] = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 2:
            raise InputError("the n-dimensional ansatz needs n >= 2")
        if max(ex.variables(self.theta), default=1) > self.n:
            raise InputError(f"theta uses variables beyond x{self.n}")
        for (i, j), e in self.alpha.items():
            if not 1 <= i < j <= self.n:
                raise InputError(f"alpha index pair ({i},{j}) must satisfy 1 <= i < j <= {self.n}")
            if max(ex.variables(e), default=1) > 1:
                raise InputError("alpha profiles must be functions of t only")

    @classmethod
    def from_dict(cls, obj: Mapping) -> "AnsatzND":
        try:
            n = int(obj["n"])
            theta = ex.parse(obj["theta"], n)
            beta = parse_profile(obj["beta"])
            raw = obj.get("alpha", {}) or {}
        except KeyError as exc:
            raise InputError(f"ansatz is missing {exc}") from None
        alpha = {}
        for key, text in raw.items():
            try:
                i, j = (int(v) for v in str(key).split(","))
            except ValueError:
                raise InputError(f"alpha key {key!r} must look like 'i,j'") from None
            alpha[(i, j)] = parse_profile(text)
        return cls(n, theta, beta, alpha)


@dataclass
class Certificate:
    residuals: dict[str, float]
    tolerances: dict[str, float]
    passed: dict[str, bool]
    grid: GridSpec | None
    backend: str
    points: int

    @property
    def certified(self) -> bool:
        return all(self.passed.values())

    def to_dict(self) -> dict:
        return {
            "certified": self.certified,
            "residuals": dict(self.residuals),
            "tolerances": dict(self.tolerances),
            "passed": dict(self.passed),
            "grid": self.grid.to_dict() if self.grid is not None else None,
            "backend": self.backend,
            "points": self.points,
        }


@dataclass
class Decomposition:
    g: VectorField
    h: VectorField
    f: VectorField
    certificate: Certificate | None = None
    source: str = "user"
    potential: ex.Expr | None = None

    @property
    def dimension(self) -> int:
        return self.f.dimension

    @property
    def certified(self) -> bool:
        return self.certificate is not None and self.certificate.certified

    def certify(self, grid: GridSpec | None = None, tol: float | None = None, backend: str | None = None) -> Certificate:
        grid = grid or GridSpec.box(DEFAULT_HALF_WIDTH, self.dimension, DEFAULT_RES)
        self.certificate = verify_decomposition(self.f, self.g, self.h, grid, tol, backend)
        return self.certificate


def verify_points(f: VectorField, g: VectorField, h: VectorField, points, tol: float | None = None,
                  backend: str | None = None) -> Certificate:
    """Check the decomposition conditions at explicit points."""
    if not (f.dimension == g.dimension == h.dimension):
        raise DimensionMismatch("f, g and h must share a dimension")
    if backend is None:
        backend = SYMBOLIC if (g.is_symbolic and h.is_symbolic) else FINITE_DIFFERENCE
    if tol is None:
        tol = SYMBOLIC_TOL if backend == SYMBOLIC else FD_TOL
    P = np.asarray(points, dtype=float)
    fv, gv, hv = f.evaluate_many(P), g.evaluate_many(P), h.evaluate_many(P)
    sum_res = float(np.max(np.abs(fv - gv - hv)))
    curl_res = float(np.max(np.abs(curl_many(g, P, backend)))) if g.dimension > 1 else 0.0
    div_res = float(np.max(np.abs(divergence_many(h, P, backend))))
    dots = np.einsum("ij,ij->i", gv, hv)
    orth_abs = float(np.max(np.abs(dots)))
    scale = 1.0 + np.linalg.norm(gv, axis=1) * np.linalg.norm(hv, axis=1)
    orth_rel = float(np.max(np.abs(dots) / scale))
    residuals = {
        "sum": sum_res,
        "curl": curl_res,
        "divergence": div_res,
        "orthogonality": orth_abs,
        "orthogonality_relative": orth_rel,
    }
    tolerances = {"sum": tol, "curl": tol, "divergence": tol, "orthogonality_relative": tol}
    passed = {k: residuals[k] <= t for k, t in tolerances.items()}
    return Certificate(residuals, tolerances, passed, None, backend, len(P))


def verify_decomposition(f: VectorField, g: VectorField, h: VectorField, grid: GridSpec,
                         tol: float | None = None, backend: str | None = None) -> Certificate:
    """Maximum residuals of ``f - g - h``, ``curl g``, ``div h`` and ``<g, h>`` over ``grid``.

    Orthogonality passes on the relative measure
    ``|<g,h>| / (1 + |g| |h|)``; the absolute maximum is reported too.
    """
    if grid.dimension != f.dimension:
        raise DimensionMismatch("grid dimension does not match the field")
    cert = verify_points(f, g, h, grid.points(), tol, backend)
    cert.grid = grid
    return cert


def build_ansatz_2d(a: Ansatz2D, grid: GridSpec | None = None, tol: float | None = None) -> Decomposition:
    """``g = beta(Theta) grad Theta``, ``h = alpha(Theta) (-Theta_x2, Theta_x1)``."""
    th1 = ex.differentiate(a.theta, 1)
    th2 = ex.differentiate(a.theta, 2)
    b = compose(a.beta, a.theta)
    al = compose(a.alpha, a.theta)
    g = VectorField.from_exprs([ex.mul(b, th1), ex.mul(b, th2)])
    h = VectorField.from_exprs([ex.neg(ex.mul(al, th2)), ex.mul(al, th1)])
    d = Decomposition(g, h, g + h, source="ansatz2d")
    d.certify(grid, tol)
    return d


def build_ansatz_nd(a: AnsatzND, grid: GridSpec | None = None, tol: float | None = None,
                    certify: bool = True) -> Decomposition:
    """``g = d(beta(Theta))`` and ``h = d*(sum alpha_ij(Theta) dx^i ^ dx^j)``.

    Componentwise ``g_k = beta'(Theta) Theta_k`` and
    ``h_k = sum_{j>k} alpha_kj'(Theta) Theta_j - sum_{i<k} alpha_ik'(Theta) Theta_i``.
    The potential ``V = beta(Theta(0)) - beta(Theta)`` is attached.
    """
    n = a.n
    dtheta = [ex.differentiate(a.theta, k) for k in range(1, n + 1)]
    dbeta = compose(ex.differentiate(a.beta, 1), a.theta)
    dalpha = {key: compose(ex.differentiate(prof, 1), a.theta) for key, prof in a.alpha.items()}
    g_comps = [ex.mul(dbeta, dtheta[k]) for k in range(n)]
    h_comps = []
    for k in range(1, n + 1):
        hk: ex.Expr = ex.ZERO
        for j in range(k + 1, n + 1):
            if (k, j) in dalpha:
                hk = ex.add(hk, ex.mul(dalpha[(k, j)], dtheta[j - 1]))
        for i in range(1, k):
            if (i, k) in dalpha:
                hk = ex.sub(hk, ex.mul(dalpha[(i, k)], dtheta[i - 1]))
        h_comps.append(hk)
    g = VectorField.from_exprs(g_comps)
    h = VectorField.from_exprs(h_comps)
    phi = compose(a.beta, a.theta)
    phi0 = ex.evaluate(phi, [0.0] * n)
    potential = ex.sub(ex.const(phi0), phi)
    d = Decomposition(g, h, g + h, source="ansatzNd", potential=potential)
    if certify:
        d.certify(grid, tol)
    return d


def linear_decomposition(F, G, grid: GridSpec | None = None, tol: float = 1e-8) -> Decomposition:
    """``g(x) = G x``, ``h(x) = (F - G) x``; certified on a grid."""
    F = np.asarray(F, dtype=float)
    G = np.asarray(G, dtype=float)
    d = Decomposition(VectorField.linear(G), VectorField.linear(F - G), VectorField.linear(F), source="linear")
    n = F.shape[0]
    grid = grid or GridSpec.box(1.0, n, max(2, min(DEFAULT_RES, int(round(10 ** (4 / n))))))
    d.certify(grid, tol * max(1.0, np.linalg.norm(F)) ** 2)
    return d
