"""Differential operators on vector fields over boxes in R^n.

The curl of a field is kept as the full antisymmetric matrix of 2-form
coefficients, ``M[i, j] = d f_j / d x_i - d f_i / d x_j``, so the same
representation works in every dimension.  Two backends are available: the
symbolic one differentiates expression components exactly, the
finite-difference one uses central differences with step
``1e-6 * max(1, |x_i|)``.
"""

from __future__ import annotations

import csv
import os
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from . import expr as ex
from .errors import CurlNotZero, DimensionMismatch, InputError

SYMBOLIC = "symbolic"
FINITE_DIFFERENCE = "finite-difference"

DEFAULT_MAX_GRID = 10**6
CURL_ERROR_LEVEL = 1e-4
CURL_WARNING_LEVEL = 1e-8


def fd_step(x: np.ndarray) -> np.ndarray:
    return 1e-6 * np.maximum(1.0, np.abs(x))


class VectorField:
    """A vector field on R^n given by expressions, a matrix, or a callable.

    Use the constructors :meth:`from_exprs`, :meth:`from_strings`,
    :meth:`linear` and :meth:`from_callable`.  Callables receive an array of
    shape ``(m, n)`` and must return shape ``(m, n)``; they only support the
    finite-difference backend.
    """

    def __init__(self, dimension: int, *, components=None, matrix=None, func=None):
        given = sum(x is not None for x in (components, matrix, func))
        if given != 1:
            raise ValueError("exactly one of components, matrix, func must be given")
        self.dimension = int(dimension)
        self.components: tuple[ex.Expr, ...] | None = None
        self.matrix: np.ndarray | None = None
        self.func = func
        if components is not None:
            comps = tuple(components)
            if len(comps) != self.dimension:
                raise DimensionMismatch(
                    f"field of dimension {self.dimension} needs {self.dimension} components, got {len(comps)}"
                )
            for c in comps:
                bad = [k for k in ex.variables(c) if k > self.dimension]
                if bad:
                    raise DimensionMismatch(f"component uses x{max(bad)} beyond dimension {self.dimension}")
            self.components = comps
        if matrix is not None:
            F = np.array(matrix, dtype=float)
            if F.ndim != 2 or F.shape[0] != F.shape[1]:
                raise InputError("matrix must be square")
            if F.shape[0] != self.dimension:
                raise DimensionMismatch("matrix size does not match dimension")
            self.matrix = F

    @classmethod
    def from_exprs(cls, components: Sequence[ex.Expr]) -> "VectorField":
        return cls(len(components), components=components)

    @classmethod
    def from_strings(cls, texts: Sequence[str], dimension: int | None = None) -> "VectorField":
        n = len(texts) if dimension is None else dimension
        return cls(n, components=[ex.parse(t, n) for t in texts])

    @classmethod
    def linear(cls, F) -> "VectorField":
        F = np.atleast_2d(np.asarray(F, dtype=float))
        return cls(F.shape[0], matrix=F)

    @classmethod
    def from_callable(cls, dimension: int, func: Callable[[np.ndarray], np.ndarray]) -> "VectorField":
        return cls(dimension, func=func)

    @property
    def kind(self) -> str:
        if self.components is not None:
            return "expressions"
        if self.matrix is not None:
            return "linear"
        return "callable"

    @property
    def is_symbolic(self) -> bool:
        return self.func is None

    def to_exprs(self) -> tuple[ex.Expr, ...]:
        if self.components is not None:
            return self.components
        if self.matrix is not None:
            out = []
            for row in self.matrix:
                e: ex.Expr = ex.ZERO
                for j, a in enumerate(row):
                    e = ex.add(e, ex.mul(ex.const(a), ex.Var(j + 1)))
                out.append(e)
            return tuple(out)
        raise TypeError("a callable field has no expression form")

    @cached_property
    def jacobian_exprs(self) -> tuple[tuple[ex.Expr, ...], ...]:
        """``J[i][j] = d f_i / d x_j`` as expressions."""
        comps = self.to_exprs()
        return tuple(tuple(ex.differentiate(c, j) for j in range(1, self.dimension + 1)) for c in comps)

    def _check_points(self, points) -> np.ndarray:
        P = np.asarray(points, dtype=float)
        if P.ndim == 1:
            P = P[None, :]
        if P.shape[1] != self.dimension:
            raise DimensionMismatch(f"points of dimension {P.shape[1]} for a field of dimension {self.dimension}")
        return P

    def evaluate_many(self, points, check: bool = True) -> np.ndarray:
        """Field values at each row of ``points``; ``check=False`` lets NaN/inf through."""
        P = self._check_points(points)
        if self.matrix is not None:
            return P @ self.matrix.T
        if self.components is not None:
            return np.column_stack([ex.evaluate_many(c, P, check) for c in self.components])
        with np.errstate(all="ignore"):
            out = np.asarray(self.func(P), dtype=float)
        return out.reshape(P.shape)

    def __call__(self, point) -> np.ndarray:
        return self.evaluate_many(point)[0]

    def jacobian_many(self, points, backend: str = SYMBOLIC, check: bool = True) -> np.ndarray:
        """Jacobians at each point, shape ``(m, n, n)`` with ``[:, i, j] = d f_i / d x_j``."""
        P = self._check_points(points)
        n = self.dimension
        if self.matrix is not None:
            return np.broadcast_to(self.matrix, (P.shape[0], n, n)).copy()
        if backend == SYMBOLIC:
            if not self.is_symbolic:
                raise ValueError("symbolic backend needs an expression field")
            J = np.empty((P.shape[0], n, n))
            for i, row in enumerate(self.jacobian_exprs):
                for j, e in enumerate(row):
                    J[:, i, j] = ex.evaluate_many(e, P, check)
            return J
        if backend != FINITE_DIFFERENCE:
            raise ValueError(f"unknown backend {backend!r}")
        J = np.empty((P.shape[0], n, n))
        for j in range(n):
            h = fd_step(P[:, j])
            Pp = P.copy()
            Pm = P.copy()
            Pp[:, j] += h
            Pm[:, j] -= h
            J[:, :, j] = (self.evaluate_many(Pp, check) - self.evaluate_many(Pm, check)) / (2 * h)[:, None]
        return J

    def __add__(self, other: "VectorField") -> "VectorField":
        _same_dimension(self, other)
        if self.matrix is not None and other.matrix is not None:
            return VectorField.linear(self.matrix + other.matrix)
        if self.is_symbolic and other.is_symbolic:
            return VectorField.from_exprs([ex.add(a, b) for a, b in zip(self.to_exprs(), other.to_exprs())])
        a, b = self, other
        return VectorField.from_callable(self.dimension, lambda P: a.evaluate_many(P) + b.evaluate_many(P))

    def scaled(self, factor: float) -> "VectorField":
        if self.matrix is not None:
            return VectorField.linear(factor * self.matrix)
        if self.components is not None:
            c = ex.const(factor)
            return VectorField.from_exprs([ex.mul(c, e) for e in self.components])
        f = self
        return VectorField.from_callable(self.dimension, lambda P: factor * f.evaluate_many(P))

    def __repr__(self):
        if self.components is not None:
            body = ", ".join(str(c) for c in self.components)
        elif self.matrix is not None:
            body = f"linear {self.matrix.tolist()}"
        else:
            body = "callable"
        return f"VectorField(n={self.dimension}: {body})"


def _same_dimension(a: VectorField, b: VectorField):
    if a.dimension != b.dimension:
        raise DimensionMismatch(f"dimensions differ: {a.dimension} vs {b.dimension}")


def _default_backend(v: VectorField, backend: str | None) -> str:
    if backend is None:
        return SYMBOLIC if v.is_symbolic else FINITE_DIFFERENCE
    return backend


def curl_many(v: VectorField, points, backend: str | None = None) -> np.ndarray:
    J = v.jacobian_many(points, _default_backend(v, backend))
    return np.swapaxes(J, 1, 2) - J


def curl_at(v: VectorField, p, backend: str | None = None) -> np.ndarray:
    """Antisymmetric matrix ``M[i, j] = d f_j/d x_i - d f_i/d x_j`` at ``p``."""
    return curl_many(v, p, backend)[0]


def divergence_many(v: VectorField, points, backend: str | None = None) -> np.ndarray:
    J = v.jacobian_many(points, _default_backend(v, backend))
    return np.trace(J, axis1=1, axis2=2)


def divergence_at(v: VectorField, p, backend: str | None = None) -> float:
    return float(divergence_many(v, p, backend)[0])


def inner_many(a: VectorField, b: VectorField, points) -> np.ndarray:
    _same_dimension(a, b)
    return np.einsum("ij,ij->i", a.evaluate_many(points), b.evaluate_many(points))


def inner_at(a: VectorField, b: VectorField, p) -> float:
    return float(inner_many(a, b, p)[0])


def gradient_field(phi: ex.Expr, dimension: int) -> VectorField:
    return VectorField.from_exprs(ex.gradient(phi, dimension))


# -- potentials --------------------------------------------------------------

def _gauss_legendre_01(order: int):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    return 0.5 * (nodes + 1.0), 0.5 * weights


def line_integral(g: VectorField, vertices, quadrature_order: int = 64) -> float:
    """``sum over legs of int <g, dr>`` along the polyline through ``vertices``."""
    V = np.asarray(vertices, dtype=float)
    t, w = _gauss_legendre_01(quadrature_order)
    total = 0.0
    for a, b in zip(V[:-1], V[1:]):
        d = b - a
        if not np.any(d):
            continue
        pts = a[None, :] + t[:, None] * d[None, :]
        total += float(w @ (g.evaluate_many(pts) @ d))
    return total


def potential_from_gradient(g: VectorField, x, quadrature_order: int = 64, check_curl: bool = True) -> float:
    """Value at ``x`` of the potential ``V`` with ``grad V = -g`` and ``V(0) = 0``.

    Integrates ``-<g(t x), x>`` over ``t in [0, 1]`` with Gauss-Legendre
    quadrature.  The domain is assumed star-shaped about the origin.  The
    curl of ``g`` is checked at the quadrature nodes; entries above 1e-4
    raise :class:`CurlNotZero`, smaller but visible ones only warn.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != g.dimension:
        raise DimensionMismatch("point dimension does not match field")
    if not np.any(x):
        return 0.0
    t, w = _gauss_legendre_01(quadrature_order)
    pts = t[:, None] * x[None, :]
    if check_curl:
        worst = float(np.max(np.abs(curl_many(g, pts)))) if g.dimension > 1 else 0.0
        if worst > CURL_ERROR_LEVEL:
            raise CurlNotZero(f"field is not curl-free along the segment (max |curl| = {worst:.3g})", worst)
        if worst > CURL_WARNING_LEVEL:
            warnings.warn(f"curl of the gradient field reaches {worst:.3g} on the segment", RuntimeWarning)
    return -float(w @ (g.evaluate_many(pts) @ x))


def potential_many(g: VectorField, points, quadrature_order: int = 64) -> np.ndarray:
    """Vectorised :func:`potential_from_gradient` without the curl check."""
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[None, :]
    t, w = _gauss_legendre_01(quadrature_order)
    m, n = P.shape
    pts = (t[None, :, None] * P[:, None, :]).reshape(-1, n)
    vals = g.evaluate_many(pts).reshape(m, len(t), n)
    return -np.einsum("k,mkn,mn->m", w, vals, P)


# -- grids -------------------------------------------------------------------

def max_grid_points() -> int:
    raw = os.environ.get("ORTHLYAP_MAX_GRID")
    return int(raw) if raw else DEFAULT_MAX_GRID


@dataclass(frozen=True)
class GridSpec:
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    res: tuple[int, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        res = tuple(int(v) for v in self.res)
        if not (len(lo) == len(hi) == len(res)):
            raise InputError("grid bounds and resolution must have equal length")
        if any(a >= b for a, b in zip(lo, hi)):
            raise InputError("grid lower bounds must be below upper bounds")
        if any(r < 2 for r in res):
            raise InputError("grid resolution must be at least 2 per axis")
        total = int(np.prod(res))
        if total > max_grid_points():
            raise InputError(f"grid of {total} points exceeds the cap of {max_grid_points()}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "res", res)

    @classmethod
    def box(cls, half_width: float, dimension: int, res: int) -> "GridSpec":
        return cls((-half_width,) * dimension, (half_width,) * dimension, (res,) * dimension)

    @property
    def dimension(self) -> int:
        return len(self.res)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.res

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(a, b, r) for a, b, r in zip(self.lo, self.hi, self.res)]

    def spacing(self) -> np.ndarray:
        return np.array([(b - a) / (r - 1) for a, b, r in zip(self.lo, self.hi, self.res)])

    def points(self) -> np.ndarray:
        """All grid points, shape ``(prod(res), n)``, in C order over the axes."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x > np.array(self.lo)) and np.all(x < np.array(self.hi)))

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi), "res": list(self.res)}


def write_grid_csv(path, points: np.ndarray, columns: dict[str, np.ndarray]):
    """Write ``x1..xn`` followed by one column per named quantity."""
    points = np.asarray(points, dtype=float)
    n = points.shape[1]
    header = [f"x{k}" for k in range(1, n + 1)] + list(columns)
    data = [np.asarray(v, dtype=float).reshape(len(points)) for v in columns.values()]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, p in enumerate(points):
            w.writerow([repr(float(v)) for v in p] + [repr(float(col[i])) for col in data])


def read_grid_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]])
