"""Stability classification and domain-of-attraction estimates from ``V``.

``V`` satisfies ``grad V = -g`` so ``dV/dt = -|g|^2`` along trajectories.
All verdicts are statements about the sampled grid, not global proofs.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .calculus import FINITE_DIFFERENCE, SYMBOLIC, GridSpec, VectorField
from .decomp import Decomposition
from .errors import (
    CertificateFailure,
    DimensionMismatch,
    InputError,
    NoZeroLocus,
    NotAnEquilibrium,
    UncertifiedDecomposition,
)
from .lyapunov import LyapunovCandidate, expression_candidate, line_integral_candidate, quadratic_candidate

LYAPUNOV_STABLE = "LyapunovStable"
ASYMPTOTICALLY_STABLE = "AsymptoticallyStable"
UNSTABLE = "Unstable"
INCONCLUSIVE = "Inconclusive"

DEFAULT_TOL = 1e-9
NEWTON_MAX_ITER = 50
NEWTON_TOL = 1e-10
MAX_SEEDS = 4096
N_RAYS = 16
N_SHELLS = 11


def candidate_for(d: Decomposition) -> LyapunovCandidate:
    """The natural ``V`` for ``d``: quadratic, closed-form potential, or line integral."""
    if d.g.matrix is not None:
        return quadratic_candidate(d.g.matrix)
    if d.potential is not None:
        return expression_candidate(d.potential, d.g)
    return line_integral_candidate(d.g)


def _require_certified(d: Decomposition, grid: GridSpec):
    if d.certificate is None:
        d.certify(grid)
    if not d.certified:
        failing = [k for k, ok in d.certificate.passed.items() if not ok]
        raise UncertifiedDecomposition(f"decomposition fails certification on: {', '.join(failing)}")


def _check_region(d: Decomposition, grid: GridSpec, tol: float):
    if grid.dimension != d.dimension:
        raise DimensionMismatch("grid dimension does not match the system")
    if not grid.contains(np.zeros(grid.dimension)):
        raise InputError("the origin must lie strictly inside the region")
    f0 = float(np.linalg.norm(d.f(np.zeros(d.dimension))))
    if f0 > tol:
        raise NotAnEquilibrium(f"|f(0)| = {f0:.3g} exceeds tol = {tol:.3g}")


def _exclusion_radius(grid: GridSpec) -> float:
    return 1.5 * float(np.max(grid.spacing()))


def _inner_radius(grid: GridSpec) -> float:
    return float(min(min(-a, b) for a, b in zip(grid.lo, grid.hi)))


@dataclass
class StabilityVerdict:
    verdict: str
    evidence: dict
    grid: GridSpec

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "evidence": self.evidence, "grid": self.grid.to_dict(),
                "scope": "certified on this grid"}


def classify_equilibrium(d: Decomposition, V: LyapunovCandidate, region: GridSpec,
                         tol: float = DEFAULT_TOL) -> StabilityVerdict:
    """Apply the stability trichotomy on a grid around the origin.

    Grid points within ``r_ex = 1.5 h`` of the origin are excluded.  With
    ``rho_V`` (``rho_g``) the distance to the nearest remaining point where
    ``V <= tol`` (``|g| <= tol``), counting Newton-refined zeros of ``g``
    between grid nodes, and ``2 r_ex`` the smallest resolvable
    neighbourhood:

    * ``rho_V > 2 r_ex``: LyapunovStable, and AsymptoticallyStable when
      also ``rho_g > 2 r_ex``;
    * ``rho_g > 2 r_ex`` and every shell ``eps/2^(k+1) < |x| <= eps/2^k``
      down to the resolution limit holds a point with ``V < -tol``
      (``eps = min(rho_g, inner radius)``): Unstable;
    * otherwise Inconclusive.
    """
    _check_region(d, region, tol)
    _require_certified(d, region)
    P = region.points()
    norms = np.linalg.norm(P, axis=1)
    Vv = V.V_many(P)
    gn = np.linalg.norm(d.g.evaluate_many(P), axis=1)
    r_ex = _exclusion_radius(region)
    off = norms > r_ex

    def first_hit(mask):
        sel = off & mask
        return float(np.min(norms[sel])) if sel.any() else float("inf")

    rho_V = first_hit(Vv <= tol)
    rho_g = first_hit(gn <= tol)
    # zero curves of g passing between grid nodes; V <= tol on them also counts
    Z = find_zeros(d.g, region, r_ex, P, gn)
    if len(Z):
        zn = np.linalg.norm(Z, axis=1)
        rho_g = min(rho_g, float(np.min(zn)))
        low = V.V_many(Z) <= tol
        if low.any():
            rho_V = min(rho_V, float(np.min(zn[low])))
    R = _inner_radius(region)
    evidence: dict = {
        "exclusion_radius": r_ex,
        "min_V_off_origin": float(np.min(Vv[off])),
        "min_grad_norm_off_origin": float(np.min(gn[off])),
        "rho_V": rho_V if np.isfinite(rho_V) else None,
        "rho_g": rho_g if np.isfinite(rho_g) else None,
        "witness": None,
        "tol": tol,
    }
    resolvable = 2.0 * r_ex
    if rho_V > resolvable:
        verdict = ASYMPTOTICALLY_STABLE if rho_g > resolvable else LYAPUNOV_STABLE
        return StabilityVerdict(verdict, evidence, region)

    if rho_g > resolvable:
        eps = min(rho_g, R)
        shells = []
        witness = None
        for k in range(N_SHELLS):
            outer = eps / 2**k
            inner = outer / 2
            if inner < r_ex:
                break
            sel = off & (norms > inner) & (norms <= outer)
            neg = sel & (Vv < -tol)
            if not neg.any():
                shells = []
                break
            i = int(np.flatnonzero(neg)[np.argmin(norms[neg])])
            witness = P[i]
            shells.append(outer)
        if len(shells) >= 2:
            evidence["witness"] = [float(v) for v in witness]
            evidence["shells"] = shells
            return StabilityVerdict(UNSTABLE, evidence, region)
    return StabilityVerdict(INCONCLUSIVE, evidence, region)


# -- domain of attraction -----------------------------------------------------

def _jacobian(g: VectorField, X: np.ndarray) -> np.ndarray:
    backend = SYMBOLIC if g.is_symbolic else FINITE_DIFFERENCE
    with np.errstate(all="ignore"):
        return g.jacobian_many(X, backend, check=False)


def refine_zeros(g: VectorField, seeds: np.ndarray, max_iter: int = NEWTON_MAX_ITER,
                 tol: float = NEWTON_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Newton ``x <- x - J^+ g(x)`` from each seed, batched.

    The pseudo-inverse keeps the step well defined where the zero set is a
    curve or surface and ``J`` is singular.  Returns the final points and a
    mask of those with ``|g| <= tol``.
    """
    X = np.array(seeds, dtype=float)
    if X.size == 0:
        return X.reshape(0, g.dimension), np.zeros(0, dtype=bool)
    active = np.ones(len(X), dtype=bool)
    done = np.zeros(len(X), dtype=bool)
    for _ in range(max_iter + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        with np.errstate(all="ignore"):
            r = g.evaluate_many(X[idx], check=False)
        rn = np.linalg.norm(r, axis=1)
        conv = rn <= tol
        done[idx[conv]] = True
        bad = ~np.isfinite(rn)
        active[idx[conv | bad]] = False
        step_idx = idx[~conv & ~bad]
        if step_idx.size == 0:
            break
        J = _jacobian(g, X[step_idx])
        ok = np.all(np.isfinite(J), axis=(1, 2))
        active[step_idx[~ok]] = False
        step_idx = step_idx[ok]
        step = np.einsum("mij,mj->mi", np.linalg.pinv(J[ok]), r[~conv & ~bad][ok])
        X[step_idx] -= step
    return X, done


def find_zeros(g: VectorField, grid: GridSpec, exclude: float, P: np.ndarray | None = None,
               gn: np.ndarray | None = None) -> np.ndarray:
    """Zeros of ``g`` inside ``grid`` farther than ``exclude`` from the origin.

    Seeds are grid-local minima of ``|g|`` within ``2 |J_g| h sqrt(n)`` of
    zero (a zero inside a cell cannot hide above that bound); each is refined
    with :func:`refine_zeros`.
    """
    if P is None:
        P = grid.points()
    if gn is None:
        gn = np.linalg.norm(g.evaluate_many(P), axis=1)
    diag = float(np.max(grid.spacing())) * np.sqrt(grid.dimension)
    norms = np.linalg.norm(P, axis=1)
    gn_grid = gn.reshape(grid.shape)
    local_min = (gn_grid == ndimage.minimum_filter(gn_grid, size=3, mode="nearest")).ravel()
    cand = np.flatnonzero(local_min & (norms > exclude))
    if cand.size:
        Jn = np.linalg.norm(_jacobian(g, P[cand]), ord=2, axis=(1, 2))
        cand = cand[gn[cand] <= 2.0 * np.maximum(Jn, 1e-12) * diag]
    cand = cand[np.argsort(gn[cand], kind="stable")][:MAX_SEEDS]
    Z, ok = refine_zeros(g, P[cand])
    inside = np.all((Z > np.array(grid.lo)) & (Z < np.array(grid.hi)), axis=1)
    return Z[ok & inside & (np.linalg.norm(Z, axis=1) > exclude)]


@dataclass
class DAEstimate:
    level: float
    zeros: np.ndarray
    boundary: np.ndarray
    checks: dict
    attested: bool
    radial_heuristic_ok: bool
    grid: GridSpec
    delta: float
    component_size: int
    warnings: list[str] = field(default_factory=list)

    @property
    def certified(self) -> bool:
        return self.attested and all(c["passed"] for c in self.checks.values())

    def boundary_radius(self) -> dict:
        r = np.linalg.norm(self.boundary, axis=1)
        return {"mean": float(r.mean()), "min": float(r.min()), "max": float(r.max())}

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "certified": self.certified,
            "checks": self.checks,
            "radially_unbounded_attested": self.attested,
            "radial_heuristic_ok": self.radial_heuristic_ok,
            "boundary_radius": self.boundary_radius(),
            "boundary_samples": len(self.boundary),
            "zeros_found": len(self.zeros),
            "component_size": self.component_size,
            "barrier": self.delta,
            "grid": self.grid.to_dict(),
            "warnings": list(self.warnings),
        }

    def write_boundary_csv(self, path, V: LyapunovCandidate | None = None):
        """Boundary samples ``x1..xn,V``; 2D samples are ordered by angle to form a polyline."""
        B = self.boundary
        if B.shape[1] == 2:
            B = B[np.argsort(np.arctan2(B[:, 1], B[:, 0]), kind="stable")]
        vals = V.V_many(B) if V is not None else np.full(len(B), self.level)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{k}" for k in range(1, B.shape[1] + 1)] + ["V"])
            for p, v in zip(B, vals):
                w.writerow([repr(float(x)) for x in p] + [repr(float(v))])


def _check(passed: bool, value: float, tolerance: float, witness=None) -> dict:
    return {
        "passed": bool(passed),
        "value": float(value),
        "tolerance": float(tolerance),
        "witness": None if witness is None else [float(v) for v in witness],
    }


def _ray_directions(n: int) -> np.ndarray:
    if n == 2:
        a = 2 * np.pi * np.arange(N_RAYS) / N_RAYS
        return np.column_stack([np.cos(a), np.sin(a)])
    D = np.random.default_rng(0).standard_normal((N_RAYS, n))
    return D / np.linalg.norm(D, axis=1, keepdims=True)


def _radial_heuristic(V: LyapunovCandidate, start: float, stop: float, n: int) -> bool:
    """``V`` increases along 16 rays from ``start`` to ``stop``."""
    if stop <= start:
        return True
    s = np.linspace(start, stop, 32)
    D = _ray_directions(n)
    pts = (s[None, :, None] * D[:, None, :]).reshape(-1, n)
    vals = V.V_many(pts).reshape(len(D), len(s))
    return bool(np.all(np.diff(vals, axis=1) > 0))


def estimate_da(d: Decomposition, V: LyapunovCandidate, search: GridSpec, tol: float = DEFAULT_TOL,
                radially_unbounded: bool = False) -> DAEstimate:
    """Largest sublevel-set component ``Omega_c`` certified as the domain of attraction.

    1. Seeds are grid-local minima of ``|g|`` below a Lipschitz threshold,
       refined by Gauss-Newton on ``g = 0``; zeros near the origin are dropped.
    2. ``c`` is the smallest ``V`` over the refined zeros.
    3. ``Omega_c`` is the face-connected grid component of ``{V < c - delta}``
       holding the origin.  The barrier ``delta = |J_g|max (h sqrt(n))^2 / 2``
       stops the fill from leaking across a ridge of ``V`` between grid nodes.
    4. ``V > tol`` and ``|g| > tol`` are checked on the component, and its
       boundary nodes are projected onto ``g = 0``; the projected points must
       be near the nodes and satisfy ``|g| <= 1e-6 * scale``.
    5. Radial unboundedness of ``V`` must be attested by the caller; a ray
       test only warns.
    """
    n = d.dimension
    _check_region(d, search, tol)
    _require_certified(d, search)
    g = d.g
    P = search.points()
    shape = search.shape
    h = float(np.max(search.spacing()))
    r_ex = _exclusion_radius(search)
    diag = h * np.sqrt(n)
    norms = np.linalg.norm(P, axis=1)
    gv = g.evaluate_many(P)
    gn = np.linalg.norm(gv, axis=1)

    # (1) zeros of g away from the origin
    Z = find_zeros(g, search, r_ex, P, gn)
    if len(Z) == 0:
        raise NoZeroLocus(
            "no finite certified level within the search region: g has no zeros in "
            f"{search.to_dict()} apart from the origin; enlarge the region if a boundary is expected"
        )

    # (2) level
    Vz = V.V_many(Z)
    c = float(np.min(Vz))
    zero_ok = bool(np.max(np.linalg.norm(g.evaluate_many(Z), axis=1)) <= 1e-8)

    # (3) flood fill
    Jz = float(np.max(np.linalg.norm(_jacobian(g, Z), ord=2, axis=(1, 2))))
    delta = float(0.5 * Jz * diag**2)
    Vv = V.V_many(P)
    mask = (Vv < c - delta).reshape(shape)
    labels, _ = ndimage.label(mask)
    i0 = tuple(int(np.argmin(np.abs(ax))) for ax in search.axes())
    if not mask[i0]:
        raise CertificateFailure(
            f"level c = {c:.6g} is below the grid barrier {delta:.3g}; refine the grid",
            "level", [0.0] * n)
    comp = labels == labels[i0]
    edges = np.zeros_like(comp)
    for ax in range(n):
        sl_lo = [slice(None)] * n
        sl_hi = [slice(None)] * n
        sl_lo[ax] = 0
        sl_hi[ax] = -1
        edges[tuple(sl_lo)] = True
        edges[tuple(sl_hi)] = True
    if np.any(comp & edges):
        w = P[np.flatnonzero((comp & edges).ravel())[0]]
        raise CertificateFailure("the sublevel component reaches the search boundary; enlarge the region",
                                 "closure-inside-region", w)
    flat = comp.ravel()

    # (4) checks on the component
    checks: dict = {"zeros_refined": _check(zero_ok, float(np.max(np.linalg.norm(g.evaluate_many(Z), axis=1))), 1e-8)}
    inside = flat & (norms > r_ex)
    if inside.any():
        iv = np.flatnonzero(inside)
        jv = iv[np.argmin(Vv[iv])]
        jg = iv[np.argmin(gn[iv])]
        checks["V_positive"] = _check(Vv[jv] > tol, Vv[jv], tol, P[jv])
        checks["g_nonzero"] = _check(gn[jg] > tol, gn[jg], tol, P[jg])
    else:
        checks["V_positive"] = _check(True, float("inf"), tol)
        checks["g_nonzero"] = _check(True, float("inf"), tol)

    interior = ndimage.binary_erosion(comp, border_value=0)
    bnodes = np.flatnonzero((comp & ~interior).ravel())
    B, bok = refine_zeros(g, P[bnodes])
    moved = np.linalg.norm(B - P[bnodes], axis=1)
    scale = max(1.0, float(np.max(gn[flat])))
    g_at_b = np.linalg.norm(g.evaluate_many(np.where(np.isfinite(B), B, 0.0)), axis=1)
    g_at_b[~np.all(np.isfinite(B), axis=1)] = np.inf
    worst = int(np.argmax(np.where(bok, moved, np.inf)))
    limit = 3.0 * diag
    near = bok & (moved <= limit)
    checks["g_zero_on_boundary"] = _check(
        bool(near.all()), float(np.max(g_at_b)), 1e-6 * scale, None if near.all() else P[bnodes[worst]])
    checks["boundary_projection_distance"] = _check(
        bool(near.all()), float(np.max(moved[bok])) if bok.any() else float("inf"), limit,
        None if near.all() else P[bnodes[worst]])
    B = B[near]
    if len(B) == 0:
        raise CertificateFailure("no boundary sample projects onto g = 0", "g_zero_on_boundary", P[bnodes[0]])
    VB = V.V_many(B)
    checks["boundary_level"] = _check(bool(np.min(VB) >= c - 1e-8), float(c - np.min(VB)), 1e-8)

    # (5) radial unboundedness
    notes = []
    r_out = float(np.max(np.linalg.norm(B, axis=1)))
    radial_ok = _radial_heuristic(V, r_out * 1.05, float(np.linalg.norm(np.maximum(np.abs(search.lo), np.abs(search.hi)))), n)
    if not radial_ok:
        msg = "V does not increase along all sampled rays outside Omega_c; radial unboundedness looks doubtful"
        notes.append(msg)
        warnings.warn(msg, RuntimeWarning)
    if not radially_unbounded:
        notes.append("radial unboundedness not attested; estimate is not certified")

    return DAEstimate(c, Z, B, checks, bool(radially_unbounded), radial_ok, search, delta,
                      int(flat.sum()), notes)
