"""Fixed-step RK4 integration, Lyapunov monotonicity checks and basin sampling."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .calculus import VectorField
from .errors import InputError
from .lyapunov import LyapunovCandidate

CONVERGED = "Converged"
ESCAPED = "Escaped"
UNDECIDED = "Undecided"

DEFAULT_ESCAPE_RADIUS = 1e3
DEFAULT_T_MAX = 100.0


def convergence_radius_for(x0: np.ndarray) -> np.ndarray:
    return 1e-6 * (1.0 + np.linalg.norm(np.atleast_2d(x0), axis=1))


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    V: np.ndarray | None = None
    event: str = "t_max"
    message: str = ""

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def final_time(self) -> float:
        return float(self.times[-1])

    @property
    def outcome(self) -> str:
        return {"converged": CONVERGED, "escaped": ESCAPED}.get(self.event, UNDECIDED)

    def write_csv(self, path):
        n = self.states.shape[1]
        header = ["t"] + [f"x{k}" for k in range(1, n + 1)] + (["V"] if self.V is not None else [])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k, t in enumerate(self.times):
                row = [repr(float(t))] + [repr(float(v)) for v in self.states[k]]
                if self.V is not None:
                    row.append(repr(float(self.V[k])))
                w.writerow(row)


def _integrate_batch(f: VectorField, X0: np.ndarray, t_max: float, dt: float, escape_radius: float,
                     conv_radius: np.ndarray, record: bool):
    X = np.array(X0, dtype=float)
    m, n = X.shape
    steps = max(1, int(math.ceil(t_max / dt - 1e-9)))
    active = np.ones(m, dtype=bool)
    events = np.array(["t_max"] * m, dtype=object)
    messages = [""] * m
    stop_step = np.full(m, steps)
    history = np.full((steps + 1, m, n), np.nan) if record else None
    if record:
        history[0] = X

    norms = np.linalg.norm(X, axis=1)
    done = norms < conv_radius
    events[done] = "converged"
    stop_step[done] = 0
    active &= ~done

    t = 0.0
    for k in range(1, steps + 1):
        if not active.any():
            break
        h = min(dt, t_max - t) if k == steps else dt
        idx = np.flatnonzero(active)
        x = X[idx]
        with np.errstate(all="ignore"):
            k1 = f.evaluate_many(x, check=False)
            k2 = f.evaluate_many(x + 0.5 * h * k1, check=False)
            k3 = f.evaluate_many(x + 0.5 * h * k2, check=False)
            k4 = f.evaluate_many(x + h * k3, check=False)
            x_new = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            nrm = np.sqrt(np.einsum("ij,ij->i", x_new, x_new))
        bad = np.zeros(len(idx), dtype=bool)
        blown = np.zeros(len(idx), dtype=bool)
        odd = ~np.isfinite(nrm)
        if odd.any():
            # non-finite stages propagate into x_new; classify those rows stage by
            # stage: NaN at a bounded point is a domain error, while a stage taken
            # past the escape radius or returning inf is a blow-up
            j = np.flatnonzero(odd)
            bj = np.zeros(len(j), dtype=bool)
            wj = np.zeros(len(j), dtype=bool)
            with np.errstate(all="ignore"):
                args = (x[j], x[j] + 0.5 * h * k1[j], x[j] + 0.5 * h * k2[j], x[j] + h * k3[j])
                for arg, kk in zip(args, (k1[j], k2[j], k3[j], k4[j])):
                    far = ~np.all(np.isfinite(arg), axis=1) | (np.linalg.norm(arg, axis=1) >= escape_radius)
                    wj |= ~bj & (far | np.any(np.isinf(kk), axis=1))
                    bj |= ~wj & np.any(np.isnan(kk), axis=1)
            bad[j] = bj
            blown[j] = wj | ~bj
        t += h

        dom = idx[bad]
        events[dom] = "domain-error"
        for i in dom:
            messages[i] = "field evaluation left its domain"
        stop_step[dom] = k - 1
        active[dom] = False

        ok = ~bad
        esc = ok & (blown | ~np.isfinite(nrm) | (nrm >= escape_radius))
        conv = ok & ~esc & (nrm < conv_radius[idx])
        keep = ok & ~esc
        fin = esc & np.all(np.isfinite(x_new), axis=1)
        X[idx[keep | fin]] = x_new[keep | fin]
        if record:
            history[k, idx[keep | fin]] = x_new[keep | fin]
        ie = idx[esc]
        events[ie] = "escaped"
        stop_step[ie] = k
        active[ie] = False
        ic = idx[conv]
        events[ic] = "converged"
        stop_step[ic] = k
        active[ic] = False
    times = np.minimum(np.arange(steps + 1) * dt, t_max)
    return X, events, messages, stop_step, times, history


def integrate(f: VectorField, x0, t_max: float, dt: float, V: LyapunovCandidate | None = None,
              escape_radius: float = DEFAULT_ESCAPE_RADIUS, convergence_radius: float | None = None) -> Trajectory:
    """Classical RK4 with fixed step ``dt`` from ``x0`` up to ``t_max``.

    Stops early when ``|x|`` reaches ``escape_radius`` or drops below the
    convergence radius (default ``1e-6 (1 + |x0|)``).  A domain error in the
    field ends the trajectory with event ``"domain-error"``.
    """
    return integrate_many(f, np.atleast_2d(np.asarray(x0, dtype=float)), t_max, dt, V,
                          escape_radius, convergence_radius)[0]


def integrate_many(f: VectorField, X0, t_max: float, dt: float, V: LyapunovCandidate | None = None,
                   escape_radius: float = DEFAULT_ESCAPE_RADIUS,
                   convergence_radius: float | None = None) -> list[Trajectory]:
    """Integrate several initial conditions in lock step; one :class:`Trajectory` each."""
    if not dt > 0 or not t_max > 0:
        raise InputError("dt and t_max must be positive")
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    if X0.shape[1] != f.dimension:
        raise InputError("initial state has the wrong dimension")
    if not np.all(np.isfinite(X0)):
        raise InputError("initial state must be finite")
    conv = convergence_radius_for(X0) if convergence_radius is None else np.full(len(X0), convergence_radius)
    _, events, messages, stop, times, hist = _integrate_batch(f, X0, t_max, dt, escape_radius, conv, True)
    out = []
    for i in range(len(X0)):
        last = int(stop[i])
        states = hist[: last + 1, i]
        if not np.all(np.isfinite(states[-1])):
            states = states[:-1]
            last -= 1
        tr = Trajectory(times[: last + 1].copy(), states.copy(), event=str(events[i]), message=messages[i])
        if V is not None:
            with np.errstate(all="ignore"):
                tr.V = V.V_many(tr.states)
        out.append(tr)
    return out


@dataclass
class MonotoneReport:
    monotone: bool
    max_increase: float
    pointwise_ok: bool
    max_relative_error: float
    checked_steps: int
    violations: list[int] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.monotone and self.pointwise_ok

    def to_dict(self) -> dict:
        return {
            "monotone": self.monotone,
            "max_increase": self.max_increase,
            "pointwise_ok": self.pointwise_ok,
            "max_relative_error": self.max_relative_error,
            "checked_steps": self.checked_steps,
            "violations": self.violations[:20],
        }


def check_monotone_V(tr: Trajectory, g: VectorField, tol: float = 1e-9) -> MonotoneReport:
    """Check ``V`` is non-increasing and ``dV/dt = -|g|^2`` along ``tr``.

    (a) ``V[k+1] - V[k] <= tol (1 + |V[k]|)`` at every step;
    (b) the difference quotient of ``V`` matches ``-|g|^2`` (averaged over
    the step's endpoints) within ``max(1e-2, 10 dt)`` relative error, skipping
    steps where ``|g|^2`` is below ``1e-8`` of its maximum along the path.
    ``g`` may be a :class:`VectorField` or anything with a ``g`` attribute.
    """
    if tr.V is None:
        raise InputError("trajectory carries no V samples")
    g = getattr(g, "g", g)
    V = tr.V
    if len(V) < 2:
        return MonotoneReport(True, 0.0, True, 0.0, 0)
    dV = np.diff(V)
    allowed = tol * (1.0 + np.abs(V[:-1]))
    increase = dV - allowed
    monotone = bool(np.all(increase <= 0))
    max_inc = float(np.max(dV)) if len(dV) else 0.0

    dts = np.diff(tr.times)
    g2 = np.sum(g.evaluate_many(tr.states) ** 2, axis=1)
    expected = -0.5 * (g2[:-1] + g2[1:])
    rate = dV / dts
    floor = 1e-8 * float(np.max(g2)) if len(g2) else 0.0
    mask = (g2[:-1] > floor) & (g2[1:] > floor)
    rel = np.abs(rate - expected) / np.maximum(np.abs(expected), np.finfo(float).tiny)
    limit = max(1e-2, 10.0 * float(np.max(dts)))
    bad = np.flatnonzero(mask & (rel > limit))
    max_rel = float(np.max(rel[mask])) if mask.any() else 0.0
    return MonotoneReport(
        monotone=monotone,
        max_increase=max_inc,
        pointwise_ok=bad.size == 0,
        max_relative_error=max_rel,
        checked_steps=int(mask.sum()),
        violations=[int(i) for i in np.flatnonzero(increase > 0)] + [int(i) for i in bad],
    )


@dataclass
class BasinSample:
    initial: np.ndarray
    outcome: str
    final_time: float
    final_norm: float


def ring_points(radius: float, count: int, dimension: int) -> np.ndarray:
    """Evenly spread points on the circle (2D) or sphere (3D) of ``radius``."""
    if dimension == 2:
        a = 2.0 * np.pi * np.arange(count) / count
        return radius * np.column_stack([np.cos(a), np.sin(a)])
    if dimension == 3:
        k = np.arange(count) + 0.5
        z = 1.0 - 2.0 * k / count
        r = np.sqrt(1.0 - z * z)
        phi = np.pi * (1.0 + 5.0**0.5) * k
        return radius * np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    raise InputError("basin sampling supports 2D and 3D systems")


def sample_basin(f: VectorField, ring_radii, samples_per_ring: int, t_max: float = DEFAULT_T_MAX,
                 dt: float = 1e-2, escape_radius: float = DEFAULT_ESCAPE_RADIUS) -> list[BasinSample]:
    """Integrate from evenly spaced starts on each ring and classify the outcome."""
    starts = np.vstack([ring_points(r, samples_per_ring, f.dimension) for r in ring_radii])
    conv = convergence_radius_for(starts)
    X, events, _, stop, times, _ = _integrate_batch(f, starts, t_max, dt, escape_radius, conv, False)
    out = []
    for i, x0 in enumerate(starts):
        ev = events[i]
        outcome = {"converged": CONVERGED, "escaped": ESCAPED}.get(ev, UNDECIDED)
        nrm = float(np.linalg.norm(X[i]))
        out.append(BasinSample(x0, outcome, float(times[int(stop[i])]), nrm))
    return out


def write_basin_csv(path, samples: list[BasinSample]):
    n = len(samples[0].initial) if samples else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x0_{k}" for k in range(1, n + 1)] + ["outcome", "final_time", "final_norm"])
        for s in samples:
            w.writerow([repr(float(v)) for v in s.initial] + [s.outcome, repr(s.final_time), repr(s.final_norm)])
