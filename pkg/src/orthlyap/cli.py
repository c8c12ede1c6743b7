"""Command-line front end.

Exit codes: 0 ok, 2 input error, 3 numerical failure, 4 missing capability.
"""

from __future__ import annotations

import argparse
import contextlib
import datetime as _dt
import json
import math
import sys
import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from . import expr as ex
from .calculus import GridSpec, VectorField, max_grid_points, write_grid_csv
from .decomp import (
    Ansatz2D,
    AnsatzND,
    Decomposition,
    build_ansatz_2d,
    build_ansatz_nd,
    linear_decomposition,
)
from .errors import InputError, JordanRequired, NoZeroLocus, OrthlyapError, UncertifiedDecomposition, Unsupported
from .lyapunov import LyapunovCandidate
from .matlin import as_square, matrix_from_json, matrix_to_json
from .riccati import JordanData, construct_G, enumerate_care_solutions, trace_identity_check
from .sim import check_monotone_V, integrate, sample_basin, write_basin_csv
from .stability import DEFAULT_TOL, candidate_for, classify_equilibrium, estimate_da

SCHEMA_VERSION = 1
KINDS = ("linear", "expressions", "ansatz2d", "ansatzNd")
DEFAULT_HALF_WIDTH = 2.0
DEFAULT_RES = 50
BUILTIN_PREFIX = "builtin:"


# -- system files -------------------------------------------------------------

@dataclass
class SystemDef:
    name: str
    n: int
    kind: str
    raw: dict
    region: GridSpec
    F: np.ndarray | None = None
    f: VectorField | None = None


def _read_json(path: str):
    if path.startswith(BUILTIN_PREFIX):
        name = path[len(BUILTIN_PREFIX):]
        res = resources.files("orthlyap") / "systems" / f"{name}.json"
        if not res.is_file():
            raise InputError(f"no bundled system named {name!r}")
        text = res.read_text()
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise InputError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc.msg} at line {exc.lineno}") from None


def default_res(n: int) -> int:
    """50 points per axis, reduced in high dimension to respect the grid cap."""
    return max(2, min(DEFAULT_RES, int(math.floor(max_grid_points() ** (1.0 / n) + 1e-9))))


def _region(obj, n: int, grid_res: int | None) -> GridSpec:
    if obj is None:
        res = grid_res or default_res(n)
        return GridSpec((-DEFAULT_HALF_WIDTH,) * n, (DEFAULT_HALF_WIDTH,) * n, (res,) * n)
    try:
        lo, hi = obj["lo"], obj["hi"]
        res = obj.get("res", [DEFAULT_RES] * n)
    except (KeyError, TypeError):
        raise InputError("region needs 'lo' and 'hi'") from None
    if isinstance(res, int):
        res = [res] * n
    if grid_res is not None:
        res = [grid_res] * n
    if not (len(lo) == len(hi) == len(res) == n):
        raise InputError(f"region must have {n} entries per field")
    return GridSpec(tuple(lo), tuple(hi), tuple(res))


def load_system(path: str, grid_res: int | None = None) -> SystemDef:
    obj = _read_json(path)
    if not isinstance(obj, dict):
        raise InputError("system file must hold a JSON object")
    kind = obj.get("kind")
    if kind not in KINDS:
        raise InputError(f"kind must be one of {', '.join(KINDS)}")
    try:
        n = int(obj["n"])
    except (KeyError, TypeError, ValueError):
        raise InputError("system file needs an integer 'n'") from None
    if n < 1:
        raise InputError("n must be positive")
    present = [k for k in ("F", "f", "ansatz") if k in obj]
    expected = {"linear": "F", "expressions": "f", "ansatz2d": "ansatz", "ansatzNd": "ansatz"}[kind]
    if present != [expected]:
        raise InputError(f"kind {kind!r} needs exactly the field {expected!r} (found {present or 'none'})")
    sysdef = SystemDef(str(obj.get("name", Path(path).stem)), n, kind, obj, _region(obj.get("region"), n, grid_res))
    if kind == "linear":
        sysdef.F = as_square(matrix_from_json(obj["F"]), "matrix")
        if sysdef.F.shape[0] != n:
            raise InputError(f"F is {sysdef.F.shape[0]}x{sysdef.F.shape[0]} but n = {n}")
        sysdef.f = VectorField.linear(sysdef.F)
    elif kind == "expressions":
        texts = obj["f"]
        if not isinstance(texts, list) or len(texts) != n:
            raise InputError(f"'f' must list {n} expressions")
        sysdef.f = VectorField.from_strings(texts, n)
        F = _constant_jacobian(sysdef.f)
        if F is not None:
            sysdef.F = F
    return sysdef


def _constant_jacobian(f: VectorField) -> np.ndarray | None:
    """The matrix of ``f`` when every component is linear in ``x``."""
    n = f.dimension
    rows = f.jacobian_exprs
    if any(ex.variables(e) for row in rows for e in row):
        return None
    F = np.array([[ex.evaluate(e, [0.0] * n) for e in row] for row in rows])
    if np.linalg.norm(f(np.zeros(n))) != 0.0:
        return None
    return F


def _exprs(obj, key: str, n: int) -> VectorField:
    texts = obj.get(key)
    if not isinstance(texts, list) or len(texts) != n:
        raise InputError(f"'{key}' must list {n} expressions")
    return VectorField.from_strings(texts, n)


def decompose(sysdef: SystemDef) -> tuple[Decomposition, dict]:
    """Decomposition for a system file plus a report fragment."""
    extra: dict = {}
    if sysdef.kind == "ansatz2d":
        a = sysdef.raw["ansatz"]
        if sysdef.n != 2:
            raise InputError("ansatz2d systems must have n = 2")
        try:
            spec = Ansatz2D.from_strings(a["theta"], a["alpha"], a["beta"])
        except (KeyError, TypeError):
            raise InputError("ansatz2d needs string fields theta, alpha and beta") from None
        d = build_ansatz_2d(spec, sysdef.region)
    elif sysdef.kind == "ansatzNd":
        a = dict(sysdef.raw["ansatz"])
        a.setdefault("n", sysdef.n)
        if int(a["n"]) != sysdef.n:
            raise InputError("ansatz n does not match the system n")
        d = build_ansatz_nd(AnsatzND.from_dict(a), sysdef.region)
    elif "g" in sysdef.raw or "h" in sysdef.raw:
        g = _exprs(sysdef.raw, "g", sysdef.n)
        h = _exprs(sysdef.raw, "h", sysdef.n)
        d = Decomposition(g, h, sysdef.f, source="user")
        d.certify(sysdef.region)
    elif sysdef.F is not None:
        sol = construct_G(sysdef.F)
        extra["sare"] = sol.to_dict()
        d = linear_decomposition(sysdef.F, sol.G)
    else:
        raise Unsupported("no constructor for a general nonlinear f; supply 'g' and 'h' or use an ansatz kind")
    return d, extra


# -- reports --------------------------------------------------------------------

def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _clean(o):
    """Replace non-finite floats so the output is strict JSON."""
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, float) and not math.isfinite(o):
        return None if math.isnan(o) else ("inf" if o > 0 else "-inf")
    return o


def write_json(path: Path, obj):
    text = json.dumps(_clean(json.loads(json.dumps(obj, default=_jsonable))), indent=2, sort_keys=True)
    path.write_text(text + "\n")


def _report(args, command: str, inputs: dict) -> dict:
    rep = {
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": "orthlyap", "version": __version__},
        "command": command,
        "inputs": inputs,
        "seed": args.seed,
        "settings": {"tol": args.tol, "grid_res": args.grid_res},
    }
    if not args.no_timestamp:
        rep["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    return rep


def _tol(args) -> float:
    return DEFAULT_TOL if args.tol is None else args.tol


def _out_dir(args) -> Path:
    p = Path(args.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


@contextlib.contextmanager
def stage(name: str):
    try:
        yield
    except OrthlyapError as exc:
        if getattr(exc, "stage", None) is None:
            exc.stage = name
        raise


def _field_csv(path: Path, d: Decomposition, V: LyapunovCandidate, grid: GridSpec):
    P = grid.points()
    n = d.dimension
    cols = {}
    for label, vf in (("f", d.f), ("g", d.g), ("h", d.h)):
        vals = vf.evaluate_many(P)
        for k in range(n):
            cols[f"{label}{k + 1}"] = vals[:, k]
    cols["V"] = V.V_many(P)
    write_grid_csv(path, P, cols)


# -- commands ------------------------------------------------------------------

def cmd_analyze_linear(args) -> int:
    out = _out_dir(args)
    with stage("input"):
        if args.system:
            sysdef = load_system(args.system, args.grid_res)
            if sysdef.F is None:
                raise InputError("analyze-linear needs a linear system")
            F, region = sysdef.F, sysdef.region
            inputs = {"system": sysdef.raw}
        else:
            F = as_square(matrix_from_json(_load_matrix_obj(args.matrix)), "matrix")
            n = F.shape[0]
            region = _region(None, n, args.grid_res)
            inputs = {"matrix": matrix_to_json(F)}
    with stage("construct-G"):
        sol = construct_G(F)
    with stage("decompose"):
        d = linear_decomposition(F, sol.G)
    V = candidate_for(d)
    with stage("classify"):
        verdict = classify_equilibrium(d, V, region, _tol(args))
    rep = _report(args, "analyze-linear", inputs)
    rep["sare"] = sol.to_dict()
    rep["decomposition"] = d.certificate.to_dict()
    rep["lyapunov"] = {"kind": V.kind, "classification": V.classification, "eigenvalues": V.eigenvalues}
    rep["stability"] = verdict.to_dict()
    write_json(out / "G.json", matrix_to_json(sol.G))
    if F.shape[0] in (2, 3):
        _field_csv(out / "field.csv", d, V, region)
    write_json(out / "report.json", rep)
    print(f"G = {np.array2string(sol.G, precision=6)}")
    print(f"verdict: {verdict.verdict}")
    return 0


def _load_matrix_obj(path: str):
    obj = _read_json(path)
    if isinstance(obj, dict) and "F" in obj:
        obj = obj["F"]
    return obj


def cmd_enumerate(args) -> int:
    out = _out_dir(args)
    with stage("input"):
        F = as_square(matrix_from_json(_load_matrix_obj(args.matrix)), "matrix")
        jordan = JordanData.from_dict(_read_json(args.jordan)) if args.jordan else None
    with stage("enumerate"):
        try:
            sols = enumerate_care_solutions(F, jordan, max_dim=args.max_dim)
        except JordanRequired as exc:
            exc.args = (f"{exc.args[0]} (pass them with --jordan FILE)",)
            raise
    rows = []
    for s in sols:
        item = s.to_dict()
        item["trace_identity"] = trace_identity_check(F, s).to_dict()
        rows.append(item)
    rep = _report(args, "enumerate", {"matrix": matrix_to_json(F), "jordan": jordan.to_dict() if jordan else None})
    rep["solutions"] = rows
    rep["count"] = len(rows)
    write_json(out / "report.json", rep)
    for k, s in enumerate(sols, 1):
        print(f"X{k} (columns {list(s.columns)}): {s.G.tolist()}  residual {s.residual:.2e}")
    return 0


def _analyze(args, sysdef: SystemDef):
    with stage("decompose"):
        d, extra = decompose(sysdef)
    with stage("certify"):
        if not d.certified:
            failing = [k for k, ok in d.certificate.passed.items() if not ok]
            raise UncertifiedDecomposition(f"decomposition fails certification on: {', '.join(failing)}")
    V = candidate_for(d)
    with stage("classify"):
        verdict = classify_equilibrium(d, V, sysdef.region, _tol(args))
    return d, V, verdict, extra


def cmd_analyze_nonlinear(args) -> int:
    out = _out_dir(args)
    with stage("input"):
        sysdef = load_system(args.system, args.grid_res)
    d, V, verdict, extra = _analyze(args, sysdef)
    rep = _report(args, "analyze-nonlinear", {"system": sysdef.raw})
    rep.update(extra)
    rep["decomposition"] = {"source": d.source, "g": [str(c) for c in d.g.to_exprs()] if d.g.is_symbolic else None,
                            "h": [str(c) for c in d.h.to_exprs()] if d.h.is_symbolic else None,
                            "certificate": d.certificate.to_dict()}
    rep["lyapunov"] = {"kind": V.kind}
    rep["stability"] = verdict.to_dict()
    if sysdef.n in (2, 3):
        _field_csv(out / "field.csv", d, V, sysdef.region)
    write_json(out / "report.json", rep)
    print(f"certified: {d.certified}")
    print(f"verdict: {verdict.verdict}")
    return 0


def cmd_estimate_da(args) -> int:
    out = _out_dir(args)
    with stage("input"):
        sysdef = load_system(args.system, args.grid_res)
    d, V, verdict, extra = _analyze(args, sysdef)
    rep = _report(args, "estimate-da", {"system": sysdef.raw, "attest_radially_unbounded": args.attest_radially_unbounded})
    rep.update(extra)
    rep["decomposition"] = d.certificate.to_dict()
    rep["stability"] = verdict.to_dict()
    with stage("estimate-da"):
        try:
            est = estimate_da(d, V, sysdef.region, _tol(args), radially_unbounded=args.attest_radially_unbounded)
        except NoZeroLocus as exc:
            rep["domain_of_attraction"] = {"status": "NoZeroLocus", "message": str(exc)}
            print(f"warning: {exc}", file=sys.stderr)
            est = None
        except OrthlyapError as exc:
            rep["domain_of_attraction"] = {"status": "CertificateFailure", "message": str(exc),
                                           "condition": getattr(exc, "condition", None),
                                           "witness": getattr(exc, "witness", None)}
            write_json(out / "report.json", rep)
            raise
    if est is not None:
        rep["domain_of_attraction"] = {"status": "ok", **est.to_dict()}
        est.write_boundary_csv(out / "boundary.csv", V)
        print(f"level c = {est.level:.6f}")
        print(f"boundary radius = {est.boundary_radius()['mean']:.6f}")
        print(f"certified: {est.certified}")
    write_json(out / "report.json", rep)
    return 0


def _parse_point(text: str, n: int) -> np.ndarray:
    try:
        x = np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise InputError(f"cannot parse point {text!r}") from None
    if len(x) != n:
        raise InputError(f"point {text!r} must have {n} coordinates")
    return x


def cmd_simulate(args) -> int:
    out = _out_dir(args)
    with stage("input"):
        sysdef = load_system(args.system, args.grid_res)
        x0 = _parse_point(args.x0, sysdef.n)
    V = None
    d = None
    with stage("decompose"):
        try:
            d, _ = decompose(sysdef)
            V = candidate_for(d)
        except Unsupported:
            pass
    f = sysdef.f if sysdef.f is not None else d.f
    with stage("simulate"):
        tr = integrate(f, x0, args.tmax, args.dt, V)
    tr.write_csv(out / "trajectory.csv")
    rep = _report(args, "simulate", {"system": sysdef.raw, "x0": x0, "t_max": args.tmax, "dt": args.dt})
    rep["trajectory"] = {"event": tr.event, "outcome": tr.outcome, "final_time": tr.final_time,
                         "final_state": tr.final_state, "final_norm": float(np.linalg.norm(tr.final_state)),
                         "steps": len(tr.times) - 1, "message": tr.message}
    if V is not None and d is not None:
        rep["monotone_V"] = check_monotone_V(tr, d.g).to_dict()
    if args.rings:
        radii = [float(r) for r in args.rings.split(",")]
        with stage("basin"):
            samples = sample_basin(f, radii, args.samples, args.tmax, args.dt)
        write_basin_csv(out / "basin.csv", samples)
        rep["basin"] = {str(r): {o: sum(1 for s in samples[i * args.samples:(i + 1) * args.samples] if s.outcome == o)
                                 for o in ("Converged", "Escaped", "Undecided")}
                        for i, r in enumerate(radii)}
    write_json(out / "report.json", rep)
    print(f"outcome: {tr.outcome} at t = {tr.final_time:.6g}")
    return 0


def cmd_verify(args) -> int:
    out = _out_dir(args)
    with stage("input"):
        sysdef = load_system(args.system, args.grid_res)
    with stage("verify"):
        d, extra = decompose(sysdef)
        if args.tol is not None and d.certificate is not None:
            d.certify(sysdef.region if sysdef.kind != "linear" else d.certificate.grid, args.tol)
    rep = _report(args, "verify", {"system": sysdef.raw})
    rep.update(extra)
    rep["certificate"] = d.certificate.to_dict()
    write_json(out / "report.json", rep)
    for k, v in d.certificate.residuals.items():
        print(f"{k:24s} {v:.3e}")
    print(f"certified: {d.certified}")
    return 0 if d.certified else 3


# -- argument parsing ---------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=None,
                        help="tolerance for certification and classification (default: per stage)")
    common.add_argument("--grid-res", type=int, default=None, help="grid points per axis (overrides the system file)")
    common.add_argument("--seed", type=int, default=0, help="recorded in the report; all algorithms are deterministic")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--no-timestamp", action="store_true", help="omit the timestamp from report.json")

    p = argparse.ArgumentParser(prog="orthlyap", description="Lyapunov functions from orthogonal decompositions.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("analyze-linear", parents=[common], help="solve the Riccati equation and classify x' = Fx")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--system")
    g.add_argument("--matrix")
    s.set_defaults(func=cmd_analyze_linear)

    s = sub.add_parser("enumerate", parents=[common], help="list all real Riccati solutions")
    s.add_argument("--matrix", required=True)
    s.add_argument("--jordan")
    s.add_argument("--max-dim", type=int, default=4)
    s.set_defaults(func=cmd_enumerate)

    s = sub.add_parser("analyze-nonlinear", parents=[common], help="decompose, certify and classify")
    s.add_argument("--system", required=True)
    s.set_defaults(func=cmd_analyze_nonlinear)

    s = sub.add_parser("estimate-da", parents=[common], help="certified domain of attraction")
    s.add_argument("--system", required=True)
    s.add_argument("--attest-radially-unbounded", action="store_true",
                   help="assert that V is radially unbounded (cannot be checked by sampling)")
    s.set_defaults(func=cmd_estimate_da)

    s = sub.add_parser("simulate", parents=[common], help="integrate trajectories with RK4")
    s.add_argument("--system", required=True)
    s.add_argument("--x0", required=True, help="comma-separated initial state")
    s.add_argument("--tmax", type=float, default=100.0)
    s.add_argument("--dt", type=float, default=1e-2)
    s.add_argument("--rings", help="comma-separated radii for basin sampling")
    s.add_argument("--samples", type=int, default=64)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("verify", parents=[common], help="re-check a decomposition on the region grid")
    s.add_argument("--system", required=True)
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    warnings.formatwarning = lambda message, *a, **k: f"warning: {message}\n"
    if args.grid_res is not None and args.grid_res < 2:
        print("error [input]: --grid-res must be at least 2", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except OrthlyapError as exc:
        where = getattr(exc, "stage", None)
        prefix = f"error [{where}]" if where else "error"
        print(f"{prefix}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
