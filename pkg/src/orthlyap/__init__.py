"""Lyapunov functions from orthogonal curl-free / divergence-free decompositions."""

__version__ = "0.1.0"

from .calculus import GridSpec, VectorField  # noqa: E402
from .decomp import (  # noqa: E402
    Ansatz2D,
    AnsatzND,
    Decomposition,
    build_ansatz_2d,
    build_ansatz_nd,
    linear_decomposition,
    verify_decomposition,
)
from .errors import OrthlyapError  # noqa: E402
from .lyapunov import LyapunovCandidate, line_integral_candidate, quadratic_candidate  # noqa: E402
from .matlin import real_schur, reorder_schur, solve_sylvester_special  # noqa: E402
from .riccati import construct_G, enumerate_care_solutions, trace_identity_check  # noqa: E402
from .sim import check_monotone_V, integrate, sample_basin  # noqa: E402
from .stability import candidate_for, classify_equilibrium, estimate_da  # noqa: E402

__all__ = [
    "Ansatz2D",
    "AnsatzND",
    "Decomposition",
    "GridSpec",
    "LyapunovCandidate",
    "OrthlyapError",
    "VectorField",
    "build_ansatz_2d",
    "build_ansatz_nd",
    "candidate_for",
    "check_monotone_V",
    "classify_equilibrium",
    "construct_G",
    "enumerate_care_solutions",
    "estimate_da",
    "integrate",
    "line_integral_candidate",
    "linear_decomposition",
    "quadratic_candidate",
    "real_schur",
    "reorder_schur",
    "sample_basin",
    "solve_sylvester_special",
    "trace_identity_check",
    "verify_decomposition",
]
