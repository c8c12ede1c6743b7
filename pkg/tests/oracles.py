"""Independent reference values and hand-coded fields used across tests."""

import math

import numpy as np

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


def example1_V_closed(s):
    """Closed-form potential of Example 1 as a function of s = |x|^2."""
    return 0.5 * s * (1.0 + 0.5 * s - s * s / 3.0)


def example1_g(P):
    P = np.atleast_2d(P)
    s = np.sum(P**2, axis=1, keepdims=True)
    return -(1.0 + s - s**2) * P


def example1_h(P):
    P = np.atleast_2d(P)
    return np.column_stack([P[:, 1], -P[:, 0]])


EXAMPLE1_F = [
    "-x1*(1 + (x1^2+x2^2) - (x1^2+x2^2)^2) + x2",
    "-x2*(1 + (x1^2+x2^2) - (x1^2+x2^2)^2) - x1",
]
EXAMPLE1_ANSATZ = ("0.5*(x1^2 + x2^2)", "-1", "-(1 + 2*t - 4*t^2)")
EXAMPLE1_LEVEL = example1_V_closed(GOLDEN)
EXAMPLE1_RADIUS = math.sqrt(GOLDEN)

EXAMPLE2_F = np.array([[1.0, 1.0], [0.0, 0.0]])
EXAMPLE2_X = {
    1: np.array([[0.0, 0.0], [0.5, 0.5]]),
    2: np.zeros((2, 2)),
    3: np.array([[0.5, 0.5], [0.5, 0.5]]),
    4: np.array([[0.0, 0.5], [0.0, 0.5]]),
}
# Columns of P: a 2-chain at 0, then eigenvectors for -1 and 1 of T = [[-F, 2I], [0, F^T]].
EXAMPLE2_JORDAN = {
    "P": [[2, -2, 2, 0], [-2, 0, 0, 2], [0, 0, 0, 1], [0, -1, 0, 1]],
    "chains": [
        {"eigenvalue": 0, "columns": [0, 1]},
        {"eigenvalue": -1, "columns": [2]},
        {"eigenvalue": 1, "columns": [3]},
    ],
}


def random_hurwitz(rng, n, margin=0.1):
    A = rng.uniform(-1, 1, (n, n))
    shift = max(np.max(np.linalg.eigvals(A).real) + margin, 0.0)
    return A - shift * np.eye(n)
