import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from orthlyap import expr as ex
from orthlyap.calculus import (
    FINITE_DIFFERENCE,
    SYMBOLIC,
    GridSpec,
    VectorField,
    curl_at,
    curl_many,
    divergence_at,
    gradient_field,
    inner_at,
    inner_many,
    line_integral,
    potential_from_gradient,
    read_grid_csv,
    write_grid_csv,
)
from orthlyap.errors import CurlNotZero, DimensionMismatch, InputError
from oracles import EXAMPLE1_RADIUS, GOLDEN, example1_V_closed, example1_g


def example1_parts():
    s = "(x1^2 + x2^2)"
    g = VectorField.from_strings([f"-(1 + {s} - {s}^2)*x1", f"-(1 + {s} - {s}^2)*x2"])
    h = VectorField.from_strings(["x2", "-x1"])
    return g, h


def random_cubic_field(rng, n):
    comps = []
    for _ in range(n):
        terms = []
        for _ in range(4):
            c = rng.uniform(-1, 1)
            powers = "*".join(f"x{k}^{int(rng.integers(0, 3))}" for k in range(1, n + 1))
            terms.append(f"({c!r})*{powers}")
        comps.append(" + ".join(terms))
    return VectorField.from_strings(comps, n)


# -- curl ---------------------------------------------------------------------------

def test_curl_of_rotation():
    v = VectorField.from_strings(["-x2", "x1"])
    for p in ([0.3, -1.2], [5.0, 2.0]):
        np.testing.assert_array_equal(curl_at(v, p), [[0.0, 2.0], [-2.0, 0.0]])


def test_curl_of_linear_field_is_transpose_difference(rng):
    F = rng.normal(size=(4, 4))
    M = curl_at(VectorField.linear(F), rng.normal(size=4))
    np.testing.assert_allclose(M, F.T - F, atol=1e-15)


def test_example1_g_is_curl_free(rng):
    g, _ = example1_parts()
    P = rng.uniform(-1.5, 1.5, (100, 2))
    assert np.max(np.abs(curl_many(g, P, SYMBOLIC))) <= 1e-9


@pytest.mark.parametrize("n", [2, 3, 4])
def test_symbolic_and_fd_curl_agree(rng, n):
    v = random_cubic_field(rng, n)
    P = rng.uniform(-1, 1, (30, n))
    np.testing.assert_allclose(curl_many(v, P, SYMBOLIC), curl_many(v, P, FINITE_DIFFERENCE), atol=1e-5)


@pytest.mark.parametrize("backend, bound", [(SYMBOLIC, 0.0), (FINITE_DIFFERENCE, 1e-10)])
def test_curl_is_antisymmetric(rng, backend, bound):
    v = random_cubic_field(rng, 3)
    M = curl_many(v, rng.uniform(-1, 1, (20, 3)), backend)
    assert np.max(np.abs(M + np.transpose(M, (0, 2, 1)))) <= bound


@given(st.integers(0, 10_000))
def test_gradient_fields_are_curl_free(seed):
    rng = np.random.default_rng(seed)
    terms = [f"({rng.uniform(-1, 1)!r})*sin(x{rng.integers(1, 4)})*x{rng.integers(1, 4)}^{rng.integers(1, 4)}"
             for _ in range(3)]
    phi = ex.parse(" + ".join(terms) + " + exp(x1*x2*x3/4)", 3)
    v = gradient_field(phi, 3)
    M = curl_many(v, rng.uniform(-2, 2, (10, 3)), SYMBOLIC)
    assert np.max(np.abs(M)) <= 1e-12


# -- divergence ------------------------------------------------------------------------

def test_divergence_examples():
    assert divergence_at(VectorField.from_strings(["x2", "-x1"]), [0.7, -0.1]) == 0.0
    assert divergence_at(VectorField.from_strings(["x1", "x2"]), [0.7, -0.1]) == 2.0
    assert divergence_at(VectorField.linear([[1, 1], [0, 0]]), [3.0, 4.0]) == 1.0


def test_divergence_backends_agree(rng):
    v = random_cubic_field(rng, 3)
    for p in rng.uniform(-1, 1, (10, 3)):
        assert divergence_at(v, p, SYMBOLIC) == pytest.approx(divergence_at(v, p, FINITE_DIFFERENCE), abs=1e-6)


# -- inner product ---------------------------------------------------------------------

def test_inner_products():
    a = VectorField.from_strings(["1", "0"])
    b = VectorField.from_strings(["0", "1"])
    assert inner_at(a, b, [0.0, 0.0]) == 0.0
    assert inner_at(a, a, [0.0, 0.0]) == 1.0
    with pytest.raises(DimensionMismatch):
        inner_at(a, VectorField.from_strings(["1", "0", "0"]), [0.0, 0.0])


def test_example1_parts_are_orthogonal_on_grid():
    g, h = example1_parts()
    P = GridSpec.box(1.5, 2, 100).points()
    assert np.max(np.abs(inner_many(g, h, P))) <= 1e-9


# -- potentials ------------------------------------------------------------------------

def test_potential_of_negative_identity():
    g = VectorField.from_strings(["-x1", "-x2"])
    assert potential_from_gradient(g, [1.0, 1.0]) == pytest.approx(1.0, abs=1e-14)
    assert potential_from_gradient(g, [0.0, 0.0]) == 0.0


def test_example1_potential_at_critical_radius():
    g, _ = example1_parts()
    assert potential_from_gradient(g, [1.27202, 0.0]) == pytest.approx(0.757520, abs=1e-5)
    exact = potential_from_gradient(g, [EXAMPLE1_RADIUS, 0.0])
    assert exact == pytest.approx(example1_V_closed(GOLDEN), abs=1e-12)


def test_curled_field_has_no_potential():
    with pytest.raises(CurlNotZero):
        potential_from_gradient(VectorField.from_strings(["x2", "0"]), [0.5, 0.5])


def test_potential_gradient_reproduces_minus_g(rng):
    g, _ = example1_parts()
    for x in rng.uniform(-1.2, 1.2, (20, 2)):
        grad = np.empty(2)
        for i in range(2):
            step = 1e-6 * max(1.0, abs(x[i]))
            e = np.zeros(2)
            e[i] = step
            grad[i] = (potential_from_gradient(g, x + e) - potential_from_gradient(g, x - e)) / (2 * step)
        np.testing.assert_allclose(grad, -example1_g(x)[0], atol=1e-5)


def test_straight_and_polyline_paths_agree(rng):
    phi = ex.parse("sin(x1)*x2 + x3^3*cos(x2) + x1*x3", 3)
    g = gradient_field(phi, 3).scaled(-1.0)
    for x in rng.uniform(-1, 1, (10, 3)):
        straight = potential_from_gradient(g, x)
        legs = [np.zeros(3), np.array([x[0], 0, 0]), np.array([x[0], x[1], 0]), x]
        assert line_integral(g, legs) * -1.0 == pytest.approx(straight, abs=1e-7)
        assert straight == pytest.approx(ex.evaluate(phi, x) - ex.evaluate(phi, [0, 0, 0]), abs=1e-12)


def test_quadrature_order_controls_accuracy():
    # the integrand along the segment is a degree-5 polynomial in t: 3 nodes are exact
    g, _ = example1_parts()
    x = [1.1, -0.4]
    exact = example1_V_closed(1.1**2 + 0.4**2)
    errors = [abs(potential_from_gradient(g, x, q) - exact) for q in (1, 2, 3)]
    assert errors[0] > errors[1] > 1e-6
    assert errors[2] < 1e-14


# -- grids -----------------------------------------------------------------------------

def test_grid_validation(monkeypatch):
    with pytest.raises(InputError):
        GridSpec((1.0,), (0.0,), (10,))
    with pytest.raises(InputError):
        GridSpec((0.0,), (1.0,), (1,))
    monkeypatch.setenv("ORTHLYAP_MAX_GRID", "100")
    with pytest.raises(InputError):
        GridSpec.box(1.0, 2, 11)
    assert GridSpec.box(1.0, 2, 10).points().shape == (100, 2)


def test_grid_points_order_and_spacing():
    grid = GridSpec((0.0, -1.0), (1.0, 1.0), (3, 5))
    P = grid.points()
    assert P.shape == (15, 2)
    np.testing.assert_array_equal(P[:5, 0], 0.0)
    np.testing.assert_allclose(P[:5, 1], [-1, -0.5, 0, 0.5, 1])
    np.testing.assert_allclose(grid.spacing(), [0.5, 0.5])


def test_grid_csv_round_trip(tmp_path):
    grid = GridSpec.box(1.0, 2, 4)
    P = grid.points()
    vals = np.sin(P[:, 0]) * np.pi
    write_grid_csv(tmp_path / "g.csv", P, {"value": vals})
    header, data = read_grid_csv(tmp_path / "g.csv")
    assert header == ["x1", "x2", "value"]
    np.testing.assert_array_equal(data[:, :2], P)
    np.testing.assert_array_equal(data[:, 2], vals)
