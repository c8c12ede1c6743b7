import csv
import warnings

import numpy as np
import pytest

from orthlyap.calculus import GridSpec, VectorField
from orthlyap.decomp import Ansatz2D, Decomposition, build_ansatz_2d, linear_decomposition
from orthlyap.errors import CertificateFailure, NoZeroLocus, NotAnEquilibrium, UncertifiedDecomposition
from orthlyap.lyapunov import line_integral_candidate
from orthlyap.riccati import construct_G
from orthlyap.stability import (
    ASYMPTOTICALLY_STABLE,
    INCONCLUSIVE,
    LYAPUNOV_STABLE,
    UNSTABLE,
    candidate_for,
    classify_equilibrium,
    estimate_da,
    find_zeros,
    refine_zeros,
)
from oracles import EXAMPLE1_ANSATZ, EXAMPLE1_LEVEL, EXAMPLE1_RADIUS, EXAMPLE2_F, EXAMPLE2_X, random_hurwitz

BOX = GridSpec.box(1.5, 2, 100)


@pytest.fixture(scope="module")
def example1():
    return build_ansatz_2d(Ansatz2D.from_strings(*EXAMPLE1_ANSATZ), BOX)


@pytest.fixture(scope="module")
def example1_da(example1):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return estimate_da(example1, candidate_for(example1), BOX, radially_unbounded=True)


def linear(F, G=None):
    F = np.asarray(F, dtype=float)
    return linear_decomposition(F, construct_G(F).G if G is None else G)


# -- classification -------------------------------------------------------------------

def test_example1_is_asymptotically_stable(example1):
    region = GridSpec.box(1.3, 2, 100)
    v = classify_equilibrium(example1, candidate_for(example1), region)
    assert v.verdict == ASYMPTOTICALLY_STABLE
    assert v.evidence["rho_g"] > 1.0


def test_negative_identity_is_asymptotically_stable():
    d = linear(-np.eye(2))
    np.testing.assert_allclose(d.g.matrix, -np.eye(2), atol=1e-14)
    assert classify_equilibrium(d, candidate_for(d), GridSpec.box(1.0, 2, 51)).verdict == ASYMPTOTICALLY_STABLE


def test_example2_is_inconclusive():
    d = linear(EXAMPLE2_F, EXAMPLE2_X[3])
    v = classify_equilibrium(d, candidate_for(d), GridSpec.box(1.0, 2, 51))
    assert v.verdict == INCONCLUSIVE
    # g = X3 x vanishes on x1 + x2 = 0, right next to the origin
    assert v.evidence["rho_g"] <= 2 * v.evidence["exclusion_radius"]


def test_positive_identity_is_unstable():
    d = linear(np.eye(2))
    np.testing.assert_allclose(d.g.matrix, np.eye(2), atol=1e-14)
    v = classify_equilibrium(d, candidate_for(d), GridSpec.box(1.0, 2, 51))
    assert v.verdict == UNSTABLE
    assert len(v.evidence["shells"]) >= 2


def test_ring_of_critical_points_gives_lyapunov_stability():
    # g = -(1 - Theta/t0) x vanishes on |x| = 0.05 where V = t0/2 > 0;
    # the ring sits between grid nodes so only the Newton refinement sees it
    t0 = 0.05**2 / 2
    grid = GridSpec.box(1.0, 2, 101)
    d = build_ansatz_2d(Ansatz2D.from_strings("0.5*(x1^2 + x2^2)", "0", f"-(1 - t/{t0!r})"), grid)
    v = classify_equilibrium(d, candidate_for(d), grid)
    assert v.verdict == LYAPUNOV_STABLE
    assert v.evidence["rho_g"] == pytest.approx(0.05, abs=1e-9)


def test_rotation_has_zero_G_and_is_inconclusive():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        d = linear([[0.0, 1.0], [-1.0, 0.0]])
    assert classify_equilibrium(d, candidate_for(d), GridSpec.box(1.0, 2, 21)).verdict == INCONCLUSIVE


def test_verdict_is_stable_under_grid_refinement(example1):
    for res in (40, 80, 120):
        v = classify_equilibrium(example1, candidate_for(example1), GridSpec.box(1.3, 2, res))
        assert v.verdict == ASYMPTOTICALLY_STABLE


def test_shifted_field_is_not_an_equilibrium():
    f = VectorField.from_strings(["-x1 + 1", "-x2"])
    g = VectorField.from_strings(["-x1 + 1", "-x2"])
    h = VectorField.from_strings(["0", "0"])
    d = Decomposition(g, h, f)
    with pytest.raises(NotAnEquilibrium):
        classify_equilibrium(d, candidate_for(d), GridSpec.box(1.0, 2, 11))


def test_uncertified_decomposition_is_refused():
    g = VectorField.from_strings(["-x1", "-x2"])
    h = VectorField.from_strings(["x2 + 0.2*x1", "-x1 + 0.2*x2"])
    d = Decomposition(g, h, g + h)
    with pytest.raises(UncertifiedDecomposition):
        classify_equilibrium(d, candidate_for(d), GridSpec.box(1.0, 2, 11))


# -- Newton refinement ----------------------------------------------------------------

def test_refine_zeros_on_example1_circle(example1, rng):
    seeds = rng.normal(size=(50, 2))
    seeds *= (EXAMPLE1_RADIUS * rng.uniform(0.95, 1.05, 50) / np.linalg.norm(seeds, axis=1))[:, None]
    Z, ok = refine_zeros(example1.g, seeds)
    assert ok.all()
    np.testing.assert_allclose(np.linalg.norm(Z, axis=1), EXAMPLE1_RADIUS, atol=1e-10)


def test_find_zeros_excludes_the_origin_ball(example1):
    Z = find_zeros(example1.g, BOX, 0.1)
    assert len(Z) > 0
    assert np.all(np.linalg.norm(Z, axis=1) > 0.1)
    assert np.max(np.linalg.norm(example1.g.evaluate_many(Z), axis=1)) <= 1e-8


# -- domain of attraction -------------------------------------------------------------

def test_example1_level_and_boundary(example1_da):
    assert example1_da.level == pytest.approx(0.757520, abs=1e-4)
    assert example1_da.level == pytest.approx(EXAMPLE1_LEVEL, abs=1e-9)
    r = example1_da.boundary_radius()
    assert r["min"] == pytest.approx(1.272020, abs=1e-4)
    assert r["max"] == pytest.approx(1.272020, abs=1e-4)
    assert example1_da.certified


def test_example1_refined_zeros(example1, example1_da):
    Z = example1_da.zeros
    assert np.max(np.linalg.norm(example1.g.evaluate_many(Z), axis=1)) <= 1e-8
    assert np.min(candidate_for(example1).V_many(Z)) >= example1_da.level - 1e-8


def test_example1_needs_radial_attestation(example1):
    # V has a ridge on the circle and falls off outside it, so the ray test warns
    with pytest.warns(RuntimeWarning, match="radial"):
        est = estimate_da(example1, candidate_for(example1), BOX)
    assert not est.certified
    assert not est.radial_heuristic_ok
    assert all(c["passed"] for c in est.checks.values())


def test_level_is_stable_under_grid_refinement(example1, example1_da):
    fine = GridSpec.box(1.5, 2, 200)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        est = estimate_da(example1, candidate_for(example1), fine, radially_unbounded=True)
    assert abs(est.level - example1_da.level) <= 1e-3


def test_hurwitz_system_has_no_zero_locus():
    F = random_hurwitz(np.random.default_rng(4), 2)
    d = linear(F)
    with pytest.raises(NoZeroLocus, match="enlarge"):
        estimate_da(d, candidate_for(d), GridSpec.box(2.0, 2, 41))


def test_small_search_box_has_no_zero_locus(example1):
    with pytest.raises(NoZeroLocus, match="enlarge"):
        estimate_da(example1, candidate_for(example1), GridSpec.box(0.5, 2, 50))


def test_sublevel_set_reaching_the_box_edge_fails(example1):
    # x2 <= 1.2 cuts through the circle, so the component touches the top edge
    box = GridSpec((-1.5, -1.5), (1.5, 1.2), (90, 90))
    with pytest.raises(CertificateFailure) as info:
        estimate_da(example1, candidate_for(example1), box, radially_unbounded=True)
    assert info.value.condition == "closure-inside-region"


def test_boundary_csv_round_trip(example1, example1_da, tmp_path):
    path = tmp_path / "boundary.csv"
    example1_da.write_boundary_csv(path, candidate_for(example1))
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x1", "x2", "V"]
    data = np.array(rows[1:], dtype=float)
    assert len(data) == len(example1_da.boundary)
    np.testing.assert_allclose(np.linalg.norm(data[:, :2], axis=1), EXAMPLE1_RADIUS, atol=1e-9)
    np.testing.assert_allclose(data[:, 2], EXAMPLE1_LEVEL, atol=1e-9)
    angles = np.arctan2(data[:, 1], data[:, 0])
    assert np.all(np.diff(angles) >= 0)


def test_report_dict_is_json_ready(example1_da):
    import json

    obj = json.loads(json.dumps(example1_da.to_dict()))
    assert obj["certified"] is True
    assert obj["level"] == pytest.approx(EXAMPLE1_LEVEL, abs=1e-9)


# -- candidates -----------------------------------------------------------------------

def test_line_integral_candidate_gradient_is_minus_g(example1, rng):
    V = line_integral_candidate(example1.g)
    for x in rng.uniform(-1.2, 1.2, (10, 2)):
        fd = np.empty(2)
        for i in range(2):
            e = np.zeros(2)
            e[i] = 1e-6
            fd[i] = (V.V(x + e) - V.V(x - e)) / 2e-6
        np.testing.assert_allclose(fd, V.grad(x), atol=1e-5)


def test_candidates_agree(example1, rng):
    P = rng.uniform(-1.4, 1.4, (50, 2))
    np.testing.assert_allclose(candidate_for(example1).V_many(P), line_integral_candidate(example1.g).V_many(P),
                               atol=1e-12)
