import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nplectic.forms import random_vector_field
from nplectic.geometry import (Chart, Connection, GeometryError, Metric, SingularMetricError,
                               VectorField, christoffel, levi_civita, lie_bracket,
                               metric_compatibility)
from oracles import christoffel_diag_x0sq


def test_chart_defaults_and_wrap():
    c = Chart(2, periodic=(True, False), box=((-np.pi, np.pi), (0, 1)))
    w = c.wrap(np.array([[np.pi + 0.5, 0.3]]))
    assert np.isclose(w[0, 0], -np.pi + 0.5)
    assert c.contains(np.array([[10.0, 0.5], [0.0, 1.5]])).tolist() == [True, False]
    assert Chart(3).box == ((-1.0, 1.0),) * 3


@pytest.mark.parametrize("kw", [dict(box=((1, 0),)), dict(periodic=(True,), box=((0, 1),)),
                                dict(box=((0, 1), (0, 1)))])
def test_chart_rejects_bad_boxes(kw):
    with pytest.raises(GeometryError):
        Chart(1, **kw)


def test_chart_sampling_is_seeded_and_inside():
    c = Chart(3, box=((0, 1), (-2, 2), (5, 6)))
    a = c.sample(50, np.random.default_rng(1))
    b = c.sample(50, np.random.default_rng(1))
    assert np.array_equal(a, b) and c.contains(a).all()


def test_coordinate_bracket():
    X = VectorField.coordinate(0, 2)
    Y = VectorField.from_exprs(["0", "x0"], 2)
    pts = np.random.default_rng(0).uniform(-1, 1, (10, 2))
    assert np.allclose(lie_bracket(X, Y)(pts), [[0.0, 1.0]] * 10, atol=0)


def test_rotation_bracket():
    # [x0 d1 - x1 d0, d0] = -d1
    R = VectorField.from_exprs(["-x1", "x0"], 2)
    out = lie_bracket(R, VectorField.coordinate(0, 2))(np.array([[0.3, 0.7]]))
    assert np.allclose(out, [[0.0, -1.0]])


def test_bracket_dimension_mismatch():
    with pytest.raises(GeometryError):
        lie_bracket(VectorField.coordinate(0, 2), VectorField.coordinate(0, 3))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_jacobi_for_random_fields(seed):
    rng = np.random.default_rng(seed)
    X, Y, Z = (random_vector_field(3, rng) for _ in range(3))
    pts = rng.uniform(-1, 1, (20, 3))
    total = (lie_bracket(X, lie_bracket(Y, Z))(pts) + lie_bracket(Y, lie_bracket(Z, X))(pts)
             + lie_bracket(Z, lie_bracket(X, Y))(pts))
    assert np.max(np.abs(total)) <= 1e-10


def test_bracket_antisymmetry_and_leibniz():
    rng = np.random.default_rng(3)
    X, Y = random_vector_field(2, rng), random_vector_field(2, rng)
    f = VectorField.from_exprs(["x0*x1", "0"], 2).components[0]
    pts = rng.uniform(-1, 1, (20, 2))
    assert np.allclose(lie_bracket(X, Y)(pts), -lie_bracket(Y, X)(pts), atol=1e-13)
    # [X, f Y] = X(f) Y + f [X, Y]
    lhs = lie_bracket(X, Y.scaled(f))(pts)
    Xf = np.einsum("ni,ni->n", X(pts), f.jet(pts, 1).grad)
    rhs = Xf[:, None] * Y(pts) + f.jet(pts, 0).value[:, None] * lie_bracket(X, Y)(pts)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


def test_christoffel_matches_hand_computation():
    g = Metric.from_exprs([["1", "0"], ["0", "x0^2"]], 2)
    pts = np.array([[0.7, 0.2], [1.3, -0.4]])
    gam = christoffel(g)(pts, 0).value
    for n, x0 in enumerate(pts[:, 0]):
        expected = np.zeros((2, 2, 2))
        for idx, v in christoffel_diag_x0sq(x0).items():
            expected[idx] = v
        assert np.allclose(gam[n], expected, atol=1e-14)


def test_levi_civita_layout():
    g = Metric.from_exprs([["1", "0"], ["0", "x0^2"]], 2)
    A = levi_civita(g).jet(np.array([[2.0, 0.0]]), 0).value[0]
    # nabla_{d1} d1 = -x0 d0  ->  A[0, 1, 1]
    assert np.isclose(A[0, 1, 1], -2.0)
    assert np.isclose(A[1, 0, 1], 0.5) and np.isclose(A[1, 1, 0], 0.5)


def test_metric_compatibility_random_metric():
    rng = np.random.default_rng(5)
    g = Metric.from_exprs([["2 + x0^2", "x0*x1/4"], ["x0*x1/4", "1 + sin(x1)^2"]], 2)
    pts = rng.uniform(-1, 1, (100, 2))
    g.check(pts)
    assert metric_compatibility(g, pts) <= 1e-9


def test_singular_metric_is_refused():
    g = Metric.from_exprs([["x0", "0"], ["0", "1"]], 2)
    with pytest.raises(SingularMetricError):
        g.check(np.array([[-0.5, 0.0]]))
    with pytest.raises(SingularMetricError):
        christoffel(g)(np.array([[0.0, 0.0]]), 0)


def test_asymmetric_metric_is_refused():
    with pytest.raises(GeometryError):
        Metric.from_exprs([["1", "x0"], ["0", "1"]], 2)


def test_connection_shape_errors():
    with pytest.raises(GeometryError):
        Connection.from_exprs([[["0"]]], 2, 1)
    conn = Connection.from_exprs([[["0", "0"]]], 2, 1)
    assert conn.is_trivial
