import numpy as np
import pytest

from nplectic.algebroid import Algebroid, Section
from nplectic.catalog import builtin
from nplectic.forms import Bundle, EForm, MixedForm, exterior_derivative, random_form
from nplectic.geometry import Metric
from nplectic.plectic import (Degenerate, NotPseudoHamiltonian, PlecticError, PlecticStructure,
                              MomentumSection, antihom_residual, build_theta, gl_residual,
                              hamlemma_residual, hms_defect, jacobi_residual, nondegeneracy_rank,
                              pham_bracket, quaternionic_bundle, solve_pham)
from nplectic.suites import _translation_momentum, perturbed_momentum

RNG = np.random.default_rng(31)


def planar():
    omega = EForm.from_coeffs({(0, 1): "1"}, 2, 2)
    return PlecticStructure(omega, Bundle(2, 1))


def scalar(expr, dim=2):
    return EForm.from_coeffs({(): expr}, dim, 0)


def test_nondegeneracy_rank_examples():
    assert nondegeneracy_rank(planar(), [0.3, 0.1]) == 2
    e4 = builtin("E4_torus4")
    assert np.all(nondegeneracy_rank(e4.plectic, e4.chart.sample(30, RNG)) == 4)
    zero = PlecticStructure(EForm.zero(2, 2), Bundle(2, 1))
    assert nondegeneracy_rank(zero, [0.0, 0.0]) == 0


def test_solve_pham_planar():
    sol = solve_pham(planar(), scalar("x0"), [0.2, -0.4])
    assert np.allclose(sol.field, [[0.0, -1.0]], atol=1e-14) and sol.residual[0] <= 1e-14
    zero = solve_pham(planar(), scalar("0"), [0.2, -0.4])
    assert not np.any(zero.field)


def test_solve_pham_torus():
    e4 = builtin("E4_torus4")
    pts = e4.chart.sample(20, RNG)
    mu_alpha = EForm.from_coeffs({(): ["x1", "0", "0"]}, 4, 0, 3)
    sol = solve_pham(e4.plectic, mu_alpha, pts)
    assert np.allclose(sol.field, np.tile([1.0, 0, 0, 0], (20, 1)), atol=1e-13)


def test_solve_pham_errors():
    e4 = builtin("E4_torus4")
    with pytest.raises(NotPseudoHamiltonian):
        solve_pham(e4.plectic, EForm.from_coeffs({(): ["x0", "x0", "0"]}, 4, 0, 3), [0.1, 0.2, 0.3, 0.4])
    degenerate = PlecticStructure(EForm.from_coeffs({(0, 1): "x0"}, 2, 2), Bundle(2, 1))
    with pytest.raises(Degenerate):
        solve_pham(degenerate, scalar("x1"), [0.0, 0.5])
    with pytest.raises(PlecticError):
        solve_pham(planar(), random_form(2, 1, 1, RNG), [0.0, 0.0])


def test_solver_factorisations_agree():
    e2 = builtin("E2_hyperkahler")
    pts = e2.chart.sample(20, RNG)
    phi = EForm.from_coeffs({(): ["x0*x1", "x2^2", "sin(x3)"]}, 4, 0, 3)
    with pytest.raises(NotPseudoHamiltonian):
        solve_pham(e2.plectic, phi, pts)
    ps = planar()
    phi = scalar("x0^2*x1 + cos(x1)")
    pts = RNG.uniform(-1, 1, (20, 2))
    a, b = solve_pham(ps, phi, pts, method="svd"), solve_pham(ps, phi, pts, method="qr")
    assert np.max(np.abs(a.field - b.field)) <= 1e-10
    assert np.max(np.abs(a.derivative - b.derivative)) <= 1e-10


def test_pham_bracket_examples():
    ps = planar()
    x = [0.4, 0.9]
    assert np.allclose(pham_bracket(ps, scalar("x0"), scalar("x1"), x), [1.0])
    phi = scalar("x0*x1^2")
    assert np.allclose(pham_bracket(ps, phi, phi, x), [0.0])
    psi = scalar("x0^2 - x1")
    assert np.allclose(pham_bracket(ps, phi, psi, x), -pham_bracket(ps, psi, phi, x))


def test_bracket_independent_of_factorisation():
    ps = planar()
    pts = RNG.uniform(-1, 1, (10, 2))
    phi, psi = scalar("x0*x1^2"), scalar("sin(x0) + x1")
    a = solve_pham(ps, phi, pts, method="svd").field
    b = solve_pham(ps, psi, pts, method="qr").field
    direct = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    assert np.allclose(pham_bracket(ps, phi, psi, pts)[:, 0], direct, atol=1e-12)


def test_hamlemma_flat_and_linear():
    ps = planar()
    pts = RNG.uniform(-1, 1, (30, 2))
    assert hamlemma_residual(ps, scalar("x0^2*x1 + x1^3"), scalar("x0*x1 - x0^3"), pts) <= 1e-9
    assert hamlemma_residual(ps, scalar("x0"), scalar("x0"), pts) <= 1e-12
    e4 = builtin("E4_torus4")
    phi = EForm.from_coeffs({(): ["x1 + x0*x2", "x2^2", "x3"]}, 4, 0, 3)
    with pytest.raises(NotPseudoHamiltonian):
        hamlemma_residual(e4.plectic, phi, phi, e4.chart.sample(5, RNG))


@pytest.mark.parametrize("name", ["E1_symplectic", "E1T_translation", "E2_hyperkahler",
                                  "E3_heisenberg", "E4_torus4"])
def test_hms_defect_on_catalog(name):
    m = builtin(name)
    pts = m.chart.sample(50, RNG)
    res = hms_defect(m.plectic, m.algebroid, m.momentum, pts, RNG)
    assert set(res) == {(0, 2), (1, 1)}
    assert max(res.values()) <= 1e-10


def test_hms_defect_torus_tight():
    m = builtin("E4_torus4")
    res = hms_defect(m.plectic, m.algebroid, m.momentum, m.chart.sample(50, RNG), RNG)
    assert max(res.values()) <= 1e-12


@pytest.mark.parametrize("name", ["E1_symplectic", "E2_hyperkahler", "E4_torus4"])
def test_hms_fault_injection(name):
    m = builtin(name)
    res = hms_defect(m.plectic, m.algebroid, perturbed_momentum(m, 0.1), m.chart.sample(50, RNG))
    assert res[(1, 1)] >= 0.05


def test_momentum_section_bidegree_checks():
    with pytest.raises(PlecticError):
        MomentumSection([MixedForm.from_coeffs({}, 2, 1, 1, 1, 1)])


def test_antihom_and_jacobi_examples():
    e2 = builtin("E2_hyperkahler")
    pts = e2.chart.sample(40, RNG)
    frames = [Section.frame(a, 3, 4) for a in range(3)]
    for a in range(3):
        for b in range(3):
            assert antihom_residual(e2.plectic, e2.algebroid, e2.momentum, frames[a], frames[b], pts) <= 1e-9
    jac = jacobi_residual(e2.plectic, e2.algebroid, e2.momentum, *frames, pts)
    assert jac["jacobi"] <= 1e-9 and jac["twice_jacobi"] <= 1e-9
    e1 = builtin("E1_symplectic")
    e = Section.frame(0, 1, 2)
    assert antihom_residual(e1.plectic, e1.algebroid, e1.momentum, e, e, e1.chart.sample(10, RNG)) == 0.0


def test_jacobi_with_generic_constant_sections():
    e2 = builtin("E2_hyperkahler")
    pts = e2.chart.sample(30, RNG)
    secs = [Section.constant(RNG.uniform(-1, 1, 3), 4) for _ in range(3)]
    jac = jacobi_residual(e2.plectic, e2.algebroid, e2.momentum, *secs, pts)
    assert jac["jacobi"] <= 1e-9 and jac["twice_jacobi"] <= 1e-9
    assert antihom_residual(e2.plectic, e2.algebroid, e2.momentum, secs[0], secs[1], pts) <= 1e-9


def test_bracket_checks_need_degree_one():
    vol = EForm.from_coeffs({(0, 1, 2): "1"}, 3, 3)
    ps = PlecticStructure(vol, Bundle(3, 1))
    alg = Algebroid.tangent(3)
    mu = MomentumSection([MixedForm.from_coeffs({}, 3, 1, 0, 2, 3), MixedForm.from_coeffs({}, 3, 1, 1, 1, 3)])
    e = Section.frame(0, 3, 3)
    with pytest.raises(PlecticError):
        antihom_residual(ps, alg, mu, e, e, np.zeros((1, 3)))
    with pytest.raises(PlecticError):
        jacobi_residual(ps, alg, mu, e, e, e, np.zeros((1, 3)))


def test_build_theta_flat():
    e2 = builtin("E2_hyperkahler")
    omegas = [e2.omega.component(c) for c in range(3)]
    theta, theta_wedge = build_theta(omegas)
    Q = quaternionic_bundle(omegas, e2.metric)
    pts = e2.chart.sample(20, RNG)
    from nplectic.forms import cov_ext_deriv
    assert np.max(np.abs(cov_ext_deriv(theta, Q).jet(pts, 0).value)) <= 1e-12
    assert np.max(np.abs(exterior_derivative(theta_wedge).jet(pts, 0).value)) <= 1e-12
    assert np.all(nondegeneracy_rank(PlecticStructure(theta, Q), pts) == 4)
    with pytest.raises(PlecticError):
        build_theta([EForm.from_coeffs({(0, 1): "1"}, 3, 2)])


def test_quaternionic_connection_is_trivial_on_flat_space():
    e2 = builtin("E2_hyperkahler")
    omegas = [e2.omega.component(c) for c in range(3)]
    Q = quaternionic_bundle(omegas, Metric.euclidean(4))
    assert not np.any(Q.connection.jet(e2.chart.sample(5, RNG), 0).value)


def test_galicki_lawson_conditions():
    e2 = builtin("E2_hyperkahler")
    omegas = [e2.omega.component(c) for c in range(3)]
    theta, _ = build_theta(omegas)
    Q = quaternionic_bundle(omegas, e2.metric)
    pts = e2.chart.sample(30, RNG)
    frames = [Section.frame(a, 3, 4) for a in range(3)]
    out = gl_residual(theta, Q, e2.algebroid, e2.momentum.top(), frames[0], frames[1], pts)
    assert out["covariant"] <= 1e-9 and out["bracket"] <= 1e-9
    same = gl_residual(theta, Q, e2.algebroid, e2.momentum.top(), frames[2], frames[2], pts)
    assert same["bracket"] == 0.0


def test_commuting_translations_violate_bracket_condition():
    e2 = builtin("E2_hyperkahler")
    omegas = [e2.omega.component(c) for c in range(3)]
    theta, _ = build_theta(omegas)
    Q = quaternionic_bundle(omegas, e2.metric)
    consts = [w.jet(np.zeros((1, 4)), 0).value[0, 0] for w in omegas]
    T = Algebroid.from_exprs([["1", "0", "0", "0"], ["0", "1", "0", "0"]], None, 4)
    f = _translation_momentum(consts, [0, 1], 4)
    out = gl_residual(theta, Q, T, f, Section.frame(0, 2, 4), Section.frame(1, 2, 4), e2.chart.sample(10, RNG))
    assert out["covariant"] <= 1e-9
    assert out["bracket"] >= 0.05
