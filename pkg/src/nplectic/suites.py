"""Verification suites: each maps a model to a list of checks with residuals."""

from __future__ import annotations

from itertools import combinations

import numpy as np

from .algebroid import (Algebroid, Section, a_act, a_cov_ext_deriv, a_curvature, a_wedge, algebroid_diff,
                        iota_rho, pair_section, validate)
from .catalog import Model
from .expr import SmoothFunction
from .forms import (EForm, MixedForm, cov_ext_deriv, cov_ext_deriv_invariant, contract_fields,
                    exterior_derivative, identity_residual, interior, random_form, random_polynomial,
                    random_vector_field)
from .plectic import (antihom_residual, build_theta, compatibility_defect, gl_residual,
                      hamlemma_residual, hms_defect, jacobi_residual, nondegeneracy_rank, quaternionic_bundle,
                      solve_pham, MomentumSection)
from .reduction import (orbit_sample, pullback_form, pullback_relation_residual,
                        random_tangent_vectors, random_word, reduced_connection_eval, reduced_form,
                        second_representative, section_invariance, subspace_lemma_check, transversality_check,
                        zero_set_membership, invariance_residual)
from .report import Check, Report

SUITES = ("cartan", "algebroid", "hms", "compat", "bracket", "quaternionic", "reduction")
ROUTE_TOL = 1e-10
FAULT_MIN = 0.05
FAULT_SHIFT = 0.1


class _Collector:
    def __init__(self, model: Model, suite: str, samples: int, seed: int):
        self.report = Report(model.name, suite, seed=seed, samples=samples)
        self.samples, self.seed = samples, seed

    def add(self, id: str, anchor: str, residual: float, threshold: float, kind: str = "max",
            passed: bool | None = None, detail: dict | None = None, samples: int | None = None) -> None:
        self.report.checks.append(Check(id, anchor, residual, threshold, self.samples if samples is None else samples,
                                        self.seed, kind, passed, detail or {}))

    def note(self, text: str) -> None:
        self.report.notes.append(text)


def _rng(seed: int, salt: int) -> np.random.Generator:
    return np.random.default_rng([seed, salt])


def _max(values) -> float:
    values = np.asarray(values)
    return float(np.max(np.abs(values))) if values.size else 0.0


def _random_mixed(dim: int, rank: int, p: int, q: int, m: int, rng) -> MixedForm:
    coeffs = {(I, J): [random_polynomial(dim, rng) for _ in range(rank)]
              for I in combinations(range(dim), p) for J in combinations(range(m), q)}
    return MixedForm.from_coeffs(coeffs, dim, rank, p, q, m)


def _constant_sections(m: int, dim: int, rng, extra: int = 2) -> list:
    secs = [Section.frame(a, m, dim) for a in range(m)]
    secs += [Section.constant(np.round(rng.uniform(-1, 1, m), 6), dim) for _ in range(extra)]
    return secs


# -- cartan ------------------------------------------------------------------------------

def suite_cartan(model: Model, samples: int, seed: int, tol: float) -> Report:
    col = _Collector(model, "cartan", samples, seed)
    tags = ["CARTAN1", "CARTAN2", "CARTAN3", "DSQUARED", "BIANCHI"]
    if model.metric is not None:
        tags.append("TILDE")
    for salt, tag in enumerate(tags):
        rep = identity_residual(tag, model, samples, seed * 1000 + salt, tol)
        for c in rep.checks:
            c.seed = seed
        col.report.extend(rep)
    rng = _rng(seed, 99)
    pts = model.chart.sample(samples, rng)
    worst, detail = 0.0, {}
    for k in range(0, model.dim):
        phi = random_form(model.dim, k, model.bundle.rank, rng)
        fields = [random_vector_field(model.dim, rng) for _ in range(k + 1)]
        inv = cov_ext_deriv_invariant(phi, model.bundle, fields, pts)
        coef = contract_fields(cov_ext_deriv(phi, model.bundle).jet(pts, 0), [X.jet(pts, 0) for X in fields]).value
        res = _max(inv - coef) / max(1.0, _max(inv))
        detail[f"degree {k}"] = res
        worst = max(worst, res)
    col.add("DNABLA_ROUTES", "coefficient formula of d^nabla agrees with the invariant formula", worst,
            ROUTE_TOL, detail=detail)
    return col.report


# -- algebroid ---------------------------------------------------------------------------

def suite_algebroid(model: Model, samples: int, seed: int, tol: float) -> Report:
    col = _Collector(model, "algebroid", samples, seed)
    alg = model.algebroid
    if alg is None:
        col.note("model has no algebroid")
        return col.report
    rng = _rng(seed, 1)
    pts = model.chart.sample(samples, rng)
    d, m, bundle = model.dim, alg.rank, model.bundle
    v = validate(alg, pts)
    col.add("VALIDATE_ANCHOR", "anchor intertwines brackets", v["anchor"], tol)
    col.add("VALIDATE_JACOBI", "Jacobi identity of the algebroid bracket", v["jacobi"], tol)
    col.add("VALIDATE_ANTISYMMETRY", "antisymmetry of the structure functions", v["antisymmetry"], tol)

    worst, detail = 0.0, {}
    for q in range(0, m):
        theta = _random_mixed(d, 1, 0, q, m, rng)
        res = _max(algebroid_diff(algebroid_diff(theta, alg), alg).jet(pts, 0).value)
        detail[f"degree {q}"] = res
        worst = max(worst, res)
    col.add("ETH_SQUARED", "the algebroid differential squares to zero", worst, tol, detail=detail)

    worst, detail = 0.0, {}
    curv = a_curvature(alg, bundle)
    for q in range(0, m):
        phi = _random_mixed(d, bundle.rank, 0, q, m, rng)
        twice = a_cov_ext_deriv(a_cov_ext_deriv(phi, alg, bundle), alg, bundle).jet(pts, 0).value
        res = _max(twice - a_act(curv, phi, bundle.rank).jet(pts, 0).value)
        detail[f"degree {q}"] = res
        worst = max(worst, res)
    col.add("ETH_E_SQUARED", "the E-valued algebroid differential squares to its curvature", worst, tol,
            detail=detail)

    worst = 0.0
    for k in range(0, m):
        for l in range(0, m - k):
            th = _random_mixed(d, 1, 0, k, m, rng)
            ta = _random_mixed(d, bundle.rank, 0, l, m, rng)
            lhs = a_cov_ext_deriv(a_wedge(th, ta), alg, bundle).jet(pts, 0).value
            r1 = a_wedge(algebroid_diff(th, alg), ta).jet(pts, 0).value
            r2 = a_wedge(th, a_cov_ext_deriv(ta, alg, bundle)).jet(pts, 0).value
            worst = max(worst, _max(lhs - r1 - (-1) ** k * r2))
    col.add("LEIBNIZ", "graded Leibniz rule for the algebroid differential", worst, tol)

    worst, detail = 0.0, {}
    for k in range(0, min(m, d)):
        phi = random_form(d, k, bundle.rank, rng)
        lhs = a_cov_ext_deriv(iota_rho(k, phi, alg), alg, bundle).jet(pts, 0).value
        rhs = iota_rho(k + 1, cov_ext_deriv(phi, bundle), alg).jet(pts, 0).value
        res = _max(lhs - rhs)
        detail[f"m={k}"] = res
        worst = max(worst, res)
    col.add("COMMUTING_LEMMA", "eth composed with i_rho^m equals i_rho^(m+1) composed with d^nabla", worst, tol,
            detail=detail)
    return col.report


# -- hms -----------------------------------------------------------------------------------

def perturbed_momentum(model: Model, shift: float = FAULT_SHIFT) -> MomentumSection:
    """The model's momentum section with shift * x0 added to one coefficient (fault injection)."""
    top = model.momentum.top()
    key = next(iter(top.coeffs))
    coeffs = dict(top.coeffs)
    funcs = list(coeffs[key])
    funcs[0] = f"{funcs[0]} + {shift}*x0"
    coeffs[key] = funcs
    comps = list(model.momentum.components)
    comps[-1] = MixedForm.from_coeffs(coeffs, top.dim, top.rank, top.p, top.q, top.arank)
    return MomentumSection(comps)


def lie_bracket_of_forms(lam: EForm, structure: np.ndarray) -> np.ndarray:
    """[lam, lam](u, v) := [lam(u), lam(v)] as a dense 2-form, for constant structure constants."""
    return np.einsum("naj,nbk,abe->nejk", lam, lam, structure)


def suite_hms(model: Model, samples: int, seed: int, tol: float) -> Report:
    col = _Collector(model, "hms", samples, seed)
    rng = _rng(seed, 2)
    pts = model.chart.sample(samples, rng)
    ps = model.plectic
    col.add("OMEGA_CLOSED", "d^nabla omega = 0", ps.closedness(pts), tol)
    ranks = np.atleast_1d(nondegeneracy_rank(ps, pts[: min(samples, 20)]))
    want = model.expect.get("nondegenerate", True)
    got = bool(np.all(ranks == model.dim))
    col.add("NONDEGENERACY", "omega-flat is injective (rank of omega-flat)", float(ranks.min()), float(model.dim),
            kind="expect", passed=(got == want), detail={"expected_nondegenerate": want, "min_rank": int(ranks.min())})
    if model.primitive:
        prim = model.forms[model.primitive]
        res = _max(cov_ext_deriv(prim, model.bundle).jet(pts, 0).value - ps.omega.jet(pts, 0).value)
        col.add("PRIMITIVE", f"omega = d^nabla {model.primitive}", res, tol)
    if "lie_group" in model.tags and model.algebroid is not None:
        c = model.algebroid.structure(pts[:1], 0).value[0]
        worst = 0.0
        for name, sign in (("lambda_R", -1.0), ("lambda_L", 1.0)):
            lam = model.forms[name]
            dl = exterior_derivative(lam).jet(pts, 0).value
            worst = max(worst, _max(dl + sign * lie_bracket_of_forms(lam.jet(pts, 0).value, c)))
        col.add("MAURER_CARTAN", "d lambda_R - [lambda_R, lambda_R] = 0 and d lambda_L + [lambda_L, lambda_L] = 0",
                worst, min(tol, 1e-9))
    if model.momentum is None:
        col.note("model has no momentum section")
        return col.report
    alg = model.algebroid
    defect = hms_defect(ps, alg, model.momentum, pts, rng)
    for (k, q), res in sorted(defect.items()):
        col.add(f"HMS_{k}_{q}", f"BHMS equation in bidegree ({k},{q})", res, tol)
    bad = hms_defect(ps, alg, perturbed_momentum(model), pts, rng)
    col.add("HMS_FAULT_DETECTED", f"momentum shifted by {FAULT_SHIFT}*x0 violates the BHMS equation",
            max(bad.values()), FAULT_MIN, kind="min")
    return col.report


# -- compat --------------------------------------------------------------------------------

def suite_compat(model: Model, samples: int, seed: int, tol: float) -> Report:
    col = _Collector(model, "compat", samples, seed)
    if model.momentum is None:
        col.note("model has no momentum section")
        return col.report
    rng = _rng(seed, 3)
    pts = model.chart.sample(samples, rng)
    ps, alg, mu = model.plectic, model.algebroid, model.momentum
    worst, agree = 0.0, 0.0
    for alpha in _constant_sections(alg.rank, model.dim, rng):
        out = compatibility_defect(ps, alg, mu, alpha, pts)
        worst = max(worst, out["direct"])
        agree = max(agree, out["agreement"])
    col.add("COMPATIBILITY", "mu commutes with pairing against d^nabla on parallel sections", worst, tol)
    for _ in range(2):
        alpha = Section.from_exprs([random_polynomial(model.dim, rng) for _ in range(alg.rank)], model.dim)
        agree = max(agree, compatibility_defect(ps, alg, mu, alpha, pts)["agreement"])
    col.add("COMPATIBILITY_ROUTES", "direct and expanded compatibility defects agree", agree, tol)
    if ps.n == 1:
        worst = 0.0
        for a in range(alg.rank):
            e = Section.frame(a, alg.rank, model.dim)
            lhs = cov_ext_deriv(pair_section(mu.top(), e), ps.bundle).jet(pts, 0).value
            rhs = interior(alg.anchor_field(a), ps.omega).jet(pts, 0).value
            worst = max(worst, _max(lhs - rhs))
        col.add("MOMENT_MAP", "nabla mu^alpha = i_rho(alpha) omega on the frame", worst, min(tol, 1e-9))
    return col.report


# -- bracket ---------------------------------------------------------------------------------

def suite_bracket(model: Model, samples: int, seed: int, tol: float) -> Report:
    col = _Collector(model, "bracket", samples, seed)
    if model.momentum is None or model.plectic.n != 1:
        col.note("bracket checks need a momentum section of a 1-plectic structure")
        return col.report
    rng = _rng(seed, 4)
    pts = model.chart.sample(samples, rng)
    ps, alg, mu = model.plectic, model.algebroid, model.momentum
    secs = _constant_sections(alg.rank, model.dim, rng, extra=1)
    worst = 0.0
    for a, b in combinations(secs, 2):
        worst = max(worst, antihom_residual(ps, alg, mu, a, b, pts))
    col.add("ANTIHOM", "mu^[alpha, beta] = -omega(rho alpha, rho beta)", worst, tol)
    jac, twice = 0.0, 0.0
    triples = list(combinations(secs, 3)) or [(secs[0], secs[0], secs[0])]
    for a, b, c in triples:
        out = jacobi_residual(ps, alg, mu, a, b, c, pts)
        jac, twice = max(jac, out["jacobi"]), max(twice, out["twice_jacobi"])
    col.add("JACOBI", "Jacobi identity of the momentum bracket", jac, tol)
    col.add("JACOBI_PROOF_IDENTITY", "d^nabla omega(rho a, rho b, rho c) = 2 (Jacobi sum)", twice, tol)

    ranks = np.atleast_1d(nondegeneracy_rank(ps, pts[:5]))
    if not np.all(ranks == model.dim):
        col.note("omega is degenerate: pseudo-Hamiltonian checks skipped")
        return col.report
    sub = pts[: min(samples, 50)]
    phis = [pair_section(mu.top(), Section.frame(a, alg.rank, model.dim)) for a in range(alg.rank)]
    worst, paths = 0.0, 0.0
    for a, phi in enumerate(phis):
        sol = solve_pham(ps, phi, sub, order=0)
        worst = max(worst, _max(sol.field - alg.anchor(sub, 0).value[:, a]))
        other = solve_pham(ps, phi, sub, method="qr", order=0)
        paths = max(paths, _max(sol.field - other.field))
    col.add("PHAM_FIELD", "the pseudo-Hamiltonian field of mu^alpha is rho(alpha)", worst, tol, samples=len(sub))
    col.add("PHAM_SOLVER_PATHS", "SVD and QR solves give the same field", paths, ROUTE_TOL, samples=len(sub))
    worst = 0.0
    for a in range(len(phis)):
        for b in range(a + 1, len(phis)):
            worst = max(worst, hamlemma_residual(ps, phis[a], phis[b], sub))
    if ps.omega.rank == 1 and model.dim == 2 * ps.n:
        f, g = random_form(model.dim, 0, 1, rng), random_form(model.dim, 0, 1, rng)
        worst = max(worst, hamlemma_residual(ps, f, g, sub))
    col.add("HAM_LEMMA", "i_[X_psi, X_phi] omega = d^nabla {phi, psi} up to curvature terms", worst, tol,
            samples=len(sub))
    return col.report


# -- quaternionic ------------------------------------------------------------------------------

def _translation_momentum(omegas_const: list, dirs: list, dim: int) -> MixedForm:
    """f_V for constant translations V = d/dx_a and constant forms: f^c_V = sum_j W_c[a, j] x_j."""
    coeffs = {}
    for s, a in enumerate(dirs):
        row = []
        for W in omegas_const:
            terms = [f"{float(W[a, j])!r}*x{j}" for j in range(dim) if W[a, j] != 0]
            row.append(" + ".join(terms) if terms else "0")
        coeffs[((), (s,))] = row
    return MixedForm.from_coeffs(coeffs, dim, len(omegas_const), 0, 1, len(dirs))


def suite_quaternionic(model: Model, samples: int, seed: int, tol: float) -> Report:
    col = _Collector(model, "quaternionic", samples, seed)
    if "quaternionic" not in model.tags:
        col.note("model is not tagged quaternionic")
        return col.report
    rng = _rng(seed, 5)
    pts = model.chart.sample(samples, rng)
    omegas = [model.omega.component(c) for c in range(model.omega.rank)]
    theta, theta_wedge = build_theta(omegas)
    Q = quaternionic_bundle(omegas, model.metric)
    col.add("THETA_CLOSED", "Theta is a closed Q-valued 2-form", _max(cov_ext_deriv(theta, Q).jet(pts, 0).value),
            1e-12)
    col.add("THETA_WEDGE_CLOSED", "the fundamental 4-form is closed",
            _max(exterior_derivative(theta_wedge).jet(pts, 0).value), 1e-12)
    from .plectic import PlecticStructure
    ranks = np.atleast_1d(nondegeneracy_rank(PlecticStructure(theta, Q), pts[:10]))
    col.add("THETA_NONDEGENERATE", "Theta is nondegenerate", float(ranks.min()), float(model.dim), kind="expect",
            passed=bool(np.all(ranks == model.dim)))
    if model.momentum is not None and model.algebroid is not None:
        K, f = model.algebroid, model.momentum.top()
        cov, br = 0.0, 0.0
        secs = _constant_sections(K.rank, model.dim, rng, extra=1)
        for V1, V2 in combinations(secs, 2):
            out = gl_residual(theta, Q, K, f, V1, V2, pts)
            cov, br = max(cov, out["covariant"]), max(br, out["bracket"])
        col.add("GL_DEFINING", "nabla f_V = Theta_V", cov, 1e-9)
        col.add("GL_BRACKET", "f_[V1, V2] = -sum omega_i(V1, V2) omega_i", br, 1e-9)
        worst = 0.0
        for a, b in combinations(secs, 2):
            worst = max(worst, antihom_residual(model.plectic, K, model.momentum, a, b, pts))
        col.add("ANTIHOM", "components of the R^3-valued momentum are anti-homomorphisms", worst, 1e-9)
    consts = [om.jet(pts[:1], 0).value[0, 0] for om in omegas]
    if all(np.allclose(om.jet(pts[:5], 0).value[:, 0], W) for om, W in zip(omegas, consts)):
        T = Algebroid.from_exprs([["1" if i == a else "0" for i in range(model.dim)] for a in (0, 1)], None, model.dim)
        f = _translation_momentum(consts, [0, 1], model.dim)
        e0, e1 = Section.frame(0, 2, model.dim), Section.frame(1, 2, model.dim)
        out = gl_residual(theta, Q, T, f, e0, e1, pts)
        col.add("GL_TRANSLATIONS_VIOLATED", "commuting translations violate the bracket condition",
                out["bracket"], FAULT_MIN, kind="min", detail={"defining": out["covariant"]})
    return col.report


# -- reduction -------------------------------------------------------------------------------

ORBIT_WORDS = 100


def suite_reduction(model: Model, samples: int, seed: int, tol: float) -> Report:
    col = _Collector(model, "reduction", samples, seed)
    zs = model.zero_set
    if zs is None or model.momentum is None:
        col.note("model declares no zero set")
        return col.report
    rng = _rng(seed, 6)
    ps, alg, mu, chart = model.plectic, model.algebroid, model.momentum, model.chart
    z = zs.sample(samples, rng)
    mem = zero_set_membership(mu, z, 1e-10, zs.dim)
    col.add("ZERO_SET_MEMBERSHIP", "sampled points satisfy mu = 0", float(mem.residual.max()), 1e-10)
    if "transversal" in model.expect:
        tr = transversality_check(alg, mu, z[: min(samples, 20)], zs.dim)
        col.add("TRANSVERSALITY", "T M_mu + Im rho = T M (declared expectation)", float(tr["rank"]),
                float(tr["dim"]), kind="expect", passed=(tr["satisfied"] == model.expect["transversal"]),
                detail={"satisfied": tr["satisfied"], "expected": model.expect["transversal"]})

    zw = zs.sample(ORBIT_WORDS, rng)
    orb = orbit_sample(alg, mu, zw, "P0rho", int(rng.integers(2 ** 31)), chart, expected_dim=zs.dim)
    col.add("ORBIT_INVARIANCE", "flows of anchored frame fields preserve M_mu", orb.residual, tol,
            samples=ORBIT_WORDS, detail={"violations": len(orb.violations)})
    word = random_word(alg, zw, "P0rho", rng)
    col.add("OMEGA_INVARIANCE", "anchored flows preserve omega", invariance_residual(ps.omega, word, alg, zw, chart),
            tol, samples=ORBIT_WORDS)
    if zs.dim == 0:
        col.note("zero set is isolated points: reduced form is trivial")
        return col.report

    n = min(samples, 50)
    zr = z[:n]
    u, v = random_tangent_vectors(mem.tangent[:n], 2, rng)
    vecs = [u, v] + random_tangent_vectors(mem.tangent[:n], ps.n - 1, rng)
    base = reduced_form(ps, zr, vecs)
    z2, moved = second_representative(alg, mu, zr, vecs, rng, chart, zs.dim)
    col.add("REDUCED_WELL_DEFINED", "reduced form is independent of the representative",
            _max(base - reduced_form(ps, z2, moved)), 1e-6, samples=n)
    normal = np.array([np.linalg.svd(T.T)[2][-1] if T.shape[1] < model.dim else np.zeros(model.dim)
                       for T in mem.tangent[:n]])
    lem = subspace_lemma_check(ps, alg, mu, zr, u)
    col.add("SUBSPACE_LEMMA", "tangent vectors of M_mu annihilate nabla mu and pair to zero with anchors",
            max(lem.values()), 1e-10, samples=n, detail=lem)
    fault = subspace_lemma_check(ps, alg, mu, zr, normal)
    col.add("SUBSPACE_LEMMA_FAULT", "a non-tangent vector is detected", max(fault.values()), 0.1, kind="min",
            samples=n, detail=fault)

    qs = model.quotient
    if qs is None:
        return col.report
    red = pullback_form(ps.omega, qs.lift)
    col.add("PULLBACK_RELATION", "pi^* omega_red = iota^* omega on M_mu",
            pullback_relation_residual(ps, red, qs.projection, zr, vecs), 1e-8, samples=n)
    ypts = qs.chart.sample(samples, rng)
    if red.p < qs.chart.dim:
        col.add("REDUCED_CLOSED", "the reduced form is closed",
                _max(exterior_derivative(red).jet(ypts, 0).value), 1e-8)
    if qs.reduced is not None:
        col.add("REDUCED_EXPECTED", "reduced form matches the catalog value",
                _max(red.jet(ypts, 0).value - qs.reduced.jet(ypts, 0).value), 1e-9)
    sfun = [SmoothFunction.parse(f"sin({qs.projection[0]})", model.dim)]
    sfun += [SmoothFunction.constant(0.0, model.dim) for _ in range(ps.bundle.rank - 1)]
    inv = section_invariance(sfun, alg, mu, zr[: min(n, 20)], int(rng.integers(2 ** 31)), chart, zs.dim)
    col.add("REDUCED_CONNECTION_INVARIANT", "test section is invariant along orbits", inv, 1e-8, samples=min(n, 20))
    z2, (u2,) = second_representative(alg, mu, zr, [u], rng, chart, zs.dim)
    wd = _max(reduced_connection_eval(sfun, zr, u) - reduced_connection_eval(sfun, z2, u2))
    col.add("REDUCED_CONNECTION_WELL_DEFINED", "reduced connection is independent of the representative", wd, 1e-7,
            samples=n)
    return col.report


RUNNERS: dict = {
    "cartan": suite_cartan,
    "algebroid": suite_algebroid,
    "hms": suite_hms,
    "compat": suite_compat,
    "bracket": suite_bracket,
    "quaternionic": suite_quaternionic,
    "reduction": suite_reduction,
}


def run_suite(model: Model, suite: str, samples: int = 200, seed: int = 42, tol: float = 1e-8) -> list:
    """Reports for one suite, or for every suite when ``suite == "all"``."""
    if samples < 1 or not tol > 0:
        raise ValueError("samples must be at least 1 and tol positive")
    names = SUITES if suite == "all" else (suite,)
    for name in names:
        if name not in RUNNERS:
            raise KeyError(suite)
    return [RUNNERS[name](model, samples, seed, tol) for name in names]
