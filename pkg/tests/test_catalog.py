import json
from pathlib import Path

import numpy as np
import pytest

from nplectic.catalog import (BUILTINS, CatalogError, builtin, builtin_config, dumps, format_key,
                              from_config, load, parse_key, resolve, save)
from nplectic.plectic import build_theta, hms_defect
from nplectic.suites import run_suite
from oracles import heisenberg_ad, heisenberg_right_mc, ray_integral_momentum

DOCS = Path(__file__).resolve().parents[1] / "docs" / "examples"
RNG = np.random.default_rng(51)

HK = {"I": {(0, 1): 1.0, (2, 3): 1.0}, "J": {(0, 2): 1.0, (1, 3): -1.0}, "K": {(0, 3): 1.0, (1, 2): 1.0}}
ASD = [{(0, 1): 0.5, (2, 3): -0.5}, {(0, 2): 0.5, (1, 3): 0.5}, {(0, 3): 0.5, (1, 2): -0.5}]


def antisym(entries):
    A = np.zeros((4, 4))
    for (i, j), v in entries.items():
        A[i, j], A[j, i] = v, -v
    return A


def test_all_builtins_construct_and_validate():
    assert set(BUILTINS) == {"E1_symplectic", "E1T_translation", "E2_hyperkahler", "E3_heisenberg",
                             "E4_torus4", "E5_curvature", "E6_tautological"}
    for name in BUILTINS:
        m = builtin(name)
        assert m.name == name
        if m.algebroid is not None:
            assert max(m.validation.values()) <= 1e-10


def test_key_round_trip():
    assert parse_key("0,2|1") == ((0, 2), (1,))
    assert parse_key("|0") == ((), (0,))
    assert format_key((0, 2), (1,), mixed=True) == "0,2|1"


@pytest.mark.parametrize("name", list(BUILTINS))
def test_save_load_round_trip(name, tmp_path):
    m = builtin(name)
    path = tmp_path / f"{name}.json"
    save(m, path)
    again = load(path)
    assert json.loads(path.read_text()) == json.loads(dumps(again))
    pts = m.chart.sample(50, RNG)
    for key, form in m.forms.items():
        assert np.array_equal(form.jet(pts, 1).value, again.forms[key].jet(pts, 1).value)
        assert np.array_equal(form.jet(pts, 1).grad, again.forms[key].jet(pts, 1).grad)
    if m.momentum is not None:
        for a, b in zip(m.momentum.components, again.momentum.components):
            assert np.array_equal(a.jet(pts, 0).value, b.jet(pts, 0).value)


def test_dumps_is_stable():
    m = builtin("E4_torus4")
    assert dumps(m) == dumps(from_config(json.loads(dumps(m))))


def test_documented_examples_load_and_pass():
    e1 = load(DOCS / "E1_symplectic.json")
    res = hms_defect(e1.plectic, e1.algebroid, e1.momentum, e1.chart.sample(50, RNG))
    assert max(res.values()) <= 1e-10
    e4 = load(DOCS / "E4_torus4.json")
    assert json.loads(dumps(e4)) == json.loads(dumps(builtin("E4_torus4")))


def test_missing_fields_are_named():
    cfg = builtin_config("E1_symplectic")
    cfg["algebroid"]["anchor"] = []
    with pytest.raises(CatalogError, match="algebroid.anchor"):
        from_config(cfg)
    cfg = builtin_config("E1_symplectic")
    del cfg["bundle"]["rank"]
    with pytest.raises(CatalogError, match="missing field 'bundle.rank'"):
        from_config(cfg)
    cfg = builtin_config("E1_symplectic")
    del cfg["forms"]
    with pytest.raises(CatalogError, match="forms"):
        from_config(cfg)


def test_bad_expression_reports_field_and_offset():
    cfg = builtin_config("E1_symplectic")
    cfg["forms"]["omega"]["coeffs"]["0,1"] = ["x0 +* 1"]
    with pytest.raises(CatalogError, match=r"forms.omega.coeffs\['0,1'\]\[0\].*offset 4"):
        from_config(cfg)


def test_bad_schema_and_json(tmp_path):
    cfg = builtin_config("E1_symplectic")
    cfg["schema"] = 2
    with pytest.raises(CatalogError):
        from_config(cfg)
    bad = tmp_path / "bad.json"
    bad.write_text('{"name": "x",\n "dim": }')
    with pytest.raises(CatalogError, match="line 2"):
        load(bad)


def test_resolve():
    assert resolve("E5_curvature").name == "E5_curvature"
    with pytest.raises(CatalogError):
        resolve("no_such_model")


def test_hyperkahler_momentum_matches_ray_integral():
    m = builtin("E2_hyperkahler")
    pts = m.chart.sample(30, RNG)
    vals = m.momentum.top().jet(pts, 0).value  # [n, fibre, alpha]
    for a, gen in enumerate(ASD):
        M = antisym(gen)
        for c, k in enumerate("IJK"):
            W = antisym(HK[k])
            expected = np.array([ray_integral_momentum(M, W, x) for x in pts])
            assert np.max(np.abs(vals[:, c, a] - expected)) <= 1e-12


def test_hyperkahler_anchor_preserves_forms():
    for gen in ASD:
        M = antisym(gen)
        for k in "IJK":
            W = antisym(HK[k])
            # L_{Mx} omega = 0 for constant omega <=> M^T W + W M = 0
            assert np.max(np.abs(M.T @ W + W @ M)) == 0.0


def test_hyperkahler_fundamental_four_form():
    m = builtin("E2_hyperkahler")
    _, tw = build_theta([m.omega.component(c) for c in range(3)])
    v = tw.jet(m.chart.sample(5, RNG), 0).value[:, 0]
    assert np.allclose(v[:, 0, 1, 2, 3], 6.0)


def test_heisenberg_against_matrix_group():
    m = builtin("E3_heisenberg")
    pts = m.chart.sample(20, RNG)
    lam = m.forms["lambda_R"].jet(pts, 0).value  # [n, algebra, slot]
    mu = m.momentum.top().jet(pts, 0).value  # [n, fibre, alpha]
    for n, p in enumerate(pts):
        assert np.max(np.abs(lam[n].T - heisenberg_right_mc(p))) <= 1e-12
        for a in range(3):
            assert np.max(np.abs(mu[n, :, a] + heisenberg_ad(p, np.eye(3)[a]))) <= 1e-12


def test_torus_model_data():
    m = builtin("E4_torus4")
    pts = m.chart.sample(10, RNG)
    om = m.omega.jet(pts, 0).value
    assert np.all(om[:, 0, 0, 1] == 1) and np.all(om[:, 1, 1, 2] == 1) and np.all(om[:, 2, 1, 3] == 1)
    assert m.chart.periodic == (True,) * 4
    assert np.allclose(m.algebroid.anchor(pts, 0).value[:, 0], [1.0, 0, 0, 0])


def test_expectations_and_tags():
    assert builtin("E3_heisenberg").expect["nondegenerate"] is False
    assert builtin("E4_torus4").expect["transversal"] is False
    assert "quaternionic" in builtin("E2_hyperkahler").tags


def test_user_model_runs_through_suites(tmp_path):
    cfg = {
        "name": "planar_rotation", "dim": 2,
        "bundle": {"rank": 1},
        "algebroid": {"rank": 1, "anchor": [["x1", "-x0"]]},
        "forms": {"omega": {"degree": 2, "coeffs": {"0,1": ["1"]}}},
        "momentum": [{"bidegree": [0, 1], "coeffs": {"|0": ["(x0^2 + x1^2)/2"]}}],
    }
    path = tmp_path / "user.json"
    path.write_text(json.dumps(cfg))
    reports = run_suite(load(path), "hms", samples=20, seed=3)
    assert all(r.passed for r in reports)
