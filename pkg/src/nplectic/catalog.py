"""Example models and the JSON model format.

Every builtin is defined as a configuration dictionary, the same structure that
``load`` reads from disk, so saving and reloading a builtin goes through exactly
the code path used for user models.
"""

from __future__ import annotations

import contextlib
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

import numpy as np

from .algebroid import Algebroid, validate
from .expr import ExprError, as_function
from .forms import Bundle, EForm, FormError, MixedForm
from .geometry import Chart, Connection, GeometryError, Metric
from .plectic import MomentumSection, PlecticError, PlecticStructure

SCHEMA_VERSION = 1


class CatalogError(Exception):
    """A model description is malformed; the message names the offending field."""


@contextlib.contextmanager
def _field(path: str):
    try:
        yield
    except CatalogError:
        raise
    except ExprError as exc:
        raise CatalogError(f"{path}: {exc}") from exc
    except (FormError, GeometryError, PlecticError, ValueError, TypeError, IndexError) as exc:
        raise CatalogError(f"{path}: {exc}") from exc


def _get(cfg: dict, key: str, path: str, default: Any = ...):
    if not isinstance(cfg, dict):
        raise CatalogError(f"{path or 'model'}: expected an object")
    if key not in cfg:
        if default is ...:
            raise CatalogError(f"missing field '{(path + '.') if path else ''}{key}'")
        return default
    return cfg[key]


def parse_key(key: str) -> tuple:
    """``"0,2|1"`` -> ``((0, 2), (1,))``; the bar and either side may be omitted."""
    tm, _, alg = str(key).partition("|")
    to_ints = lambda s: tuple(int(t) for t in s.split(",") if t.strip() != "")
    return to_ints(tm), to_ints(alg)


def format_key(I: tuple, J: tuple = (), mixed: bool = False) -> str:
    tm = ",".join(str(i) for i in I)
    if not mixed and not J:
        return tm
    return tm + "|" + ",".join(str(j) for j in J)


@dataclass
class ZeroSetSpec:
    """Catalog parametrisation of M_mu: ``embedding`` maps a ``dim``-box into the chart."""

    dim: int
    embedding: list
    box: tuple

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.dim == 0:
            y = np.zeros((n, 1))
            return np.stack([np.broadcast_to(f.jet(np.zeros((1, f.dim)), 0).value, (n,)) for f in self.embedding], 1)
        chart = Chart(self.dim, self.box)
        y = chart.sample(n, rng)
        return np.stack([f(y) for f in self.embedding], axis=1)


@dataclass
class QuotientSpec:
    """Explicit quotient chart: ``projection`` (chart -> quotient), ``lift`` (a section of it),
    and optionally the expected reduced form coefficients."""

    chart: Chart
    projection: list
    lift: list
    reduced: EForm | None = None


@dataclass
class Model:
    name: str
    chart: Chart
    bundle: Bundle
    forms: dict
    form_bundles: dict
    plectic_form: str = "omega"
    algebroid: Algebroid | None = None
    momentum: MomentumSection | None = None
    metric: Metric | None = None
    zero_set: ZeroSetSpec | None = None
    quotient: QuotientSpec | None = None
    primitive: str | None = None
    tags: tuple = ()
    expect: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict, repr=False)
    validation: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.chart.dim

    @property
    def omega(self) -> EForm:
        return self.forms[self.plectic_form]

    def bundle_of(self, name: str) -> Bundle:
        return self.bundle.end() if self.form_bundles.get(name) == "end" else self.bundle

    @property
    def plectic(self) -> PlecticStructure:
        return PlecticStructure(self.omega, self.bundle_of(self.plectic_form))

    def forms_on(self, bundle: Bundle) -> list:
        """The model's forms that take values in ``bundle`` (only the primary bundle E qualifies)."""
        if bundle is not self.bundle:
            return []
        return [f for k, f in self.forms.items() if self.form_bundles.get(k, "E") == "E"
                and isinstance(f, EForm) and f.rank == bundle.rank]


# -- building from configuration ---------------------------------------------------------

def _exprs(values, dim: int, path: str, length: int | None = None) -> list:
    if not isinstance(values, list):
        raise CatalogError(f"{path}: expected a list of expressions")
    if length is not None and len(values) != length:
        raise CatalogError(f"{path}: expected {length} entries, got {len(values)}")
    out = []
    for i, v in enumerate(values):
        with _field(f"{path}[{i}]"):
            out.append(as_function(v, dim))
    return out


def _coeff_table(coeffs, dim: int, rank: int, path: str) -> dict:
    if not isinstance(coeffs, dict):
        raise CatalogError(f"{path}: expected an object of multi-index keys")
    out = {}
    for key, vals in coeffs.items():
        with _field(f"{path}[{key!r}]"):
            I, J = parse_key(key)
        out[(I, J)] = _exprs(vals, dim, f"{path}[{key!r}]", rank)
    return out


def _chart(cfg: dict, dim: int, path: str) -> Chart:
    periodic = _get(cfg, "periodic", path, [False] * dim)
    box = cfg.get("box")
    if box is None:
        box = [[-np.pi, np.pi] if p else [-1.0, 1.0] for p in periodic]
    with _field(f"{path}.box" if path else "box"):
        return Chart(dim, tuple(tuple(b) for b in box), tuple(periodic))


def from_config(cfg: dict) -> Model:
    """Build and validate a model from its configuration dictionary."""
    if cfg.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise CatalogError(f"schema: unsupported version {cfg['schema']!r}")
    name = _get(cfg, "name", "")
    dim = _get(cfg, "dim", "")
    if not isinstance(dim, int) or dim < 1:
        raise CatalogError("dim: expected a positive integer")
    chart = _chart(cfg, dim, "")

    bcfg = _get(cfg, "bundle", "")
    rank = _get(bcfg, "rank", "bundle")
    conn = None
    if bcfg.get("connection") is not None:
        rows = bcfg["connection"]
        if not isinstance(rows, list) or len(rows) != rank * rank:
            raise CatalogError(f"bundle.connection: expected {rank * rank} rows (index a*rank+b)")
        table = [_exprs(rows[k], dim, f"bundle.connection[{k}]", dim) for k in range(rank * rank)]
        coeffs = [[table[a * rank + b] for b in range(rank)] for a in range(rank)]
        with _field("bundle.connection"):
            conn = Connection.from_exprs(coeffs, dim, rank)
    bundle = Bundle(dim, rank, conn)

    alg = None
    if cfg.get("algebroid") is not None:
        acfg = cfg["algebroid"]
        m = _get(acfg, "rank", "algebroid")
        anchor = _get(acfg, "anchor", "algebroid")
        if not isinstance(anchor, list) or len(anchor) != m:
            got = len(anchor) if isinstance(anchor, list) else 0
            raise CatalogError(f"algebroid.anchor: expected {m} rows, got {got}")
        anchor = [_exprs(row, dim, f"algebroid.anchor[{a}]", dim) for a, row in enumerate(anchor)]
        structure = acfg.get("structure")
        if structure is not None:
            if not isinstance(structure, list) or len(structure) != m:
                raise CatalogError(f"algebroid.structure: expected {m} blocks")
            structure = [[_exprs(row, dim, f"algebroid.structure[{a}][{b}]", m) for b, row in enumerate(block)]
                         for a, block in enumerate(structure)]
        aconn = None
        if acfg.get("aconn") is not None:
            rows = acfg["aconn"]
            if not isinstance(rows, list) or len(rows) != m * m:
                raise CatalogError(f"algebroid.aconn: expected {m * m} rows (index b*rank+a)")
            table = [_exprs(rows[k], dim, f"algebroid.aconn[{k}]", dim) for k in range(m * m)]
            with _field("algebroid.aconn"):
                aconn = Connection.from_exprs([[table[b * m + a] for a in range(m)] for b in range(m)], dim, m)
        with _field("algebroid"):
            alg = Algebroid.from_exprs(anchor, structure, dim, aconn)

    fcfg = _get(cfg, "forms", "")
    forms, form_bundles = {}, {}
    for fname, spec in fcfg.items():
        path = f"forms.{fname}"
        degree = _get(spec, "degree", path)
        where = spec.get("bundle", "E")
        if where not in ("E", "end"):
            raise CatalogError(f"{path}.bundle: expected 'E' or 'end'")
        frank = rank * rank if where == "end" else rank
        table = _coeff_table(_get(spec, "coeffs", path), dim, frank, f"{path}.coeffs")
        if any(J for _, J in table):
            raise CatalogError(f"{path}.coeffs: plain forms take no algebroid indices")
        with _field(path):
            forms[fname] = EForm.from_coeffs({I: v for (I, _), v in table.items()}, dim, degree, frank)
        form_bundles[fname] = where
    plectic_form = cfg.get("plectic", "omega")
    if plectic_form not in forms:
        raise CatalogError(f"missing field 'forms.{plectic_form}'")
    omega_rank = forms[plectic_form].rank

    momentum = None
    if cfg.get("momentum"):
        if alg is None:
            raise CatalogError("momentum: a momentum section needs an algebroid")
        comps = []
        for k, spec in enumerate(cfg["momentum"]):
            path = f"momentum[{k}]"
            p, q = _get(spec, "bidegree", path)
            table = _coeff_table(_get(spec, "coeffs", path), dim, omega_rank, f"{path}.coeffs")
            with _field(path):
                comps.append(MixedForm.from_coeffs(table, dim, omega_rank, p, q, alg.rank))
        with _field("momentum"):
            momentum = MomentumSection(comps)

    metric = None
    if cfg.get("metric") is not None:
        rows = cfg["metric"]
        if not isinstance(rows, list) or len(rows) != dim:
            raise CatalogError(f"metric: expected {dim} rows")
        with _field("metric"):
            metric = Metric.from_exprs([_exprs(r, dim, f"metric[{i}]", dim) for i, r in enumerate(rows)], dim)

    zero_set = None
    if cfg.get("zero_set") is not None:
        zcfg = cfg["zero_set"]
        zdim = _get(zcfg, "dim", "zero_set")
        pdim = max(zdim, 1)
        emb = _exprs(_get(zcfg, "embedding", "zero_set"), pdim, "zero_set.embedding", dim)
        box = tuple(tuple(b) for b in zcfg.get("box", [[-1.0, 1.0]] * zdim))
        zero_set = ZeroSetSpec(zdim, emb, box)

    quotient = None
    if cfg.get("quotient") is not None:
        qcfg = cfg["quotient"]
        ccfg = _get(qcfg, "chart", "quotient")
        qdim = _get(ccfg, "dim", "quotient.chart")
        qchart = _chart(ccfg, qdim, "quotient.chart")
        proj = _exprs(_get(qcfg, "projection", "quotient"), dim, "quotient.projection", qdim)
        lift = _exprs(_get(qcfg, "lift", "quotient"), qdim, "quotient.lift", dim)
        reduced = None
        if qcfg.get("reduced") is not None:
            om = forms[plectic_form]
            table = _coeff_table(qcfg["reduced"], qdim, om.rank, "quotient.reduced")
            with _field("quotient.reduced"):
                reduced = EForm.from_coeffs({I: v for (I, _), v in table.items()}, qdim, om.p, om.rank)
        quotient = QuotientSpec(qchart, proj, lift, reduced)

    primitive = cfg.get("primitive")
    if primitive is not None and primitive not in forms:
        raise CatalogError(f"primitive: unknown form {primitive!r}")

    model = Model(name, chart, bundle, forms, form_bundles, plectic_form, alg, momentum, metric,
                  zero_set, quotient, primitive, tuple(cfg.get("tags", ())), dict(cfg.get("expect", {})),
                  json.loads(json.dumps(cfg)))
    if alg is not None:
        pts = chart.sample(20, np.random.default_rng(0), shrink=0.9)
        model.validation = validate(alg, pts)
    return model


# -- builtin models ---------------------------------------------------------------------

def _num(x: float) -> str:
    """Exact short decimal or fraction text for a rational coefficient."""
    f = Fraction(x).limit_denominator(64)
    if abs(float(f) - x) > 1e-13:
        raise ValueError(f"coefficient {x!r} is not a small rational")
    if f.denominator == 1:
        return str(f.numerator)
    return f"{f.numerator}/{f.denominator}"


def _poly(terms: dict) -> str:
    """Text for sum c * monomial, where monomial is a tuple of variable indices."""
    parts = []
    for mono, c in sorted(terms.items()):
        if abs(c) < 1e-14:
            continue
        body = "*".join(f"x{i}" if k == 1 else f"x{i}^{k}" for i, k in sorted(Counter(mono).items()))
        coef = _num(abs(c))
        text = body if coef == "1" and body else (f"{coef}*{body}" if body else coef)
        parts.append(("-" if c < 0 else "+", text))
    if not parts:
        return "0"
    out = ("-" if parts[0][0] == "-" else "") + parts[0][1]
    for sign, text in parts[1:]:
        out += f" {sign} {text}"
    return out


def _two_form(coeffs: dict, dim: int) -> np.ndarray:
    W = np.zeros((dim, dim))
    for (i, j), v in coeffs.items():
        W[i, j], W[j, i] = v, -v
    return W


HK_FORMS = {
    "I": {(0, 1): 1.0, (2, 3): 1.0},
    "J": {(0, 2): 1.0, (1, 3): -1.0},
    "K": {(0, 3): 1.0, (1, 2): 1.0},
}
# anti-self-dual rotations: these commute with the three forms above
ASD_GENERATORS = [
    {(0, 1): 0.5, (2, 3): -0.5},
    {(0, 2): 0.5, (1, 3): 0.5},
    {(0, 3): 0.5, (1, 2): -0.5},
]


def su2_structure_constants(mats: list) -> np.ndarray:
    """c[a, b, e] with -[M_a, M_b] = sum_e c[a, b, e] M_e (the bracket of the fields M_a x)."""
    basis = np.stack([M.ravel() for M in mats], axis=1)
    m = len(mats)
    c = np.zeros((m, m, m))
    for a in range(m):
        for b in range(m):
            target = -(mats[a] @ mats[b] - mats[b] @ mats[a]).ravel()
            sol, *_ = np.linalg.lstsq(basis, target, rcond=None)
            if np.max(np.abs(basis @ sol - target)) > 1e-12:
                raise ValueError("generators do not close under the bracket")
            c[a, b] = sol
    return c


def quadratic_momentum(M: np.ndarray, W: np.ndarray) -> dict:
    """Quadratic q with dq = i_{Mx} omega for constant omega (matrix W), by a linear solve.

    Unknowns are the coefficients of x_i x_j (i <= j); the equations match the
    gradient of q with (M x)^i W[i, j] coefficient by coefficient.
    """
    d = M.shape[0]
    monos = [(i, j) for i in range(d) for j in range(i, d)]
    # d/dx_k of x_i x_j is linear in x: row (k, l) holds the coefficient of x_l
    A = np.zeros((d * d, len(monos)))
    for col, (i, j) in enumerate(monos):
        for k in range(d):
            if k == i:
                A[k * d + j, col] += 1.0
            if k == j:
                A[k * d + i, col] += 1.0
    target = (M.T @ W).T.ravel()  # (i_{Mx} W)_k = sum_l (M^T W)[l, k] x_l
    sol, *_ = np.linalg.lstsq(A, target, rcond=None)
    if np.max(np.abs(A @ sol - target)) > 1e-12:
        raise ValueError("i_{Mx} omega is not exact")
    return {mono: float(v) for mono, v in zip(monos, sol) if abs(v) > 1e-14}


def _euclidean(dim: int) -> list:
    return [["1" if i == j else "0" for j in range(dim)] for i in range(dim)]


def _e1_config() -> dict:
    return {
        "name": "E1_symplectic", "dim": 2, "periodic": [False, False],
        "bundle": {"rank": 1},
        "algebroid": {"rank": 1, "anchor": [["x1", "-x0"]]},
        "forms": {"omega": {"degree": 2, "coeffs": {"0,1": ["1"]}}},
        "momentum": [{"bidegree": [0, 1], "coeffs": {"|0": ["1/2*x0^2 + 1/2*x1^2"]}}],
        "metric": _euclidean(2),
        "tags": ["symplectic"],
    }


def _e1t_config() -> dict:
    return {
        "name": "E1T_translation", "dim": 4, "periodic": [False] * 4, "box": [[-3.0, 3.0]] * 4,
        "bundle": {"rank": 1},
        "algebroid": {"rank": 1, "anchor": [["1", "0", "0", "0"]]},
        "forms": {"omega": {"degree": 2, "coeffs": {"0,1": ["1"], "2,3": ["1"]}}},
        "momentum": [{"bidegree": [0, 1], "coeffs": {"|0": ["x1"]}}],
        "metric": _euclidean(4),
        "zero_set": {"dim": 3, "embedding": ["x0", "0", "x1", "x2"], "box": [[-2.0, 2.0]] * 3},
        "quotient": {"chart": {"dim": 2, "box": [[-2.0, 2.0]] * 2},
                     "projection": ["x2", "x3"], "lift": ["0", "0", "x0", "x1"],
                     "reduced": {"0,1": ["1"]}},
        "expect": {"transversal": False},
        "tags": ["symplectic", "reduction"],
    }


def _e2_config() -> dict:
    d = 4
    W = {k: _two_form(v, d) for k, v in HK_FORMS.items()}
    M = [_two_form(g, d) for g in ASD_GENERATORS]
    c = su2_structure_constants(M)
    anchor = [[_poly({(j,): Ma[i, j] for j in range(d)}) for i in range(d)] for Ma in M]
    structure = [[[_num(c[a, b, e]) for e in range(3)] for b in range(3)] for a in range(3)]
    mom = {f"|{a}": [_poly(quadratic_momentum(Ma, W[k])) for k in "IJK"] for a, Ma in enumerate(M)}
    omega = {}
    for slot, k in enumerate("IJK"):
        for (i, j), v in HK_FORMS[k].items():
            row = omega.setdefault(f"{i},{j}", ["0", "0", "0"])
            row[slot] = _num(v)
    return {
        "name": "E2_hyperkahler", "dim": d, "periodic": [False] * d,
        "bundle": {"rank": 3},
        "algebroid": {"rank": 3, "anchor": anchor, "structure": structure},
        "forms": {"omega": {"degree": 2, "coeffs": omega}},
        "momentum": [{"bidegree": [0, 1], "coeffs": mom}],
        "metric": _euclidean(d),
        "zero_set": {"dim": 0, "embedding": ["0"] * d},
        "tags": ["quaternionic"],
    }


def _e3_config() -> dict:
    return {
        "name": "E3_heisenberg", "dim": 3, "periodic": [False] * 3,
        "bundle": {"rank": 3},
        "algebroid": {
            "rank": 3,
            "anchor": [["1", "0", "-1/2*x1"], ["0", "1", "1/2*x0"], ["0", "0", "1"]],
            "structure": [[["0", "0", "0"], ["0", "0", "1"], ["0", "0", "0"]],
                          [["0", "0", "-1"], ["0", "0", "0"], ["0", "0", "0"]],
                          [["0", "0", "0"], ["0", "0", "0"], ["0", "0", "0"]]],
        },
        "forms": {
            "omega": {"degree": 2, "coeffs": {"0,1": ["0", "0", "1"]}},
            "lambda_R": {"degree": 1, "coeffs": {"0": ["1", "0", "-1/2*x1"], "1": ["0", "1", "1/2*x0"],
                                                 "2": ["0", "0", "1"]}},
            "lambda_L": {"degree": 1, "coeffs": {"0": ["1", "0", "1/2*x1"], "1": ["0", "1", "-1/2*x0"],
                                                 "2": ["0", "0", "1"]}},
        },
        "primitive": "lambda_R",
        "momentum": [{"bidegree": [0, 1], "coeffs": {"|0": ["-1", "0", "x1"], "|1": ["0", "-1", "-x0"],
                                                     "|2": ["0", "0", "-1"]}}],
        "expect": {"nondegenerate": False},
        "tags": ["lie_group"],
    }


def _e4_config() -> dict:
    per = [-float(np.pi), float(np.pi)]
    return {
        "name": "E4_torus4", "dim": 4, "periodic": [True] * 4, "box": [per] * 4,
        "bundle": {"rank": 3},
        "algebroid": {"rank": 1, "anchor": [["1", "0", "0", "0"]]},
        "forms": {"omega": {"degree": 2, "coeffs": {"0,1": ["1", "0", "0"], "1,2": ["0", "1", "0"],
                                                    "1,3": ["0", "0", "1"]}}},
        "momentum": [{"bidegree": [0, 1], "coeffs": {"|0": ["x1", "0", "0"]}}],
        "metric": _euclidean(4),
        "zero_set": {"dim": 3, "embedding": ["x0", "0", "x1", "x2"], "box": [per] * 3},
        "quotient": {"chart": {"dim": 2, "periodic": [True, True], "box": [per] * 2},
                     "projection": ["x2", "x3"], "lift": ["0", "0", "x0", "x1"], "reduced": {}},
        "expect": {"transversal": False},
        "tags": ["reduction"],
    }


def _e5_config() -> dict:
    return {
        "name": "E5_curvature", "dim": 2, "periodic": [False, False],
        "bundle": {"rank": 1, "connection": [["0", "x0"]]},
        "algebroid": {"rank": 2, "anchor": [["1", "0"], ["0", "1"]]},
        "forms": {"omega": {"degree": 2, "bundle": "end", "coeffs": {"0,1": ["1"]}}},
        "tags": ["curvature"],
    }


def _e6_config() -> dict:
    return {
        "name": "E6_tautological", "dim": 4, "periodic": [False] * 4,
        "bundle": {"rank": 1, "connection": [["x1", "x0", "0", "0"]]},
        "forms": {
            "theta": {"degree": 1, "coeffs": {"0": ["x2"], "1": ["x3"]}},
            "omega": {"degree": 2, "coeffs": {"0,1": ["x1*x3 - x0*x2"], "0,2": ["-1"], "1,3": ["-1"]}},
        },
        "primitive": "theta",
        "tags": ["tautological"],
    }


BUILTINS = {
    "E1_symplectic": _e1_config,
    "E1T_translation": _e1t_config,
    "E2_hyperkahler": _e2_config,
    "E3_heisenberg": _e3_config,
    "E4_torus4": _e4_config,
    "E5_curvature": _e5_config,
    "E6_tautological": _e6_config,
}


def builtin_config(name: str) -> dict:
    if name not in BUILTINS:
        raise CatalogError(f"unknown model {name!r}; builtins are {', '.join(BUILTINS)}")
    return BUILTINS[name]()


def builtin(name: str) -> Model:
    return from_config(builtin_config(name))


def load(path) -> Model:
    """Read a JSON model file."""
    text = Path(path).read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CatalogError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return from_config(cfg)


def dumps(model: Model) -> str:
    cfg = dict(model.config)
    cfg["schema"] = SCHEMA_VERSION
    text = json.dumps(cfg, indent=2, sort_keys=True)
    # innermost lists of scalars on one line
    text = re.sub(r"\[\s*([^\[\]{}]*?)\s*\]", lambda m: "[" + re.sub(r",\s+", ", ", m.group(1)) + "]", text)
    return text + "\n"


def save(model: Model, path) -> None:
    Path(path).write_text(dumps(model))


def resolve(name_or_path: str) -> Model:
    """A builtin name or the path of a model file."""
    if name_or_path in BUILTINS:
        return builtin(name_or_path)
    p = Path(name_or_path)
    if p.exists():
        return load(p)
    raise CatalogError(f"unknown model {name_or_path!r}; builtins are {', '.join(BUILTINS)}")
