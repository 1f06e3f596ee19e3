"""Differential forms with values in a vector bundle with connection.

Forms are stored densely.  An E-valued k-form evaluates to a jet with value
shape ``(N, r, d, ..., d)`` (k copies of d), fully antisymmetric in the form
axes, in the determinant convention: ``(dx0^dx1)(e0, e1) = 1``.  Mixed forms
carry an extra block of algebroid axes after the form axes, ``(N, r, d^p, m^q)``.

The interior product contracts the first slot, and for decomposable
multivectors ``i_{u^v} = i_v o i_u``.  Scalar forms are rank-1 forms.
"""

from __future__ import annotations

from itertools import combinations, permutations
from typing import Callable, Mapping, Sequence

import numpy as np

from .expr import SmoothFunction, as_function
from .geometry import (Connection, Metric, VectorField, christoffel, cotangent_connection,
                       lie_bracket)
from .jets import Jet2, jeinsum, perm_sign, shuffle_sum
from .report import Check, Report

_FORM_LETTERS = "cdefghkmopqrstuvw"


class FormError(Exception):
    pass


class Bundle:
    """A trivialised vector bundle of rank ``rank`` with a connection."""

    def __init__(self, dim: int, rank: int, connection: Connection | None = None, name: str = "E"):
        self.dim = dim
        self.rank = rank
        self.connection = connection or Connection.trivial(dim, rank)
        self.name = name
        if self.connection.rank != rank or self.connection.dim != dim:
            raise FormError("connection does not match the bundle")

    def end(self) -> "Bundle":
        """End(E) with the induced connection, fibre index (a, b) flattened to a*r + b."""
        r, A = self.rank, self.connection
        if getattr(A, "is_trivial", False):
            return Bundle(self.dim, r * r, None, f"End({self.name})")
        eye = np.eye(r)

        def evaluate(points, order):
            aj = A.jet(points, order)
            n = aj.shape[0]
            t = jeinsum("naci,eb->nabcei", aj, eye) - jeinsum("ac,nebi->nabcei", eye, aj)
            return t.reshape((n, r * r, r * r, self.dim))

        return Bundle(self.dim, r * r, Connection(self.dim, r * r, evaluate), f"End({self.name})")


def _check_indices(idx: Sequence[int], bound: int, what: str) -> tuple:
    idx = tuple(int(i) for i in idx)
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise FormError(f"{what} indices {idx} must be strictly increasing")
    if any(i < 0 or i >= bound for i in idx):
        raise FormError(f"{what} index out of range in {idx}")
    return idx


def dense_from_coeffs(coeffs: Mapping, points, order: int, dim: int, rank: int,
                      p: int, q: int = 0, arank: int = 0, var_dim: int | None = None) -> Jet2:
    """Dense antisymmetric jet from ``{(I, J): [r functions]}`` with increasing I, J.

    ``var_dim`` is the number of variables of the functions when it differs from
    the slot dimension ``dim`` (pulled back coefficients).
    """
    nv = dim if var_dim is None else var_dim
    points = np.asarray(points, dtype=float)
    batch = points.shape[:-1]
    nb = len(batch)
    shape = batch + (rank,) + (dim,) * p + (arank,) * q
    value = np.zeros(shape)
    grad = np.zeros(shape + (nv,)) if order >= 1 else None
    hess = np.zeros(shape + (nv, nv)) if order >= 2 else None
    lead = (slice(None),) * nb
    for (I, J), funcs in coeffs.items():
        for c, f in enumerate(funcs):
            if f.is_zero:
                continue
            j = f.jet(points, order)
            for pi in permutations(range(p)):
                si = perm_sign(pi)
                ii = tuple(I[t] for t in pi)
                for pj in permutations(range(q)):
                    s = si * perm_sign(pj)
                    idx = lead + (c,) + ii + tuple(J[t] for t in pj)
                    value[idx] = s * j.value
                    if grad is not None:
                        grad[idx] = s * j.grad
                    if hess is not None:
                        hess[idx] = s * j.hess
    return Jet2(value, grad, hess)


class MixedForm:
    """An E-valued form of bidegree (p, q): p tangent slots and q algebroid slots."""

    def __init__(self, dim: int, rank: int, p: int, q: int, arank: int,
                 evaluator: Callable[[np.ndarray, int], Jet2], coeffs: dict | None = None):
        self.dim, self.rank, self.p, self.q, self.arank = dim, rank, p, q, arank
        self._evaluator = evaluator
        self.coeffs = coeffs

    @classmethod
    def from_coeffs(cls, coeffs: Mapping, dim: int, rank: int, p: int, q: int, arank: int) -> "MixedForm":
        """``coeffs`` maps ``(I, J)`` (increasing tangent and algebroid indices)
        to ``rank`` expressions."""
        clean = {}
        for (I, J), funcs in coeffs.items():
            I = _check_indices(I, dim, "form")
            J = _check_indices(J, arank, "algebroid")
            if len(I) != p or len(J) != q:
                raise FormError(f"coefficient key {(I, J)} does not match bidegree ({p}, {q})")
            funcs = [as_function(f, dim) for f in funcs]
            if len(funcs) != rank:
                raise FormError(f"coefficient {(I, J)} needs {rank} entries, got {len(funcs)}")
            clean[(I, J)] = funcs
        if p > dim or q > arank:
            clean = {}

        def evaluate(points, order):
            return dense_from_coeffs(clean, points, order, dim, rank, p, q, arank)

        return cls(dim, rank, p, q, arank, evaluate, clean)

    @property
    def bidegree(self) -> tuple:
        return (self.p, self.q)

    def jet(self, points, order: int = 2) -> Jet2:
        return self._evaluator(np.asarray(points, dtype=float), order)

    def values(self, points) -> np.ndarray:
        return self.jet(points, 0).value

    def _like(self, evaluator, p=None, q=None, rank=None) -> "MixedForm":
        return MixedForm(self.dim, self.rank if rank is None else rank, self.p if p is None else p,
                         self.q if q is None else q, self.arank, evaluator)

    def __add__(self, other: "MixedForm") -> "MixedForm":
        _same_type(self, other)
        return self._like(lambda pts, o: self.jet(pts, o) + other.jet(pts, o))

    def __sub__(self, other: "MixedForm") -> "MixedForm":
        _same_type(self, other)
        return self._like(lambda pts, o: self.jet(pts, o) - other.jet(pts, o))

    def __neg__(self) -> "MixedForm":
        return self._like(lambda pts, o: -self.jet(pts, o))

    def scale(self, c: float) -> "MixedForm":
        return self._like(lambda pts, o: self.jet(pts, o) * c)


class EForm(MixedForm):
    """An E-valued k-form: a mixed form with no algebroid slots."""

    def __init__(self, dim: int, degree: int, rank: int,
                 evaluator: Callable[[np.ndarray, int], Jet2], coeffs: dict | None = None):
        super().__init__(dim, rank, degree, 0, 0, evaluator, coeffs)

    @classmethod
    def from_coeffs(cls, coeffs: Mapping, dim: int, degree: int, rank: int = 1) -> "EForm":
        """``coeffs`` maps increasing index tuples to ``rank`` expressions
        (a bare expression is accepted when ``rank == 1``)."""
        norm = {}
        for key, funcs in coeffs.items():
            if isinstance(funcs, (str, int, float, SmoothFunction)):
                funcs = [funcs]
            key = tuple(key) if not isinstance(key, int) else (key,)
            norm[(key, ())] = funcs
        mixed = MixedForm.from_coeffs(norm, dim, rank, degree, 0, 0)
        out = cls(dim, degree, rank, mixed._evaluator)
        out.coeffs = {k[0]: v for k, v in mixed.coeffs.items()}
        return out

    @classmethod
    def zero(cls, dim: int, degree: int, rank: int = 1) -> "EForm":
        def evaluate(points, order):
            n = np.asarray(points).shape[:-1]
            return Jet2.constant(np.zeros(n + (rank,) + (dim,) * degree), dim, order)

        return cls(dim, degree, rank, evaluate, {})

    @property
    def degree(self) -> int:
        return self.p

    def _like(self, evaluator, p=None, q=None, rank=None) -> "EForm":
        return EForm(self.dim, self.p if p is None else p, self.rank if rank is None else rank, evaluator)

    def component(self, c: int) -> "EForm":
        """The scalar form given by fibre component ``c``."""
        return EForm(self.dim, self.degree, 1, lambda pts, o: self.jet(pts, o)[:, c:c + 1])


def _same_type(a: MixedForm, b: MixedForm) -> None:
    if (a.dim, a.rank, a.p, a.q, a.arank) != (b.dim, b.rank, b.p, b.q, b.arank):
        raise FormError("forms of different type cannot be combined")


def letters(n: int, skip: str = "") -> str:
    pool = [c for c in _FORM_LETTERS if c not in skip]
    if n > len(pool):
        raise FormError("too many form indices")
    return "".join(pool[:n])


# -- pointwise evaluation -------------------------------------------------------

def contract_vectors(values: np.ndarray, vectors: Sequence[np.ndarray], start: int = 1) -> np.ndarray:
    """Contract value axes ``start, start+1, ...`` of a batched array with vectors.

    ``values`` has a leading batch axis; each vector has shape (N, d) or (d,).
    """
    out = values
    for v in vectors:
        v = np.asarray(v, dtype=float)
        if v.ndim == 1:
            v = np.broadcast_to(v, (out.shape[0],) + v.shape)
        out = np.moveaxis(out, start, -1)
        out = np.einsum("n...i,ni->n...", out, v)
    return out


def eval_form(phi: MixedForm, x, vectors: Sequence) -> np.ndarray:
    """phi_x(v_1, ..., v_k), returned as fibre components (r,) or (N, r)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x[None] if single else x
    if len(vectors) != phi.p:
        raise FormError(f"a {phi.p}-form takes {phi.p} vectors, got {len(vectors)}")
    vals = phi.jet(pts, 0).value
    out = contract_vectors(vals, vectors, start=2)
    return out[0] if single else out


# -- algebra --------------------------------------------------------------------

def wedge(eta: EForm, phi: MixedForm) -> MixedForm:
    """eta ^ phi with the scalar form eta on the left (shuffle signs)."""
    if eta.rank != 1 or eta.q != 0:
        raise FormError("the left factor of a wedge must be a scalar form")
    if eta.dim != phi.dim:
        raise FormError("forms on different charts")
    p, k = eta.p, phi.p
    I, J = letters(p), letters(k + phi.q, skip=letters(p))

    def evaluate(points, order):
        t = jeinsum(f"n{I},na{J}->na{I}{J}", eta.jet(points, order)[:, 0], phi.jet(points, order))
        return shuffle_sum(t, 2, p, k)

    return phi._like(evaluate, p=p + k)


def act(Phi: EForm, phi: MixedForm, base_rank: int) -> MixedForm:
    """Phi ^ phi where Phi is End(E)-valued (flattened fibre) acting on E-valued phi."""
    r = base_rank
    if Phi.rank != r * r or phi.rank != r:
        raise FormError("fibre ranks do not match")
    p, k = Phi.p, phi.p
    I, J = letters(p), letters(k + phi.q, skip=letters(p))

    def evaluate(points, order):
        P = Phi.jet(points, order)
        P = P.reshape((P.shape[0], r, r) + P.shape[2:])
        t = jeinsum(f"nab{I},nb{J}->na{I}{J}", P, phi.jet(points, order))
        return shuffle_sum(t, 2, p, k)

    return phi._like(evaluate, p=p + k)


def interior(X: VectorField, phi: MixedForm) -> MixedForm:
    """Contraction of X into the first tangent slot of phi."""
    if phi.p == 0:
        raise FormError("cannot contract a vector into a 0-form")
    rest = letters(phi.p - 1 + phi.q)

    def evaluate(points, order):
        return jeinsum(f"ni,nai{rest}->na{rest}", X.jet(points, order), phi.jet(points, order))

    return phi._like(evaluate, p=phi.p - 1)


def interior_multi(vectors: Sequence[VectorField], phi: MixedForm) -> MixedForm:
    """i_{X1 ^ ... ^ Xs} phi = i_{Xs} o ... o i_{X1} phi."""
    out = phi
    for X in vectors:
        out = interior(X, out)
    return out


# -- derivatives ------------------------------------------------------------------

def tangent_derivative(P: Jet2, order: int, connection: Jet2 | None, p: int,
                       acoeff: Jet2 | None = None, q: int = 0) -> Jet2:
    """Coefficient formula for the covariant exterior derivative on tangent slots.

    ``P`` is the form jet (order >= order + 1) with layout (N, r, d^p, m^q).
    ``connection`` is the fibre connection jet (N, r, r, d) or None when flat
    and trivial.  ``acoeff`` (N, m, m, d) is the algebroid connection acting on
    the q algebroid slots of a mixed form through the dual connection.
    """
    D = P.derivative().moveaxis(-1, 2).truncate(order)
    Pt = P.truncate(order)
    rest = letters(p + q)
    if connection is not None:
        D = D + jeinsum(f"nabi,nb{rest}->nai{rest}", connection, Pt)
    if acoeff is not None and q:
        tm, al = rest[:p], rest[p:]
        for s in range(q):
            src = al[:s] + "x" + al[s + 1:]
            D = D - jeinsum(f"nxyi,na{tm}{src}->nai{tm}{al}".replace("y", al[s]), acoeff, Pt)
    return shuffle_sum(D, 2, 1, p)


def _conn_or_none(bundle: Bundle, points, order):
    if getattr(bundle.connection, "is_trivial", False):
        return None
    return bundle.connection.jet(points, order)


def cov_ext_deriv(phi: EForm, bundle: Bundle) -> EForm:
    """d^nabla phi by the coefficient formula d phi^a + A^a_b ^ phi^b."""
    if phi.rank != bundle.rank or phi.dim != bundle.dim:
        raise FormError("form and bundle do not match")

    def evaluate(points, order):
        P = phi.jet(points, order + 1)
        return tangent_derivative(P, order, _conn_or_none(bundle, points, order), phi.p)

    return phi._like(evaluate, p=phi.p + 1)


def exterior_derivative(phi: EForm) -> EForm:
    """Flat exterior derivative applied fibrewise."""
    return cov_ext_deriv(phi, Bundle(phi.dim, phi.rank))


def covariant_derivative_section(bundle: Bundle, section_jet: Jet2, X_jet: Jet2, points, order: int) -> Jet2:
    """Jet of nabla_X s for a section jet of shape (N, r) (order >= order + 1)."""
    out = jeinsum("ni,nai->na", X_jet.truncate(order), section_jet.derivative())
    A = _conn_or_none(bundle, points, order)
    if A is not None:
        out = out + jeinsum("nabi,ni,nb->na", A, X_jet.truncate(order), section_jet.truncate(order))
    return out


def contract_fields(P: Jet2, fields: Sequence[Jet2]) -> Jet2:
    """phi(X1, ..., Xk) as a jet of shape (N, r) from a form jet and field jets."""
    out = P
    for X in fields:
        rest = letters(out.ndim - 3)
        out = jeinsum(f"ni,nai{rest}->na{rest}", X, out)
    return out


def cov_ext_deriv_invariant(phi: EForm, bundle: Bundle, fields: Sequence[VectorField], points) -> np.ndarray:
    """d^nabla phi (X_0, ..., X_k) by the invariant formula, values (N, r)."""
    k = phi.p
    if len(fields) != k + 1:
        raise FormError(f"need {k + 1} vector fields")
    points = np.asarray(points, dtype=float)
    P1 = phi.jet(points, 1)
    F1 = [X.jet(points, 1) for X in fields]
    total = 0.0
    for i in range(k + 1):
        others = [F1[j] for j in range(k + 1) if j != i]
        s = contract_fields(P1, others)
        term = covariant_derivative_section(bundle, s, F1[i], points, 0).value
        total = total + (-1) ** i * term
    P0 = P1.truncate(0)
    for i in range(k + 1):
        for j in range(i + 1, k + 1):
            br = lie_bracket(fields[i], fields[j]).jet(points, 0)
            others = [F1[t].truncate(0) for t in range(k + 1) if t not in (i, j)]
            total = total + (-1) ** (i + j) * contract_fields(P0, [br] + others).value
    return total


def curvature(bundle: Bundle) -> EForm:
    """R = dA + A ^ A as an End(E)-valued 2-form with flattened fibre (r*r)."""
    r, A = bundle.rank, bundle.connection

    def evaluate(points, order):
        aj = A.jet(points, order + 1)
        n = aj.shape[0]
        dA = aj.derivative().transpose([0, 1, 2, 4, 3])  # [n, a, b, i, j] = d_i A_j
        aa = jeinsum("naci,ncbj->nabij", aj.truncate(order), aj.truncate(order))
        t = dA.truncate(order) + aa
        t = t - t.transpose([0, 1, 2, 4, 3])
        return t.reshape((n, r * r, bundle.dim, bundle.dim))

    out = EForm(bundle.dim, 2, r * r, evaluate)
    out.base_rank = r
    return out


def curvature_action(bundle: Bundle, phi: MixedForm) -> MixedForm:
    """R ^ phi: the curvature acting on an E-valued form (equals d^nabla d^nabla phi)."""
    return act(curvature(bundle), phi, bundle.rank)


def cov_lie_derivative(X: VectorField, phi: EForm, bundle: Bundle) -> EForm:
    """L^nabla_X phi by the coefficient formula.

    (L_X phi)_J = X^i d_i phi_J + A(X) phi_J + sum over slots of d_{j_s} X^l phi_{.. l ..}.
    """
    k = phi.p
    J = letters(k)

    def evaluate(points, order):
        P = phi.jet(points, order + 1)
        xj = X.jet(points, order + 1)
        x0, P0 = xj.truncate(order), P.truncate(order)
        out = jeinsum(f"ni,na{J}i->na{J}", x0, P.derivative())
        A = _conn_or_none(bundle, points, order)
        if A is not None:
            out = out + jeinsum(f"nabi,ni,nb{J}->na{J}", A, x0, P0)
        dX = xj.derivative()  # [n, l, j] = d_j X^l
        for s in range(k):
            src = J[:s] + "l" + J[s + 1:]
            dst = J[:s] + "j" + J[s + 1:]
            out = out + jeinsum(f"nlj,na{src}->na{dst}", dX, P0)
        return out

    return phi._like(evaluate)


# -- Riemannian pieces ------------------------------------------------------------

def cotangent_bundle(g: Metric) -> Bundle:
    """T*M in the frame dx^l with the dual Levi-Civita connection."""
    return Bundle(g.dim, g.dim, cotangent_connection(g), "T*M")


def tilde_form(omega: EForm, g: Metric | None = None) -> EForm:
    """The T*M-valued n-form v_1..v_n -> i_{v_1 ^ ... ^ v_n} omega = omega(v_1, .., v_n, .)."""
    if omega.rank != 1:
        raise FormError("the tilde construction needs a scalar form")
    if omega.p < 1:
        raise FormError("the tilde construction needs a form of degree at least 1")

    def evaluate(points, order):
        return omega.jet(points, order)[:, 0].moveaxis(-1, 1)

    return EForm(omega.dim, omega.p - 1, omega.dim, evaluate)


def levi_civita_derivative(omega: EForm, g: Metric) -> Callable[[np.ndarray, int], Jet2]:
    """Evaluator for (nabla omega)[n, c, l, I] = (nabla_{d_l} omega)^c_I, Levi-Civita on forms."""
    k = omega.p
    I = letters(k)
    gamma = christoffel(g)

    def evaluate(points, order):
        P = omega.jet(points, order + 1)
        out = P.derivative().moveaxis(-1, 2).truncate(order)
        G = gamma(points, order)  # [n, m, l, i] = Gamma^m_{l i}
        P0 = P.truncate(order)
        for s in range(k):
            src = I[:s] + "x" + I[s + 1:]
            out = out - jeinsum(f"nxl{I[s]},na{src}->nal{I}", G, P0)
        return out

    return evaluate


def tilde_identity_residual(omega: EForm, g: Metric, points, vectors=None) -> float:
    """|d^g omega~ - (d omega + (-1)^n nabla^g omega)| with the last slot as the T*M pairing."""
    n = omega.p - 1
    lhs = cov_ext_deriv(tilde_form(omega, g), cotangent_bundle(g)).jet(points, 0).value  # [N, l, I]
    domega = exterior_derivative(omega).jet(points, 0).value[:, 0]  # [N, I, l]
    nab = levi_civita_derivative(omega, g)(points, 0).value[:, 0]  # [N, l, I]
    rhs = np.moveaxis(domega, -1, 1) + (-1) ** n * nab
    return _tensor_residual(lhs - rhs, vectors)


# -- random test data and identity checks ------------------------------------------

def random_polynomial(dim: int, rng: np.random.Generator, degree: int = 3, terms: int = 4,
                      trig: bool = True) -> str:
    """Source text of a random polynomial (optionally with a trig term)."""
    parts = [f"{rng.uniform(-1, 1):.3f}"]
    for _ in range(terms):
        c = rng.uniform(-1, 1)
        powers = rng.multinomial(int(rng.integers(1, degree + 1)), [1.0 / dim] * dim)
        mono = "*".join(f"x{i}^{e}" if e > 1 else f"x{i}" for i, e in enumerate(powers) if e)
        parts.append(f"{c:.3f}*{mono}")
    if trig:
        i = int(rng.integers(dim))
        parts.append(f"{rng.uniform(-1, 1):.3f}*{['sin', 'cos'][int(rng.integers(2))]}(x{i})")
    return " + ".join(parts).replace("+ -", "- ")


def random_vector_field(dim: int, rng: np.random.Generator, **kw) -> VectorField:
    return VectorField.from_exprs([random_polynomial(dim, rng, **kw) for _ in range(dim)], dim)


def random_form(dim: int, degree: int, rank: int, rng: np.random.Generator, **kw) -> EForm:
    coeffs = {I: [random_polynomial(dim, rng, **kw) for _ in range(rank)]
              for I in combinations(range(dim), degree)}
    return EForm.from_coeffs(coeffs, dim, degree, rank)


def _tensor_residual(values: np.ndarray, vectors=None, start: int = 2) -> float:
    """Max of |coefficients| and |values on random vectors| over all points."""
    values = np.asarray(values)
    if values.size == 0:
        return 0.0
    res = float(np.max(np.abs(values)))
    if vectors is not None:
        nslots = values.ndim - start
        on = contract_vectors(values, [vectors[:, s] for s in range(nslots)], start=start)
        res = max(res, float(np.max(np.abs(on))) if on.size else 0.0)
    return res


def random_vectors(rng: np.random.Generator, n: int, slots: int, dim: int) -> np.ndarray:
    """Random test vectors with entries uniform in [-1, 1], shape (n, slots, dim)."""
    return rng.uniform(-1.0, 1.0, size=(n, max(slots, 1), dim))


IDENTITY_ANCHORS = {
    "CARTAN1": "L^nabla_X = i_X d^nabla + d^nabla i_X",
    "CARTAN2": "i_[X,Y] = L^nabla_X i_Y - i_Y L^nabla_X",
    "CARTAN3": "L^nabla_X d^nabla phi = sum (-1)^(i+1) R(X, X_i) phi(..) + d^nabla L^nabla_X phi",
    "DSQUARED": "d^nabla d^nabla phi = R ^ phi",
    "BIANCHI": "d^End R = 0",
    "TILDE": "d^g omega~ = d omega + (-1)^n nabla^g omega",
}


def identity_tensor(tag: str, bundle: Bundle, phi: EForm, X: VectorField, Y: VectorField,
                    points, metric: Metric | None = None) -> np.ndarray:
    """Residual tensor (values at order 0) of one Cartan-type identity."""
    if tag == "CARTAN1":
        lhs = cov_lie_derivative(X, phi, bundle)
        rhs = cov_ext_deriv(interior(X, phi), bundle) if phi.p else None
        second = interior(X, cov_ext_deriv(phi, bundle))
        res = lhs.jet(points, 0).value - second.jet(points, 0).value
        if rhs is not None:
            res = res - rhs.jet(points, 0).value
        return res
    if tag == "CARTAN2":
        if phi.p == 0:
            return np.zeros((len(points), phi.rank))
        lhs = interior(lie_bracket(X, Y), phi)
        a = cov_lie_derivative(X, interior(Y, phi), bundle)
        b = interior(Y, cov_lie_derivative(X, phi, bundle))
        return lhs.jet(points, 0).value - a.jet(points, 0).value + b.jet(points, 0).value
    if tag == "CARTAN3":
        lhs = cov_lie_derivative(X, cov_ext_deriv(phi, bundle), bundle)
        iXR = EForm(bundle.dim, 1, bundle.rank ** 2,
                    lambda pts, o: jeinsum("ni,nai j->naj".replace(" ", ""), X.jet(pts, o),
                                           curvature(bundle).jet(pts, o)))
        rhs = act(iXR, phi, bundle.rank)
        rhs2 = cov_ext_deriv(cov_lie_derivative(X, phi, bundle), bundle)
        return lhs.jet(points, 0).value - rhs.jet(points, 0).value - rhs2.jet(points, 0).value
    if tag == "DSQUARED":
        dd = cov_ext_deriv(cov_ext_deriv(phi, bundle), bundle)
        return dd.jet(points, 0).value - curvature_action(bundle, phi).jet(points, 0).value
    if tag == "BIANCHI":
        return cov_ext_deriv(curvature(bundle), bundle.end()).jet(points, 0).value
    if tag == "TILDE":
        raise FormError("TILDE is evaluated by tilde_identity_residual")
    raise FormError(f"unknown identity {tag!r}")


def identity_residual(tag: str, model, samples: int = 200, seed: int = 42,
                      threshold: float = 1e-8) -> Report:
    """Max residual of a Cartan-type identity over random points, vectors and test data.

    Test forms of every degree with random polynomial-plus-trig coefficients
    are used together with two random vector fields; the model's own forms
    are included when they live on the model's bundle.
    """
    rng = np.random.default_rng(seed)
    chart, bundle = model.chart, model.bundle
    d, r = chart.dim, bundle.rank
    pts = chart.sample(samples, rng)
    X, Y = random_vector_field(d, rng), random_vector_field(d, rng)
    tests = [random_form(d, k, r, rng) for k in range(0, d + 1)]
    tests += [f for f in model.forms_on(bundle)]
    worst = 0.0
    detail = {}
    if tag == "TILDE":
        if model.metric is None:
            raise FormError("TILDE needs a metric")
        scal = [random_form(d, k, 1, rng) for k in range(1, d + 1)]
        scal += [f.component(c) for f in model.forms_on(bundle) if f.p >= 1 for c in range(f.rank)]
        for f in scal:
            vecs = random_vectors(rng, samples, f.p + 1, d)
            res = tilde_identity_residual(f, model.metric, pts, vecs)
            detail[f"degree {f.p}"] = max(detail.get(f"degree {f.p}", 0.0), res)
            worst = max(worst, res)
    elif tag == "BIANCHI":
        worst = _tensor_residual(identity_tensor(tag, bundle, tests[0], X, Y, pts),
                                 random_vectors(rng, samples, 3, d))
    else:
        for f in tests:
            res_t = identity_tensor(tag, bundle, f, X, Y, pts)
            vecs = random_vectors(rng, samples, res_t.ndim - 2, d)
            res = _tensor_residual(res_t, vecs)
            detail[f"degree {f.p}"] = max(detail.get(f"degree {f.p}", 0.0), res)
            worst = max(worst, res)
    rep = Report(model.name, "cartan", seed=seed, samples=samples)
    rep.checks.append(Check(tag, IDENTITY_ANCHORS[tag], worst, threshold, samples, seed, detail=detail))
    return rep
