"""Lie algebroids given in a frame, and calculus of algebroid-valued forms.

An algebroid of rank m over a d-dimensional chart is described by its anchor
``rho[a, i]`` (rho(e_a) = rho[a, i] d/dx^i), structure functions
``c[a, b, e]`` ([e_a, e_b] = c[a, b, e] e_e) and an optional connection on A
(``nabla_{d_i} e_a = Gamma[b, a, i] e_b``, trivial by default).

Mixed forms of bidegree (p, q) have jet layout (N, r, d^p, m^q).  All
algebroid operators are evaluated on constant frame sections; brackets of
general sections are expanded with the Leibniz rule.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .expr import as_function
from .forms import (Bundle, EForm, FormError, MixedForm, _conn_or_none, letters,
                    tangent_derivative)
from .geometry import Connection, VectorField, _component_jets
from .jets import Jet2, jeinsum, shuffle_sum, stack


class AlgebroidError(Exception):
    pass


class Algebroid:
    def __init__(self, dim: int, rank: int, anchor, structure, connection: Connection | None = None,
                 anchor_exprs=None, structure_exprs=None):
        self.dim, self.rank = dim, rank
        self._anchor = anchor
        self._structure = structure
        self.connection = connection or Connection.trivial(dim, rank)
        self.anchor_exprs = anchor_exprs
        self.structure_exprs = structure_exprs

    @classmethod
    def from_exprs(cls, anchor: Sequence[Sequence], structure, dim: int,
                   connection: Connection | None = None) -> "Algebroid":
        rank = len(anchor)
        rho = [[as_function(e, dim) for e in row] for row in anchor]
        if any(len(row) != dim for row in rho):
            raise AlgebroidError("anchor rows need one entry per coordinate")
        if structure is None:
            structure = [[["0"] * rank for _ in range(rank)] for _ in range(rank)]
        c = [[[as_function(e, dim) for e in row] for row in block] for block in structure]
        if len(c) != rank or any(len(b) != rank or any(len(r) != rank for r in b) for b in c):
            raise AlgebroidError("structure functions must have shape rank x rank x rank")
        for a in range(rank):
            for b in range(rank):
                for e in range(rank):
                    if a == b and not c[a][b][e].is_zero:
                        raise AlgebroidError(f"structure function c[{a}][{a}][{e}] must vanish")

        def anchor_eval(points, order):
            return stack([stack(_component_jets(r, points, order), -1) for r in rho], -2)

        def structure_eval(points, order):
            return stack([stack([stack(_component_jets(r, points, order), -1) for r in b], -2)
                          for b in c], -3)

        return cls(dim, rank, anchor_eval, structure_eval, connection, rho, c)

    @classmethod
    def tangent(cls, dim: int) -> "Algebroid":
        """TM with the identity anchor and vanishing structure functions."""
        return cls.from_exprs([["1" if i == a else "0" for i in range(dim)] for a in range(dim)], None, dim)

    def anchor(self, points, order: int = 2) -> Jet2:
        return self._anchor(np.asarray(points, dtype=float), order)

    def structure(self, points, order: int = 2) -> Jet2:
        return self._structure(np.asarray(points, dtype=float), order)

    def anchor_field(self, a: int) -> VectorField:
        return VectorField(self.dim, lambda pts, o: self.anchor(pts, o)[:, a])

    def anchor_of(self, alpha: "Section") -> VectorField:
        """rho(alpha) as a vector field."""
        return VectorField(self.dim, lambda pts, o: jeinsum("na,nai->ni", alpha.jet(pts, o), self.anchor(pts, o)))


class Section:
    """A section alpha = alpha^a e_a of the algebroid; ``jet`` has shape (N, m)."""

    def __init__(self, dim: int, rank: int, evaluator, exprs=None):
        self.dim, self.rank = dim, rank
        self._evaluator = evaluator
        self.exprs = exprs

    @classmethod
    def from_exprs(cls, exprs: Sequence, dim: int) -> "Section":
        funcs = [as_function(e, dim) for e in exprs]
        return cls(dim, len(funcs), lambda pts, o: stack(_component_jets(funcs, pts, o), -1), funcs)

    @classmethod
    def frame(cls, a: int, rank: int, dim: int) -> "Section":
        return cls.from_exprs(["1" if b == a else "0" for b in range(rank)], dim)

    @classmethod
    def constant(cls, coeffs: Sequence[float], dim: int) -> "Section":
        return cls.from_exprs([repr(float(c)) if c >= 0 else f"-{repr(-float(c))}" for c in coeffs], dim)

    def jet(self, points, order: int = 2) -> Jet2:
        return self._evaluator(np.asarray(points, dtype=float), order)


def section_bracket(alg: Algebroid, alpha: Section, beta: Section) -> Section:
    """[alpha, beta] = alpha^a beta^b c_ab + rho(alpha)(beta) - rho(beta)(alpha)."""

    def evaluate(points, order):
        aj, bj = alpha.jet(points, order + 1), beta.jet(points, order + 1)
        rho = alg.anchor(points, order)
        a0, b0 = aj.truncate(order), bj.truncate(order)
        out = jeinsum("na,nb,nabe->ne", a0, b0, alg.structure(points, order))
        out = out + jeinsum("na,nai,nei->ne", a0, rho, bj.derivative())
        out = out - jeinsum("nb,nbi,nei->ne", b0, rho, aj.derivative())
        return out

    return Section(alg.dim, alg.rank, evaluate)


def validate(alg: Algebroid, points) -> dict:
    """Residuals of the algebroid axioms on the frame at the given points.

    ``anchor``: rho([e_a, e_b]) - [rho e_a, rho e_b].
    ``jacobi``: cyclic sum of [[e_a, e_b], e_c] with the anchor-derivative
    terms from the Leibniz rule.
    ``antisymmetry``: c_ab + c_ba.
    """
    points = np.asarray(points, dtype=float)
    rho = alg.anchor(points, 1)
    c = alg.structure(points, 1)
    rv, cv = rho.value, c.value
    drho = rho.grad  # [n, a, k, i] = d_i rho^k_a
    br = np.einsum("nai,nbki->nabk", rv, drho) - np.einsum("nbi,naki->nabk", rv, drho)
    anchor_res = np.einsum("nabe,nek->nabk", cv, rv) - br
    # [[e_a, e_b], e_c] = c_ab^d c_dc^f e_f - rho_c(c_ab^f) e_f
    dc = c.grad  # [n, a, b, f, i]
    nested = np.einsum("nabd,ndcf->nabcf", cv, cv) - np.einsum("nci,nabfi->nabcf", rv, dc)
    jac = nested + np.transpose(nested, (0, 2, 3, 1, 4)) + np.transpose(nested, (0, 3, 1, 2, 4))
    anti = cv + np.transpose(cv, (0, 2, 1, 3))
    return {
        "anchor": float(np.max(np.abs(anchor_res))) if anchor_res.size else 0.0,
        "jacobi": float(np.max(np.abs(jac))) if jac.size else 0.0,
        "antisymmetry": float(np.max(np.abs(anti))) if anti.size else 0.0,
    }


# -- algebroid exterior calculus -------------------------------------------------------

def _mixed(dim, rank, p, q, m, evaluator) -> MixedForm:
    if q == 0:
        return EForm(dim, p, rank, evaluator)
    return MixedForm(dim, rank, p, q, m, evaluator)


def _algebroid_side(P: Jet2, G: Jet2, S: Jet2, p: int, q: int) -> Jet2:
    """Combine the derivative part G (new algebroid axis at 2+p) with the
    bracket part of the algebroid differential on q algebroid slots."""
    out = shuffle_sum(G, 2 + p, 1, q)
    if q >= 1:
        tm = letters(p)
        rest = letters(q - 1, skip=tm)
        U = jeinsum(f"nxye,na{tm}e{rest}->na{tm}xy{rest}", S, P)
        out = out - shuffle_sum(U, 2 + p, 2, q - 1)
    return out


def mixed_eth(phi: MixedForm, alg: Algebroid, bundle: Bundle | None = None) -> MixedForm:
    """The algebroid differential of (p, q)-forms built from the A-connection on
    Lambda^p T*M (x) E:  (u_alpha eta)(X..) = nabla^E_{rho alpha}(eta(X..))
    - sum eta(.., u^TM_alpha X_i, ..), with
    u^TM_alpha X = rho(nabla^A_X alpha) + [rho alpha, X].

    For p = 0 this is the differential induced by u_alpha = nabla^E_{rho(alpha)}.
    """
    bundle = bundle or Bundle(phi.dim, phi.rank)
    p, q, m = phi.p, phi.q, alg.rank
    if phi.arank not in (0, m) or (q and phi.arank != m):
        raise FormError("form and algebroid ranks do not match")
    J = letters(p)
    B = letters(q, skip=J)

    def evaluate(points, order):
        P = phi.jet(points, order + 1)
        P0 = P.truncate(order)
        rj = alg.anchor(points, order + 1)
        r0 = rj.truncate(order)
        G = jeinsum(f"nxi,na{J}{B}i->na{J}x{B}", r0, P.derivative())
        A = _conn_or_none(bundle, points, order)
        if A is not None:
            G = G + jeinsum(f"nxi,nabi,nb{J}{B}->na{J}x{B}", r0, A, P0)
        if p:
            # W[n, l, a, j] = Gamma^b_{a j} rho^l_b - d_j rho^l_a
            W = -rj.derivative().transpose([0, 2, 1, 3])
            if not getattr(alg.connection, "is_trivial", False):
                W = W + jeinsum("nbaj,nbl->nlaj", alg.connection.jet(points, order), r0)
            for s in range(p):
                src = J[:s] + "l" + J[s + 1:]
                G = G - jeinsum(f"nlx{J[s]},na{src}{B}->na{J}x{B}", W, P0)
        S = alg.structure(points, order)
        return _algebroid_side(P0, G, S, p, q)

    return MixedForm(phi.dim, phi.rank, p, q + 1, m, evaluate)


def a_cov_ext_deriv(phi: MixedForm, alg: Algebroid, bundle: Bundle | None = None) -> MixedForm:
    """Differential of E-valued algebroid forms (bidegree (0, q))."""
    if phi.p != 0:
        raise FormError("expected an E-valued algebroid form (no tangent slots)")
    return mixed_eth(phi, alg, bundle)


def algebroid_diff(theta: MixedForm, alg: Algebroid) -> MixedForm:
    """The algebroid differential of (fibrewise) scalar algebroid forms."""
    if theta.p != 0:
        raise FormError("expected an algebroid form (no tangent slots)")
    return mixed_eth(theta, alg, Bundle(theta.dim, theta.rank))


def mixed_d(phi: MixedForm, alg: Algebroid, bundle: Bundle) -> MixedForm:
    """Covariant exterior derivative on tangent slots using the induced
    connection on Hom(Lambda^q A, E).  For q = 0 this is ``cov_ext_deriv``."""
    p, q = phi.p, phi.q

    def evaluate(points, order):
        P = phi.jet(points, order + 1)
        ac = None
        if q and not getattr(alg.connection, "is_trivial", False):
            ac = alg.connection.jet(points, order)
        return tangent_derivative(P, order, _conn_or_none(bundle, points, order), p, ac, q)

    return _mixed(phi.dim, phi.rank, p + 1, q, alg.rank, evaluate)


def iota_rho(k: int, phi: MixedForm, alg: Algebroid) -> MixedForm:
    """(i^k_rho phi)(alpha_1..alpha_k) = i_{rho(alpha_1) ^ ... ^ rho(alpha_k)} phi."""
    if phi.q != 0:
        raise FormError("iota_rho acts on E-valued forms")
    if k > phi.p:
        raise FormError(f"cannot insert {k} anchors into a {phi.p}-form")
    p = phi.p - k
    inserted = letters(k)
    J = letters(p, skip=inserted)
    alpha = "ABCDEFGH"[:k]

    def evaluate(points, order):
        P = phi.jet(points, order)
        rho = alg.anchor(points, order)
        subs = ",".join(f"n{alpha[t]}{inserted[t]}" for t in range(k))
        spec = f"na{inserted}{J}" + ("," + subs if k else "") + f"->na{J}{alpha}"
        return jeinsum(spec, P, *([rho] * k))

    return _mixed(phi.dim, phi.rank, p, k, alg.rank, evaluate)


def a_curvature(alg: Algebroid, bundle: Bundle) -> MixedForm:
    """R(alpha, beta) = u_alpha u_beta - u_beta u_alpha - u_[alpha,beta], u_alpha = nabla^E_{rho alpha}.

    Returned as an End(E)-valued (0, 2)-form with flattened fibre (r*r).
    """
    r, m = bundle.rank, alg.rank

    def evaluate(points, order):
        rj = alg.anchor(points, order + 1)
        Aj = bundle.connection.jet(points, order + 1)
        Bj = jeinsum("nai,ncbi->ncba", rj, Aj)  # B[c, b, a] = rho^i_a A^c_{b,i}
        B0 = Bj.truncate(order)
        r0 = rj.truncate(order)
        dB = jeinsum("nxi,ncbyi->ncbxy", r0, Bj.derivative())  # rho_x(B[c, b, y])
        t = dB + jeinsum("ncex,neby->ncbxy", B0, B0)
        t = t - t.transpose([0, 1, 2, 4, 3])
        t = t - jeinsum("nxyf,ncbf->ncbxy", alg.structure(points, order), B0)
        return t.reshape((t.shape[0], r * r, m, m))

    return MixedForm(bundle.dim, r * r, 0, 2, m, evaluate)


def a_act(Phi: MixedForm, phi: MixedForm, base_rank: int) -> MixedForm:
    """An End(E)-valued algebroid form acting on an E-valued algebroid form (wedge on A slots)."""
    r = base_rank
    k, l = Phi.q, phi.q
    I, J = letters(k), letters(l, skip=letters(k))

    def evaluate(points, order):
        P = Phi.jet(points, order)
        P = P.reshape((P.shape[0], r, r) + P.shape[2:])
        t = jeinsum(f"nab{I},nb{J}->na{I}{J}", P, phi.jet(points, order))
        return shuffle_sum(t, 2, k, l)

    return MixedForm(phi.dim, r, 0, k + l, phi.arank, evaluate)


def a_wedge(theta: MixedForm, tau: MixedForm) -> MixedForm:
    """theta ^ tau for a scalar algebroid form theta (wedge on algebroid slots)."""
    if theta.rank != 1 or theta.p or tau.p:
        raise FormError("a_wedge needs a scalar algebroid form and an algebroid form")
    k, l = theta.q, tau.q
    I, J = letters(k), letters(l, skip=letters(k))

    def evaluate(points, order):
        t = jeinsum(f"n{I},na{J}->na{I}{J}", theta.jet(points, order)[:, 0], tau.jet(points, order))
        return shuffle_sum(t, 2, k, l)

    return MixedForm(tau.dim, tau.rank, 0, k + l, tau.arank, evaluate)


def pair_section(nu: MixedForm, alpha: Section) -> MixedForm:
    """nu^alpha: contraction of a (p, 1)-form with an algebroid section."""
    if nu.q != 1:
        raise FormError("pair_section needs a form with exactly one algebroid slot")
    J = letters(nu.p)

    def evaluate(points, order):
        return jeinsum(f"nz{J}a,na->nz{J}", nu.jet(points, order), alpha.jet(points, order))

    return EForm(nu.dim, nu.p, nu.rank, evaluate)


def nabla_A_section(alg: Algebroid, alpha: Section):
    """Evaluator for (nabla^A alpha)[n, a, i] = d_i alpha^a + Gamma[a, b, i] alpha^b."""

    def evaluate(points, order):
        aj = alpha.jet(points, order + 1)
        out = aj.derivative()
        if not getattr(alg.connection, "is_trivial", False):
            out = out + jeinsum("nabi,nb->nai", alg.connection.jet(points, order), aj.truncate(order))
        return out

    return evaluate
