"""Flows, zero sets of momentum sections and the reduced forms they induce.

Flows use classical fourth-order Runge-Kutta with a fixed step no larger than
``H_MAX`` and integrate the variational equation for dF alongside, so pulled
back forms can be compared with the original to high accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .algebroid import Algebroid
from .expr import SmoothFunction
from .forms import EForm, dense_from_coeffs, letters
from .geometry import Chart, VectorField
from .jets import Jet2, jeinsum, stack
from .plectic import MomentumSection, PlecticStructure

H_MAX = 1e-3
NULL_RTOL = 1e-10


class ReductionError(Exception):
    pass


class FlowExitError(ReductionError):
    """A trajectory left the chart box through a non-periodic coordinate."""


class NotInvariant(ReductionError):
    pass


# -- flows ---------------------------------------------------------------------------------

@dataclass
class FlowResult:
    points: np.ndarray  # (N, d)
    jacobian: np.ndarray | None  # (N, d, d), [n, i, k] = d F^i / d x^k


def flow(X: VectorField, x0, t, chart: Chart | None = None, h: float = H_MAX,
         jacobian: bool = False) -> FlowResult:
    """Time-t flow of X from x0 (a point or an (N, d) batch; t scalar or per point)."""
    x = np.array(x0, dtype=float)
    single = x.ndim == 1
    x = x[None] if single else x
    n, d = x.shape
    t = np.broadcast_to(np.asarray(t, dtype=float), (n,))
    steps = max(1, int(np.ceil(np.max(np.abs(t)) / h))) if np.any(t) else 0
    dt = t / max(steps, 1)
    J = np.broadcast_to(np.eye(d), (n, d, d)).copy() if jacobian else None

    def rhs(y, Jm):
        jet = X.jet(y, 1 if jacobian else 0)
        v = jet.value * dt[:, None]
        if Jm is None:
            return v, None
        return v, np.einsum("nik,nkj->nij", jet.grad, Jm) * dt[:, None, None]

    for _ in range(steps):
        k1, l1 = rhs(x, J)
        k2, l2 = rhs(x + 0.5 * k1, None if J is None else J + 0.5 * l1)
        k3, l3 = rhs(x + 0.5 * k2, None if J is None else J + 0.5 * l2)
        k4, l4 = rhs(x + k3, None if J is None else J + l3)
        x = x + (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        if J is not None:
            J = J + (l1 + 2 * l2 + 2 * l3 + l4) / 6.0
        if chart is not None and not np.all(chart.contains(x)):
            raise FlowExitError("trajectory left the chart box")
    if chart is not None:
        x = chart.wrap(x)
    if single:
        return FlowResult(x[0], None if J is None else J[0])
    return FlowResult(x, J)


def anchored_field(alg: Algebroid, coeffs: np.ndarray) -> VectorField:
    """The field sum_a coeffs[n, a] rho(e_a), with constant per-point coefficients."""
    coeffs = np.asarray(coeffs, dtype=float)
    return VectorField(alg.dim, lambda pts, o: jeinsum("na,nai->ni", coeffs, alg.anchor(pts, o)))


@dataclass
class FlowWord:
    """A composition of anchored flows: step l flows sum_a coeffs[l][n, a] rho(e_a) for times[l][n]."""

    coeffs: list
    times: list

    def apply(self, alg: Algebroid, z, chart: Chart | None = None, jacobian: bool = True) -> FlowResult:
        z = np.asarray(z, dtype=float)
        J = np.broadcast_to(np.eye(z.shape[-1]), z.shape[:-1] + (z.shape[-1],) * 2).copy()
        for c, t in zip(self.coeffs, self.times):
            res = flow(anchored_field(alg, c), z, t, chart, jacobian=jacobian)
            z = res.points
            if jacobian:
                J = np.einsum("nik,nkj->nij", res.jacobian, J)
        return FlowResult(z, J if jacobian else None)


# -- zero set of the momentum section ------------------------------------------------------

def momentum_values(mu: MomentumSection, points, order: int = 0) -> Jet2:
    """All components of mu, flattened to shape (N, K)."""
    pieces = []
    for c in mu.components:
        j = c.jet(points, order)
        pieces.append(j.reshape((j.shape[0], -1)))
    if len(pieces) == 1:
        return pieces[0]
    parts = [np.concatenate([p.parts()[k] for p in pieces], axis=1) for k in range(min(p.order for p in pieces) + 1)]
    return Jet2(*parts)


def _nullspace(M: np.ndarray, rtol: float = NULL_RTOL) -> np.ndarray:
    """Orthonormal basis (columns) of the null space of a single matrix."""
    if M.size == 0:
        return np.eye(M.shape[1])
    u, s, vt = np.linalg.svd(M)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > rtol * max(smax, 1e-300))) if smax > 0 else 0
    return vt[rank:].T.copy()


@dataclass
class Membership:
    member: np.ndarray  # (N,) bool
    residual: np.ndarray  # (N,) max |mu|
    tangent: list  # per point, (d, k) orthonormal basis of the tangent space


def zero_set_membership(mu: MomentumSection, z, tol: float = 1e-10,
                        expected_dim: int | None = None) -> Membership:
    """Is mu(z) = 0, and a tangent basis of the zero set from the kernel of d mu.

    When ``expected_dim`` is 0 the zero set is treated as isolated points.
    """
    z = np.atleast_2d(np.asarray(z, dtype=float))
    jet = momentum_values(mu, z, 1)
    res = np.max(np.abs(jet.value), axis=1) if jet.value.size else np.zeros(len(z))
    tangents = []
    for i in range(len(z)):
        if expected_dim == 0:
            tangents.append(np.zeros((z.shape[1], 0)))
            continue
        basis = _nullspace(jet.grad[i])
        if expected_dim is not None and basis.shape[1] != expected_dim:
            raise ReductionError(
                f"zero set is not regular at {z[i].tolist()}: kernel dimension {basis.shape[1]}"
                f" but {expected_dim} expected")
        tangents.append(basis)
    return Membership(res <= tol, res, tangents)


def anchors_at(alg: Algebroid, z) -> np.ndarray:
    """rho(e_a) at the points z, shape (N, m, d)."""
    return alg.anchor(np.atleast_2d(z), 0).value


def transversality_check(alg: Algebroid, mu: MomentumSection, z, expected_dim: int | None = None,
                         tol: float = 1e-8) -> dict:
    """Whether T_z M_mu + rho(A_z) = T_z M at each point."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    mem = zero_set_membership(mu, z, tol, expected_dim)
    if not np.all(mem.member):
        bad = int(np.argmax(mem.residual))
        raise ReductionError(f"{z[bad].tolist()} is not on the zero set (|mu| = {mem.residual[bad]:.3e})")
    rho = anchors_at(alg, z)
    ranks = []
    for i in range(len(z)):
        span = np.concatenate([mem.tangent[i], rho[i].T], axis=1)
        ranks.append(int(np.linalg.matrix_rank(span, tol=1e-10 * max(1.0, np.abs(span).max(initial=0.0)))))
    d = z.shape[1]
    return {"satisfied": all(r == d for r in ranks), "rank": min(ranks), "dim": d}


def restricted_directions(alg: Algebroid, tangent: np.ndarray, z) -> np.ndarray:
    """Basis (columns, in R^m) of A_mu at z: frame combinations whose anchor is tangent."""
    rho = anchors_at(alg, z)[0]  # (m, d)
    d = rho.shape[1]
    normal = _nullspace(tangent.T) if tangent.shape[1] else np.eye(d)
    if normal.shape[1] == 0:
        return np.eye(alg.rank)
    return _nullspace(normal.T @ rho.T)


# -- orbit sampling ------------------------------------------------------------------------

@dataclass
class OrbitSample:
    start: np.ndarray
    endpoints: np.ndarray
    jacobians: np.ndarray
    word: FlowWord
    violations: list = field(default_factory=list)  # indices whose endpoint left M_mu
    residual: float = 0.0


def random_word(alg: Algebroid, z, mode: str, rng: np.random.Generator, length: int = 2,
                tmax: float = 0.5, tangents=None) -> FlowWord:
    """A random flow word from each point of z (one word per point).

    mode ``P0rho``: each step flows a single anchored frame field.
    mode ``Pmu``: each step flows a random combination in A_mu (taken at the start point).
    """
    z = np.atleast_2d(z)
    n, m = len(z), alg.rank
    coeffs, times = [], []
    allowed = None
    if mode == "Pmu":
        if tangents is None:
            raise ReductionError("Pmu words need tangent bases of the zero set")
        allowed = [restricted_directions(alg, tangents[i], z[i:i + 1]) for i in range(n)]
    elif mode != "P0rho":
        raise ReductionError(f"unknown orbit mode {mode!r}")
    for _ in range(length):
        c = np.zeros((n, m))
        for i in range(n):
            if allowed is None:
                c[i, rng.integers(m)] = 1.0
            elif allowed[i].shape[1]:
                w = allowed[i] @ rng.normal(size=allowed[i].shape[1])
                c[i] = w / max(np.linalg.norm(w), 1e-300)
        coeffs.append(c)
        times.append(rng.uniform(-tmax, tmax, size=n))
    return FlowWord(coeffs, times)


def orbit_sample(alg: Algebroid, mu: MomentumSection, z, mode: str, seed: int, chart: Chart | None = None,
                 length: int = 2, tmax: float = 0.5, tol: float = 1e-8,
                 expected_dim: int | None = None) -> OrbitSample:
    """Flow each start point along a random word and re-check membership in M_mu."""
    rng = np.random.default_rng(seed)
    z = np.atleast_2d(np.asarray(z, dtype=float))
    tangents = zero_set_membership(mu, z, np.inf, expected_dim).tangent if mode == "Pmu" else None
    word = random_word(alg, z, mode, rng, length, tmax, tangents)
    res = word.apply(alg, z, chart)
    vals = momentum_values(mu, res.points).value
    err = np.max(np.abs(vals), axis=1) if vals.size else np.zeros(len(z))
    bad = [int(i) for i in np.nonzero(err > tol)[0]]
    return OrbitSample(z, res.points, res.jacobian, word, bad, float(err.max(initial=0.0)))


# -- pullbacks and reduced forms -------------------------------------------------------------

def pulled_back_coefficients(form: EForm, points, jac: np.ndarray, start) -> tuple:
    """(F*form)_start and form_start as value arrays, given F(start) = points and dF = jac."""
    k = form.p
    at_end = form.jet(points, 0).value
    I = letters(k)
    K = letters(k, skip=I)
    spec = f"na{I}," + ",".join(f"n{I[s]}{K[s]}" for s in range(k)) + f"->na{K}" if k else "na->na"
    pulled = np.einsum(spec, at_end, *([jac] * k)) if k else at_end
    return pulled, form.jet(start, 0).value


def invariance_residual(form: EForm, word: FlowWord, alg: Algebroid, z, chart: Chart | None = None) -> float:
    """max |F*form - form| (coefficients) at z for F the flow word."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    res = word.apply(alg, z, chart)
    pulled, orig = pulled_back_coefficients(form, res.points, res.jacobian, z)
    return float(np.max(np.abs(pulled - orig))) if pulled.size else 0.0


def field_invariance_residual(form: EForm, X: VectorField, t: float, z, chart: Chart | None = None) -> float:
    """max |F_t* form - form| for the time-t flow of a single field."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    res = flow(X, z, t, chart, jacobian=True)
    pulled, orig = pulled_back_coefficients(form, res.points, res.jacobian, z)
    return float(np.max(np.abs(pulled - orig))) if pulled.size else 0.0


def reduced_form(ps: PlecticStructure, z, vectors: Sequence) -> np.ndarray:
    """omega_z(u_1, ..., u_{n+1}) for tangent vectors of M_mu: the reduced form on representatives."""
    from .forms import eval_form
    return eval_form(ps.omega, z, vectors)


def second_representative(alg: Algebroid, mu: MomentumSection, z, vectors: Sequence, rng: np.random.Generator,
                          chart: Chart | None = None, expected_dim: int | None = None,
                          length: int = 2, tmax: float = 0.5) -> tuple:
    """Move (z, u_i) along a random P_mu word and add random anchored A_mu directions."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    mem = zero_set_membership(mu, z, np.inf, expected_dim)
    word = random_word(alg, z, "Pmu", rng, length, tmax, mem.tangent)
    res = word.apply(alg, z, chart)
    z2 = res.points
    mem2 = zero_set_membership(mu, z2, np.inf, expected_dim)
    rho2 = anchors_at(alg, z2)
    out = []
    for v in vectors:
        v = np.atleast_2d(v)
        moved = np.einsum("nik,nk->ni", res.jacobian, v)
        for i in range(len(z2)):
            dirs = restricted_directions(alg, mem2.tangent[i], z2[i:i + 1])
            if dirs.shape[1]:
                h = dirs @ rng.uniform(-1, 1, size=dirs.shape[1])
                moved[i] = moved[i] + h @ rho2[i]
        out.append(moved)
    return z2, out


def random_tangent_vectors(tangents: list, count: int, rng: np.random.Generator) -> list:
    vecs = []
    for _ in range(count):
        vecs.append(np.array([T @ rng.uniform(-1, 1, size=T.shape[1]) if T.shape[1] else np.zeros(T.shape[0])
                              for T in tangents]))
    return vecs


def pullback_form(form: EForm, maps: Sequence[SmoothFunction]) -> EForm:
    """Pullback of a catalog form (with expression coefficients) along y -> (maps[i](y))."""
    if form.coeffs is None:
        raise ReductionError("only forms with expression coefficients can be pulled back")
    if len(maps) != form.dim:
        raise ReductionError("the map must have one component per coordinate")
    qdim = maps[0].dim
    k = form.p
    composed = {(I, ()): [f.compose(maps) for f in funcs] for I, funcs in form.coeffs.items()}
    I = letters(k)
    K = letters(k, skip=I)

    def evaluate(points, order):
        base = dense_from_coeffs(composed, points, order, form.dim, form.rank, k, var_dim=qdim)
        jac = stack([m.jet(points, order + 1).derivative() for m in maps], axis=1)  # [n, i, k]
        if k == 0:
            return base
        spec = f"na{I}," + ",".join(f"n{I[s]}{K[s]}" for s in range(k)) + f"->na{K}"
        return jeinsum(spec, base, *([jac.truncate(order)] * k))

    return EForm(qdim, k, form.rank, evaluate)


def projection_jacobian(projection: Sequence[SmoothFunction], z) -> np.ndarray:
    """d pi at z, shape (N, k, d)."""
    return np.stack([f.jet(np.atleast_2d(z), 1).grad for f in projection], axis=1)


def pullback_relation_residual(ps: PlecticStructure, reduced: EForm, projection: Sequence[SmoothFunction],
                               z, vectors: Sequence) -> float:
    """|omega_red(pi z)(d pi u, d pi v) - omega_z(u, v)| for tangent vectors of M_mu."""
    from .forms import eval_form
    z = np.atleast_2d(np.asarray(z, dtype=float))
    y = np.stack([f(z) for f in projection], axis=1)
    dpi = projection_jacobian(projection, z)
    lhs = eval_form(reduced, y, [np.einsum("nkd,nd->nk", dpi, np.atleast_2d(v)) for v in vectors])
    rhs = eval_form(ps.omega, z, vectors)
    return float(np.max(np.abs(lhs - rhs)))


def reduced_connection_eval(section: Sequence[SmoothFunction], z, u, connection=None) -> np.ndarray:
    """(nabla_u s)(z) for an invariant section s restricted to M_mu; values (N, r)."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    u = np.atleast_2d(np.asarray(u, dtype=float))
    jets = [f.jet(z, 1) for f in section]
    out = np.stack([np.einsum("ni,ni->n", j.grad, u) for j in jets], axis=1)
    if connection is not None and not getattr(connection, "is_trivial", False):
        vals = np.stack([j.value for j in jets], axis=1)
        out = out + np.einsum("nabi,ni,nb->na", connection.jet(z, 0).value, u, vals)
    return out


def section_invariance(section: Sequence[SmoothFunction], alg: Algebroid, mu: MomentumSection, z,
                       seed: int, chart: Chart | None = None, expected_dim: int | None = None,
                       words: int = 3) -> float:
    """max |s(F z) - s(z)| over random P_mu words from each point."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    rng = np.random.default_rng(seed)
    tangents = zero_set_membership(mu, z, np.inf, expected_dim).tangent
    worst = 0.0
    base = np.stack([f(z) for f in section], axis=1)
    for _ in range(words):
        word = random_word(alg, z, "Pmu", rng, 2, 0.5, tangents)
        end = word.apply(alg, z, chart, jacobian=False).points
        moved = np.stack([f(end) for f in section], axis=1)
        worst = max(worst, float(np.max(np.abs(moved - base))))
    return worst


def omega_orthogonal(ps: PlecticStructure, W, x) -> np.ndarray:
    """Basis (columns) of W^omega = {u : i_w i_u omega = 0 for all w in W} at a single point x.

    ``W`` holds spanning vectors as columns, shape (d, k).
    """
    x = np.asarray(x, dtype=float).reshape(1, -1)
    W = np.asarray(W, dtype=float).reshape(ps.dim, -1)
    om = ps.omega.jet(x, 0).value[0]  # (r, d, d, ...)
    # rows: (fibre, w_j, remaining slots); columns: u
    M = np.einsum("ci j...,jk->ck...i".replace(" ", ""), om, W).reshape(-1, ps.dim)
    return _nullspace(M)


def subspace_lemma_check(ps: PlecticStructure, alg: Algebroid, mu: MomentumSection, z, u) -> dict:
    """For u in T_z M_mu: nabla_u mu (induced connection on A* (x) E) and
    omega_z(u, rho(e_a)) must both vanish."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    u = np.atleast_2d(np.asarray(u, dtype=float))
    top = mu.top()
    jet = top.jet(z, 1)  # (N, r, d^p, m)
    grad = np.einsum("n...i,ni->n...", jet.grad, u)
    if not getattr(ps.bundle.connection, "is_trivial", False):
        A = ps.bundle.connection.jet(z, 0).value
        grad = grad + np.einsum("nabi,ni,nb...->na...", A, u, jet.value)
    if not getattr(alg.connection, "is_trivial", False):
        G = alg.connection.jet(z, 0).value  # [n, e, a, i]
        grad = grad - np.einsum("neai,ni,n...e->n...a", G, u, jet.value)
    om = ps.omega.jet(z, 0).value  # (N, r, d, d, ...)
    rho = anchors_at(alg, z)
    pair = np.einsum("nci j...,ni,naj->nca...".replace(" ", ""), om, u, rho)
    return {"nabla_mu": float(np.max(np.abs(grad))), "omega_pairing": float(np.max(np.abs(pair)))}


def reduced_connection(section: Sequence[SmoothFunction], alg: Algebroid, mu: MomentumSection, z, u,
                       seed: int = 0, chart: Chart | None = None, expected_dim: int | None = None,
                       connection=None, tol: float = 1e-8) -> np.ndarray:
    """Reduced connection applied to s at z in direction u, after checking that s is orbit invariant.

    Raises NotInvariant when s changes along sampled orbit flows by more than ``tol``.
    """
    res = section_invariance(section, alg, mu, z, seed, chart, expected_dim)
    if res > tol:
        raise NotInvariant(f"section is not invariant along orbits (max change {res:.3e} > {tol:.1e})")
    return reduced_connection_eval(section, z, u, connection)
