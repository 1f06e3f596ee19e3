"""Vector-valued n-plectic structures, pseudo-Hamiltonian fields and momentum sections.

An E-valued (n+1)-form omega is pre-n-plectic when d^nabla omega = 0 and
n-plectic when, in addition, X -> i_X omega is injective at every point.
Pseudo-Hamiltonian vector fields X_phi solve i_X omega = d^nabla phi pointwise
(least squares); their first derivatives come from differentiating that linear
system, so brackets of such fields are exact to first order.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .algebroid import (Algebroid, Section, iota_rho, mixed_d, mixed_eth, nabla_A_section,
                        pair_section, section_bracket)
from .forms import (Bundle, EForm, MixedForm, contract_fields, cov_ext_deriv,
                    curvature_action, interior, letters, wedge)
from .geometry import Metric, VectorField, jet_inverse, lie_bracket
from .jets import Jet2, jeinsum, shuffle_sum, stack


class PlecticError(Exception):
    pass


class NotPseudoHamiltonian(PlecticError):
    """d^nabla phi is not in the image of X -> i_X omega."""


class Degenerate(PlecticError):
    """X -> i_X omega has a kernel at some point."""


RANK_RTOL = 1e-10


class PlecticStructure:
    """An E-valued (n+1)-form on a bundle with connection."""

    def __init__(self, omega: EForm, bundle: Bundle):
        if omega.rank != bundle.rank or omega.dim != bundle.dim:
            raise PlecticError("form and bundle do not match")
        if omega.p < 1:
            raise PlecticError("an n-plectic form has degree at least 1")
        self.omega = omega
        self.bundle = bundle

    @property
    def n(self) -> int:
        return self.omega.p - 1

    @property
    def dim(self) -> int:
        return self.omega.dim

    def closedness(self, points) -> float:
        d = cov_ext_deriv(self.omega, self.bundle).jet(points, 0).value
        return float(np.max(np.abs(d))) if d.size else 0.0

    def flat_rows(self) -> list:
        """Row labels (c, J) of the contraction matrix, J increasing of length n."""
        return [(c, J) for c in range(self.bundle.rank) for J in combinations(range(self.dim), self.n)]

    def flat_matrix(self, jet: Jet2) -> Jet2:
        """omega^flat[N, row, i] from an omega jet: row (c, J), column i."""
        rows = self.flat_rows()
        pieces = []
        for c, J in rows:
            idx = (slice(None), c, slice(None)) + tuple(J)
            pieces.append(jet[idx])
        return stack(pieces, axis=1)

    def rhs_vector(self, jet: Jet2) -> Jet2:
        """Entries (c, J) of an E-valued n-form jet, matching ``flat_rows``."""
        pieces = [jet[(slice(None), c) + tuple(J)] for c, J in self.flat_rows()]
        return stack(pieces, axis=1)


def nondegeneracy_rank(ps: PlecticStructure, x) -> np.ndarray | int:
    """Rank of X -> i_X omega (SVD, relative threshold 1e-10 of the largest singular value)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x[None] if single else x
    M = ps.flat_matrix(ps.omega.jet(pts, 0)).value
    s = np.linalg.svd(M, compute_uv=False)
    smax = s[:, :1] if s.size else np.zeros((len(pts), 1))
    rank = np.sum(s > RANK_RTOL * np.maximum(smax, 1e-300), axis=1)
    rank = np.where(smax[:, 0] > 0, rank, 0)
    return int(rank[0]) if single else rank


def _pinv_solve(M: np.ndarray, b: np.ndarray, method: str) -> np.ndarray:
    """Least-squares solve of M x = b for stacks; b has shape (N, rows, k)."""
    if method == "svd":
        return np.linalg.pinv(M) @ b
    if method == "qr":
        Q, R = np.linalg.qr(M)
        return np.linalg.solve(R, np.swapaxes(Q, -1, -2) @ b)
    if method == "normal":
        Mt = np.swapaxes(M, -1, -2)
        return np.linalg.solve(Mt @ M, Mt @ b)
    raise PlecticError(f"unknown solver {method!r}")


@dataclass
class PHamSolution:
    points: np.ndarray
    field: np.ndarray  # (N, d)
    derivative: np.ndarray | None  # (N, d, d), [n, i, k] = d_k X^i
    residual: np.ndarray  # (N,)

    def jet(self) -> Jet2:
        return Jet2(self.field, self.derivative)


def solve_pham(ps: PlecticStructure, phi: EForm, x, tol: float = 1e-9, method: str = "svd",
               order: int = 1) -> PHamSolution:
    """Solve i_X omega = d^nabla phi at each point (and its first derivative when order=1)."""
    if phi.p != ps.n - 1 or phi.rank != ps.bundle.rank:
        raise PlecticError(f"expected an E-valued {ps.n - 1}-form")
    x = np.asarray(x, dtype=float)
    pts = x[None] if x.ndim == 1 else x
    ranks = nondegeneracy_rank(ps, pts)
    if np.any(ranks < ps.dim):
        bad = int(np.argmin(ranks))
        raise Degenerate(f"omega is degenerate at {pts[bad].tolist()} (rank {int(ranks[bad])} < {ps.dim})")
    om = ps.flat_matrix(ps.omega.jet(pts, order))
    beta = ps.rhs_vector(cov_ext_deriv(phi, ps.bundle).jet(pts, order))
    M, b = om.value, beta.value
    X = _pinv_solve(M, b[..., None], method)[..., 0]
    res = np.linalg.norm(np.einsum("nri,ni->nr", M, X) - b, axis=1)
    scale = np.maximum(1.0, np.linalg.norm(b, axis=1))
    if np.any(res > tol * scale):
        bad = int(np.argmax(res / scale))
        raise NotPseudoHamiltonian(
            f"d phi is not in the image of omega at {pts[bad].tolist()} (residual {res[bad]:.3e})")
    dX = None
    if order >= 1:
        # M dX_k = d_k b - (d_k M) X
        rhs = beta.grad - np.einsum("nrik,ni->nrk", om.grad, X)
        dX = _pinv_solve(M, rhs, method)
    return PHamSolution(pts, X, dX, res)


def pham_field(ps: PlecticStructure, phi: EForm, tol: float = 1e-9) -> VectorField:
    """X_phi as a vector field exact to first order."""

    def evaluate(points, order):
        sol = solve_pham(ps, phi, points, tol, order=min(order, 1))
        return Jet2(sol.field, sol.derivative if order >= 1 else None)

    return VectorField(ps.dim, evaluate)


def bracket_form(ps: PlecticStructure, phi: EForm, psi: EForm, tol: float = 1e-9) -> EForm:
    """{phi, psi} = i_{X_psi} i_{X_phi} omega, exact to first order."""
    Xp, Xq = pham_field(ps, phi, tol), pham_field(ps, psi, tol)
    rest = letters(ps.n - 1)

    def evaluate(points, order):
        o = min(order, 1)
        return jeinsum(f"ni,nj,naij{rest}->na{rest}", Xp.jet(points, o), Xq.jet(points, o),
                       ps.omega.jet(points, o))

    return EForm(ps.dim, ps.n - 1, ps.bundle.rank, evaluate)


def pham_bracket(ps: PlecticStructure, phi: EForm, psi: EForm, x, tol: float = 1e-9) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    pts = x[None] if x.ndim == 1 else x
    out = bracket_form(ps, phi, psi, tol).jet(pts, 0).value
    return out[0] if x.ndim == 1 else out


def hamlemma_residual(ps: PlecticStructure, phi: EForm, psi: EForm, points, tol: float = 1e-9) -> float:
    """|i_[X_psi, X_phi] omega - d{phi, psi} + i_{X_phi}(R phi) - i_{X_psi}(R psi)| with the
    curvature terms written out (R phi = d^nabla d^nabla phi)."""
    Xp, Xq = pham_field(ps, phi, tol), pham_field(ps, psi, tol)
    lhs = interior(lie_bracket(Xq, Xp), ps.omega).jet(points, 0).value
    dbr = cov_ext_deriv(bracket_form(ps, phi, psi, tol), ps.bundle).jet(points, 0).value
    corr_q = interior(Xp, curvature_action(ps.bundle, psi)).jet(points, 0).value
    corr_p = interior(Xq, curvature_action(ps.bundle, phi)).jet(points, 0).value
    res = lhs - dbr + corr_q - corr_p
    return float(np.max(np.abs(res))) if res.size else 0.0


# -- homotopy momentum sections ----------------------------------------------------------

class MomentumSection:
    """mu = sum_k mu_k with mu_k of bidegree (k, n-k), k = 0..n-1."""

    def __init__(self, components: Sequence[MixedForm]):
        self.components = list(components)
        for k, c in enumerate(self.components):
            if c.p != k:
                raise PlecticError(f"component {k} must have {k} tangent slots")
        n = len(self.components)
        for k, c in enumerate(self.components):
            if c.q != n - k:
                raise PlecticError(f"component {k} must have bidegree ({k}, {n - k})")

    @property
    def n(self) -> int:
        return len(self.components)

    def top(self) -> MixedForm:
        """The (n-1, 1) component."""
        return self.components[-1]


def _mixed_residual(values: np.ndarray, p: int, q: int, rng=None) -> float:
    if values.size == 0:
        return 0.0
    res = float(np.max(np.abs(values)))
    if rng is not None:
        v = values
        for _ in range(p + q):
            vec = rng.uniform(-1, 1, size=(v.shape[0], v.shape[2]))
            v = np.einsum("nc i...,ni->nc...".replace(" ", ""), v, vec)
        res = max(res, float(np.max(np.abs(v))))
    return res


def hms_defect(ps: PlecticStructure, alg: Algebroid, mu: MomentumSection, points,
               rng: np.random.Generator | None = None) -> dict:
    """Residual of (d^nabla + eth) mu = sum_k (-1)^(n-k) i^(n+1-k)_rho omega, per bidegree (k, n+1-k)."""
    n = ps.n
    if mu.n != n:
        raise PlecticError(f"momentum section has {mu.n} components, expected {n}")
    out = {}
    for k in range(n + 1):
        q = n + 1 - k
        total = iota_rho(q, ps.omega, alg).jet(points, 0).value * (-((-1) ** (n - k)))
        if k >= 1:
            total = total + mixed_d(mu.components[k - 1], alg, ps.bundle).jet(points, 0).value
        if k <= n - 1:
            total = total + mixed_eth(mu.components[k], alg, ps.bundle).jet(points, 0).value
        out[(k, q)] = _mixed_residual(total, k, q, rng)
    return out


def compatibility_defect(ps: PlecticStructure, alg: Algebroid, mu: MomentumSection,
                         alpha: Section, points) -> dict:
    """Two routes to the compatibility defect of the (n-1, 1) component.

    ``direct``: i_alpha d^nabla mu - d^nabla_E i_alpha mu.
    ``expansion``: sum (-1)^(i+1) mu^{nabla^A_{X_i} alpha}(.. X_i omitted ..).
    They satisfy direct = -expansion; ``agreement`` is |direct + expansion|.
    """
    top = mu.top()
    p = top.p
    direct = (pair_section(mixed_d(top, alg, ps.bundle), alpha).jet(points, 0).value
              - cov_ext_deriv(pair_section(top, alpha), ps.bundle).jet(points, 0).value)
    nab = nabla_A_section(alg, alpha)(np.asarray(points, dtype=float), 0)
    J = letters(p)
    S = jeinsum(f"nai,nz{J}a->nzi{J}", nab, top.jet(points, 0))
    expansion = shuffle_sum(S, 2, 1, p).value
    return {
        "direct": float(np.max(np.abs(direct))) if direct.size else 0.0,
        "expansion": float(np.max(np.abs(expansion))) if expansion.size else 0.0,
        "agreement": float(np.max(np.abs(direct + expansion))) if direct.size else 0.0,
    }


def _omega_on_anchors(ps, alg, sections: Sequence[Section], points, order=0) -> Jet2:
    fields = [alg.anchor_of(s).jet(points, order) for s in sections]
    return contract_fields(ps.omega.jet(points, order), fields)


def antihom_residual(ps: PlecticStructure, alg: Algebroid, mu: MomentumSection,
                     alpha: Section, beta: Section, points) -> float:
    """|mu^[alpha, beta] + omega(rho alpha, rho beta)| (n = 1)."""
    if ps.n != 1:
        raise PlecticError("the anti-homomorphism check is defined for n = 1")
    br = section_bracket(alg, alpha, beta)
    lhs = pair_section(mu.top(), br).jet(points, 0).value
    rhs = _omega_on_anchors(ps, alg, [alpha, beta], points).value
    return float(np.max(np.abs(lhs + rhs)))


def jacobi_residual(ps: PlecticStructure, alg: Algebroid, mu: MomentumSection,
                    alpha: Section, beta: Section, gamma: Section, points) -> dict:
    """Jacobi sum of {mu^a, mu^b} = omega(rho a, rho b), nested brackets through
    {mu^a, mu^b} = -mu^[a, b], and the identity d omega(rho a, rho b, rho c) = 2 (Jacobi sum)."""
    if ps.n != 1:
        raise PlecticError("the Jacobi check is defined for n = 1")
    secs = [alpha, beta, gamma]
    total = 0.0
    for i in range(3):
        a, b, c = secs[i], secs[(i + 1) % 3], secs[(i + 2) % 3]
        total = total - _omega_on_anchors(ps, alg, [section_bracket(alg, a, b), c], points).value
    fields = [alg.anchor_of(s).jet(points, 0) for s in secs]
    domega = contract_fields(cov_ext_deriv(ps.omega, ps.bundle).jet(points, 0), fields).value
    return {
        "jacobi": float(np.max(np.abs(total))),
        "twice_jacobi": float(np.max(np.abs(domega - 2.0 * total))),
    }


# -- quaternionic construction ------------------------------------------------------------

def build_theta(omegas: Sequence[EForm]) -> tuple:
    """Theta = sum omega_i (x) omega_i as a Q-valued 2-form (fibre basis omega_i) and
    Theta^ = sum omega_i ^ omega_i."""
    if not omegas:
        raise PlecticError("need at least one 2-form")
    dim = omegas[0].dim
    if dim % 4:
        raise PlecticError(f"quaternionic construction needs dimension divisible by 4, got {dim}")
    for w in omegas:
        if w.p != 2 or w.rank != 1 or w.dim != dim:
            raise PlecticError("build_theta expects scalar 2-forms on one chart")

    def evaluate(points, order):
        return stack([w.jet(points, order)[:, 0] for w in omegas], axis=1)

    theta = EForm(dim, 2, len(omegas), evaluate)
    wedge_sum = wedge(omegas[0], omegas[0])
    for w in omegas[1:]:
        wedge_sum = wedge_sum + wedge(w, w)
    return theta, wedge_sum


def quaternionic_bundle(omegas: Sequence[EForm], g: Metric) -> Bundle:
    """The bundle Q spanned by the omega_i with the connection induced by Levi-Civita:
    nabla_k omega_j = A[i, j, k] omega_i with A from g-orthogonal projection."""
    from .forms import levi_civita_derivative
    from .geometry import Connection

    dim, k = g.dim, len(omegas)
    derivs = [levi_civita_derivative(w, g) for w in omegas]

    def evaluate(points, order):
        gi = jet_inverse(g.jet(points, order))
        W = stack([w.jet(points, order)[:, 0] for w in omegas], axis=1)  # [n, i, a, b]
        D = stack([dv(points, order)[:, 0] for dv in derivs], axis=1)  # [n, j, l, a, b]
        inner = jeinsum("njlab,nicd,nac,nbd->nijl", D, W, gi, gi)
        norms = jeinsum("niab,nicd,nac,nbd->ni", W, W, gi, gi)
        return inner * norms.reciprocal()[..., None, None]

    return Bundle(dim, k, Connection(dim, k, evaluate), "Q")


def gl_residual(theta: EForm, Q: Bundle, K: Algebroid, f: MixedForm, V1: Section, V2: Section,
                points) -> dict:
    """(i) nabla f_V - Theta_V on the frame of K, (ii) f_[V1, V2] + Theta(V1, V2)."""
    pts = np.asarray(points, dtype=float)
    worst = 0.0
    for a in range(K.rank):
        e = Section.frame(a, K.rank, K.dim)
        lhs = cov_ext_deriv(pair_section(f, e), Q).jet(pts, 0).value
        rhs = interior(K.anchor_field(a), theta).jet(pts, 0).value
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    br = pair_section(f, section_bracket(K, V1, V2)).jet(pts, 0).value
    th = contract_fields(theta.jet(pts, 0), [K.anchor_of(V1).jet(pts, 0), K.anchor_of(V2).jet(pts, 0)]).value
    return {"covariant": worst, "bracket": float(np.max(np.abs(br + th)))}
