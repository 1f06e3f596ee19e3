"""Charts, vector fields, metrics and connections evaluated as jets.

All geometric objects are lazy: they expose ``jet(points, order)`` returning a
:class:`~nplectic.jets.Jet2` with a leading batch axis over the points.
Derived objects (brackets, Christoffel symbols, ...) request one more order
from their inputs than they are asked for, so nested derivatives stay exact as
long as no formula needs more than second derivatives of the catalog data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .expr import SmoothFunction, as_function
from .jets import Jet2, jeinsum, stack


class GeometryError(Exception):
    pass


class SingularMetricError(GeometryError):
    pass


@dataclass(frozen=True)
class Chart:
    """A coordinate box in R^d; periodic coordinates have period 2*pi."""

    dim: int
    box: tuple = ()
    periodic: tuple = ()

    def __post_init__(self):
        box = tuple(tuple(map(float, b)) for b in self.box) or ((-1.0, 1.0),) * self.dim
        periodic = tuple(bool(p) for p in self.periodic) or (False,) * self.dim
        if len(box) != self.dim or len(periodic) != self.dim:
            raise GeometryError("box and periodic flags must have one entry per coordinate")
        for (lo, hi), per in zip(box, periodic):
            if not hi > lo:
                raise GeometryError("empty coordinate interval")
            if per and not np.isclose(hi - lo, 2 * np.pi):
                raise GeometryError("periodic coordinates need an interval of length 2*pi")
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "periodic", periodic)

    @property
    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.box])

    @property
    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.box])

    def sample(self, n: int, rng: np.random.Generator, shrink: float = 1.0) -> np.ndarray:
        """Uniform points in the box, optionally shrunk about its centre."""
        centre = 0.5 * (self.lower + self.upper)
        half = 0.5 * (self.upper - self.lower) * shrink
        return centre + half * rng.uniform(-1.0, 1.0, size=(n, self.dim))

    def wrap(self, points: np.ndarray) -> np.ndarray:
        points = np.array(points, dtype=float)
        for i, per in enumerate(self.periodic):
            if per:
                lo = self.box[i][0]
                points[..., i] = lo + np.mod(points[..., i] - lo, 2 * np.pi)
        return points

    def contains(self, points: np.ndarray, slack: float = 1e-12) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        ok = np.ones(points.shape[:-1], dtype=bool)
        for i, per in enumerate(self.periodic):
            if not per:
                ok &= (points[..., i] >= self.box[i][0] - slack) & (points[..., i] <= self.box[i][1] + slack)
        return ok


def _component_jets(funcs, points, order) -> list:
    return [f.jet(points, order) for f in funcs]


class VectorField:
    """A vector field X = X^i d/dx^i; ``jet`` has value shape (N, d)."""

    def __init__(self, dim: int, evaluator: Callable[[np.ndarray, int], Jet2], components=None):
        self.dim = dim
        self._evaluator = evaluator
        self.components = components

    @classmethod
    def from_exprs(cls, exprs: Sequence, dim: int) -> "VectorField":
        funcs = [as_function(e, dim) for e in exprs]
        if len(funcs) != dim:
            raise GeometryError("a vector field needs one component per coordinate")
        return cls(dim, lambda pts, order: stack(_component_jets(funcs, pts, order), axis=-1), funcs)

    @classmethod
    def coordinate(cls, index: int, dim: int) -> "VectorField":
        return cls.from_exprs(["1" if i == index else "0" for i in range(dim)], dim)

    def jet(self, points, order: int = 2) -> Jet2:
        return self._evaluator(np.asarray(points, dtype=float), order)

    def __call__(self, points) -> np.ndarray:
        return self.jet(points, 0).value

    def __add__(self, other: "VectorField") -> "VectorField":
        return VectorField(self.dim, lambda p, o: self.jet(p, o) + other.jet(p, o))

    def __sub__(self, other: "VectorField") -> "VectorField":
        return VectorField(self.dim, lambda p, o: self.jet(p, o) - other.jet(p, o))

    def scaled(self, f: SmoothFunction) -> "VectorField":
        """The field f X."""
        return VectorField(self.dim, lambda p, o: self.jet(p, o) * f.jet(p, o)[..., None])



def directional(X: VectorField, f_jet_fn: Callable[[np.ndarray, int], Jet2], points, order: int) -> Jet2:
    """Jet of X(f) for a scalar-valued jet source with value shape (N, ...)."""
    fj = f_jet_fn(points, order + 1)
    xj = X.jet(points, order)
    return jeinsum("ni,n...i->n...", xj, fj.derivative())


def lie_bracket(X: VectorField, Y: VectorField) -> VectorField:
    """[X, Y]^k = X^i d_i Y^k - Y^i d_i X^k."""
    if X.dim != Y.dim:
        raise GeometryError("vector fields live on charts of different dimension")

    def evaluate(points, order):
        xj, yj = X.jet(points, order + 1), Y.jet(points, order + 1)
        return (jeinsum("ni,nki->nk", xj.truncate(order), yj.derivative())
                - jeinsum("ni,nki->nk", yj.truncate(order), xj.derivative()))

    return VectorField(X.dim, evaluate)


class Metric:
    """A Riemannian metric g_ij; ``jet`` has value shape (N, d, d)."""

    def __init__(self, dim: int, evaluator: Callable[[np.ndarray, int], Jet2], entries=None):
        self.dim = dim
        self._evaluator = evaluator
        self.entries = entries

    @classmethod
    def from_exprs(cls, rows: Sequence[Sequence], dim: int) -> "Metric":
        funcs = [[as_function(e, dim) for e in row] for row in rows]
        if len(funcs) != dim or any(len(r) != dim for r in funcs):
            raise GeometryError("a metric needs a d x d matrix of entries")
        for i in range(dim):
            for j in range(i):
                if funcs[i][j].ast != funcs[j][i].ast:
                    raise GeometryError(f"metric entries ({i},{j}) and ({j},{i}) differ")

        def evaluate(points, order):
            return stack([stack(_component_jets(r, points, order), -1) for r in funcs], -2)

        return cls(dim, evaluate, funcs)

    @classmethod
    def euclidean(cls, dim: int) -> "Metric":
        return cls.from_exprs([["1" if i == j else "0" for j in range(dim)] for i in range(dim)], dim)

    def jet(self, points, order: int = 2) -> Jet2:
        return self._evaluator(np.asarray(points, dtype=float), order)

    def check(self, points) -> None:
        """Raise SingularMetricError unless g is positive definite at every point."""
        g = self.jet(points, 0).value
        try:
            np.linalg.cholesky(g)
        except np.linalg.LinAlgError as exc:
            raise SingularMetricError("metric is not positive definite at a sample point") from exc


def jet_inverse(m: Jet2) -> Jet2:
    """Inverse of a batch of square matrices (last two value axes)."""
    try:
        inv = np.linalg.inv(m.value)
    except np.linalg.LinAlgError as exc:
        raise SingularMetricError("singular matrix at a sample point") from exc
    if not np.all(np.isfinite(inv)) or np.any(np.linalg.cond(m.value) > 1e12):
        raise SingularMetricError("singular matrix at a sample point")
    grad = hess = None
    if m.order >= 1:
        # d(V)_k = -V dM_k V
        grad = -np.einsum("...ab,...bck,...cd->...adk", inv, m.grad, inv)
    if m.order >= 2:
        t1 = np.einsum("...ab,...bck,...cd,...del,...ef->...afkl", inv, m.grad, inv, m.grad, inv)
        hess = t1 + np.swapaxes(t1, -1, -2) - np.einsum("...ab,...bckl,...cd->...adkl", inv, m.hess, inv)
    return Jet2(inv, grad, hess)


class Connection:
    """Connection coefficients A[a, b, i] with nabla_{d_i} e_b = A[a, b, i] e_a.

    ``jet`` has value shape (N, r, r, d).
    """

    def __init__(self, dim: int, rank: int, evaluator: Callable[[np.ndarray, int], Jet2], entries=None):
        self.dim = dim
        self.rank = rank
        self._evaluator = evaluator
        self.entries = entries

    @classmethod
    def from_exprs(cls, coeffs, dim: int, rank: int) -> "Connection":
        """``coeffs[a][b][i]``: expression for A^a_{b,i}."""
        funcs = [[[as_function(e, dim) for e in row] for row in block] for block in coeffs]
        if len(funcs) != rank or any(len(b) != rank or any(len(r) != dim for r in b) for b in funcs):
            raise GeometryError("connection coefficients must have shape rank x rank x dim")
        if all(f.is_zero for b in funcs for r in b for f in r):
            return cls.trivial(dim, rank)

        def evaluate(points, order):
            return stack([stack([stack(_component_jets(r, points, order), -1) for r in b], -2)
                          for b in funcs], -3)

        return cls(dim, rank, evaluate, funcs)

    @classmethod
    def trivial(cls, dim: int, rank: int) -> "Connection":
        def evaluate(points, order):
            n = np.asarray(points).shape[:-1]
            return Jet2.constant(np.zeros(n + (rank, rank, dim)), dim, order)

        conn = cls(dim, rank, evaluate, None)
        conn.is_trivial = True
        return conn

    is_trivial = False

    def jet(self, points, order: int = 2) -> Jet2:
        return self._evaluator(np.asarray(points, dtype=float), order)


def christoffel(g: Metric) -> Callable[[np.ndarray, int], Jet2]:
    """Evaluator for Gamma[k, i, j] = 1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij)."""

    def evaluate(points, order):
        gj = g.jet(points, order + 1)
        ginv = jet_inverse(gj.truncate(order))
        dg = gj.derivative()  # dg[n, a, b, c] = d_c g_ab
        t1 = dg.transpose([0, 3, 1, 2])  # [n, i, j, l] = d_i g_jl
        t2 = dg.transpose([0, 1, 3, 2])  # [n, i, j, l] = d_j g_il
        t3 = dg  # [n, i, j, l] = d_l g_ij
        return jeinsum("nkl,nijl->nkij", ginv, t1 + t2 - t3) * 0.5

    return evaluate


def levi_civita(g: Metric) -> Connection:
    """Levi-Civita connection of ``g`` as a connection on TM in the frame d/dx^i."""
    gamma = christoffel(g)

    def evaluate(points, order):
        # nabla_{d_i} d_j = Gamma^k_{ij} d_k  ->  A[k, j, i]
        return gamma(points, order).transpose([0, 1, 3, 2])

    conn = Connection(g.dim, g.dim, evaluate)
    conn.metric = g
    return conn


def cotangent_connection(g: Metric) -> Connection:
    """Dual Levi-Civita connection on T*M: nabla_{d_i} dx^l = -Gamma^l_{ik} dx^k."""
    gamma = christoffel(g)

    def evaluate(points, order):
        # A[a, b, i] = -Gamma^b_{i a}
        return -gamma(points, order).transpose([0, 3, 1, 2])

    conn = Connection(g.dim, g.dim, evaluate)
    conn.metric = g
    return conn


def covariant_derivative_field(conn: Connection, Y: VectorField) -> Callable[[np.ndarray, int], Jet2]:
    """Evaluator for (nabla Y)[n, k, i] = d_i Y^k + Gamma^k_{j,i} Y^j on TM."""

    def evaluate(points, order):
        yj = Y.jet(points, order + 1)
        return yj.derivative() + jeinsum("nkji,nj->nki", conn.jet(points, order), yj.truncate(order))

    return evaluate


def metric_compatibility(g: Metric, points) -> float:
    """max |d_k g_ij - Gamma^l_{ki} g_lj - Gamma^l_{kj} g_il| over the points."""
    gj = g.jet(points, 1)
    gam = christoffel(g)(points, 0).value  # [n, l, k, i]
    dg = gj.derivative().value  # [n, i, j, k]
    gv = gj.value
    res = (np.transpose(dg, (0, 3, 1, 2))
           - np.einsum("nlki,nlj->nkij", gam, gv)
           - np.einsum("nlkj,nil->nkij", gam, gv))
    return float(np.max(np.abs(res)))
