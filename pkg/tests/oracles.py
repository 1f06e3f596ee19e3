"""Reference computations that share no code with the package under test."""

from __future__ import annotations

from fractions import Fraction

import numpy as np


class Poly:
    """A polynomial as {exponent tuple: Fraction}, differentiated symbolically."""

    def __init__(self, terms: dict, dim: int):
        self.terms = {e: c for e, c in terms.items() if c != 0}
        self.dim = dim

    @classmethod
    def random(cls, rng: np.random.Generator, dim: int, max_degree: int = 4, n_terms: int = 5) -> "Poly":
        terms = {}
        for _ in range(n_terms):
            deg = int(rng.integers(0, max_degree + 1))
            exps = tuple(int(e) for e in rng.multinomial(deg, [1.0 / dim] * dim))
            terms[exps] = terms.get(exps, 0) + Fraction(f"{rng.uniform(-2, 2):.4f}")
        return cls(terms, dim)

    def source(self) -> str:
        """Text in the package's expression language."""
        parts = []
        for exps, c in sorted(self.terms.items()):
            factors = [format(float(abs(c)), ".4f")]
            factors += [f"x{i}^{e}" if e > 1 else f"x{i}" for i, e in enumerate(exps) if e]
            parts.append(("- " if c < 0 else "+ ") + "*".join(factors))
        if not parts:
            return "0"
        text = " ".join(parts)
        return text[2:] if text.startswith("+ ") else "-" + text[2:]

    def diff(self, i: int) -> "Poly":
        out = {}
        for exps, c in self.terms.items():
            if exps[i]:
                e = list(exps)
                e[i] -= 1
                out[tuple(e)] = out.get(tuple(e), 0) + c * exps[i]
        return Poly(out, self.dim)

    def absolute(self) -> "Poly":
        return Poly({e: abs(c) for e, c in self.terms.items()}, self.dim)

    def __call__(self, point) -> Fraction:
        total = Fraction(0)
        for exps, c in self.terms.items():
            term = c
            for x, e in zip(point, exps):
                term *= x ** e
            total += term
        return total

    def jet(self, point) -> tuple:
        """Exact value, gradient and Hessian at a rational point."""
        d = self.dim
        grad = [self.diff(i) for i in range(d)]
        return (self(point), [g(point) for g in grad],
                [[grad[i].diff(j)(point) for j in range(d)] for i in range(d)])


def decimal_point(rng: np.random.Generator, dim: int, lo: float = -1.5, hi: float = 1.5) -> tuple:
    """A point with short decimal coordinates, exact as Fractions and as floats up to rounding."""
    texts = [f"{rng.uniform(lo, hi):.3f}" for _ in range(dim)]
    return [Fraction(t) for t in texts], np.array([float(t) for t in texts])


def christoffel_diag_x0sq(x0: float) -> dict:
    """Nonzero Christoffel symbols of g = diag(1, x0^2), by hand."""
    return {(0, 1, 1): -x0, (1, 0, 1): 1.0 / x0, (1, 1, 0): 1.0 / x0}


def ray_integral_momentum(M: np.ndarray, W: np.ndarray, x: np.ndarray, nodes: int = 8) -> float:
    """mu(x) = int_0^1 (i_{M(tx)} W)(x) dt for a linear field M x and constant 2-form W, mu(0) = 0."""
    t, w = np.polynomial.legendre.leggauss(nodes)
    t, w = 0.5 * (t + 1.0), 0.5 * w
    total = 0.0
    for ti, wi in zip(t, w):
        v = M @ (ti * x)
        total += wi * (v @ W @ x)
    return total


def heisenberg_matrix(p) -> np.ndarray:
    """exp(x X + y Y + z Z) in the 3x3 upper triangular representation."""
    x, y, z = p
    return np.array([[1.0, x, z + 0.5 * x * y], [0.0, 1.0, y], [0.0, 0.0, 1.0]])


def heisenberg_algebra(v) -> np.ndarray:
    a, b, c = v
    return np.array([[0.0, a, c], [0.0, 0.0, b], [0.0, 0.0, 0.0]])


def heisenberg_coords(m: np.ndarray) -> np.ndarray:
    return np.array([m[0, 1], m[1, 2], m[0, 2]])


def heisenberg_ad(p, v) -> np.ndarray:
    """Ad_h v = h v h^{-1} read back in the X, Y, Z basis."""
    h = heisenberg_matrix(p)
    return heisenberg_coords(h @ heisenberg_algebra(v) @ np.linalg.inv(h))


def heisenberg_right_mc(p) -> np.ndarray:
    """lambda_R = dh h^{-1}: rows are the coordinate directions, columns X, Y, Z."""
    x, y, _ = p
    h_inv = np.linalg.inv(heisenberg_matrix(p))
    dh = [np.array([[0, 1, 0.5 * y], [0, 0, 0], [0, 0, 0]]),
          np.array([[0, 0, 0.5 * x], [0, 0, 1], [0, 0, 0]]),
          np.array([[0, 0, 1], [0, 0, 0], [0, 0, 0]])]
    return np.array([heisenberg_coords(d @ h_inv) for d in dh])
