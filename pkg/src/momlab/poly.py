"""Sparse multivariate polynomials over a graded-lexicographic monomial index.

Exponent vectors (multi-indices) are plain tuples of nonnegative ints.  The
single global monomial order is graded-lex: lower total degree first, ties
broken lexicographically with x1 before x2 before x3...  Every matrix in the
package indexes rows/columns by this order, so "row k" always means the k-th
monomial of the ambient basis.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MonomialBasis",
    "Polynomial",
    "grlex_key",
    "monomials_upto",
    "r_dim",
]


def grlex_key(alpha):
    """Sort key realizing graded-lex order (degree first, then x1 > x2 > ...)."""
    return (sum(alpha), tuple(-a for a in alpha))


def r_dim(n: int, d: int) -> int:
    """Dimension r(n,d) = C(n+d,d) of polynomials of degree <= d in n variables."""
    return math.comb(n + d, d)


def monomials_upto(n: int, d: int):
    """All exponent tuples with |alpha| <= d in graded-lex order."""
    out = []
    for total in range(d + 1):
        out.extend(_monomials_of_degree(n, total))
    return out


def _monomials_of_degree(n, total):
    # lexicographic within a degree block, largest x1-exponent first
    if n == 1:
        return [(total,)]
    block = []
    for first in range(total, -1, -1):
        for rest in _monomials_of_degree(n - 1, total - first):
            block.append((first,) + rest)
    return block


class MonomialBasis:
    """Ordered basis of all monomials of degree <= d in n variables.

    Provides O(1) index lookup; the ordering is stable across the whole
    program (graded-lex), so indices can be exchanged between modules.
    """

    def __init__(self, n: int, d: int):
        self.n = n
        self.d = d
        self.exponents = monomials_upto(n, d)
        self._index = {a: k for k, a in enumerate(self.exponents)}
        assert len(self.exponents) == r_dim(n, d)

    def __len__(self):
        return len(self.exponents)

    def __getitem__(self, k):
        return self.exponents[k]

    def __iter__(self):
        return iter(self.exponents)

    def index_of(self, alpha) -> int:
        return self._index[tuple(alpha)]

    def __contains__(self, alpha):
        return tuple(alpha) in self._index

    def eval_vector(self, x) -> np.ndarray:
        """Vector v(x) of all basis monomials evaluated at the point x."""
        x = np.asarray(x, dtype=float)
        return np.array([float(np.prod(x ** np.array(a))) for a in self.exponents])


@dataclass(frozen=True)
class Polynomial:
    """Sparse real polynomial: map from exponent tuple to coefficient.

    Zero coefficients are never stored; the zero polynomial has an empty term
    map and degree 0 by convention.  Instances are immutable and hashable
    enough to share freely.
    """

    n: int
    terms: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for alpha, c in self.terms.items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != self.n:
                raise ValueError(f"exponent {alpha} has length {len(alpha)}, expected {self.n}")
            if any(a < 0 for a in alpha):
                raise ValueError(f"negative exponent in {alpha}")
            c = float(c)
            if c != 0.0:
                clean[alpha] = c
        object.__setattr__(self, "terms", clean)

    # ------------------------------------------------------------------ basics

    @staticmethod
    def zero(n: int) -> "Polynomial":
        return Polynomial(n, {})

    @staticmethod
    def constant(c: float, n: int) -> "Polynomial":
        return Polynomial(n, {(0,) * n: c})

    @staticmethod
    def variable(i: int, n: int) -> "Polynomial":
        alpha = [0] * n
        alpha[i] = 1
        return Polynomial(n, {tuple(alpha): 1.0})

    @staticmethod
    def from_coeffs(basis: MonomialBasis, vec) -> "Polynomial":
        return Polynomial(basis.n, {a: c for a, c in zip(basis.exponents, vec)})

    @property
    def degree(self) -> int:
        if not self.terms:
            return 0
        return max(sum(a) for a in self.terms)

    def coeff(self, alpha) -> float:
        return self.terms.get(tuple(alpha), 0.0)

    def coeff_vector(self, basis: MonomialBasis) -> np.ndarray:
        v = np.zeros(len(basis))
        for alpha, c in self.terms.items():
            v[basis.index_of(alpha)] = c
        return v

    def is_zero(self) -> bool:
        return not self.terms

    # -------------------------------------------------------------- arithmetic

    def _check_dim(self, other: "Polynomial"):
        if self.n != other.n:
            raise ValueError(f"dimension mismatch: {self.n} vs {other.n}")

    def __add__(self, other):
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(other, self.n)
        self._check_dim(other)
        terms = dict(self.terms)
        for alpha, c in other.terms.items():
            terms[alpha] = terms.get(alpha, 0.0) + c
        return Polynomial(self.n, terms)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.n, {a: -c for a, c in self.terms.items()})

    def __sub__(self, other):
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(other, self.n)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Polynomial):
            # scalar scale
            return Polynomial(self.n, {a: c * float(other) for a, c in self.terms.items()})
        self._check_dim(other)
        terms = {}
        for a1, c1 in self.terms.items():
            for a2, c2 in other.terms.items():
                key = tuple(e1 + e2 for e1, e2 in zip(a1, a2))
                terms[key] = terms.get(key, 0.0) + c1 * c2
        return Polynomial(self.n, terms)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative power")
        out = Polynomial.constant(1.0, self.n)
        for _ in range(k):
            out = out * self
        return out

    # -------------------------------------------------------------- evaluation

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n and self.n != 1:
            raise ValueError(f"point has dimension {x.shape[-1]}, expected {self.n}")
        if self.n == 1 and x.ndim == 0:
            x = x.reshape(1)
        total = 0.0
        for alpha, c in self.terms.items():
            total += c * float(np.prod(x ** np.array(alpha)))
        return total

    def eval_grid(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at many points at once; `points` has shape (m, n)."""
        points = np.asarray(points, dtype=float)
        vals = np.zeros(points.shape[0])
        for alpha, c in self.terms.items():
            mono = np.ones(points.shape[0])
            for i, a in enumerate(alpha):
                if a:
                    mono *= points[:, i] ** a
            vals += c * mono
        return vals

    # ------------------------------------------------------------------- norms

    def coeff_norm(self) -> float:
        """Euclidean norm of the coefficient vector in the monomial basis."""
        return math.sqrt(sum(c * c for c in self.terms.values()))

    def sup_norm_box(self, grid_per_axis: int = 64, rng_samples: int = 100_000) -> float:
        """Grid estimate (a lower bound) of max |p| over the box [-1,1]^n.

        Full tensor grids are used up to n = 6; beyond that the box is probed
        with 1e5 seeded random samples.  The estimate is monotone
        nondecreasing in the grid resolution.
        """
        if grid_per_axis < 2:
            raise ValueError("grid_per_axis must be >= 2")
        if not self.terms:
            return 0.0
        if self.n <= 6:
            axes = [np.linspace(-1.0, 1.0, grid_per_axis)] * self.n
            mesh = np.meshgrid(*axes, indexing="ij")
            pts = np.stack([m.ravel() for m in mesh], axis=-1)
        else:
            rng = np.random.default_rng(0)
            pts = rng.uniform(-1.0, 1.0, size=(rng_samples, self.n))
        return float(np.max(np.abs(self.eval_grid(pts))))

    # --------------------------------------------------------------------- I/O

    def to_json_dict(self) -> dict:
        terms = sorted(self.terms.items(), key=lambda kv: grlex_key(kv[0]))
        return {"n": self.n, "terms": [{"alpha": list(a), "c": c} for a, c in terms]}

    @staticmethod
    def from_json_dict(d: dict) -> "Polynomial":
        return Polynomial(int(d["n"]), {tuple(t["alpha"]): float(t["c"]) for t in d["terms"]})

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @staticmethod
    def from_json(s: str) -> "Polynomial":
        return Polynomial.from_json_dict(json.loads(s))

    # ------------------------------------------------------------------ pretty

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        for alpha, c in sorted(self.terms.items(), key=lambda kv: grlex_key(kv[0])):
            mono = "*".join(
                f"x{i+1}" + (f"^{a}" if a > 1 else "")
                for i, a in enumerate(alpha)
                if a > 0
            )
            parts.append(f"{c:+g}" + (f"*{mono}" if mono else ""))
        return " ".join(parts)

    # helpers used by other modules -------------------------------------------

    def partial(self, i: int) -> "Polynomial":
        """Partial derivative with respect to variable i."""
        terms = {}
        for alpha, c in self.terms.items():
            if alpha[i] == 0:
                continue
            beta = list(alpha)
            beta[i] -= 1
            terms[tuple(beta)] = terms.get(tuple(beta), 0.0) + c * alpha[i]
        return Polynomial(self.n, terms)

    def compose_affine(self, center, radius) -> "Polynomial":
        """Substitute x_i -> center_i + radius_i * u_i and expand."""
        center = np.asarray(center, dtype=float)
        radius = np.asarray(radius, dtype=float)
        out = Polynomial.zero(self.n)
        subs = [
            Polynomial.constant(center[i], self.n) + radius[i] * Polynomial.variable(i, self.n)
            for i in range(self.n)
        ]
        for alpha, c in self.terms.items():
            term = Polynomial.constant(c, self.n)
            for i, a in enumerate(alpha):
                term = term * (subs[i] ** a)
            out = out + term
        return out
