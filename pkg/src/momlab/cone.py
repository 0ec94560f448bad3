"""Semialgebraic problems, pseudo-moment sequences, moment/localizing matrices.

A pseudo-moment sequence stores the values y_alpha = L(X^alpha) of a linear
form on polynomials up to some even degree.  L lies in the dual of the
truncated quadratic module exactly when its moment matrix and all localizing
matrices are positive semidefinite; those matrices are assembled here.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .poly import MonomialBasis, Polynomial, r_dim

__all__ = [
    "ScaleRecord",
    "SemialgebraicProblem",
    "PseudoMomentSequence",
    "MomentMatrix",
    "normalize",
    "moment_matrix",
    "localizing_matrix",
    "op_norm_distance",
    "vector_integral_check",
]


@dataclass(frozen=True)
class ScaleRecord:
    """Affine change of variables x = center + radius * u (componentwise).

    `u` lives in normalized coordinates (unit box / unit ball); `x` in the
    original ones.  Minimizers and moments computed after normalization are
    mapped back through this record.
    """

    center: tuple
    radius: tuple

    @staticmethod
    def identity(n: int) -> "ScaleRecord":
        return ScaleRecord((0.0,) * n, (1.0,) * n)

    def to_original(self, u) -> np.ndarray:
        return np.asarray(self.center) + np.asarray(self.radius) * np.asarray(u, dtype=float)

    def to_normalized(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - np.asarray(self.center)) / np.asarray(self.radius)

    def is_identity(self) -> bool:
        return all(c == 0.0 for c in self.center) and all(r == 1.0 for r in self.radius)


@dataclass(frozen=True)
class SemialgebraicProblem:
    """Minimize `objective` over K = {x : p_i(x) >= 0, h_j(x) = 0}.

    `ball_radius` (optional) states a known bound K subset of the R-ball and
    enables the Archimedean augmentation during normalization.  Equality
    constraints are kept in their own list; where quadratic-module semantics
    require inequality pairs, (h, -h) is formed on the fly.
    """

    n: int
    objective: Polynomial
    constraints: tuple = ()
    equalities: tuple = ()
    ball_radius: float | None = None
    scale: ScaleRecord | None = None

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        object.__setattr__(self, "equalities", tuple(self.equalities))
        for p in (self.objective, *self.constraints, *self.equalities):
            if p.n != self.n:
                raise ValueError("constraint dimension mismatch")

    @property
    def max_constraint_degree(self) -> int:
        degs = [p.degree for p in self.constraints + self.equalities]
        return max(degs) if degs else 0

    def constraint_pairs(self) -> list:
        """All inequality constraints, with equalities expanded to (h, -h)."""
        out = list(self.constraints)
        for h in self.equalities:
            out.append(h)
            out.append(-h)
        return out

    def membership_residual(self, x) -> float:
        """min over constraints of the signed residual at x (>= 0 means in K)."""
        res = math.inf
        for p in self.constraints:
            res = min(res, p(x))
        for h in self.equalities:
            res = min(res, -abs(h(x)))
        return 0.0 if res is math.inf else float(res)

    def contains(self, x, tol: float = 1e-8) -> bool:
        return self.membership_residual(x) >= -tol

    # ----------------------------------------------------------------- JSON I/O

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "objective": self.objective.to_json_dict(),
            "constraints": [p.to_json_dict() for p in self.constraints],
            "equalities": [h.to_json_dict() for h in self.equalities],
            "ball_radius": self.ball_radius,
        }

    @staticmethod
    def from_json_dict(d: dict) -> "SemialgebraicProblem":
        return SemialgebraicProblem(
            n=int(d["n"]),
            objective=Polynomial.from_json_dict(d["objective"]),
            constraints=tuple(Polynomial.from_json_dict(p) for p in d.get("constraints", [])),
            equalities=tuple(Polynomial.from_json_dict(p) for p in d.get("equalities", [])),
            ball_radius=d.get("ball_radius"),
        )

    @staticmethod
    def load(path) -> "SemialgebraicProblem":
        with open(path) as fh:
            return SemialgebraicProblem.from_json_dict(json.load(fh))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)


def normalize(prob: SemialgebraicProblem, grid_per_axis: int = 64) -> SemialgebraicProblem:
    """Rescale a problem so the effective-degree-bound hypotheses hold.

    Applies the affine map x = R*u (taking the R-ball into the unit box),
    rescales every constraint so its grid-estimated sup norm on [-1,1]^n is
    at most 0.45 (target 1/2 with a 0.9 safety factor on the estimate), and
    appends the unit-ball constraint 1 - ||u||^2.  Positive rescaling leaves
    K invariant; the returned scale record maps answers back.
    """
    if prob.ball_radius is None:
        raise ValueError("normalization needs ball_radius (a known bound K within the R-ball)")
    n = prob.n
    R = float(prob.ball_radius)
    scale = ScaleRecord((0.0,) * n, (R,) * n)

    def rescale(p: Polynomial) -> Polynomial:
        q = p.compose_affine(scale.center, scale.radius)
        sup = q.sup_norm_box(grid_per_axis)
        if sup > 0.45:
            q = q * (0.45 / sup)
        return q

    constraints = [rescale(p) for p in prob.constraints]
    equalities = [rescale(h) for h in prob.equalities]
    # Archimedean augmentation: the unit ball constraint in normalized coords.
    ball = Polynomial.constant(1.0, n)
    for i in range(n):
        ball = ball - Polynomial.variable(i, n) * Polynomial.variable(i, n)
    constraints.append(ball)
    objective = prob.objective.compose_affine(scale.center, scale.radius)
    return SemialgebraicProblem(
        n=n,
        objective=objective,
        constraints=tuple(constraints),
        equalities=tuple(equalities),
        ball_radius=None,
        scale=scale,
    )


@dataclass(frozen=True)
class PseudoMomentSequence:
    """Values y_alpha for |alpha| <= order, indexed by the graded-lex basis.

    `order` is the total-degree cap (even for hierarchy output).  y need not
    be moments of any measure; sequences produced by the moment relaxation
    satisfy y_0 = L(1) = 1.
    """

    n: int
    order: int
    y: np.ndarray
    basis: MonomialBasis = field(compare=False, default=None)

    def __post_init__(self):
        basis = self.basis or MonomialBasis(self.n, self.order)
        object.__setattr__(self, "basis", basis)
        y = np.asarray(self.y, dtype=float)
        if y.shape != (len(basis),):
            raise ValueError(f"expected {len(basis)} values for degree {self.order}, got {y.shape}")
        object.__setattr__(self, "y", y)

    @staticmethod
    def from_atoms(atoms, weights, order: int) -> "PseudoMomentSequence":
        """Moments of the atomic measure sum_i w_i * delta_{x_i} up to `order`."""
        atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
        weights = np.asarray(weights, dtype=float)
        n = atoms.shape[1]
        basis = MonomialBasis(n, order)
        y = np.zeros(len(basis))
        for k, alpha in enumerate(basis):
            mono = np.ones(atoms.shape[0])
            for i, a in enumerate(alpha):
                if a:
                    mono *= atoms[:, i] ** a
            y[k] = float(weights @ mono)
        return PseudoMomentSequence(n, order, y, basis)

    @staticmethod
    def from_table(n: int, order: int, table: dict) -> "PseudoMomentSequence":
        basis = MonomialBasis(n, order)
        y = np.array([float(table[a]) for a in basis])
        return PseudoMomentSequence(n, order, y, basis)

    def value(self, alpha) -> float:
        return float(self.y[self.basis.index_of(alpha)])

    def apply(self, p: Polynomial) -> float:
        """L(p) for a polynomial of degree <= order."""
        total = 0.0
        for alpha, c in p.terms.items():
            total += c * self.value(alpha)
        return total

    def truncate(self, order: int) -> "PseudoMomentSequence":
        if order > self.order:
            raise ValueError("cannot truncate upward")
        basis = MonomialBasis(self.n, order)
        return PseudoMomentSequence(self.n, order, self.y[: len(basis)], basis)

    def map_affine(self, scale: ScaleRecord) -> "PseudoMomentSequence":
        """Moments of the pushforward under u -> center + radius*u."""
        basis = self.basis
        y = np.zeros(len(basis))
        for k, alpha in enumerate(basis):
            mono = Polynomial(self.n, {tuple(alpha): 1.0}).compose_affine(
                scale.center, scale.radius
            )
            y[k] = self.apply(mono)
        return PseudoMomentSequence(self.n, self.order, y, basis)

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "order": self.order,
            "values": [
                {"alpha": list(a), "y": float(v)} for a, v in zip(self.basis, self.y)
            ],
        }

    @staticmethod
    def from_json_dict(d: dict) -> "PseudoMomentSequence":
        table = {tuple(t["alpha"]): t["y"] for t in d["values"]}
        return PseudoMomentSequence.from_table(int(d["n"]), int(d["order"]), table)


@dataclass(frozen=True)
class MomentMatrix:
    """Hankel-structured matrix M[alpha, beta] = y_{alpha+beta}."""

    d: int
    M: np.ndarray
    basis: MonomialBasis = field(compare=False, default=None)

    @property
    def size(self) -> int:
        return self.M.shape[0]

    def eigvals(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.M)

    def numerical_rank(self, tol: float = 1e-6) -> int:
        s = np.linalg.svd(self.M, compute_uv=False)
        if s.size == 0 or s[0] == 0.0:
            return 0
        return int(np.sum(s > tol * s[0]))


def moment_matrix(y: PseudoMomentSequence, d: int) -> MomentMatrix:
    """Moment matrix of order d: M[alpha,beta] = y_{alpha+beta}, size r(n,d)."""
    if 2 * d > y.order:
        raise ValueError(f"moment matrix of order {d} needs moments to degree {2*d} > {y.order}")
    basis = MonomialBasis(y.n, d)
    m = len(basis)
    M = np.zeros((m, m))
    for i, a in enumerate(basis):
        for j in range(i, m):
            b = basis[j]
            M[i, j] = M[j, i] = y.value(tuple(x + z for x, z in zip(a, b)))
    return MomentMatrix(d, M, basis)


def localizing_matrix(y: PseudoMomentSequence, g: Polynomial, d: int) -> MomentMatrix:
    """Localizing matrix of g at truncation level d (total degree budget).

    Size r(n, floor((d - deg g)/2)), entries sum_gamma g_gamma y_{alpha+beta+gamma},
    so that every certified product sigma*g stays within degree d.
    """
    k = (d - g.degree) // 2
    if k < 0:
        raise ValueError(f"level {d} below constraint degree {g.degree}")
    if 2 * k + g.degree > y.order:
        raise ValueError("pseudo-moment sequence too short for localizing matrix")
    basis = MonomialBasis(y.n, k)
    m = len(basis)
    M = np.zeros((m, m))
    for i, a in enumerate(basis):
        for j in range(i, m):
            b = basis[j]
            val = 0.0
            for gamma, c in g.terms.items():
                val += c * y.value(tuple(x + z + w for x, z, w in zip(a, b, gamma)))
            M[i, j] = M[j, i] = val
    return MomentMatrix(k, M, basis)


def op_norm_distance(y1: PseudoMomentSequence, y2: PseudoMomentSequence, t: int) -> float:
    """Operator-norm distance of two truncated linear forms on R[X]_t.

    The dual of the coefficient 2-norm is the Euclidean norm on the
    pseudo-moment vector, so this is just the 2-norm of the truncated
    difference.
    """
    if y1.n != y2.n:
        raise ValueError("dimension mismatch")
    if t > y1.order or t > y2.order:
        raise ValueError("sequences do not cover degree t")
    m = r_dim(y1.n, t)
    return float(np.linalg.norm(y1.y[:m] - y2.y[:m]))


def vector_integral_check(ms, h) -> tuple:
    """Return (||integral of h dmu||_2, integral of ||h||_2 dmu) over an atomic measure.

    `ms` is any object with `atoms` (k,n) and `weights` (k,); the first value
    never exceeds the second (vector-integral triangle inequality).
    """
    atoms = np.atleast_2d(np.asarray(ms.atoms, dtype=float))
    weights = np.asarray(ms.weights, dtype=float)
    vals = np.array([[hi(x) for hi in h] for x in atoms])  # (k, len(h))
    lhs = float(np.linalg.norm(weights @ vals))
    rhs = float(weights @ np.linalg.norm(vals, axis=1))
    return lhs, rhs
