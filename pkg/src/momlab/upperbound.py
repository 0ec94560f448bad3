"""Measure-based upper bounds: SOS densities against a fixed reference measure.

u_d* minimizes the expected objective over degree-d SOS densities normalized
against a reference measure supported on K; it reduces to the smallest
generalized eigenvalue of the pair (A, B) of f-weighted and plain moment
matrices.  The optimal density is the square of the corresponding
eigenvector, and its first moments give a candidate point in conv(K).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .cone import ScaleRecord, SemialgebraicProblem
from .hierarchy import SosCertificate, solve_moment_relaxation
from .extraction import candidate_minimizer
from .poly import MonomialBasis, Polynomial, monomials_upto
from .sdp import SdpBlock, SdpProblem, solve

__all__ = [
    "ReferenceMeasure",
    "UpperBoundResult",
    "lebesgue_box_moments",
    "unit_ball_moments",
    "solve_upper_bound",
    "estimator_from_density",
    "is_sos_convex",
    "convex_cost_bound",
]


def lebesgue_box_moments(n: int, degree: int) -> dict:
    """Exact moments of Lebesgue measure on [-1,1]^n up to total degree `degree`."""
    out = {}
    for alpha in monomials_upto(n, degree):
        val = 1.0
        for a in alpha:
            val *= (1.0 + (-1.0) ** a) / (a + 1)
        out[alpha] = val
    return out


def unit_ball_moments(n: int, degree: int) -> dict:
    """Exact moments of Lebesgue measure on the unit ball (Gamma-ratio closed form)."""
    out = {}
    for alpha in monomials_upto(n, degree):
        if any(a % 2 for a in alpha):
            out[alpha] = 0.0
            continue
        beta = [(a + 1) / 2 for a in alpha]
        num = 2.0 * math.prod(math.gamma(bi) for bi in beta)
        out[alpha] = num / ((sum(alpha) + n) * math.gamma(sum(beta)))
    return out


class ReferenceMeasure:
    """Moment oracle for the reference measure of the upper-bound hierarchy.

    Kinds: 'box' (Lebesgue on [-1,1]^n), 'ball' (Lebesgue on the unit ball),
    'table' (user-supplied finite moment table).  Closed-form kinds answer any
    degree; tables raise beyond their stated degree.
    """

    def __init__(self, kind: str, n: int, table: dict | None = None, max_degree: int | None = None):
        if kind not in ("box", "ball", "table"):
            raise ValueError(f"unknown reference measure kind {kind!r}")
        if kind == "table":
            if table is None:
                raise ValueError("table kind needs a moment table")
            self.table = {tuple(a): float(v) for a, v in table.items()}
            self.max_degree = max_degree if max_degree is not None else max(
                sum(a) for a in self.table
            )
        else:
            self.table = None
            self.max_degree = math.inf
        self.kind = kind
        self.n = n
        self._cache = {}

    @staticmethod
    def box(n: int) -> "ReferenceMeasure":
        return ReferenceMeasure("box", n)

    @staticmethod
    def ball(n: int) -> "ReferenceMeasure":
        return ReferenceMeasure("ball", n)

    @staticmethod
    def from_json(path_or_dict) -> "ReferenceMeasure":
        d = path_or_dict
        if not isinstance(d, dict):
            with open(path_or_dict) as fh:
                d = json.load(fh)
        table = {tuple(t["alpha"]): float(t["y"]) for t in d["values"]}
        return ReferenceMeasure("table", int(d["n"]), table=table)

    def moment(self, alpha) -> float:
        alpha = tuple(int(a) for a in alpha)
        if sum(alpha) > self.max_degree:
            raise ValueError(f"moment table covers degree {self.max_degree}, asked {sum(alpha)}")
        if alpha in self._cache:
            return self._cache[alpha]
        if self.kind == "box":
            val = 1.0
            for a in alpha:
                val *= (1.0 + (-1.0) ** a) / (a + 1)
        elif self.kind == "ball":
            if any(a % 2 for a in alpha):
                val = 0.0
            else:
                beta = [(a + 1) / 2 for a in alpha]
                val = (
                    2.0
                    * math.prod(math.gamma(bi) for bi in beta)
                    / ((sum(alpha) + self.n) * math.gamma(sum(beta)))
                )
        else:
            val = self.table[alpha]
        self._cache[alpha] = val
        return val

    def integrate(self, p: Polynomial) -> float:
        return float(sum(c * self.moment(a) for a, c in p.terms.items()))

    def in_support_hull(self, x, tol: float = 1e-6):
        """Membership of x in conv(supp) for the closed-form kinds, None for tables."""
        x = np.asarray(x, dtype=float)
        if self.kind == "box":
            return bool(np.all(np.abs(x) <= 1.0 + tol))
        if self.kind == "ball":
            return bool(np.linalg.norm(x) <= 1.0 + tol)
        return None


@dataclass(frozen=True)
class UpperBoundResult:
    d: int
    u_d_star: float
    sigma: Polynomial        # optimal SOS density (a single square), integral 1
    x_check: np.ndarray      # density-weighted first moments
    feasible: bool | None    # x_check in conv(supp mu), None when unknowable
    cost: float              # expected objective under sigma (equals u_d_star)


def _moment_pencil(f: Polynomial, mu: ReferenceMeasure, k: int):
    basis = MonomialBasis(mu.n, k)
    m = len(basis)
    A = np.zeros((m, m))
    B = np.zeros((m, m))
    for i, a in enumerate(basis):
        for j in range(i, m):
            b = basis[j]
            ab = tuple(x + z for x, z in zip(a, b))
            B[i, j] = B[j, i] = mu.moment(ab)
            val = 0.0
            for gamma, c in f.terms.items():
                val += c * mu.moment(tuple(x + w for x, w in zip(ab, gamma)))
            A[i, j] = A[j, i] = val
    return A, B, basis


def solve_upper_bound(f: Polynomial, mu: ReferenceMeasure, d: int) -> UpperBoundResult:
    """Best degree-d SOS-density upper bound on min f over supp(mu).

    Smallest generalized eigenvalue of (A, B) over the monomial basis of
    degree floor(d/2); the eigenvector squared (B-normalized) is the density.
    """
    if f.n != mu.n:
        raise ValueError("dimension mismatch")
    k = d // 2
    A, B, basis = _moment_pencil(f, mu, k)
    try:
        np.linalg.cholesky(B + 1e-12 * np.eye(len(basis)))
    except np.linalg.LinAlgError:
        raise ValueError("reference moment matrix is not positive definite") from None
    w, V = sla.eigh(A, B)
    u_star = float(w[0])
    q = V[:, 0]
    norm2 = float(q @ B @ q)
    q = q / math.sqrt(norm2)
    q_poly = Polynomial.from_coeffs(basis, q)
    sigma = q_poly * q_poly
    x_check = np.array(
        [mu.integrate(Polynomial.variable(i, mu.n) * sigma) for i in range(mu.n)]
    )
    cost = mu.integrate(f * sigma)
    return UpperBoundResult(
        d=d,
        u_d_star=u_star,
        sigma=sigma,
        x_check=x_check,
        feasible=mu.in_support_hull(x_check),
        cost=cost,
    )


def estimator_from_density(
    f: Polynomial,
    sigma: Polynomial,
    mu: ReferenceMeasure,
    scale: ScaleRecord | None = None,
):
    """Density-weighted barycenter x_check, its cost, and a conv(supp) flag."""
    mass = mu.integrate(sigma)
    if abs(mass - 1.0) > 1e-8:
        raise ValueError(f"density is not normalized: integral {mass}")
    x_check = np.array(
        [mu.integrate(Polynomial.variable(i, mu.n) * sigma) for i in range(mu.n)]
    )
    cost = mu.integrate(f * sigma)
    in_hull = mu.in_support_hull(x_check)
    if scale is not None:
        x_check = scale.to_original(x_check)
    return x_check, cost, in_hull


def _sos_over_basis(target: Polynomial, rows, tol: float = 1e-7):
    """Phase-I SOS test of `target` over an explicit list of monomial rows."""
    n = target.n
    sdim = len(rows)
    max_deg = max(sum(a) + sum(b) for a in rows for b in rows)
    max_deg = max(max_deg, target.degree)
    basis = MonomialBasis(n, max_deg)
    m = len(basis)
    nv = sdim * (sdim + 1) // 2 + 1
    t_idx = nv - 1

    A = np.zeros((m, nv))
    col = 0
    for i in range(sdim):
        for j in range(i, sdim):
            key = tuple(x + z for x, z in zip(rows[i], rows[j]))
            A[basis.index_of(key), col] += 1.0 if i == j else 2.0
            col += 1
    qv = np.zeros(m)
    for a, c in target.terms.items():
        qv[basis.index_of(a)] = c

    u, s, vt = np.linalg.svd(A, full_matrices=True)
    rank = int(np.sum(s > max(A.shape) * np.finfo(float).eps * (s[0] if s.size else 1.0)))
    Beq = u[:, :rank].T @ A
    beq = u[:, :rank].T @ qv
    if np.linalg.norm(qv - u[:, :rank] @ beq) > 1e-9 * (1.0 + np.linalg.norm(qv)):
        return False, None

    mats = []
    for i in range(sdim):
        for j in range(i, sdim):
            M = np.zeros((sdim, sdim))
            M[i, j] = M[j, i] = 1.0
            mats.append(M)
    mats.append(np.eye(sdim))
    blocks = [
        SdpBlock(F0=np.zeros((sdim, sdim)), var_idx=np.arange(nv), mats=np.array(mats)),
        SdpBlock(F0=np.array([[1e6]]), var_idx=np.array([t_idx]), mats=np.array([[[1.0]]])),
    ]
    c = np.zeros(nv)
    c[t_idx] = 1.0
    sol = solve(SdpProblem(n_vars=nv, c=c, blocks=blocks, B=Beq, b=beq))
    if sol.status == "Infeasible":
        return False, None
    if sol.status != "Optimal":
        raise RuntimeError(f"SOS test SDP ended with status {sol.status}")
    t_star = float(sol.x[t_idx])
    if t_star > tol:
        return False, None
    G = np.zeros((sdim, sdim))
    col = 0
    for i in range(sdim):
        for j in range(i, sdim):
            G[i, j] = G[j, i] = sol.x[col]
            col += 1
    G = G + max(t_star, 0.0) * np.eye(sdim)
    wv, U = np.linalg.eigh((G + G.T) / 2)
    G = (U * np.clip(wv, 0.0, None)) @ U.T
    return True, G


def is_sos_convex(f: Polynomial, d_cert: int | None = None):
    """Test whether the Hessian quadratic form y'D2f(x)y is SOS in (x,y).

    The certifying basis is {y_i x^beta}; the Gram is returned on success.
    Degree <= 1 objectives are trivially convex.
    """
    n = f.n
    if f.degree <= 1:
        return True, None
    if d_cert is None:
        d_cert = f.degree
    # scalarized Hessian over doubled variables (x_1..x_n, y_1..y_n)
    target = Polynomial.zero(2 * n)
    for i in range(n):
        for j in range(n):
            hij = f.partial(i).partial(j)
            for alpha, c in hij.terms.items():
                key = list(alpha) + [0] * n
                key[n + i] += 1
                key[n + j] += 1
                t = tuple(key)
                target = target + Polynomial(2 * n, {t: c})
    if target.is_zero():
        return True, None
    kx = max(0, (d_cert - 2 + 1) // 2)
    rows = []
    for i in range(n):
        for beta in monomials_upto(n, kx):
            rows.append(tuple(beta) + tuple(int(i == j) for j in range(n)))
    ok, G = _sos_over_basis(target, rows)
    if not ok:
        return False, None
    cert = SosCertificate(
        s=0.0,
        gram_bases=(tuple(rows),),
        grams=(G,),
        multipliers=(),
        residual=Polynomial.zero(2 * n),
        residual_norm=0.0,
    )
    # audit the expansion
    combo = cert.sos_terms(2 * n)[0]
    resid = target - combo
    cert = SosCertificate(
        s=0.0,
        gram_bases=cert.gram_bases,
        grams=cert.grams,
        multipliers=(),
        residual=resid,
        residual_norm=resid.coeff_norm(),
    )
    return True, cert


def convex_cost_bound(prob: SemialgebraicProblem, d: int, f_star: float | None = None) -> dict:
    """Candidate-minimizer quality report for SOS-convex objectives.

    For convex problems the first-order pseudo-moments of the level-d
    relaxation are already a near-minimizer; the report carries the candidate,
    its objective value, the lower bound, and the gap to a known optimum.
    """
    convex, cert = is_sos_convex(prob.objective)
    if not convex:
        raise ValueError("objective is not SOS-convex")
    res = solve_moment_relaxation(prob, d)
    x_cand = candidate_minimizer(res.pseudo_moments, prob.scale)
    f_at = prob.objective(
        x_cand if prob.scale is None else prob.scale.to_normalized(x_cand)
    )
    assert f_at <= res.m_d_star + 1e-6, "convex candidate exceeded the lower bound"
    return {
        "d": d,
        "m_d_star": res.m_d_star,
        "x_candidate": x_cand,
        "f_at_candidate": f_at,
        "gap_to_optimum": (None if f_star is None else f_star - f_at),
        "sos_convex_certificate": cert,
        "assumed_bounded_degree_representation": True,
    }
