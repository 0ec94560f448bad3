"""Moment relaxations, SOS tightenings, certificates, membership tests.

Level d bounds the total degree of every certified product.  The moment side
minimizes L(f) over pseudo-moment sequences with PSD moment and localizing
matrices and L(h * X^gamma) = 0 for equality constraints h; the SOS side is
its SDP dual, read off the same solve.  Equality relations are eliminated
up front (the pseudo-moment vector is parametrized over an affine subspace),
which keeps the remaining SDP strictly feasible even when K is finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cone import PseudoMomentSequence, SemialgebraicProblem
from .poly import MonomialBasis, Polynomial, monomials_upto
from .sdp import SdpBlock, SdpOptions, SdpProblem, extract_dual_gram, solve

__all__ = [
    "SosCertificate",
    "RelaxationResult",
    "MomentSdp",
    "relaxation_order",
    "build_moment_sdp",
    "solve_moment_relaxation",
    "solve_sos_tightening",
    "qmodule_membership",
    "compute_d0",
    "run_hierarchy",
]

MEMBERSHIP_TOL = 1e-7


def relaxation_order(d: int) -> int:
    """Moment-matrix order used at level d (pseudo-moments reach degree 2*order)."""
    return (d + 1) // 2


@dataclass(frozen=True)
class SosCertificate:
    """Weighted SOS decomposition q = s + sigma_0 + sum sigma_i p_i + sum lam_j h_j.

    `grams[0]` is the Gram of sigma_0 over `gram_bases[0]`; subsequent entries
    pair with the inequality constraints in problem order (skipped constraints
    carry an empty Gram).  `multipliers` are the (sign-free) equality
    multipliers lam_j.  `residual` is what is left of q - s after subtracting
    the decomposition; its coefficient norm is the soundness measure.
    """

    s: float
    gram_bases: tuple
    grams: tuple
    multipliers: tuple
    residual: Polynomial
    residual_norm: float

    def sos_terms(self, n: int) -> list:
        """The polynomials sigma_j expanded from their Gram matrices."""
        out = []
        for expo, G in zip(self.gram_bases, self.grams):
            terms = {}
            for i, a in enumerate(expo):
                for j, b in enumerate(expo):
                    key = tuple(x + z for x, z in zip(a, b))
                    terms[key] = terms.get(key, 0.0) + G[i, j]
            out.append(Polynomial(n, terms))
        return out


@dataclass(frozen=True)
class RelaxationResult:
    d: int
    m_d_star: float
    pseudo_moments: PseudoMomentSequence | None
    f_d_star: float
    certificate: SosCertificate | None
    status: str


@dataclass(frozen=True)
class MomentSdp:
    """Assembled level-d moment SDP in eliminated coordinates y = y_p + N z."""

    d: int
    order: int
    basis: MonomialBasis           # pseudo-moment basis, degree 2*order
    problem: SdpProblem            # variables z
    y_particular: np.ndarray
    nullbasis: np.ndarray          # columns span the admissible y directions
    offset: float                  # L(f) = c.z + offset
    block_weights: tuple           # g multiplying each PSD block (g=1 for the moment block)
    block_bases: tuple             # kept monomial rows of each block


def _coeff_vec(p: Polynomial, basis: MonomialBasis) -> np.ndarray:
    v = np.zeros(len(basis))
    for alpha, c in p.terms.items():
        v[basis.index_of(alpha)] = c
    return v


def _relation_rows(prob: SemialgebraicProblem, budget: int, basis: MonomialBasis):
    """Coefficient rows of h * X^gamma for every equality h, deg(h*X^gamma) <= budget."""
    rows = []
    owners = []  # (equality index, gamma) for multiplier recovery
    for j, h in enumerate(prob.equalities):
        if h.is_zero():
            continue
        for gamma in monomials_upto(prob.n, budget - h.degree):
            mono = Polynomial(prob.n, {tuple(gamma): 1.0})
            rows.append(_coeff_vec(h * mono, basis))
            owners.append((j, tuple(gamma)))
    return rows, owners


def _nullspace(E: np.ndarray, rtol: float = 1e-12):
    u, s, vt = np.linalg.svd(E, full_matrices=True)
    tol = max(E.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    tol = max(tol, rtol * (s[0] if s.size else 0.0))
    rank = int(np.sum(s > tol))
    return vt[rank:].T, rank


def _dedup_rows(F0: np.ndarray, FN: np.ndarray):
    """Indices of structurally distinct rows of an affine matrix F0 + FN.z.

    Equality relations can make two monomial rows of a moment/localizing
    block identical as functions of z (e.g. the rows of x and x^2 on {0,1});
    keeping one of each restores strict feasibility.
    """
    s = F0.shape[0]
    sigs = np.concatenate([F0, FN.reshape(s, -1)], axis=1)
    scale = 1.0 + float(np.max(np.abs(sigs)))
    keep = []
    for i in range(s):
        dup = any(np.max(np.abs(sigs[i] - sigs[j])) <= 1e-12 * scale for j in keep)
        if not dup:
            keep.append(i)
    return keep


def build_moment_sdp(prob: SemialgebraicProblem, d: int) -> MomentSdp:
    """Assemble the level-d moment relaxation as an explicit SDP over z."""
    deg_needed = max(prob.objective.degree, prob.max_constraint_degree)
    if d < deg_needed:
        raise ValueError(f"level {d} below problem degree {deg_needed}")
    n = prob.n
    k = relaxation_order(d)
    budget = 2 * k
    basis = MonomialBasis(n, budget)
    m = len(basis)

    # linear constraints on y: normalization + equality relations
    e0 = np.zeros(m)
    e0[0] = 1.0
    rel_rows, _ = _relation_rows(prob, budget, basis)
    E = np.vstack([e0] + rel_rows) if rel_rows else e0.reshape(1, -1)
    rhs = np.zeros(E.shape[0])
    rhs[0] = 1.0
    y_p, *_ = np.linalg.lstsq(E, rhs, rcond=None)
    if np.linalg.norm(E @ y_p - rhs) > 1e-8:
        raise ValueError("equality constraints are inconsistent with L(1) = 1")
    N, _ = _nullspace(E)
    nv = N.shape[1]

    weights = [Polynomial.constant(1.0, n)] + list(prob.constraints)
    blocks, block_weights, block_bases = [], [], []
    for g in weights:
        kg = (budget - g.degree) // 2
        if kg < 0:
            continue
        rows = MonomialBasis(n, kg)
        s = len(rows)
        V = np.zeros((s * s, m))
        for i, a in enumerate(rows):
            for j, b in enumerate(rows):
                for gamma, c in g.terms.items():
                    key = tuple(x + z + w for x, z, w in zip(a, b, gamma))
                    V[i * s + j, basis.index_of(key)] += c
        F0 = (V @ y_p).reshape(s, s)
        FN = (V @ N).reshape(s, s, nv)
        keep = _dedup_rows(F0, FN)
        F0 = F0[np.ix_(keep, keep)]
        FN = FN[np.ix_(keep, keep)]
        mats = np.transpose(FN, (2, 0, 1))
        blocks.append(SdpBlock(F0=F0, var_idx=np.arange(nv), mats=mats))
        block_weights.append(g)
        block_bases.append(tuple(rows[i] for i in keep))

    f_vec = _coeff_vec(prob.objective, basis)
    c = N.T @ f_vec
    offset = float(f_vec @ y_p)
    sdp = SdpProblem(n_vars=nv, c=c, blocks=blocks, B=None, b=None)
    return MomentSdp(
        d=d,
        order=k,
        basis=basis,
        problem=sdp,
        y_particular=y_p,
        nullbasis=N,
        offset=offset,
        block_weights=tuple(block_weights),
        block_bases=tuple(block_bases),
    )


def _recover_multipliers(prob, residual_vec, basis, budget):
    """Least-squares equality multipliers soaking up the certificate residual."""
    rel_rows, owners = _relation_rows(prob, budget, basis)
    multipliers = [Polynomial.zero(prob.n) for _ in prob.equalities]
    if not rel_rows:
        return tuple(multipliers), residual_vec
    R = np.array(rel_rows).T  # columns are h*X^gamma coefficient vectors
    lam, *_ = np.linalg.lstsq(R, residual_vec, rcond=None)
    for (j, gamma), lv in zip(owners, lam):
        mono = Polynomial(prob.n, {gamma: float(lv)})
        multipliers[j] = multipliers[j] + mono
    return tuple(multipliers), residual_vec - R @ lam


def _certificate_from_duals(prob, ms: MomentSdp, sol, s_value: float) -> SosCertificate:
    grams = tuple(extract_dual_gram(sol, j) for j in range(len(ms.block_bases)))
    cert = SosCertificate(
        s=s_value,
        gram_bases=ms.block_bases,
        grams=grams,
        multipliers=(),
        residual=Polynomial.zero(prob.n),
        residual_norm=math.inf,
    )
    combo = Polynomial.zero(prob.n)
    for sigma, g in zip(cert.sos_terms(prob.n), ms.block_weights):
        combo = combo + sigma * g
    target = prob.objective - s_value - combo
    res_vec = _coeff_vec(target, ms.basis)
    multipliers, res_vec = _recover_multipliers(prob, res_vec, ms.basis, 2 * ms.order)
    residual = Polynomial.from_coeffs(ms.basis, res_vec)
    return SosCertificate(
        s=s_value,
        gram_bases=cert.gram_bases,
        grams=grams,
        multipliers=multipliers,
        residual=residual,
        residual_norm=float(np.linalg.norm(res_vec)),
    )


def solve_moment_relaxation(
    prob: SemialgebraicProblem,
    d: int,
    opts: SdpOptions | None = None,
    want_certificate: bool = True,
) -> RelaxationResult:
    """Level-d moment relaxation: returns m_d*, pseudo-moments and the dual bound."""
    ms = build_moment_sdp(prob, d)
    if ms.problem.n_vars == 0:
        # equalities pin every pseudo-moment; nothing to optimize
        y = PseudoMomentSequence(prob.n, 2 * ms.order, ms.y_particular, ms.basis)
        val = ms.offset
        return RelaxationResult(d, val, y, val, None, "Optimal")
    sol = solve(ms.problem, opts)
    if sol.status != "Optimal" and opts is None:
        # degenerate problems can stall just above the default tolerances;
        # a slightly looser target still leaves orders of magnitude of margin
        # over every downstream tolerance
        sol = solve(ms.problem, SdpOptions(gap_tol=1e-7, feas_tol=1e-7))
    if sol.status != "Optimal":
        raise RuntimeError(f"level {d}: moment SDP ended with status {sol.status}")
    y_vec = ms.y_particular + ms.nullbasis @ sol.x
    y = PseudoMomentSequence(prob.n, 2 * ms.order, y_vec, ms.basis)
    m_d = sol.value + ms.offset
    f_d = sol.dual_value + ms.offset
    cert = _certificate_from_duals(prob, ms, sol, f_d) if want_certificate else None
    return RelaxationResult(d, m_d, y, f_d, cert, sol.status)


def solve_sos_tightening(prob: SemialgebraicProblem, d: int, opts=None):
    """SOS lower bound f_d* with certificate, read off the moment SDP's dual."""
    res = solve_moment_relaxation(prob, d, opts=opts, want_certificate=True)
    return res.f_d_star, res.certificate


def _sym_elem(s: int, a: int, b: int) -> np.ndarray:
    M = np.zeros((s, s))
    M[a, b] = M[b, a] = 1.0
    return M


def qmodule_membership(q: Polynomial, prob: SemialgebraicProblem, d: int, opts=None):
    """Is q = sigma_0 + sum sigma_i p_i + sum lam_j h_j with every product degree <= d?

    Decided by a phase-I SDP: minimize t subject to G_j + t*I PSD and exact
    coefficient matching; membership iff the optimum is <= ~1e-7.  Equality
    multipliers are eliminated from the matching equations first (projection
    onto the complement of their column span) so every remaining variable
    appears in a PSD block.
    """
    if q.n != prob.n:
        raise ValueError("dimension mismatch")
    if d < q.degree:
        return False, None
    n = prob.n
    basis = MonomialBasis(n, d)
    m = len(basis)

    weights = [Polynomial.constant(1.0, n)] + list(prob.constraints)
    gram_rows = []
    var_slices = []
    nv = 0
    for g in weights:
        kg = (d - g.degree) // 2
        if kg < 0:
            gram_rows.append(None)
            var_slices.append((nv, nv))
            continue
        rows = MonomialBasis(n, kg)
        gram_rows.append(rows)
        cnt = len(rows) * (len(rows) + 1) // 2
        var_slices.append((nv, nv + cnt))
        nv += cnt
    t_idx = nv
    nv += 1

    # coefficient-matching matrix over Gram variables
    A = np.zeros((m, nv))
    for g, rows, (lo, hi) in zip(weights, gram_rows, var_slices):
        if rows is None:
            continue
        col = lo
        for i in range(len(rows)):
            for j in range(i, len(rows)):
                factor = 1.0 if i == j else 2.0
                key0 = tuple(x + z for x, z in zip(rows[i], rows[j]))
                for gamma, c in g.terms.items():
                    key = tuple(x + w for x, w in zip(key0, gamma))
                    A[basis.index_of(key), col] += factor * c
                col += 1
    qv = _coeff_vec(q, basis)

    rel_rows, owners = _relation_rows(prob, d, basis)
    if rel_rows:
        R = np.array(rel_rows).T  # m x n_lam
        u, s, vt = np.linalg.svd(R, full_matrices=True)
        rank = int(np.sum(s > max(R.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)))
        P = u[:, rank:]  # orthonormal complement of the multiplier span
        Aeq, beq = P.T @ A, P.T @ qv
    else:
        R = np.zeros((m, 0))
        Aeq, beq = A, qv

    # drop dependent matching rows, detecting inconsistency (=> non-member)
    u, s, vt = np.linalg.svd(Aeq, full_matrices=True)
    rank = int(np.sum(s > max(Aeq.shape) * np.finfo(float).eps * (s[0] if s.size else 1.0)))
    B = u[:, :rank].T @ Aeq
    b = u[:, :rank].T @ beq
    if np.linalg.norm(beq - u[:, :rank] @ b) > 1e-9 * (1.0 + np.linalg.norm(beq)):
        return False, None

    blocks = []
    for rows, (lo, hi) in zip(gram_rows, var_slices):
        if rows is None:
            continue
        sdim = len(rows)
        idx = list(range(lo, hi)) + [t_idx]
        mats = []
        for i in range(sdim):
            for j in range(i, sdim):
                mats.append(_sym_elem(sdim, i, j))
        mats.append(np.eye(sdim))
        blocks.append(SdpBlock(F0=np.zeros((sdim, sdim)), var_idx=np.array(idx), mats=np.array(mats)))
    # safeguard keeping t bounded below even on inconsistent numerics
    blocks.append(
        SdpBlock(F0=np.array([[1e6]]), var_idx=np.array([t_idx]), mats=np.array([[[1.0]]]))
    )

    c = np.zeros(nv)
    c[t_idx] = 1.0
    sdp = SdpProblem(n_vars=nv, c=c, blocks=blocks, B=B, b=b)
    sol = solve(sdp, opts)
    if sol.status == "Infeasible":
        return False, None
    if sol.status != "Optimal":
        raise RuntimeError(f"membership SDP ended with status {sol.status}")
    t_star = float(sol.x[t_idx])
    if t_star > MEMBERSHIP_TOL:
        return False, None

    # assemble the certificate from the (shifted) Gram variables
    gram_bases, grams, used_weights = [], [], []
    for g, rows, (lo, hi) in zip(weights, gram_rows, var_slices):
        if rows is None:
            continue
        sdim = len(rows)
        G = np.zeros((sdim, sdim))
        col = lo
        for i in range(sdim):
            for j in range(i, sdim):
                G[i, j] = G[j, i] = sol.x[col]
                col += 1
        G = G + max(t_star, 0.0) * np.eye(sdim)
        w, U = np.linalg.eigh((G + G.T) / 2)
        G = (U * np.clip(w, 0.0, None)) @ U.T
        gram_bases.append(tuple(rows))
        grams.append(G)
        used_weights.append(g)
    cert = SosCertificate(
        s=0.0,
        gram_bases=tuple(gram_bases),
        grams=tuple(grams),
        multipliers=(),
        residual=Polynomial.zero(n),
        residual_norm=math.inf,
    )
    combo = Polynomial.zero(n)
    for sigma, g in zip(cert.sos_terms(n), used_weights):
        combo = combo + sigma * g
    res_vec = _coeff_vec(q - combo, basis)
    multipliers, res_vec = _recover_multipliers(prob, res_vec, basis, d)
    cert = SosCertificate(
        s=0.0,
        gram_bases=cert.gram_bases,
        grams=cert.grams,
        multipliers=multipliers,
        residual=Polynomial.from_coeffs(basis, res_vec),
        residual_norm=float(np.linalg.norm(res_vec)),
    )
    return True, cert


def compute_d0(prob: SemialgebraicProblem, d_max: int):
    """Smallest k <= d_max with 1 - p in the level-k module for every constraint p."""
    targets = [Polynomial.constant(1.0, prob.n) - p for p in prob.constraint_pairs()]
    for k in range(d_max + 1):
        ok = True
        for q in targets:
            member, _ = qmodule_membership(q, prob, k)
            if not member:
                ok = False
                break
        if ok:
            return k
    return None


def run_hierarchy(prob: SemialgebraicProblem, d_min: int, d_max: int, opts=None):
    """Solve levels d_min..d_max; failures are recorded, monotonicity checked."""
    results = []
    for d in range(d_min, d_max + 1):
        try:
            results.append(solve_moment_relaxation(prob, d, opts=opts))
        except Exception as exc:  # noqa: BLE001 - per-level isolation is the contract
            results.append(
                RelaxationResult(d, math.nan, None, math.nan, None, f"Failed: {exc}")
            )
    solved = [r.m_d_star for r in results if r.status == "Optimal"]
    for lo, hi in zip(solved, solved[1:]):
        assert hi >= lo - 1e-6, f"lower bounds decreased: {lo} -> {hi}"
    return results
