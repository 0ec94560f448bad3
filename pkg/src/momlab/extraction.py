"""Flatness detection, atom extraction, candidate minimizers, atom pruning.

A flat pseudo-moment sequence is the moment sequence of an atomic measure;
the atoms are recovered through the eigenstructure of multiplication (shift)
matrices on the column space of the moment matrix, and the weights by solving
the resulting Vandermonde moment system.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .cone import PseudoMomentSequence, ScaleRecord, moment_matrix
from .poly import MonomialBasis

__all__ = [
    "AtomicMeasure",
    "FlatnessReport",
    "check_flatness",
    "extract_atoms",
    "candidate_minimizer",
    "tchakaloff_prune",
    "rank_profile",
]


@dataclass(frozen=True)
class AtomicMeasure:
    """Finite measure sum_j weights[j] * delta_{atoms[j]}; weights positive."""

    atoms: np.ndarray   # (k, n)
    weights: np.ndarray  # (k,)

    def __post_init__(self):
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        weights = np.asarray(self.weights, dtype=float).ravel()
        if atoms.shape[0] != weights.shape[0]:
            raise ValueError("atom/weight count mismatch")
        if np.any(weights <= 0):
            raise ValueError("weights must be positive")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @property
    def n(self) -> int:
        return self.atoms.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[0]

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights))

    def is_probability(self, tol: float = 1e-8) -> bool:
        return abs(self.mass - 1.0) <= tol

    def moments(self, order: int) -> PseudoMomentSequence:
        return PseudoMomentSequence.from_atoms(self.atoms, self.weights, order)

    def integrate(self, f) -> float:
        return float(sum(w * f(x) for w, x in zip(self.weights, self.atoms)))


@dataclass(frozen=True)
class FlatnessReport:
    d: int
    r: int
    rank_full: int
    rank_truncated: int
    singular_values_full: np.ndarray
    singular_values_truncated: np.ndarray
    is_flat: bool
    tol: float


def check_flatness(y: PseudoMomentSequence, d: int, r: int, tol: float = 1e-6) -> FlatnessReport:
    """Compare rank of the order-d moment matrix against the (r-step) truncation.

    The truncated matrix drops ceil(r/2) orders, so its certified products lose
    total degree r; equal numerical ranks mean the sequence extends flatly and
    an atomic representing measure exists.
    """
    if r > d:
        raise ValueError(f"flatness step r={r} exceeds matrix order d={d}")
    if 2 * d > y.order:
        raise ValueError(f"flatness at order {d} needs moments to degree {2*d} > {y.order}")
    drop = -(-r // 2)
    Mf = moment_matrix(y, d)
    Mt = moment_matrix(y, d - drop)
    sf = np.linalg.svd(Mf.M, compute_uv=False)
    st = np.linalg.svd(Mt.M, compute_uv=False)
    rank_f = int(np.sum(sf > tol * sf[0])) if sf.size and sf[0] > 0 else 0
    rank_t = int(np.sum(st > tol * st[0])) if st.size and st[0] > 0 else 0
    return FlatnessReport(
        d=d,
        r=r,
        rank_full=rank_f,
        rank_truncated=rank_t,
        singular_values_full=sf,
        singular_values_truncated=st,
        is_flat=(rank_f == rank_t),
        tol=tol,
    )


def extract_atoms(y: PseudoMomentSequence, d: int, rank_tol: float = 1e-6) -> AtomicMeasure:
    """Recover an atomic measure from a flat order-d moment matrix.

    Factor M = P'P, pick a pivot set of low-degree monomial columns (pivoted
    QR), form per-coordinate shift matrices on that column space, and read the
    atoms off a joint diagonalization: the Schur vectors of one seeded random
    convex combination of the shifts.  Weights then solve the moment system.
    Retries with fresh combinations (deterministic seeds) up to 5 times.
    """
    n = y.n
    M = moment_matrix(y, d)
    basis = M.basis
    w, U = np.linalg.eigh((M.M + M.M.T) / 2)
    lam_max = max(float(w[-1]), 0.0)
    if lam_max == 0.0:
        raise ValueError("zero moment matrix")
    keep = w > rank_tol * lam_max
    rank = int(np.sum(keep))
    P = (np.sqrt(w[keep])[:, None]) * U[:, keep].T  # (rank, size), M = P'P

    low = [i for i, a in enumerate(basis) if sum(a) <= d - 1]
    if len(low) < rank:
        raise ValueError("column space exceeds the shift-closed monomials; not flat")
    _, _, piv = sla.qr(P[:, low], pivoting=True)
    pivots = [low[j] for j in piv[:rank]]
    V = P[:, pivots]
    if np.linalg.cond(V) > 1e10:
        raise ValueError("ill-conditioned pivot basis (borderline flatness)")

    shifts = []
    for i in range(n):
        cols = []
        for pidx in pivots:
            a = list(basis[pidx])
            a[i] += 1
            cols.append(basis.index_of(tuple(a)))
        Ni = np.linalg.solve(V, P[:, cols])
        shifts.append(Ni)

    comm = max(
        (np.linalg.norm(A @ B - B @ A) for A in shifts for B in shifts), default=0.0
    )
    scale = 1.0 + max(np.linalg.norm(A) for A in shifts)
    if comm > 1e-5 * scale * scale:
        raise ValueError("shift matrices do not commute; flatness precondition violated")

    mom_basis = MonomialBasis(n, y.order)
    y_full = y.y
    last_err = None
    for attempt in range(5):
        rng = np.random.default_rng(1234 + attempt)
        coeffs = rng.uniform(size=n)
        coeffs /= coeffs.sum()
        N = sum(c * Ni for c, Ni in zip(coeffs, shifts))
        T, Q = sla.schur(N, output="real")
        sub = np.abs(np.diag(T, -1)) if rank > 1 else np.zeros(0)
        if sub.size and np.max(sub) > 1e-7 * (1.0 + np.max(np.abs(T))):
            last_err = ValueError("complex eigenvalue cluster in shift combination")
            continue
        atoms = np.array(
            [[float(Q[:, j] @ Ni @ Q[:, j]) for Ni in shifts] for j in range(rank)]
        )
        Phi = np.array(
            [[float(np.prod(x ** np.array(a))) for x in atoms] for a in mom_basis]
        )
        weights, *_ = np.linalg.lstsq(Phi, y_full, rcond=None)
        resid = float(np.linalg.norm(Phi @ weights - y_full))
        if resid > 1e-5 * (1.0 + np.linalg.norm(y_full)) or np.any(weights <= 1e-10):
            last_err = ValueError(
                f"moment system residual {resid:.2e} / nonpositive weight; retrying"
            )
            continue
        return AtomicMeasure(atoms=atoms, weights=weights)
    raise last_err or ValueError("atom extraction failed")


def candidate_minimizer(y: PseudoMomentSequence, scale: ScaleRecord | None = None) -> np.ndarray:
    """First-order pseudo-moments (L(X_1),...,L(X_n)), mapped to original coordinates.

    No feasibility is implied; low levels routinely place this point outside K.
    """
    if abs(y.value((0,) * y.n) - 1.0) > 1e-6:
        raise ValueError("candidate minimizer needs a normalized sequence (y_0 = 1)")
    x = np.array([y.value(tuple(int(i == j) for j in range(y.n))) for i in range(y.n)])
    if scale is not None:
        x = scale.to_original(x)
    return x


def tchakaloff_prune(mu: AtomicMeasure, t: int) -> AtomicMeasure:
    """Reduce an atomic measure to at most r(n,t) atoms with identical moments <= t.

    Iterated Caratheodory steps: find a null vector of the atoms' moment-vector
    matrix, slide the weights along it until one hits zero, drop that atom.
    """
    basis = MonomialBasis(mu.n, t)
    l = len(basis)
    atoms = mu.atoms.copy()
    weights = mu.weights.copy()
    while atoms.shape[0] > l:
        Phi = np.array(
            [[float(np.prod(x ** np.array(a))) for x in atoms] for a in basis]
        )
        _, s, vt = np.linalg.svd(Phi, full_matrices=True)
        c = vt[-1]
        if np.linalg.norm(Phi @ c) > 1e-10 * max(1.0, float(s[0])):
            break  # no kernel direction left (should not happen while k > l)
        if np.max(c) < np.max(-c):
            c = -c
        mask = c > 1e-14
        if not np.any(mask):
            break
        ratios = weights[mask] / c[mask]
        tau = float(np.min(ratios))
        weights = weights - tau * c
        # the argmin ratio atom hits zero exactly; clear it and any round-off dust
        weights[np.where(mask)[0][int(np.argmin(ratios))]] = 0.0
        keep = weights > 1e-14 * max(1.0, float(np.max(weights)))
        atoms = atoms[keep]
        weights = weights[keep]
    return AtomicMeasure(atoms=atoms, weights=weights)


def rank_profile(mu: AtomicMeasure, d_max: int) -> list:
    """Numerical ranks of the measure's moment matrices for d = 0..d_max."""
    y = mu.moments(2 * d_max)
    return [moment_matrix(y, d).numerical_rank(1e-6) for d in range(d_max + 1)]
