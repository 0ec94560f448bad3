"""Support estimation from (pseudo-)moments.

Two routes: sublevel sets of the Christoffel-Darboux kernel diagonal
K(x,x) = v(x)' M^{-1} v(x), which blows up polynomially fast off the support,
and an outer approximation from even-power moment growth ("power method"):
x can only be in the support if |q(x)| <= sup_n L(q^{2n})^{1/(2n)} for every
test polynomial q.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .cone import PseudoMomentSequence, moment_matrix
from .poly import MonomialBasis, Polynomial, monomials_upto, r_dim

__all__ = [
    "CdKernel",
    "SupportGrid",
    "cd_kernel",
    "cd_threshold",
    "cd_support_grid",
    "power_method_margin",
    "default_power_family",
]


@dataclass(frozen=True)
class CdKernel:
    """Diagonal-evaluable Christoffel-Darboux kernel K(x,y) = v(x)'M^+ v(y).

    `factor` is F with M^+ = F'F, so K(x,x) = ||F v(x)||^2 >= 0.  `singular`
    flags the pseudo-inverse branch (rank-deficient moment matrix, e.g.
    moments of an atomic measure), where sublevel-set guarantees degrade.
    """

    d: int
    factor: np.ndarray
    basis: MonomialBasis
    rank: int
    singular: bool

    def __call__(self, x, z=None) -> float:
        vx = self.factor @ self.basis.eval_vector(x)
        if z is None:
            return float(vx @ vx)
        return float(vx @ (self.factor @ self.basis.eval_vector(z)))

    def diag(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return np.array([self(x) for x in points])


def cd_kernel(y: PseudoMomentSequence, d: int, pinv_tol: float = 1e-8) -> CdKernel:
    """Kernel of the order-d moment matrix, pseudo-inverted below pinv_tol (relative)."""
    M = moment_matrix(y, d)
    w, U = np.linalg.eigh((M.M + M.M.T) / 2)
    lam_max = float(w[-1]) if w.size else 0.0
    if lam_max <= 0.0:
        raise ValueError("moment matrix is zero; kernel undefined")
    keep = w > pinv_tol * lam_max
    rank = int(np.sum(keep))
    F = (1.0 / np.sqrt(w[keep]))[:, None] * U[:, keep].T
    return CdKernel(d=d, factor=F, basis=M.basis, rank=rank, singular=rank < M.size)


def cd_threshold(d: int, alpha: float, r: int) -> float:
    """Sublevel threshold s_d = (1-alpha)/16 * e^{2r} d^r / (3r)^{2r}.

    The side condition r > d is part of the formula and enforced verbatim,
    even though it reverses the usual role of the two degrees.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    if r <= d:
        raise ValueError("threshold formula requires r > d")
    return (1.0 - alpha) / 16.0 * math.exp(2 * r) * d**r / (3 * r) ** (2 * r)


@dataclass(frozen=True)
class SupportGrid:
    box: tuple               # ((lo, hi), ...) per axis
    resolution: int
    points: np.ndarray       # (m, n)
    values: np.ndarray       # K(x,x) or margins
    included: np.ndarray     # boolean inclusion flags
    threshold: float
    volume_fraction: float
    hausdorff_to_reference: float | None = None


def _grid_points(box, resolution: int):
    axes = [np.linspace(lo, hi, resolution) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def cd_support_grid(
    kernel: CdKernel,
    box,
    resolution: int,
    threshold: float,
    reference_points: np.ndarray | None = None,
) -> SupportGrid:
    """Evaluate the kernel diagonal on a grid and flag the sublevel set K(x,x) < threshold."""
    n = kernel.basis.n
    box = tuple(tuple(map(float, b)) for b in (box if hasattr(box[0], "__len__") else [box] * n))
    pts = _grid_points(box, resolution)
    vals = kernel.diag(pts)
    inc = vals < threshold
    haus = None
    if reference_points is not None and np.any(inc):
        ref = np.atleast_2d(np.asarray(reference_points, dtype=float))
        dmat = np.linalg.norm(pts[inc][:, None, :] - ref[None, :, :], axis=-1)
        haus = float(np.max(np.min(dmat, axis=1)))
    return SupportGrid(
        box=box,
        resolution=resolution,
        points=pts,
        values=vals,
        included=inc,
        threshold=threshold,
        volume_fraction=float(np.mean(inc)),
        hausdorff_to_reference=haus,
    )


def default_power_family(n: int) -> list:
    """All monomials of degree <= 2 (the default test family for the power method)."""
    return [Polynomial(n, {tuple(a): 1.0}) for a in monomials_upto(n, 2)]


def power_method_margin(
    y: PseudoMomentSequence,
    d: int,
    family: list,
    x,
    tol: float = 1e-9,
) -> float:
    """min over the family of [sup over admissible n of L(q^{2n})^{1/2n}] - |q(x)|.

    Nonnegative margin means x survives every even-power moment-growth test
    the degree budget d allows; the set of such x contains the support of any
    representing measure.
    """
    if d > y.order:
        raise ValueError(f"degree budget {d} needs moments to degree {d} > {y.order}")
    x = np.asarray(x, dtype=float)
    margin = math.inf
    for q in family:
        dq = q.degree
        if dq == 0:
            bound = abs(q(np.zeros(y.n)))
        else:
            n_max = d // (2 * dq)
            if n_max < 1:
                raise ValueError(f"family member of degree {dq} exceeds budget {d}")
            bound = 0.0
            power = Polynomial.constant(1.0, y.n)
            q2 = q * q
            for k in range(1, n_max + 1):
                power = power * q2
                val = y.apply(power)
                if val < -tol * (1.0 + abs(val)):
                    raise ValueError(
                        f"negative even pseudo-moment L(q^{2*k}) = {val}; invalid input"
                    )
                bound = max(bound, max(val, 0.0) ** (1.0 / (2 * k)))
        margin = min(margin, bound - abs(q(x)))
    return float(margin)
