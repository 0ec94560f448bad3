"""Benchmark corpus, brute-force oracles, rate fitting and reporting.

Every derived reference value in the test-suite comes from the grid oracle
here: dense feasibility-filtered minimization over a box containing K.
The suite runs the lower (moment) and upper (density) hierarchies side by
side, measures candidate-minimizer and moment-space convergence, and fits
log-log rates where the gaps stay bounded away from zero.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .cone import PseudoMomentSequence, SemialgebraicProblem
from .extraction import candidate_minimizer, check_flatness, extract_atoms
from .hierarchy import solve_moment_relaxation
from .poly import MonomialBasis, Polynomial
from .upperbound import ReferenceMeasure, solve_upper_bound

__all__ = [
    "BenchProblem",
    "RateFit",
    "RateReport",
    "builtin_corpus",
    "brute_force_oracle",
    "fit_rate",
    "moment_distance_to_optimal",
    "run_suite",
    "load_corpus",
]


@dataclass(frozen=True)
class BenchProblem:
    id: str
    problem: SemialgebraicProblem
    d_min: int
    d_max: int
    upper_levels: tuple
    measure: ReferenceMeasure
    unique_minimizer: bool
    box: tuple = ((-1.0, 1.0),)


@dataclass(frozen=True)
class RateFit:
    slope: float | None
    intercept: float | None
    r_squared: float | None
    finite_convergence_level: int | None
    n_points: int

    def describe(self) -> str:
        if self.finite_convergence_level is not None:
            return f"finite convergence at level {self.finite_convergence_level}"
        if self.slope is None:
            return "not enough usable points"
        return f"slope {self.slope:+.3f} (R^2 {self.r_squared:.3f})"


@dataclass
class RateReport:
    problem_id: str
    levels: list
    statuses: list
    m_values: list
    f_values: list
    m_gaps: list            # f* - m_d
    upper_levels: list
    u_values: list
    u_gaps: list            # u_d - f*
    est_errors: list        # ||x^(d) - x*||
    x_check_errors: list    # ||x_check - x*|| on the upper side
    mom_dists: list
    flat_levels: list
    lower_fit: RateFit | None
    upper_fit: RateFit | None
    f_star: float
    x_star: np.ndarray
    s_star: np.ndarray
    grid_resolution: int


def _default_resolution(n: int) -> int:
    return 201 if n <= 2 else 61


def brute_force_oracle(prob: SemialgebraicProblem, resolution: int | None = None, box=None):
    """Dense-grid minimum of the objective over K (the oracle for derived values).

    Returns (f_star, x_star, near-optimal sample set).  Grid points are kept
    when every inequality exceeds -1e-9 and every equality vanishes to 1e-9.
    """
    n = prob.n
    if n > 3:
        raise ValueError("brute force oracle is limited to n <= 3")
    if resolution is None:
        resolution = _default_resolution(n)
    if box is None:
        box = ((-1.0, 1.0),) * n
    axes = [np.linspace(lo, hi, resolution) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    feas = np.ones(pts.shape[0], dtype=bool)
    for p in prob.constraints:
        feas &= p.eval_grid(pts) >= -1e-9
    for h in prob.equalities:
        feas &= np.abs(h.eval_grid(pts)) <= 1e-9
    pts = pts[feas]
    if pts.shape[0] == 0:
        raise ValueError("no feasible grid point; raise the resolution")
    vals = prob.objective.eval_grid(pts)
    j = int(np.argmin(vals))
    f_star = float(vals[j])
    s_star = pts[vals <= f_star + 1e-6]
    return f_star, pts[j], s_star


def fit_rate(levels, gaps, floor: float = 1e-9) -> RateFit:
    """Least-squares slope of log(gap) against log(level).

    Levels whose gap has hit the solver floor are treated as finite
    convergence and excluded from the fit.
    """
    levels = list(levels)
    gaps = [float(g) for g in gaps]
    finite_level = None
    for d, g in zip(levels, gaps):
        if g <= floor:
            finite_level = d
            break
    usable = [(d, g) for d, g in zip(levels, gaps) if g > floor and d >= 1]
    if len(usable) < 3:
        if finite_level is not None:
            return RateFit(None, None, None, finite_level, len(usable))
        raise ValueError(f"need at least 3 positive gaps, got {len(usable)}")
    lx = np.log([d for d, _ in usable])
    ly = np.log([g for _, g in usable])
    A = np.stack([lx, np.ones_like(lx)], axis=1)
    coef, res, *_ = np.linalg.lstsq(A, ly, rcond=None)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    ss_res = float(np.sum((A @ coef - ly) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return RateFit(float(coef[0]), float(coef[1]), r2, finite_level, len(usable))


def moment_distance_to_optimal(y: PseudoMomentSequence, s_star_samples, r: int = 2) -> float:
    """Sup-norm distance (over degrees <= r) from y to moments of measures on S*.

    Linear program: min t over probability weights w on the sample points with
    |y_alpha - sum_j w_j x_j^alpha| <= t for every |alpha| <= r.
    """
    samples = np.atleast_2d(np.asarray(s_star_samples, dtype=float))
    if samples.shape[0] == 0:
        raise ValueError("empty optimal sample set")
    basis = MonomialBasis(y.n, r)
    Phi = np.array(
        [[float(np.prod(x ** np.array(a))) for x in samples] for a in basis]
    )  # (l, k)
    yv = np.array([y.value(a) for a in basis])
    k = samples.shape[0]
    # variables: w_1..w_k, t
    ones_t = np.ones((Phi.shape[0], 1))
    A_ub = np.vstack(
        [np.hstack([Phi, -ones_t]), np.hstack([-Phi, -ones_t])]
    )
    b_ub = np.concatenate([yv, -yv])
    A_eq = np.concatenate([np.ones(k), [0.0]]).reshape(1, -1)
    c = np.zeros(k + 1)
    c[-1] = 1.0
    res = linprog(
        c,
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq,
        b_eq=[1.0],
        bounds=[(0, None)] * k + [(0, None)],
        method="highs",
    )
    if not res.success:
        raise RuntimeError(f"moment-distance LP failed: {res.message}")
    return float(res.fun)


def builtin_corpus() -> list:
    """The five shipped problems (n <= 2, oracle-checkable)."""
    x = Polynomial.variable(0, 1)
    x1 = Polynomial.variable(0, 2)
    x2 = Polynomial.variable(1, 2)
    box2 = (1 - x1 * x1, 1 - x2 * x2)

    corner_atoms = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    corner_table = {
        a: float(v)
        for a, v in zip(
            MonomialBasis(2, 8),
            PseudoMomentSequence.from_atoms(corner_atoms, [0.25] * 4, 8).y,
        )
    }

    return [
        BenchProblem(
            id="binary-corner",
            problem=SemialgebraicProblem(
                n=2,
                objective=-x1 - x2 + x1 * x2,
                equalities=(x1 - x1 * x1, x2 - x2 * x2),
            ),
            d_min=2,
            d_max=4,
            upper_levels=(0, 2),
            measure=ReferenceMeasure("table", 2, table=corner_table),
            unique_minimizer=False,
            box=((-1.0, 1.0), (-1.0, 1.0)),
        ),
        BenchProblem(
            id="line-min",
            problem=SemialgebraicProblem(n=1, objective=x, constraints=(1 - x * x,)),
            d_min=2,
            d_max=6,
            upper_levels=(0, 2, 4, 6, 8),
            measure=ReferenceMeasure.box(1),
            unique_minimizer=True,
            box=((-1.0, 1.0),),
        ),
        BenchProblem(
            id="shifted-paraboloid",
            problem=SemialgebraicProblem(
                n=2,
                objective=(x1 - 0.3) * (x1 - 0.3) + (x2 + 0.2) * (x2 + 0.2),
                constraints=box2,
            ),
            d_min=2,
            d_max=6,
            upper_levels=(0, 2, 4, 6),
            measure=ReferenceMeasure.box(2),
            unique_minimizer=True,
            box=((-1.0, 1.0), (-1.0, 1.0)),
        ),
        BenchProblem(
            id="two-well",
            problem=SemialgebraicProblem(
                n=1, objective=x**4 - x * x, constraints=(1 - x * x,)
            ),
            d_min=4,
            d_max=8,
            upper_levels=(0, 2, 4, 6, 8),
            measure=ReferenceMeasure.box(1),
            unique_minimizer=False,
            box=((-1.0, 1.0),),
        ),
        BenchProblem(
            id="motzkin-box",
            problem=SemialgebraicProblem(
                n=2,
                objective=(
                    x1**4 * x2**2 + x1**2 * x2**4 - 3.0 * (x1 * x2) ** 2 + 1.0
                ),
                constraints=box2,
            ),
            d_min=6,
            d_max=8,
            upper_levels=(0, 2, 4, 6),
            measure=ReferenceMeasure.box(2),
            unique_minimizer=False,
            box=((-1.0, 1.0), (-1.0, 1.0)),
        ),
    ]


def load_corpus(data) -> list:
    """Corpus from JSON: list of entries with a problem and run parameters."""
    out = []
    for e in data:
        prob = SemialgebraicProblem.from_json_dict(e["problem"])
        mkind = e.get("measure", "box")
        if isinstance(mkind, dict):
            table = {tuple(t["alpha"]): float(t["y"]) for t in mkind["values"]}
            measure = ReferenceMeasure("table", prob.n, table=table)
        else:
            measure = ReferenceMeasure(mkind, prob.n)
        box = tuple(tuple(b) for b in e.get("box", [[-1.0, 1.0]] * prob.n))
        out.append(
            BenchProblem(
                id=e["id"],
                problem=prob,
                d_min=int(e.get("d_min", 2)),
                d_max=int(e.get("d_max", 6)),
                upper_levels=tuple(e.get("upper_levels", (0, 2, 4))),
                measure=measure,
                unique_minimizer=bool(e.get("unique_minimizer", False)),
                box=box,
            )
        )
    return out


def _run_problem(bp: BenchProblem, r_dist: int = 2) -> RateReport:
    f_star, x_star, s_star = brute_force_oracle(bp.problem, box=bp.box)
    levels, statuses, m_vals, f_vals, m_gaps = [], [], [], [], []
    est_errs, mom_dists, flat_levels = [], [], []
    r_flat = max(2, bp.problem.max_constraint_degree)
    for d in range(bp.d_min, bp.d_max + 1):
        levels.append(d)
        try:
            res = solve_moment_relaxation(bp.problem, d)
        except Exception as exc:  # noqa: BLE001 - per-problem isolation
            statuses.append(f"Failed: {exc}")
            m_vals.append(math.nan)
            f_vals.append(math.nan)
            m_gaps.append(math.nan)
            est_errs.append(math.nan)
            mom_dists.append(math.nan)
            continue
        statuses.append(res.status)
        m_vals.append(res.m_d_star)
        f_vals.append(res.f_d_star)
        m_gaps.append(f_star - res.m_d_star)
        y = res.pseudo_moments
        x_d = candidate_minimizer(y, bp.problem.scale)
        est_errs.append(float(np.linalg.norm(x_d - x_star)))
        mom_dists.append(moment_distance_to_optimal(y, s_star, r=r_dist))
        k = y.order // 2
        if k >= r_flat and check_flatness(y, k, r_flat).is_flat:
            try:
                extract_atoms(y, k)
                flat_levels.append(d)
            except ValueError:
                pass

    upper_levels, u_vals, u_gaps, x_check_errs = [], [], [], []
    for d in bp.upper_levels:
        try:
            ub = solve_upper_bound(bp.problem.objective, bp.measure, d)
        except ValueError:
            continue
        upper_levels.append(d)
        u_vals.append(ub.u_d_star)
        u_gaps.append(ub.u_d_star - f_star)
        x_check_errs.append(float(np.linalg.norm(ub.x_check - x_star)))

    def safe_fit(lv, gp):
        try:
            pairs = [(d, g) for d, g in zip(lv, gp) if np.isfinite(g)]
            return fit_rate([d for d, _ in pairs], [g for _, g in pairs])
        except ValueError:
            return None

    return RateReport(
        problem_id=bp.id,
        levels=levels,
        statuses=statuses,
        m_values=m_vals,
        f_values=f_vals,
        m_gaps=m_gaps,
        upper_levels=upper_levels,
        u_values=u_vals,
        u_gaps=u_gaps,
        est_errors=est_errs,
        x_check_errors=x_check_errs,
        mom_dists=mom_dists,
        flat_levels=flat_levels,
        lower_fit=safe_fit(levels, m_gaps),
        upper_fit=safe_fit(upper_levels, u_gaps),
        f_star=f_star,
        x_star=np.asarray(x_star),
        s_star=s_star,
        grid_resolution=_default_resolution(bp.problem.n),
    )


def run_suite(corpus: list, out_dir: str | None = None, r_dist: int = 2):
    """Run the full pipeline per problem; returns reports and the CSV text."""
    reports = []
    for bp in corpus:
        try:
            reports.append(_run_problem(bp, r_dist=r_dist))
        except Exception as exc:  # noqa: BLE001 - isolate per-problem failures
            reports.append(
                RateReport(
                    problem_id=bp.id,
                    levels=[],
                    statuses=[f"Failed: {exc}"],
                    m_values=[],
                    f_values=[],
                    m_gaps=[],
                    upper_levels=[],
                    u_values=[],
                    u_gaps=[],
                    est_errors=[],
                    x_check_errors=[],
                    mom_dists=[],
                    flat_levels=[],
                    lower_fit=None,
                    upper_fit=None,
                    f_star=math.nan,
                    x_star=np.array([]),
                    s_star=np.array([]),
                    grid_resolution=0,
                )
            )

    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["problem", "d", "m_d", "f_d", "u_d", "est_err", "mom_dist", "status"])
    for rep in reports:
        u_by_level = dict(zip(rep.upper_levels, rep.u_values))
        for i, d in enumerate(rep.levels):
            writer.writerow(
                [
                    rep.problem_id,
                    d,
                    f"{rep.m_values[i]:.10g}",
                    f"{rep.f_values[i]:.10g}",
                    f"{u_by_level[d]:.10g}" if d in u_by_level else "",
                    f"{rep.est_errors[i]:.6g}",
                    f"{rep.mom_dists[i]:.6g}",
                    rep.statuses[i],
                ]
            )
        for d in rep.upper_levels:
            if d not in rep.levels:
                writer.writerow(
                    [rep.problem_id, d, "", "", f"{u_by_level[d]:.10g}", "", "", "upper-only"]
                )
    csv_text = buf.getvalue()

    lines = ["# Benchmark summary", ""]
    for rep in reports:
        lines.append(f"## {rep.problem_id}")
        if not rep.levels:
            lines.append(f"- {rep.statuses[0]}")
            lines.append("")
            continue
        lines.append(f"- oracle: f* = {rep.f_star:.10g} at {np.round(rep.x_star, 6).tolist()}"
                     f" (grid {rep.grid_resolution}/axis, {rep.s_star.shape[0]} optimal samples)")
        lines.append(f"- lower bounds m_d: {[round(v, 8) for v in rep.m_values]}")
        if rep.u_values:
            lines.append(f"- upper bounds u_d: {[round(v, 8) for v in rep.u_values]}")
        if rep.flat_levels:
            lines.append(f"- flatness + extraction succeeded at levels {rep.flat_levels}")
        if rep.lower_fit is not None:
            lines.append(f"- lower-gap rate: {rep.lower_fit.describe()}")
        if rep.upper_fit is not None:
            lines.append(f"- upper-gap rate: {rep.upper_fit.describe()}")
        lines.append("")
    summary_text = "\n".join(lines)

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "report.csv"), "w") as fh:
            fh.write(csv_text)
        with open(os.path.join(out_dir, "summary.md"), "w") as fh:
            fh.write(summary_text)
    return reports, csv_text
