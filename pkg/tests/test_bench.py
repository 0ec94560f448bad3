import math

import numpy as np
import pytest

from momlab.bench import (
    brute_force_oracle,
    builtin_corpus,
    fit_rate,
    load_corpus,
    moment_distance_to_optimal,
    run_suite,
)
from momlab.cone import PseudoMomentSequence, SemialgebraicProblem
from momlab.poly import Polynomial


def test_oracle_interval_linear(line_problem):
    f_star, x_star, s_star = brute_force_oracle(line_problem)
    assert f_star == pytest.approx(-1.0, abs=1e-12)
    assert x_star[0] == pytest.approx(-1.0)
    assert s_star.shape[0] == 1


def test_oracle_corner_problem(corner_problem):
    # {0,1}^2 grid points survive the equality filter; three corners are optimal
    f_star, x_star, s_star = brute_force_oracle(corner_problem)
    assert f_star == pytest.approx(-1.0, abs=1e-12)
    assert s_star.shape[0] == 3
    rows = {tuple(np.round(p, 6)) for p in s_star}
    assert rows == {(1.0, 0.0), (0.0, 1.0), (1.0, 1.0)}


def test_oracle_guards():
    p = Polynomial.variable(0, 4)
    prob = SemialgebraicProblem(n=4, objective=p)
    with pytest.raises(ValueError, match="n <= 3"):
        brute_force_oracle(prob)
    x = Polynomial.variable(0, 1)
    empty = SemialgebraicProblem(
        n=1, objective=x, constraints=(Polynomial.constant(-1.0, 1),)
    )
    with pytest.raises(ValueError, match="no feasible"):
        brute_force_oracle(empty)


def test_fit_rate_recovers_synthetic_slope():
    levels = [1, 2, 3, 4, 5]
    gaps = [2.0 * d ** (-2.0) for d in levels]
    fit = fit_rate(levels, gaps)
    assert fit.slope == pytest.approx(-2.0, abs=1e-9)
    assert fit.intercept == pytest.approx(math.log(2.0), abs=1e-9)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert fit.finite_convergence_level is None
    assert "slope" in fit.describe()


def test_fit_rate_finite_convergence():
    fit = fit_rate([1, 2, 3], [1e-2, 1e-12, 1e-13])
    assert fit.finite_convergence_level == 2
    assert fit.slope is None
    assert "finite convergence" in fit.describe()


def test_fit_rate_too_few_points():
    with pytest.raises(ValueError, match="at least 3"):
        fit_rate([1, 2], [0.5, 0.25])


def test_moment_distance_zero_for_optimal_measure():
    # moments of a point mass at an optimal sample have distance zero
    s_star = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    y = PseudoMomentSequence.from_atoms(s_star[:1], [1.0], 4)
    assert moment_distance_to_optimal(y, s_star, r=2) <= 1e-10
    # a mixture over the samples is also representable exactly
    y_mix = PseudoMomentSequence.from_atoms(s_star, [0.2, 0.3, 0.5], 4)
    assert moment_distance_to_optimal(y_mix, s_star, r=2) <= 1e-10


def test_moment_distance_hand_value():
    # single sample at 0, sequence of a point mass at 1/2: the degree-1
    # moment mismatch of 1/2 dominates, so the sup-norm distance is 1/2
    y = PseudoMomentSequence.from_atoms([[0.5]], [1.0], 2)
    d = moment_distance_to_optimal(y, np.array([[0.0]]), r=1)
    assert d == pytest.approx(0.5, abs=1e-9)


def test_moment_distance_empty_samples():
    y = PseudoMomentSequence.from_atoms([[0.0]], [1.0], 2)
    with pytest.raises(ValueError, match="empty"):
        moment_distance_to_optimal(y, np.zeros((0, 1)), r=1)


def test_builtin_corpus_shape():
    corpus = builtin_corpus()
    assert len(corpus) == 5
    assert [bp.id for bp in corpus] == [
        "binary-corner",
        "line-min",
        "shifted-paraboloid",
        "two-well",
        "motzkin-box",
    ]
    assert all(bp.problem.n <= 2 for bp in corpus)
    uniques = {bp.id for bp in corpus if bp.unique_minimizer}
    assert uniques == {"line-min", "shifted-paraboloid"}


def test_load_corpus_roundtrip():
    x = Polynomial.variable(0, 1)
    prob = SemialgebraicProblem(n=1, objective=x, constraints=(1 - x * x,))
    data = [
        {
            "id": "custom",
            "problem": prob.to_json_dict(),
            "d_min": 2,
            "d_max": 4,
            "upper_levels": [0, 2],
            "measure": "box",
            "unique_minimizer": True,
        }
    ]
    corpus = load_corpus(data)
    assert len(corpus) == 1
    assert corpus[0].id == "custom"
    assert corpus[0].measure.kind == "box"
    assert corpus[0].d_max == 4


def test_run_suite_empty_corpus(tmp_path):
    reports, csv_text = run_suite([], out_dir=str(tmp_path))
    assert reports == []
    assert csv_text.splitlines()[0].startswith("problem,")
    assert (tmp_path / "report.csv").exists()
    assert (tmp_path / "summary.md").exists()


def test_run_suite_isolates_bad_problem():
    x = Polynomial.variable(0, 1)
    from momlab.bench import BenchProblem
    from momlab.upperbound import ReferenceMeasure

    bad = BenchProblem(
        id="infeasible",
        problem=SemialgebraicProblem(
            n=1, objective=x, constraints=(Polynomial.constant(-1.0, 1),)
        ),
        d_min=2,
        d_max=2,
        upper_levels=(),
        measure=ReferenceMeasure.box(1),
        unique_minimizer=False,
        box=((-1.0, 1.0),),
    )
    good = BenchProblem(
        id="ok",
        problem=SemialgebraicProblem(n=1, objective=x, constraints=(1 - x * x,)),
        d_min=2,
        d_max=4,
        upper_levels=(0, 2),
        measure=ReferenceMeasure.box(1),
        unique_minimizer=True,
        box=((-1.0, 1.0),),
    )
    reports, csv_text = run_suite([bad, good])
    assert reports[0].statuses[0].startswith("Failed")
    assert reports[1].m_values[0] == pytest.approx(-1.0, abs=1e-6)
    assert "ok,2," in csv_text


def test_full_suite_reports(suite_run):
    reports, csv_text, _ = suite_run
    assert len(reports) == 5
    for rep in reports:
        assert rep.levels, f"{rep.problem_id} produced no levels"
        assert all(s == "Optimal" for s in rep.statuses), rep.statuses
        assert len(rep.m_values) == len(rep.levels)
        assert len(rep.u_values) == len(rep.upper_levels)
    # the CSV has one row per solved level plus upper-only rows
    n_rows = len(csv_text.strip().splitlines()) - 1
    assert n_rows >= sum(len(r.levels) for r in reports)
    by_id = {r.problem_id: r for r in reports}
    assert by_id["line-min"].flat_levels  # exact already at low levels
    # rate fits exist wherever enough positive gaps survive
    assert by_id["shifted-paraboloid"].upper_fit is not None
