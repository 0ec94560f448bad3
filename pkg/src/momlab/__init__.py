"""Moment-SOS hierarchy toolkit.

Lower bounds from moment relaxations (with SOS certificates), exact minimizer
extraction from flat pseudo-moments, measure-based upper bounds from SOS
densities, and support estimation from moments — plus a benchmark harness
that measures the convergence the theory promises.
"""

from .poly import MonomialBasis, Polynomial, r_dim
from .cone import (
    PseudoMomentSequence,
    ScaleRecord,
    SemialgebraicProblem,
    localizing_matrix,
    moment_matrix,
    normalize,
)
from .hierarchy import (
    RelaxationResult,
    SosCertificate,
    compute_d0,
    qmodule_membership,
    run_hierarchy,
    solve_moment_relaxation,
    solve_sos_tightening,
)
from .extraction import (
    AtomicMeasure,
    FlatnessReport,
    candidate_minimizer,
    check_flatness,
    extract_atoms,
    rank_profile,
    tchakaloff_prune,
)
from .upperbound import (
    ReferenceMeasure,
    UpperBoundResult,
    convex_cost_bound,
    estimator_from_density,
    is_sos_convex,
    lebesgue_box_moments,
    solve_upper_bound,
)
from .support import (
    CdKernel,
    cd_kernel,
    cd_support_grid,
    cd_threshold,
    default_power_family,
    power_method_margin,
)
from .bench import (
    brute_force_oracle,
    builtin_corpus,
    fit_rate,
    moment_distance_to_optimal,
    run_suite,
)

__version__ = "0.1.0"
