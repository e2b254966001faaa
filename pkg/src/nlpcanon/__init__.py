"""Analysis of degenerate nonlinear programs at an active point.

The package reduces a problem ``min f s.t. h = 0, g <= 0`` with all
constraints active at the origin to canonical coordinates, checks MFCQ and
the rank-deviation hypothesis, factors rank-one Hessian families, separates
pairs of quadratic forms, and assembles a multiplier pair satisfying the
weak second-order necessary condition.
"""
__version__ = "0.1.0"

from .autodiff import Jet, derivatives, fd_gradient, fd_hessian, gradient, hessian, jacobian
from .canonical_form import (
    CanonicalChart,
    build_canonical_chart,
    canonical_residuals,
    restrict_to_w,
    select_rank_completing_inequalities,
)
from .change_of_vars import (
    Diffeomorphism,
    TransformedProblem,
    random_diffeomorphism,
    transform_problem,
    verify_chain_rules,
    verify_multiplier_invariance,
    verify_second_order_invariance,
)
from .errors import *  # noqa: F401,F403
from .expr import ProblemDoc, evaluate, load_problem, parse_expr, parse_problem, pretty
from .linalg import lambda_min, nullspace_basis, numeric_rank, simplex_solve_small, sym_eig
from .nlp_analysis import (
    AndreaniCertificate,
    MFCQReport,
    andreani_certificate,
    check_mfcq,
    check_rank_deviation,
    first_order_multipliers,
    verify_weak_second_order,
)
from .problem import (
    NLPInstance,
    combined_jacobian,
    kkt_residual,
    lagrangian_hessian,
    second_order_term,
    tangent_kernel_basis,
)
from .quadratic_forms import (
    RangeClassification,
    SeparationResult,
    definite_separation,
    joint_range,
    semidefinite_separation,
)
from .rank_one import (
    RankOneFactorization,
    directional_derivative_matrix,
    directional_rank_check,
    factor_hessian_family,
    factor_rank_one_family,
)
