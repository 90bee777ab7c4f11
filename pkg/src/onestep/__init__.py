"""Scaled proximal operators, Moreau envelopes and one-step estimators."""

from .core import (
    CompositeObjective,
    ContractViolation,
    NonsmoothTerm,
    NotPositiveDefiniteError,
    RegularityConstants,
    ScalingMatrix,
    SmoothTerm,
    box_indicator,
    l1_term,
    nuclear_term,
    quadratic_term,
    ridge_to_spd,
    spd_solve,
    weighted_norm,
    zero_term,
)
from .proxops import (
    InnerSolveConfig,
    InnerSolveError,
    ProxResult,
    moreau_gradient,
    moreau_value,
    prox_l1,
    prox_nuclear,
    project_box,
    scaled_prox,
    scaled_prox_generic,
)
from .solvers import (
    EstimatorTrace,
    gd_step_exact,
    gd_step_fixed,
    one_newton_step,
    ose_prox_descent,
    ose_prox_gradient,
    run_prox_gradient,
    run_prox_newton,
)

__version__ = "0.1.0"
