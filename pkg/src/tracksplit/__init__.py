"""Single-loop inexact splitting methods with certified tracking diagnostics."""

from .operators import (
    BlockShape,
    SkewOperator,
    SymOperator,
    dual_seminorm,
    operator_leq,
    pdps_preconditioner,
    pdps_step_check,
    preconditioner_bounds_check,
    quad_form,
    seminorm,
    young_companion,
)
from .problems import (
    BilevelInstance,
    Box,
    ParametricInnerProblem,
    ParametricLinearSystem,
    exact_gradient,
    make_parametric_poisson,
    make_quadratic_bilevel,
    solve_basic_adjoint_exact,
    solve_inner_exact,
    solve_reduced_adjoint_exact,
)
from .inner import (
    fb_inner_step,
    gauss_seidel_step,
    jacobi_step,
    measure_inner_tracking,
    pdps_inner_step,
)
from .adjoint import (
    TransformConstants,
    basic_adjoint_step,
    differential_transform_basic,
    differential_transform_reduced,
    estimate_transform_constants,
    measure_adjoint_tracking,
    reduced_adjoint_step,
    transform_error_bound,
)
from .tracking import (
    ErrorLedger,
    TrackingConstants,
    e_lip,
    e_pk,
    gradient_error_check,
    iota,
    psi,
    recursion_bound,
    theta,
)
from .outer import (
    ProxFunction,
    condition_check_inexact_fb,
    condition_check_pdps_inexact,
    fb_outer_step,
    mismatched_pdps_step,
    pdps_outer_step,
    prox,
    run_exact_baseline,
    run_single_loop,
)
from .diagnostics import (
    CheckReport,
    check_descent_lemma,
    check_three_point_descent,
    check_three_point_mono,
    descent_check,
    ergodic_values,
    lagrangian_gap,
    linear_rate_fit,
    quasi_fejer_check,
    robbins_check,
    run_all_checks,
    subdiff_residual,
)
from .config import PRESETS, SolverConfig, load_config, preset_config

__version__ = "0.1.0"
