"""Dual gradient methods for linear ill-posed problems."""

from ._dualgrad import (
    ConstraintSet,
    LinearOperator,
    Penalty,
    Problem,
    RunResult,
    accelerated_solve,
    add_noise,
    dual_gradient_solve,
    dual_objective,
    elastic_net,
    entropic_landweber_solve,
    entropy_simplex,
    error_measure,
    estimate_norm,
    eta,
    fit_rate,
    list_problems,
    make_problem,
    primal_form_solve,
    projected_quadratic,
    quadratic,
    rate_study,
    validate_config,
)

__all__ = [name for name in dir() if not name.startswith("_")]
