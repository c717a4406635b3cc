"""Distributionally robust distortion risk measures over moment and preference uncertainty."""
from .distortion import (
    DistortionFunction,
    DomainError,
    combine,
    jump_set,
    lsc_modification,
    make_es,
    make_es_left,
    make_inter_quantile,
    make_linear,
    make_piecewise_linear,
    make_tk,
    make_var,
    make_var_plus,
    usc_modification,
)
from .envelope import EnvelopeResult, concave_envelope, convex_envelope, tk_tangency
from .moments import (
    BoundResult,
    MomentConstraint,
    ZeroNormError,
    best_case,
    bound_report,
    extremal_quantile,
    q_center,
    q_norm,
    q_norm_es,
    worst_case,
)
from .oracle import UncertaintySpec, closure_generate, concentration_identity, sup_over_set
from .portfolio import (
    PortfolioProblem,
    SolveReport,
    reduce_mean_cov,
    solve_diff_tk,
    solve_marginal_convex,
    solve_marginal_nonconvex_lb,
    solve_pref_robust,
)
from .quantile import (
    Discrete,
    Empirical,
    Exponential,
    IntervalSet,
    Normal,
    Pareto,
    QuantileModel,
    Uniform,
    concentrate,
    concentrate_multi,
    rho,
    weighted_sum_comonotone,
)
from .rearrange import RAMatrix, RAParams, discretize, ra_iterate, ra_lower_bound

__version__ = "0.1.0"
