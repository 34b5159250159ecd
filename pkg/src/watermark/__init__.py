"""Perpetual American watermark options on a geometric Brownian motion.

The payoff ``(S^p / X - K)^+`` depends on the price ``X`` and its running
maximum ``S``.  The exercise boundary ``x = H(s)`` is the separatrix of a
first-order ODE; the value is closed form once ``H`` is known.
"""

from .errors import (
    DomainError,
    McMisuseError,
    RegimeError,
    SolverError,
    ValidationError,
    WatermarkError,
)
from .free_boundary import (
    FreeBoundary,
    IntegratorConfig,
    OdeDomain,
    ShotClassification,
    ShotOutcome,
    asymptote_c,
    boundary_csv,
    boundary_curves,
    boundary_descriptor,
    default_delta,
    eval_H,
    nullcline_h,
    nullcline_s,
    rhs_H,
    rhs_h,
    s_dagger,
    shoot,
    solve_separatrix,
)
from .gbm_core import (
    AssumptionANReport,
    ModelParams,
    PowerMap,
    PRegime,
    ReductionDescriptor,
    RegimeReport,
    Roots,
    Violation,
    classify_regime,
    compute_roots,
    normalize_exponents,
    russian_reduction,
    tilde_params,
)
from .monte_carlo import (
    GrowthTable,
    McConfig,
    McEstimate,
    divergence_probe,
    perturbation_test,
    simulate_value,
)
from .value_function import (
    InfiniteValue,
    SampleConfig,
    ValueSurface,
    ViReport,
    build_surface,
    coeff_A,
    coeff_B,
    in_stopping_region,
    price_report,
    value_u,
    value_u_hat,
    value_v,
    value_v_hat,
    verify_vi,
)

__version__ = "0.1.0"
