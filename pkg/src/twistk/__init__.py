"""Spectral solver and verification harness for twisted
constant-scalar-curvature Kahler metrics on flat complex tori."""

__version__ = "0.1.0"

from .engine import (
    ApproximateSolution,
    ContinuationReport,
    IFTCertificate,
    NewtonReport,
    PositivityReport,
    SolverConfig,
    SweepStep,
    ThresholdEstimate,
    R_to_t,
    build_approximate_solution,
    continuity_sweep,
    estimate_R_threshold,
    ift_certificate,
    newton_solve,
    perturb_twist,
    proportional_seed_potential,
    t_to_R,
    trivial_twist,
    twisted_residual,
)
from .errors import (
    ConfigError,
    DegenerateMetricError,
    DomainError,
    IterationLimitError,
    PreconditionError,
    RefusalError,
    ShapeError,
    SolvabilityError,
    StagnationError,
    TwistkError,
    UnsupportedOrderError,
)
from .geometry import (
    CohomologyData,
    HermitianFormField,
    KahlerStructure,
    form_pairing,
    gradient_pairing,
    laplacian,
    metric_from_potential,
    ricci_form,
    scalar_curvature,
    trace_form,
    volume_average,
    volume_mean_zero,
)
from .grid import (
    PeriodicGrid,
    ScalarField,
    SpectralCoeffs,
    flat_poisson_solve,
    make_trig_field,
    random_smooth_field,
    set_fft_workers,
    sobolev_norm,
)
from .operators import (
    LinearOperatorHandle,
    apply_F,
    apply_full_linearization,
    apply_lichnerowicz,
    apply_shifted,
    dense_assemble,
)
from .solvers import (
    EigenEstimate,
    KrylovConfig,
    extreme_eigenvalue,
    green_solve,
    inverse_norm_estimate,
    newton_linear_solve,
    solve_F,
    solve_shifted,
)

__all__ = [name for name in dir() if not name.startswith("_")]
