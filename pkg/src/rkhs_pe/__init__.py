"""
Adaptive estimation of uncertain ODEs by embedding in a reproducing kernel
Hilbert space, with numerical persistence-of-excitation diagnostics.
"""

from .centers import circle_centers, explicit_centers, thin_to_count
from .config import ConfigError, ExperimentConfig, load_config
from .dynamics import (
    DivergenceError,
    LimitSetEstimate,
    Trajectory,
    VectorField,
    estimate_period,
    extract_limit_set,
    fish_energy,
    fish_field,
    fish_rhs,
    hopf_field,
    hopf_rhs,
    integrate,
    oscillator_field,
    relaxation_field,
)
from .estimator import (
    EstimatorConfig,
    EstimatorRun,
    GridSpec,
    LyapunovError,
    PlantSpec,
    classical_pe_matrix,
    function_error_field,
    lyapunov_solve,
    projection_coefficients,
    regressor,
    run_estimator,
)
from .kernels import (
    FiniteSpanFunction,
    GramMatrix,
    Kernel,
    RestrictedKernel,
    eval_kernel,
    eval_span,
    gram,
    native_norm,
)
from .persistence import (
    IndexingSet,
    PEReport,
    VisitationReport,
    density_check,
    limit_set_membership,
    pe_bounds,
    pe_scan,
    pe_window_integral,
    visitation_scan,
)

__version__ = "0.1.0"
