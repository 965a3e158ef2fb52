"""Discrete-time repeated quantum measurements over finite-dimensional
systems: trajectory enumeration and sampling, information quantities, and
numerical audits of the entropic bounds they satisfy."""

from .engine import (
    APrioriTrack,
    ConsistencyReport,
    TrajectoryRecord,
    compute_a_priori,
    consistency_checks,
    enumerate_trajectories,
    sample_trajectories,
)
from .entropics import (
    BoundReport,
    EntropyReport,
    EntropyReportBuilder,
    build_entropy_report,
    check_bounds,
    classical_information,
    mean_chi,
    mutual_entropy_hybrid,
    quantum_info_gain,
    quantum_info_gain_cond,
)
from .errors import (
    BudgetExceeded,
    ContmeasError,
    DimensionMismatch,
    DomainError,
    GridMiss,
    InvalidParameters,
    ModelSyntaxError,
    NonHermitianInput,
    NotPositiveSemidefinite,
    ShapeError,
    UnknownScenario,
)
from .linalg import Spectrum, clip_spectrum, hermitian_eig, spectral_apply
from .model import (
    Ensemble,
    MeasurementModel,
    TimeGrid,
    builtin_scenario,
    is_pure_preserving,
    parse_model,
    random_model,
    serialize_model,
    validate_model,
)
from .quantum import (
    ClassicalDistribution,
    DensityOperator,
    Instrument,
    KrausMap,
    UnnormalizedState,
    a_priori_step,
    apply_kraus,
    average_state,
    chi_quantity,
    classical_relative_entropy,
    hybrid_relative_entropy,
    quantum_relative_entropy,
    von_neumann_entropy,
)

__version__ = "0.1.0"
