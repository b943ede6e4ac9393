"""Compound empirical increment processes at a point: simulation, Poissonization,
Chernoff conjugates, discretised rate functionals and desk-scale checks."""
from .conjugate import (
    ChernoffFunction,
    ExponentialLinearLaplace,
    FoldedGaussianLaplace,
    GaussianLaplace,
    LaplaceTransform,
    MaxAbsLaplace,
    ProductLaplace,
    QuadratureLaplace,
    chernoff_eval,
    chernoff_level_roots,
    poisson_chernoff,
    superlinearity_certificate,
)
from .exceptions import ConfigError, DomainError, ModelError
from .grid import DyadicGrid, GridFunction
from .harness import (
    BlockSchedule,
    block_discrepancy_check,
    clustering_run,
    ldp_cell_check,
    nw_estimate,
    nw_inconsistency_contrast,
)
from .models import (
    BandwidthSchedule,
    ModelSpec,
    SampleBatch,
    bandwidth,
    increment_process,
    sample_batch,
    verify_local_conditions,
)
from .poissonize import (
    CouplingRealization,
    build_coupling,
    calibrate_hx,
    coupling_mismatch_prob,
    mc_oscillation_tail,
    oscillation_bound,
    poissonized_increment,
    sample_compound_poisson,
)
from .rate import (
    RateLevelSet,
    discretize,
    distance_to_level_set,
    level_set_contains,
    rate_limit,
    rate_p,
    tv_bound_check,
)
from .results import ExperimentResult

__version__ = "0.1.0"
