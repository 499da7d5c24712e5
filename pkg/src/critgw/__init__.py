"""Critical multi-type branching processes: simulation of tree statistics,
eigenvector and offspring estimators, and Monte Carlo verification of their
non-Gaussian limit laws."""

from .process import (
    EigenData,
    NotAProbabilityError,
    NotCriticalError,
    NotPrimitiveError,
    DegenerateOffspringError,
    ProcessSpec,
    ValidationReport,
    frobenius_eigenpair,
    mean_matrix,
    mixture_quad_form,
    offspring_mixture,
    offspring_quad_form,
    validate_spec,
)
from .processes import (
    asymmetric_two_type,
    benchmark_processes,
    binary_fission,
    coupled_pair,
    skewed_pair,
)
from .sampler import (
    BatchAccumulator,
    CapExceededError,
    SamplerConfig,
    TreeStats,
    replay_tree,
    sample_batch,
    sample_tree,
)
from .estimators import (
    EstimateReport,
    additive_sum,
    estimate_offspring,
    estimate_u,
    estimate_v,
)
from .limits import (
    LimitTarget,
    additive_cf_slope,
    additive_mean,
    centering_vector,
    cf_quadratic_root,
    joint_cf,
    levy_cdf,
    s_lambda,
    stable_cf,
    theorem1_cf,
    theorem2_cf,
    theorem2_coeffs,
    theorem3_cf,
    theorem3_coeffs,
    unit_directions,
)
from .verify import (
    VerificationReport,
    empirical_cf,
    empirical_joint_cf,
    ks_statistic,
    verify_theorem1,
    verify_theorem2,
    verify_theorem3,
    verify_theorem4,
)
from .specgen import random_critical_spec

__version__ = "0.1.0"
