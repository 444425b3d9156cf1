"""Locally optimal approximate designs for generalized linear models.

EI (elastic I-optimality), Phi_p and D criteria; multiplicative weight
updates on a fixed support and a sequential support-point algorithm with
equivalence-theorem certificates.
"""
from .design import (
    Criterion,
    DCriterion,
    Design,
    EICriterion,
    InfoMatrix,
    PhiPCriterion,
    criterion_value,
    fisher_information,
    spd_matrix_power,
)
from .errors import (
    ConfigError,
    DependentBasisError,
    DesignError,
    DimensionError,
    FeasibilityError,
    QuadratureError,
    SingularInformationError,
)
from .glm import Basis, GlmModel, basis_eval, glm_weight, mean_deriv_sq
from .measure import (
    MeasureSpec,
    MomentMatrix,
    QuadratureConfig,
    assert_A_positive_definite,
    compute_A,
    gauss_legendre,
    orthogonalize_basis,
)
from .sequential import (
    CandidatePool,
    SeqConfig,
    SeqReport,
    build_pool,
    equivalence_check,
    phi_point,
    phi_values,
    refine_sequential,
    run_sequential,
    select_candidate,
)
from .weights import (
    WeightOptConfig,
    WeightOptReport,
    directional_derivative,
    multiplicative_step,
    optimize_weights,
    point_sensitivities,
    verify_weight_optimality,
)

__version__ = "0.1.0"
