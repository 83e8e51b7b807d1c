"""Kernel regression trained by SGD and GD, with tools for measuring the
direction of the error vector relative to the Gram spectrum."""

from .kernels import (
    DataSet,
    DominanceReport,
    Family,
    KernelSpec,
    dominance_report,
    eval_kernel,
    gram_matrix,
    predicted_offdiag_bound,
    sample_sphere_data,
    simulate_sine_regression,
    tau_bound_check,
)
from .metrics import (
    BiasMeasurement,
    GeneralizationRecord,
    bias_measurement,
    delta_star,
    estimation_error,
    prediction_error,
    quad_levelset_bound,
    wilcoxon_signed_rank,
)
from .optim import (
    StepPlan,
    Trajectory,
    closed_form_solution,
    gd_step,
    plan_step_sizes,
    run_schedule,
    sgd_step,
    step_diagnostics,
)
from .rng import Pcg32
from .spectral import (
    EigenDecomposition,
    GershgorinDisc,
    ProjectionPair,
    eig_sym,
    eigen_interval_from_dominance,
    gershgorin_discs,
    projection_pair,
    verify_spectral_suite,
)

__version__ = "0.1.0"
