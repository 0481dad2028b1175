"""Robust rate-splitting precoder design for the MISO downlink.

Worst-case max-min rate and power minimization under ball-bounded
channel uncertainty: a cutting-set method with exact pessimization, a
conservative one-shot LMI design, degrees-of-freedom analytics, and a
Monte-Carlo harness.
"""

__version__ = "0.1.0"

from .channel import (
    ChannelEstimate,
    CsitScalingModel,
    SystemConfig,
    inner_product_extrema,
    radius_at,
    sample_channel,
    sample_error_in_ball,
)
from .conic import ConeConstraint, ConicProgram, ConicSolution, ProgramBuilder, hermitian_embed, solve
from .conservative import (
    ConservativeResult,
    conservative_precoder_step,
    conservative_upper_bound,
    solve_conservative_nors,
    solve_conservative_rs,
    worst_case_equalizer,
)
from .cutting_set import (
    MaxMinResult,
    SampleSets,
    SampledWmmseState,
    ViolationReport,
    ao_optimize_sampled,
    pessimize_and_extend,
    solve_max_min_nors,
    solve_max_min_rs,
)
from .defaults import DEFAULT_TOLERANCES, Tolerances
from .dof import (
    DofAllocation,
    DofProfile,
    achievable_allocation,
    empirical_dof,
    max_min_dof_nors,
    max_min_dof_rs,
    zf_private_precoder,
)
from .experiments import (
    ExperimentSpec,
    TrialRecord,
    run_dof_report,
    run_maxmin_sweep,
    run_qos_study,
    run_timing,
    spec_from_delta,
    write_manifest,
    write_records_csv,
)
from .pessimizer import (
    QuadraticFormSet,
    WorstCaseResult,
    dinkelbach_worst_case,
    parametric_objective,
    solve_trust_region,
)
from .qos import (
    FeasibilityInit,
    QosResult,
    QosSpec,
    feasibility_init,
    rate_target_from_sinr,
    solve_qos,
    solve_qos_conservative,
    verify_rate_constraints,
)
from .rates import (
    EqualizerWeightPair,
    PowerDecomposition,
    Precoder,
    RateAllocation,
    initial_precoder,
    mmse_equalizers,
    mmse_values,
    mse,
    receive_powers,
    sinr_and_rates,
    total_rates,
    wmse,
)

__all__ = [
    "__version__",
    "ChannelEstimate",
    "CsitScalingModel",
    "SystemConfig",
    "inner_product_extrema",
    "radius_at",
    "sample_channel",
    "sample_error_in_ball",
    "ConeConstraint",
    "ConicProgram",
    "ConicSolution",
    "ProgramBuilder",
    "hermitian_embed",
    "solve",
    "ConservativeResult",
    "conservative_precoder_step",
    "conservative_upper_bound",
    "solve_conservative_nors",
    "solve_conservative_rs",
    "worst_case_equalizer",
    "MaxMinResult",
    "SampleSets",
    "SampledWmmseState",
    "ViolationReport",
    "ao_optimize_sampled",
    "pessimize_and_extend",
    "solve_max_min_nors",
    "solve_max_min_rs",
    "DEFAULT_TOLERANCES",
    "Tolerances",
    "DofAllocation",
    "DofProfile",
    "achievable_allocation",
    "empirical_dof",
    "max_min_dof_nors",
    "max_min_dof_rs",
    "zf_private_precoder",
    "ExperimentSpec",
    "TrialRecord",
    "run_dof_report",
    "run_maxmin_sweep",
    "run_qos_study",
    "run_timing",
    "spec_from_delta",
    "write_manifest",
    "write_records_csv",
    "QuadraticFormSet",
    "WorstCaseResult",
    "dinkelbach_worst_case",
    "parametric_objective",
    "solve_trust_region",
    "FeasibilityInit",
    "QosResult",
    "QosSpec",
    "feasibility_init",
    "rate_target_from_sinr",
    "solve_qos",
    "solve_qos_conservative",
    "verify_rate_constraints",
    "EqualizerWeightPair",
    "PowerDecomposition",
    "Precoder",
    "RateAllocation",
    "initial_precoder",
    "mmse_equalizers",
    "mmse_values",
    "mse",
    "receive_powers",
    "sinr_and_rates",
    "total_rates",
    "wmse",
]
