"""Simulation and verification toolkit for critical multitype branching processes."""

from .model import (
    BranchingModel,
    EnumerationLimitError,
    ModelError,
    MomentData,
    OffspringAtom,
    OffspringLaw,
    builtin_model,
    exact_count_law,
    exact_total_law,
    extinction_by,
    load_model,
    model_to_config,
    moments,
    pgf_eval,
    q_form_vector,
    second_moment_matrix,
    third_abs_moments,
)
from .spectral import (
    ConvergenceError,
    NotCriticalError,
    SpectralData,
    big_Q,
    check_critical,
    perron_eigen,
    survival_asymptote,
)
from .forward import (
    FamilyTree,
    GenerationRecord,
    PopulationCapError,
    RejectionBudgetError,
    ancestor,
    condition_on_survival,
    deviant_fraction,
    empirical_ancestral,
    lineage_occupation,
    sample_conditioned_counts,
    simulate_counts,
    simulate_counts_batch,
    simulate_tree,
    step,
)
from .spine import (
    RetroChain,
    SizeBiasedLaw,
    SpineRecord,
    hhat_exact_law,
    many_to_one,
    retro_chain_sample,
    retro_matrix,
    simulate_spine,
    size_biased_law,
    spine_successor,
)
from .limits import (
    CompoundPoissonExpLaw,
    ExponentialLaw,
    GammaTwoLaw,
    LimitParams,
    ScalarLaw,
    SizeBiasedTransitionLaw,
    corollary_functional,
    entrance_conditioned,
    entrance_hhat,
    sample_limit_fdd,
    sample_sb_transition,
    sb_transition_density,
    transition_law,
)
from .ldp import RateResult, SlopePoint, kl, ld_slope_estimate, rate_J
from .stats import (
    ChiSquareResult,
    EmpiricalSample,
    MCResult,
    SeededStreamFamily,
    chi_square,
    ks_critical_value,
    ks_statistic,
    mc_run,
    tv_distance,
)

__version__ = "0.1.0"
