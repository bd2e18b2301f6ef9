"""Threshold-report (sparse vector) mechanisms over explicit noise tapes,
their output-preserving tape alignments, and an executable privacy
verification harness."""

from .errors import (
    BudgetInvariantViolation,
    DomainError,
    DomainMismatch,
    EmptyWorkload,
    GapSvtError,
    GridBudgetExceeded,
    LayoutMismatch,
    NonPositiveBudget,
    SensitivityViolation,
    TapeExhausted,
)
from .core import (
    BOT,
    Answer,
    Branch,
    NoiseKind,
    NoiseSpec,
    NoiseTape,
    OutputSequence,
    QueryPair,
    Side,
    TapeLayout,
    Workload,
    check_workload,
    discrete_laplace_box,
    discrete_laplace_pmf,
    discrete_laplace_tail,
    draw_tape,
    laplace_inverse_cdf,
    sample_tape,
    top_gap,
    top_marker,
)
from .mechanisms import (
    ADAPTIVE_GAP,
    MECHANISMS,
    SVT_CLASSIC,
    SVT_GAP,
    AdaptiveBudget,
    CostLedger,
    RunResult,
    SvtBudget,
    adaptive_svt_gap_run,
    budget_split_adaptive,
    budget_split_svt,
    default_budget,
    run_mechanism,
    run_sampled,
    sample_run,
    svt_classic_run,
    svt_gap_run,
    tape_layout_for,
)
from .alignments import (
    AlignmentShift,
    CostWeights,
    IndexSets,
    Mutation,
    align_adaptive,
    align_svt_gap,
    alignment_cost,
    cost_closed_form,
    index_sets,
    shift_for_output,
)
from .verifier import (
    OutputDistribution,
    PrivacyLossResult,
    PrivacyReport,
    TrialPlan,
    Witness,
    WorkloadGenSpec,
    check_alignment_soundness,
    check_cost_bound,
    check_dp_exact,
    check_structural_conditions,
    default_enumeration_instances,
    enumerate_output_dist,
    generate_workload,
    max_privacy_loss,
    mc_output_dist,
    mc_privacy_estimate,
    outputs_equal,
    replay_witness,
    tv_distance,
)

__version__ = "0.1.0"
