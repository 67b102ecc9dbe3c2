"""Workload-adaptive database knob tuning via dynamic workload compression."""

from .compress import CompressorParams, adapt_ratio, greedy_compress, initial_subset, marginal_gain
from .executor import (
    EvalOutcome,
    EvalRequest,
    ExternalExecutor,
    SimModel,
    SimulatedExecutor,
    simulate_query,
)
from .forest import ForestParams, SurrogateModel, fit, predict_with_uncertainty
from .history import RunHistory
from .session import SessionConfig, TraceRecord, compare_runs, emit_trace, load_trace, run_session
from .space import (
    ConfigSpace,
    Configuration,
    KnobSpec,
    encode,
    gower_distance,
    load_space,
    sample_lhs,
    set_similarity,
)
from .tuning import SliceState, bootstrap_training_set, propose_configuration, run_slice
from .verify import (
    VerifierState,
    choose_mode,
    exploit_score,
    explore_potential,
    prune_candidates,
    score_and_select,
    verify_on_full_workload,
)
from .workload import CompressedWorkload, Query, Workload, load_workload, workload_cost

__all__ = [name for name in dir() if not name.startswith("_")]
