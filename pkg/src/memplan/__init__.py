"""Trace-driven GPU memory allocation planner and allocator simulator."""

from .intervals import Interval, IntervalSet, best_fit, intersect, subtract
from .model import (
    AllocationDecision,
    DEFAULT_ALIGNMENT,
    MemoryRequestEvent,
    MemplanError,
    PhaseId,
    PhaseKind,
    PlanError,
    SimulationError,
    Trace,
    TraceError,
    align_up,
    clique_lower_bound,
    peak_live_bytes,
)
from .planner import (
    HomoPhaseGroup,
    LocalPlan,
    MemoryLayer,
    PlanStats,
    StaticPlan,
    build_layers_for_size,
    compute_tmp,
    group_by_phase,
    pack_group,
    synthesize_static_plan,
    try_fuse,
    validate_plan,
)
from .reuse import ReuseMap, compute_reusable_space, derive_reuse_map, group_dynamic
from .baseline import CachingAllocator, run_baseline
from .sim import PoolState, SimReport, compute_metrics, dynamic_allocate, simulate
from .synth import PRESETS, SynthConfig, synth_trace
from .traceio import PlanBundle, parse_trace, read_plan, write_plan, write_trace

__version__ = "0.1.0"


def plan_trace(trace, *, fusion=True, gap_insert=True, stats=None):
    """Plan a trace end to end: static plan plus dynamic reuse map."""
    plan = synthesize_static_plan(
        trace, fusion=fusion, gap_insert=gap_insert, stats=stats
    )
    return plan, derive_reuse_map(plan, trace)
