"""Static allocation planning.

Pipeline: persistent requests are stacked once at the bottom of the pool;
the remaining static requests are partitioned by (alloc phase, free phase)
into phase groups; cross-phase groups are packed contiguously into local
plans and phase-adjacent plans are fused when the fusion strictly improves
the time-memory product; local plans (by height) and the leftover
single-phase requests (by size) then share memory layers, built per size
class in descending order with gap insertion into already-built larger
layers; finally layers are stacked to produce absolute addresses.

Single-phase requests are deliberately not packed: contiguous packing is
locally optimal only when lifespans mutually overlap, which holds for a
cross-phase group (all members are live at the phase boundary) but not
for short-lived intermediates inside one phase. Those go straight to the
layer construction, which time-shares them per size class.
"""

from __future__ import annotations

import time
from bisect import bisect_left
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

from .intervals import Interval, IntervalSet
from .model import (
    AllocationDecision,
    DEFAULT_ALIGNMENT,
    MemoryRequestEvent,
    PhaseId,
    PlanError,
    Trace,
    peak_live_bytes,
)
from .traceio import PlanBundle, PlanDecision

GroupKey = tuple[PhaseId, PhaseId]


@dataclass(frozen=True)
class HomoPhaseGroup:
    """Static requests sharing the same (alloc phase, free phase) pair."""

    key: GroupKey
    members: tuple[MemoryRequestEvent, ...]

    @property
    def cross_phase(self) -> bool:
        return self.key[0] != self.key[1]


@dataclass(frozen=True)
class LocalPlan:
    """A packed group: decisions with group-relative addresses."""

    key: GroupKey
    decisions: tuple[AllocationDecision, ...]
    height: int
    t_s: int
    t_e: int
    tmp: float

    @property
    def duration(self) -> int:
        return self.t_e - self.t_s

    @property
    def space_time(self) -> int:
        """Denominator of the occupancy ratio; the fusion acceptance weight."""
        return self.height * self.duration


def group_by_phase(events: Iterable[MemoryRequestEvent]) -> list[HomoPhaseGroup]:
    """Partition static events by (p_s, p_e); members sorted by (t_s, id)."""
    buckets: dict[GroupKey, list[MemoryRequestEvent]] = {}
    for ev in events:
        if ev.dynamic:
            raise PlanError(f"event {ev.id} is dynamic; phase groups hold static only")
        buckets.setdefault((ev.p_s, ev.p_e), []).append(ev)
    groups = []
    for key in sorted(buckets, key=lambda k: (k[0], k[1])):
        members = tuple(sorted(buckets[key], key=lambda e: (e.t_s, e.id)))
        groups.append(HomoPhaseGroup(key, members))
    return groups


def _plan_from_decisions(
    key: GroupKey, decisions: Sequence[AllocationDecision]
) -> LocalPlan:
    height = max(d.end_addr for d in decisions)
    t_s = min(d.t_s for d in decisions)
    t_e = max(d.t_e for d in decisions)
    plan = LocalPlan(key, tuple(decisions), height, t_s, t_e, tmp=0.0)
    return LocalPlan(key, plan.decisions, height, t_s, t_e, tmp=compute_tmp(plan))


def pack_group(group: HomoPhaseGroup) -> LocalPlan:
    """Stack the group contiguously in allocation order (prefix sums)."""
    if not group.members:
        raise PlanError("cannot pack an empty group")
    decisions = []
    addr = 0
    for ev in group.members:
        decisions.append(AllocationDecision(ev, addr))
        addr += ev.size
    return _plan_from_decisions(group.key, decisions)


def compute_tmp(plan: LocalPlan) -> float:
    """Occupancy of the plan's space-time rectangle, in (0, 1]."""
    if plan.t_e <= plan.t_s:
        raise PlanError(f"group {plan.key}: degenerate lifespan")
    used = sum(d.size * (d.t_e - d.t_s) for d in plan.decisions)
    return used / (plan.height * (plan.t_e - plan.t_s))


def weighted_tmp_average(plans: Sequence[LocalPlan]) -> float:
    """Average of plan occupancies weighted by each plan's space-time area."""
    total_weight = sum(p.space_time for p in plans)
    return sum(p.tmp * p.space_time for p in plans) / total_weight


def _conflicts(fixed: Sequence[AllocationDecision], d: MemoryRequestEvent, addr: int) -> bool:
    hi = addr + d.size
    for f in fixed:
        if f.addr < hi and addr < f.end_addr and f.t_s < d.t_e and d.t_s < f.t_e:
            return True
    return False


def fuse_plans(larger: LocalPlan, smaller: LocalPlan) -> LocalPlan:
    """Insert the smaller plan's requests into the larger plan.

    Walks a cursor up the address space: at each position the earliest
    starting unplaced request that fits without a spatio-temporal conflict
    is placed and the cursor advances past it; when nothing fits, the
    cursor jumps to the next of the larger plan's decision addresses, and
    past them to the top of everything placed so far.
    """
    if not smaller.decisions:
        return larger
    if not larger.decisions:
        return smaller
    anchors = sorted({d.addr for d in larger.decisions})
    fixed: list[AllocationDecision] = list(larger.decisions)
    remaining = sorted(smaller.decisions, key=lambda d: (d.t_s, d.id))
    addr = anchors[0]
    placed: list[AllocationDecision] = []
    while remaining:
        pick = None
        for i, d in enumerate(remaining):
            if not _conflicts(fixed, d.event, addr):
                pick = i
                break
        if pick is not None:
            d = remaining.pop(pick)
            nd = AllocationDecision(d.event, addr)
            placed.append(nd)
            fixed.append(nd)
            addr += d.size
        else:
            nxt = [a for a in anchors if a > addr]
            addr = min(nxt) if nxt else max(f.end_addr for f in fixed)
    key = (
        (larger if larger.t_s <= smaller.t_s else smaller).key[0],
        (larger if larger.t_e >= smaller.t_e else smaller).key[1],
    )
    return _plan_from_decisions(key, list(larger.decisions) + placed)


def try_fuse(larger: LocalPlan, smaller: LocalPlan) -> Optional[LocalPlan]:
    """Fuse two phase-adjacent plans; keep the result only if its occupancy
    strictly beats the space-time-weighted average of the originals."""
    if not smaller.decisions:
        return larger
    if not larger.decisions:
        return smaller
    fused = fuse_plans(larger, smaller)
    if fused.tmp > weighted_tmp_average([larger, smaller]):
        return fused
    return None


# ---------------------------------------------------------------------------
# memory layers


@dataclass
class MemoryLayer:
    """A size-S address band time-shared by lifespan-disjoint occupants."""

    size: int
    slots: list = field(default_factory=list)  # (t_s, t_e, payload), sorted
    end: int = -1
    base: Optional[int] = None
    _starts: list = field(default_factory=list, repr=False)

    def fits_gap(self, t_s: int, t_e: int) -> bool:
        i = bisect_left(self._starts, t_s)
        if i > 0 and self.slots[i - 1][1] >= t_s:
            return False
        if i < len(self.slots) and self.slots[i][0] <= t_e:
            return False
        return True

    def insert(self, t_s: int, t_e: int, payload) -> None:
        i = bisect_left(self._starts, t_s)
        self._starts.insert(i, t_s)
        self.slots.insert(i, (t_s, t_e, _Keyed(payload)))
        if t_e > self.end:
            self.end = t_e


class _Keyed:
    """Opaque, never-compared wrapper so heterogenous payloads can share
    sorted slot tuples."""

    __slots__ = ("value",)

    def __init__(self, value):
        self.value = value


@dataclass(frozen=True)
class _Item:
    """One layer occupant candidate: a residual event or a local plan."""

    size: int
    t_s: int
    t_e: int
    tie: int
    payload: Union[MemoryRequestEvent, LocalPlan]


def build_layers_for_size(items: Sequence[_Item]) -> list[MemoryLayer]:
    """Greedy layer construction for one size class.

    Items sorted by start time each join the layer whose end is the
    largest one strictly below their start (ties to the oldest layer),
    else open a new layer. The layer count equals the maximum number of
    simultaneously live items, so the greedy is optimal for the class.
    """
    layers: list[MemoryLayer] = []
    for item in sorted(items, key=lambda i: (i.t_s, i.tie)):
        best: Optional[MemoryLayer] = None
        for layer in layers:
            if layer.end < item.t_s and (best is None or layer.end > best.end):
                best = layer
        if best is None:
            best = MemoryLayer(size=item.size)
            layers.append(best)
        best.insert(item.t_s, item.t_e, item.payload)
    return layers


# ---------------------------------------------------------------------------
# global planning


@dataclass
class PlanStats:
    """Planner counters, emitted as a JSON sidecar by the CLI."""

    num_events: int = 0
    num_persistent: int = 0
    num_groups: int = 0
    num_plans: int = 0
    num_residuals: int = 0
    fusion_attempts: int = 0
    fusion_accepted: int = 0
    gap_insertions: int = 0
    num_layers: int = 0
    pool_size: int = 0
    static_peak: int = 0
    plan_seconds: float = 0.0
    # (fused tmp, weighted average) per accepted fusion, for auditing
    accepted_fusions: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "events": self.num_events,
            "persistent": self.num_persistent,
            "phase_groups": self.num_groups,
            "local_plans": self.num_plans,
            "residual_events": self.num_residuals,
            "fusion_attempts": self.fusion_attempts,
            "fusion_accepted": self.fusion_accepted,
            "gap_insertions": self.gap_insertions,
            "layers": self.num_layers,
            "pool_size": self.pool_size,
            "static_peak": self.static_peak,
            "plan_seconds": self.plan_seconds,
        }


@dataclass(frozen=True)
class StaticPlan:
    """The planner's output: absolute decisions inside a fixed-size pool."""

    pool_size: int
    alignment: int
    decisions: tuple[AllocationDecision, ...]
    layer_table: tuple[tuple[int, MemoryLayer], ...]
    persistent_size: int

    def address_span(self) -> IntervalSet:
        """Occupied-universe of the plan: [min addr, max addr+size)."""
        if not self.decisions:
            return IntervalSet.empty()
        lo = min(d.addr for d in self.decisions)
        hi = max(d.end_addr for d in self.decisions)
        return IntervalSet.span(lo, hi)

    def to_bundle(self, reuse=None) -> PlanBundle:
        if hasattr(reuse, "spaces"):  # a ReuseMap rather than a plain mapping
            reuse = reuse.spaces()
        return PlanBundle(
            pool_size=self.pool_size,
            alignment=self.alignment,
            decisions=tuple(
                PlanDecision(d.id, d.addr, d.size, d.t_s, d.t_e)
                for d in self.decisions
            ),
            reuse=dict(reuse or {}),
        )


def _fusion_sweep(plans: list[LocalPlan], stats: PlanStats) -> list[LocalPlan]:
    """Fuse phase-adjacent plan pairs until a full pass accepts nothing."""
    changed = True
    while changed:
        changed = False
        for i in range(len(plans)):
            for j in range(i + 1, len(plans)):
                a, b = plans[i], plans[j]
                if a.key[1] != b.key[0] and b.key[1] != a.key[0]:
                    continue
                larger, smaller = (a, b) if a.height >= b.height else (b, a)
                stats.fusion_attempts += 1
                fused = try_fuse(larger, smaller)
                if fused is None:
                    continue
                stats.fusion_accepted += 1
                stats.accepted_fusions.append(
                    (fused.tmp, weighted_tmp_average([larger, smaller]))
                )
                plans[i] = fused
                del plans[j]
                changed = True
                break
            if changed:
                break
    return plans


def synthesize_static_plan(
    trace: Trace,
    *,
    fusion: bool = True,
    gap_insert: bool = True,
    alignment: int = DEFAULT_ALIGNMENT,
    stats: Optional[PlanStats] = None,
) -> StaticPlan:
    """Plan every static request of the trace into a minimal pool."""
    t0 = time.monotonic()
    stats = stats if stats is not None else PlanStats()
    events = trace.static_events()
    horizon = trace.horizon
    stats.num_events = len(events)
    for ev in events:
        if ev.size % alignment:
            raise PlanError(f"event {ev.id}: size {ev.size} not aligned")

    persistent = sorted(
        (e for e in events if e.t_e >= horizon), key=lambda e: (e.t_s, e.id)
    )
    scoped = [e for e in events if e.t_e < horizon]
    stats.num_persistent = len(persistent)

    # bottom block: persistents conflict with everything after their birth,
    # so a fixed stack costs nothing and keeps the pool layout readable
    decisions: list[AllocationDecision] = []
    base = 0
    for ev in persistent:
        decisions.append(AllocationDecision(ev, base))
        base += ev.size
    persistent_size = base

    order = trace.phase_index
    groups = group_by_phase(scoped)
    groups.sort(key=lambda g: (order(g.key[0]), order(g.key[1])))
    stats.num_groups = len(groups)

    plans: list[LocalPlan] = []
    residuals: list[MemoryRequestEvent] = []
    for g in groups:
        if g.cross_phase:
            plans.append(pack_group(g))
        else:
            residuals.extend(g.members)
    stats.num_residuals = len(residuals)

    if fusion and len(plans) > 1:
        plans = _fusion_sweep(plans, stats)
    stats.num_plans = len(plans)

    items: list[_Item] = []
    for p in plans:
        items.append(_Item(p.height, p.t_s, p.t_e, min(d.id for d in p.decisions), p))
    for ev in residuals:
        items.append(_Item(ev.size, ev.t_s, ev.t_e, ev.id, ev))

    layers: list[MemoryLayer] = []
    by_size: dict[int, list[_Item]] = {}
    for item in items:
        by_size.setdefault(item.size, []).append(item)
    for size in sorted(by_size, reverse=True):
        pending = sorted(by_size[size], key=lambda i: (i.t_s, i.tie))
        leftover: list[_Item] = []
        for item in pending:
            host = None
            if gap_insert:
                # prefer the tightest band so wide bands stay open for
                # wide requests (an occupant blocks its whole band)
                for layer in layers:
                    if (
                        layer.size > item.size
                        and (host is None or layer.size < host.size)
                        and layer.fits_gap(item.t_s, item.t_e)
                    ):
                        host = layer
            if host is not None:
                host.insert(item.t_s, item.t_e, item.payload)
                stats.gap_insertions += 1
            else:
                leftover.append(item)
        layers.extend(build_layers_for_size(leftover))
    stats.num_layers = len(layers)

    for layer in layers:
        layer.base = base
        base += layer.size
    pool_size = base

    for layer in layers:
        for t_s, t_e, keyed in layer.slots:
            payload = keyed.value
            if isinstance(payload, LocalPlan):
                for d in payload.decisions:
                    decisions.append(d.rebased(layer.base))
            else:
                decisions.append(AllocationDecision(payload, layer.base))

    decisions.sort(key=lambda d: (d.t_s, d.id))
    plan = StaticPlan(
        pool_size=pool_size,
        alignment=alignment,
        decisions=tuple(decisions),
        layer_table=tuple((layer.base, layer) for layer in layers),
        persistent_size=persistent_size,
    )

    stats.pool_size = pool_size
    stats.static_peak = peak_live_bytes(events)
    if pool_size < stats.static_peak:
        raise PlanError("pool below the static peak; planner invariant broken")
    violations = validate_plan(plan)
    if violations:
        a, b = violations[0]
        raise PlanError(f"planner emitted conflicting decisions {a.id} and {b.id}")
    stats.plan_seconds = time.monotonic() - t0
    return plan


def validate_plan(plan: StaticPlan) -> list[tuple[AllocationDecision, AllocationDecision]]:
    """Sweep the timeline and report decision pairs that overlap in both
    lifespan and address range (empty list = valid plan)."""
    ops: list[tuple[int, int, AllocationDecision]] = []
    for d in plan.decisions:
        ops.append((d.t_s, 1, d))
        ops.append((d.t_e, 0, d))
    ops.sort(key=lambda o: (o[0], o[1], o[2].id))
    violations: list[tuple[AllocationDecision, AllocationDecision]] = []
    active_lo: list[int] = []
    active: list[AllocationDecision] = []
    for _, is_alloc, d in ops:
        if is_alloc:
            i = bisect_left(active_lo, d.addr)
            if i > 0 and active[i - 1].end_addr > d.addr:
                violations.append((active[i - 1], d))
            j = i
            while j < len(active) and active[j].addr < d.end_addr:
                violations.append((active[j], d))
                j += 1
            active_lo.insert(i, d.addr)
            active.insert(i, d)
        else:
            i = bisect_left(active_lo, d.addr)
            while i < len(active) and active[i] is not d:
                i += 1
            if i < len(active):
                del active_lo[i]
                del active[i]
    return violations
