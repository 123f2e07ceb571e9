"""Reusable pool space for dynamic requests, derived before simulation.

Dynamic requests are grouped by their (alloc layer, free layer) pair.
For each group, the addresses provably idle in the static plan across
the group's bounding temporal range can be lent out at runtime without
ever colliding with a planned static allocation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

from .intervals import Interval, IntervalSet, subtract
from .model import LayerSpan, MemoryRequestEvent, PlanError, Trace, TraceError
from .planner import StaticPlan

ReuseKey = tuple[str, str]


@dataclass(frozen=True)
class ReuseEntry:
    t_lo: int
    t_hi: int
    space: IntervalSet


@dataclass(frozen=True)
class ReuseMap:
    entries: Mapping[ReuseKey, ReuseEntry]

    def spaces(self) -> dict[ReuseKey, IntervalSet]:
        return {key: entry.space for key, entry in self.entries.items()}

    def __contains__(self, key: ReuseKey) -> bool:
        return key in self.entries

    def get(self, key: ReuseKey):
        return self.entries.get(key)


def group_dynamic(
    events: Iterable[MemoryRequestEvent],
) -> dict[ReuseKey, list[MemoryRequestEvent]]:
    """Exact partition of dynamic events by (l_s, l_e)."""
    out: dict[ReuseKey, list[MemoryRequestEvent]] = {}
    for ev in events:
        if not ev.dynamic or ev.l_s is None or ev.l_e is None:
            raise TraceError(f"event {ev.id}: dynamic event missing layer")
        out.setdefault((ev.l_s, ev.l_e), []).append(ev)
    return out


def compute_reusable_space(
    plan: StaticPlan,
    key: ReuseKey,
    layer_schedule: Iterable[LayerSpan],
) -> tuple[tuple[int, int], IntervalSet]:
    """Idle addresses of the plan throughout the key's bounding range.

    The range runs from the alloc layer's start to the free layer's end;
    every static decision whose lifespan intersects it blocks out its
    address range, and what is left of the plan's address span is free
    to reuse.
    """
    spans = {s.name: s for s in layer_schedule}
    try:
        start_layer, end_layer = spans[key[0]], spans[key[1]]
    except KeyError as exc:
        raise PlanError(f"unknown layer {exc.args[0]!r} in reuse key") from None
    t_lo, t_hi = start_layer.start, end_layer.end
    if t_hi < t_lo:
        raise PlanError(f"reuse key {key}: free layer ends before alloc layer starts")
    universe = plan.address_span()
    occupied = IntervalSet(
        Interval(d.addr, d.end_addr)
        for d in plan.decisions
        if d.t_s < t_hi and t_lo < d.t_e
    )
    return (t_lo, t_hi), subtract(universe, occupied)


def derive_reuse_map(plan: StaticPlan, trace: Trace) -> ReuseMap:
    """One reuse entry per dynamic (alloc layer, free layer) group.

    Keys whose reusable space works out empty are kept with an empty set,
    so the simulator can tell "nothing to reuse" from "unknown key".
    """
    entries: dict[ReuseKey, ReuseEntry] = {}
    for key in sorted(group_dynamic(trace.dynamic_events())):
        (t_lo, t_hi), space = compute_reusable_space(plan, key, trace.layer_schedule)
        entries[key] = ReuseEntry(t_lo, t_hi, space)
    return ReuseMap(entries)
