"""Trace replay against a plan: the hybrid static/dynamic runtime allocator.

Static requests are matched to planned decisions by (size, alloc phase),
consumed in plan order with one queue per key; an unmatched request falls
back to the caching allocator and matching continues at the cursor.
Dynamic requests get the best-fit interval from the intersection of the
pool's currently free addresses with their group's reusable space, and
overflow to the caching allocator too.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Union

from .baseline import CachingAllocator
from .intervals import Interval, IntervalSet, best_fit, intersect
from .model import SimulationError, Trace
from .traceio import PlanBundle


@dataclass
class PoolState:
    """Mutable view of the static pool during replay."""

    pool_size: int
    free: IntervalSet
    live: dict[int, Interval]

    @classmethod
    def fresh(cls, pool_size: int) -> "PoolState":
        free = IntervalSet.span(0, pool_size) if pool_size else IntervalSet.empty()
        return cls(pool_size, free, {})


@dataclass(frozen=True)
class SimReport:
    """Replay outcome: peak allocated vs reserved plus routing statistics."""

    allocated_peak: int
    reserved_peak: int
    efficiency: float
    fragmentation: float
    pool_size: int
    fallback_count: int
    fallback_bytes_peak: int
    reuse_hits: int
    mismatch_count: int

    def to_dict(self) -> dict:
        return {
            "allocated_peak": self.allocated_peak,
            "reserved_peak": self.reserved_peak,
            "efficiency": self.efficiency,
            "fragmentation": self.fragmentation,
            "pool_size": self.pool_size,
            "fallback_count": self.fallback_count,
            "fallback_bytes_peak": self.fallback_bytes_peak,
            "reuse_hits": self.reuse_hits,
            "mismatch_count": self.mismatch_count,
        }


def compute_metrics(log: Iterable[dict]) -> SimReport:
    """Fold a replay log into a report.

    Peak allocated tracks live request bytes across both spaces; reserved
    is the pool size plus every cache segment reservation (segments are
    never returned, so the running total is the peak).
    """
    pool_size = 0
    live = cache_live = 0
    allocated_peak = cache_peak = 0
    reserved = 0
    fallback_count = reuse_hits = mismatch_count = 0
    for rec in log:
        kind = rec["kind"]
        if kind == "init":
            pool_size = rec["pool_size"]
        elif kind == "reserve":
            reserved += rec["bytes"]
        elif kind == "alloc":
            live += rec["size"]
            allocated_peak = max(allocated_peak, live)
            if rec["space"] == "cache":
                cache_live += rec["size"]
                cache_peak = max(cache_peak, cache_live)
            route = rec["route"]
            if route in ("fallback", "mismatch"):
                fallback_count += 1
            if route == "mismatch":
                mismatch_count += 1
            if route == "reuse":
                reuse_hits += 1
        elif kind == "free":
            live -= rec["size"]
            if rec["space"] == "cache":
                cache_live -= rec["size"]
    reserved_peak = pool_size + reserved
    if reserved_peak:
        efficiency = allocated_peak / reserved_peak
    else:
        efficiency = 1.0
    return SimReport(
        allocated_peak=allocated_peak,
        reserved_peak=reserved_peak,
        efficiency=efficiency,
        fragmentation=1.0 - efficiency,
        pool_size=pool_size,
        fallback_count=fallback_count,
        fallback_bytes_peak=cache_peak,
        reuse_hits=reuse_hits,
        mismatch_count=mismatch_count,
    )


def dynamic_allocate(
    state: PoolState,
    reuse_spaces: Mapping[tuple[str, str], IntervalSet],
    key: tuple[str, str],
    size: int,
) -> Optional[int]:
    """Place a dynamic request inside its reusable space, or signal fallback.

    Candidates are the intersection of the pool's free intervals with the
    key's reusable space; best-fit picks the target and the request lands
    at its low end. None means the caller must use the fallback path.
    """
    space = reuse_spaces.get(key)
    if space is None or not space:
        return None
    candidates = intersect(state.free, space)
    target = best_fit(candidates, size)
    if target is None:
        return None
    state.free = state.free.remove(Interval(target.lo, target.lo + size))
    return target.lo


def simulate(
    trace: Trace,
    plan: PlanBundle,
    *,
    reuse: bool = True,
    log_path: Union[str, Path, None] = None,
) -> tuple[SimReport, list[dict]]:
    """Replay the trace against the plan; returns the report and the log."""
    plan.validate()
    state = PoolState.fresh(plan.pool_size)
    reuse_spaces: Mapping = plan.reuse
    cache = CachingAllocator(base=plan.pool_size)

    events_by_id = {ev.id: ev for ev in trace.events}
    queues: dict[tuple, deque] = {}
    for d in sorted(plan.decisions, key=lambda d: (d.t_s, d.id)):
        ev = events_by_id.get(d.id)
        if ev is None or ev.dynamic:
            continue  # decision has no static counterpart in this trace
        queues.setdefault((ev.p_s, d.size), deque()).append(d)

    log: list[dict] = [{"kind": "init", "pool_size": plan.pool_size}]
    ops: list[tuple[int, int, object]] = []
    for ev in trace.events:
        ops.append((ev.t_s, 1, ev))
        ops.append((ev.t_e, 0, ev))
    ops.sort(key=lambda o: (o[0], o[1], o[2].id))

    for t, is_alloc, ev in ops:
        if is_alloc:
            if ev.dynamic:
                key = (ev.l_s, ev.l_e)
                addr = (
                    dynamic_allocate(state, reuse_spaces, key, ev.size)
                    if reuse
                    else None
                )
                if addr is not None:
                    state.live[ev.id] = Interval(addr, addr + ev.size)
                    log.append(_alloc_rec(t, ev, "pool", addr, "reuse"))
                else:
                    addr, grown = cache.malloc(ev.id, ev.size)
                    if grown:
                        log.append({"kind": "reserve", "t": t, "bytes": grown})
                    log.append(_alloc_rec(t, ev, "cache", addr, "fallback"))
            else:
                q = queues.get((ev.p_s, ev.size))
                if q:
                    d = q.popleft()
                    iv = Interval(d.addr, d.addr + d.size)
                    if not state.free.contains_interval(iv):
                        raise SimulationError(
                            f"planned address {d.addr} for event {ev.id} is occupied"
                        )
                    state.free = state.free.remove(iv)
                    state.live[ev.id] = iv
                    log.append(_alloc_rec(t, ev, "pool", d.addr, "planned"))
                else:
                    addr, grown = cache.malloc(ev.id, ev.size)
                    if grown:
                        log.append({"kind": "reserve", "t": t, "bytes": grown})
                    log.append(_alloc_rec(t, ev, "cache", addr, "mismatch"))
        else:
            if ev.id in state.live:
                iv = state.live.pop(ev.id)
                state.free = state.free.add(iv)
                log.append(
                    {
                        "kind": "free",
                        "t": t,
                        "id": ev.id,
                        "size": iv.length,
                        "space": "pool",
                        "addr": iv.lo,
                    }
                )
            elif cache.owns(ev.id):
                addr, size = cache.free(ev.id)
                log.append(
                    {
                        "kind": "free",
                        "t": t,
                        "id": ev.id,
                        "size": size,
                        "space": "cache",
                        "addr": addr,
                    }
                )
            else:
                raise SimulationError(f"double free or free of unknown id {ev.id}")

    if log_path is not None:
        with Path(log_path).open("w", encoding="utf-8") as fh:
            for rec in log:
                fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")
    return compute_metrics(log), log


def _alloc_rec(t: int, ev, space: str, addr: int, route: str) -> dict:
    rec = {
        "kind": "alloc",
        "t": t,
        "id": ev.id,
        "size": ev.size,
        "space": space,
        "addr": addr,
        "route": route,
    }
    if ev.dynamic:
        rec["key"] = [ev.l_s, ev.l_e]
    return rec
