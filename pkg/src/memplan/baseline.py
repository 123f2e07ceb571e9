"""Online caching-allocator model: the comparison baseline and the
runtime fallback path.

Allocation is best-fit over all cached free blocks with block splitting;
a miss reserves a fresh segment (request rounded up to the next power of
two, 2 MiB minimum); frees merge with adjacent free blocks of the same
segment. Segments are never returned, so reserved bytes only grow.
"""

from __future__ import annotations

from bisect import insort
from dataclasses import dataclass, field

from .model import SimulationError, Trace

MIN_SEGMENT = 2 * 1024 * 1024


def _next_pow2(n: int) -> int:
    return 1 << (n - 1).bit_length()


@dataclass
class Segment:
    base: int
    size: int
    free: list[tuple[int, int]] = field(default_factory=list)  # (lo, hi) sorted

    @property
    def end(self) -> int:
        return self.base + self.size


class CachingAllocator:
    """Best-fit/split/merge allocator over lazily reserved segments."""

    def __init__(self, *, base: int = 0, min_segment: int = MIN_SEGMENT) -> None:
        self._next_base = base
        self._min_segment = min_segment
        self.segments: list[Segment] = []
        self._live: dict[int, tuple[Segment, int, int]] = {}
        self.reserved = 0
        self.live_bytes = 0

    def owns(self, rid: int) -> bool:
        return rid in self._live

    def malloc(self, rid: int, size: int) -> tuple[int, int]:
        """Serve a request; returns (address, newly reserved bytes)."""
        if rid in self._live:
            raise SimulationError(f"request {rid} already live in cache")
        best = None  # (segment, index); ties go to the lowest address
        for seg in self.segments:
            for i, (lo, hi) in enumerate(seg.free):
                if hi - lo >= size:
                    if best is None or hi - lo < best_len:
                        best = (seg, i)
                        best_len = hi - lo
        grown = 0
        if best is None:
            seg_size = max(self._min_segment, _next_pow2(size))
            seg = Segment(self._next_base, seg_size, [])
            seg.free.append((seg.base, seg.end))
            self.segments.append(seg)
            self._next_base = seg.end
            self.reserved += seg_size
            grown = seg_size
            best = (seg, 0)
        seg, i = best
        lo, hi = seg.free.pop(i)
        addr = lo
        if lo + size < hi:
            seg.free.insert(i, (lo + size, hi))
        self._live[rid] = (seg, addr, addr + size)
        self.live_bytes += size
        return addr, grown

    def free(self, rid: int) -> tuple[int, int]:
        """Release a request; returns (address, size)."""
        if rid not in self._live:
            raise SimulationError(f"free of unknown id {rid} in cache")
        seg, lo, hi = self._live.pop(rid)
        size = hi - lo
        self.live_bytes -= size
        insort(seg.free, (lo, hi))
        i = seg.free.index((lo, hi))
        if i + 1 < len(seg.free) and seg.free[i + 1][0] == hi:
            _, nxt_hi = seg.free.pop(i + 1)
            seg.free[i] = (lo, nxt_hi)
            hi = nxt_hi
        if i > 0 and seg.free[i - 1][1] == lo:
            prev_lo, _ = seg.free.pop(i - 1)
            seg.free[i - 1] = (prev_lo, hi)
        return lo, size


def run_baseline(trace: Trace):
    """Replay every event online through the caching allocator."""
    from .sim import SimReport, compute_metrics

    cache = CachingAllocator()
    log: list[dict] = [{"kind": "init", "pool_size": 0}]
    ops: list[tuple[int, int, object]] = []
    for ev in trace.events:
        ops.append((ev.t_s, 1, ev))
        ops.append((ev.t_e, 0, ev))
    ops.sort(key=lambda o: (o[0], o[1], o[2].id))
    for t, is_alloc, ev in ops:
        if is_alloc:
            addr, grown = cache.malloc(ev.id, ev.size)
            if grown:
                log.append({"kind": "reserve", "t": t, "bytes": grown})
            log.append(
                {
                    "kind": "alloc",
                    "t": t,
                    "id": ev.id,
                    "size": ev.size,
                    "space": "cache",
                    "addr": addr,
                    "route": "online",
                }
            )
        else:
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
    return compute_metrics(log)
