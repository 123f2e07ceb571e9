"""Half-open address intervals and disjoint interval sets.

These carry every address-range computation in the package: free-space
tracking in the simulated pool, reusable-space derivation, and the
best-fit placement policy.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional


@dataclass(frozen=True, order=True, slots=True)
class Interval:
    """Half-open address range [lo, hi)."""

    lo: int
    hi: int

    def __post_init__(self) -> None:
        if self.hi <= self.lo:
            raise ValueError(f"empty or inverted interval [{self.lo}, {self.hi})")

    @property
    def length(self) -> int:
        return self.hi - self.lo

    def overlaps(self, other: "Interval") -> bool:
        return self.lo < other.hi and other.lo < self.hi

    def contains(self, other: "Interval") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi


class IntervalSet:
    """Immutable sorted set of pairwise-disjoint, non-adjacent intervals.

    The constructor normalizes arbitrary input: overlapping or touching
    intervals are coalesced, so the sorted/disjoint/coalesced invariants
    hold for every instance.
    """

    __slots__ = ("_ivs",)

    def __init__(self, intervals: Iterable[Interval] = ()) -> None:
        merged: list[Interval] = []
        for iv in sorted(intervals):
            if merged and iv.lo <= merged[-1].hi:
                last = merged[-1]
                if iv.hi > last.hi:
                    merged[-1] = Interval(last.lo, iv.hi)
            else:
                merged.append(iv)
        object.__setattr__(self, "_ivs", tuple(merged))

    @classmethod
    def empty(cls) -> "IntervalSet":
        return _EMPTY

    @classmethod
    def span(cls, lo: int, hi: int) -> "IntervalSet":
        return cls((Interval(lo, hi),))

    @property
    def intervals(self) -> tuple[Interval, ...]:
        return self._ivs

    def __iter__(self) -> Iterator[Interval]:
        return iter(self._ivs)

    def __len__(self) -> int:
        return len(self._ivs)

    def __bool__(self) -> bool:
        return bool(self._ivs)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IntervalSet):
            return NotImplemented
        return self._ivs == other._ivs

    def __hash__(self) -> int:
        return hash(self._ivs)

    def __repr__(self) -> str:
        body = ",".join(f"[{iv.lo},{iv.hi})" for iv in self._ivs)
        return f"IntervalSet({{{body}}})"

    def total(self) -> int:
        """Total number of addresses covered."""
        return sum(iv.length for iv in self._ivs)

    def contains_interval(self, iv: Interval) -> bool:
        """True if [iv.lo, iv.hi) lies fully inside one member interval."""
        idx = bisect_right(self._ivs, iv.lo, key=lambda v: v.lo) - 1
        return idx >= 0 and self._ivs[idx].contains(iv)

    def add(self, iv: Interval) -> "IntervalSet":
        """Set union with a single interval."""
        ivs = self._ivs
        lo_idx = bisect_left(ivs, iv.lo, key=lambda v: v.hi)
        hi_idx = bisect_right(ivs, iv.hi, lo=lo_idx, key=lambda v: v.lo)
        lo = min([iv.lo] + [v.lo for v in ivs[lo_idx:hi_idx]])
        hi = max([iv.hi] + [v.hi for v in ivs[lo_idx:hi_idx]])
        out = IntervalSet.__new__(IntervalSet)
        object.__setattr__(
            out, "_ivs", ivs[:lo_idx] + (Interval(lo, hi),) + ivs[hi_idx:]
        )
        return out

    def remove(self, iv: Interval) -> "IntervalSet":
        """Set difference with a single interval."""
        ivs = self._ivs
        lo_idx = bisect_right(ivs, iv.lo, key=lambda v: v.hi)
        keep: list[Interval] = list(ivs[:lo_idx])
        i = lo_idx
        while i < len(ivs) and ivs[i].lo < iv.hi:
            cur = ivs[i]
            if cur.lo < iv.lo:
                keep.append(Interval(cur.lo, iv.lo))
            if cur.hi > iv.hi:
                keep.append(Interval(iv.hi, cur.hi))
            i += 1
        keep.extend(ivs[i:])
        out = IntervalSet.__new__(IntervalSet)
        object.__setattr__(out, "_ivs", tuple(keep))
        return out

    def union(self, other: "IntervalSet") -> "IntervalSet":
        return IntervalSet(self._ivs + other._ivs)


_EMPTY = IntervalSet()


def intersect(x: IntervalSet, y: IntervalSet) -> IntervalSet:
    """Addresses present in both sets."""
    out: list[Interval] = []
    xi, yi = x.intervals, y.intervals
    i = j = 0
    while i < len(xi) and j < len(yi):
        lo = max(xi[i].lo, yi[j].lo)
        hi = min(xi[i].hi, yi[j].hi)
        if lo < hi:
            out.append(Interval(lo, hi))
        if xi[i].hi < yi[j].hi:
            i += 1
        else:
            j += 1
    res = IntervalSet.__new__(IntervalSet)
    object.__setattr__(res, "_ivs", tuple(out))
    return res


def subtract(universe: IntervalSet, occupied: IntervalSet) -> IntervalSet:
    """Addresses in `universe` but not in `occupied`."""
    out = universe
    for iv in occupied:
        out = out.remove(iv)
    return out


def best_fit(candidates: IntervalSet, size: int) -> Optional[Interval]:
    """Smallest candidate interval of length >= size; ties go to the lowest lo.

    Returns None when nothing fits; callers decide the fallback.
    """
    if size <= 0:
        raise ValueError("best_fit needs a positive size")
    best: Optional[Interval] = None
    for iv in candidates:
        if iv.length >= size and (best is None or iv.length < best.length):
            best = iv
    return best
