"""Domain types: computation phases, memory request events, traces.

Timestamps everywhere are logical record indices (the position of the
alloc/free record in the profiled op stream), never wall-clock. Event
lifespans are half-open: [t_s, t_e).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Optional

DEFAULT_ALIGNMENT = 512


class MemplanError(Exception):
    """Base class for all package errors."""


class TraceError(MemplanError):
    """A trace violates its structural invariants."""


class PlanError(MemplanError):
    """A plan (in memory or on disk) is invalid."""


class SimulationError(MemplanError):
    """Replay hit an internal inconsistency (double free, stomped address)."""


def align_up(size: int, alignment: int = DEFAULT_ALIGNMENT) -> int:
    if size <= 0:
        raise ValueError(f"size must be positive, got {size}")
    return (size + alignment - 1) // alignment * alignment


class PhaseKind(IntEnum):
    INIT = 0
    FORWARD = 1
    BACKWARD = 2
    OPTIMIZER = 3


_PHASE_RE = re.compile(r"^(F|B):(\d+)(?:\.(\d+))?$")


@dataclass(frozen=True, order=True, slots=True)
class PhaseId:
    """One computation phase: kind plus microbatch and pipeline-chunk index.

    The dataclass ordering is only a stable tie-break; the authoritative
    ordering of phases is their position in a trace's phase schedule.
    """

    kind: PhaseKind
    microbatch: int = 0
    chunk: int = 0

    def __post_init__(self) -> None:
        if self.microbatch < 0 or self.chunk < 0:
            raise ValueError("microbatch and chunk must be >= 0")
        if self.kind in (PhaseKind.INIT, PhaseKind.OPTIMIZER) and self.microbatch:
            raise ValueError(f"{self.kind.name} phase cannot carry a microbatch")

    def tag(self) -> str:
        if self.kind == PhaseKind.INIT:
            return "init"
        if self.kind == PhaseKind.OPTIMIZER:
            return "opt"
        letter = "F" if self.kind == PhaseKind.FORWARD else "B"
        if self.chunk:
            return f"{letter}:{self.microbatch}.{self.chunk}"
        return f"{letter}:{self.microbatch}"

    @classmethod
    def parse(cls, tag: str) -> "PhaseId":
        if tag == "init":
            return cls(PhaseKind.INIT)
        if tag == "opt":
            return cls(PhaseKind.OPTIMIZER)
        m = _PHASE_RE.match(tag)
        if not m:
            raise TraceError(f"bad phase tag {tag!r}")
        kind = PhaseKind.FORWARD if m.group(1) == "F" else PhaseKind.BACKWARD
        return cls(kind, int(m.group(2)), int(m.group(3) or 0))

    def __str__(self) -> str:
        return self.tag()


@dataclass(frozen=True, slots=True)
class MemoryRequestEvent:
    """One paired alloc/free record.

    `l_s`/`l_e` name the model-layer instances that issued the alloc and
    the free; they are present exactly when the event is dynamic.
    """

    id: int
    size: int
    t_s: int
    t_e: int
    p_s: PhaseId
    p_e: PhaseId
    dynamic: bool = False
    l_s: Optional[str] = None
    l_e: Optional[str] = None

    def __post_init__(self) -> None:
        if self.size <= 0:
            raise TraceError(f"event {self.id}: size must be positive")
        if self.t_e <= self.t_s:
            raise TraceError(f"event {self.id}: t_e must exceed t_s")
        if self.dynamic and (self.l_s is None or self.l_e is None):
            raise TraceError(f"event {self.id}: dynamic event missing layer")
        if not self.dynamic and (self.l_s is not None or self.l_e is not None):
            raise TraceError(f"event {self.id}: static event carries layer names")

    @property
    def duration(self) -> int:
        return self.t_e - self.t_s


@dataclass(frozen=True, slots=True)
class AllocationDecision:
    """A memory request event with its assigned base address."""

    event: MemoryRequestEvent
    addr: int

    def __post_init__(self) -> None:
        if self.addr < 0:
            raise PlanError(f"decision for event {self.event.id}: negative address")

    @property
    def id(self) -> int:
        return self.event.id

    @property
    def size(self) -> int:
        return self.event.size

    @property
    def t_s(self) -> int:
        return self.event.t_s

    @property
    def t_e(self) -> int:
        return self.event.t_e

    @property
    def p_s(self) -> PhaseId:
        return self.event.p_s

    @property
    def p_e(self) -> PhaseId:
        return self.event.p_e

    @property
    def end_addr(self) -> int:
        return self.addr + self.event.size

    def rebased(self, offset: int) -> "AllocationDecision":
        return AllocationDecision(self.event, self.addr + offset)


@dataclass(frozen=True, slots=True)
class PhaseSpan:
    phase: PhaseId
    start: int
    end: int


@dataclass(frozen=True, slots=True)
class LayerSpan:
    name: str
    start: int
    end: int


@dataclass(frozen=True)
class Trace:
    """A full profiled iteration: events plus phase and layer schedules."""

    events: tuple[MemoryRequestEvent, ...]
    phase_schedule: tuple[PhaseSpan, ...]
    layer_schedule: tuple[LayerSpan, ...] = ()
    _phase_index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        index = {span.phase: i for i, span in enumerate(self.phase_schedule)}
        object.__setattr__(self, "_phase_index", index)

    @property
    def horizon(self) -> int:
        return self.phase_schedule[-1].end if self.phase_schedule else 0

    def phase_index(self, phase: PhaseId) -> int:
        try:
            return self._phase_index[phase]
        except KeyError:
            raise TraceError(f"phase {phase} not in schedule") from None

    def layer_span(self, name: str) -> LayerSpan:
        for span in self.layer_schedule:
            if span.name == name:
                return span
        raise TraceError(f"unknown layer {name!r}")

    def static_events(self) -> tuple[MemoryRequestEvent, ...]:
        return tuple(e for e in self.events if not e.dynamic)

    def dynamic_events(self) -> tuple[MemoryRequestEvent, ...]:
        return tuple(e for e in self.events if e.dynamic)

    def validate(self) -> None:
        """Raise TraceError on any violated invariant."""
        horizon = self.horizon
        prev_end = 0
        for span in self.phase_schedule:
            if span.start < prev_end or span.end <= span.start:
                raise TraceError(
                    f"phase schedule not ordered/disjoint at {span.phase}"
                )
            prev_end = span.end
        if len(self._phase_index) != len(self.phase_schedule):
            raise TraceError("duplicate phase in schedule")
        names = [s.name for s in self.layer_schedule]
        if len(set(names)) != len(names):
            raise TraceError("duplicate layer instance in schedule")
        layer_by_name = {s.name: s for s in self.layer_schedule}
        seen: set[int] = set()
        for ev in self.events:
            if ev.id in seen:
                raise TraceError(f"duplicate event id {ev.id}")
            seen.add(ev.id)
            if not (0 <= ev.t_s < horizon) or ev.t_e > horizon:
                raise TraceError(f"event {ev.id}: timestamps outside [0, horizon]")
            if not self._phase_contains(ev.p_s, ev.t_s):
                raise TraceError(f"event {ev.id}: t_s not inside phase {ev.p_s}")
            if ev.t_e < horizon and not self._phase_contains(ev.p_e, ev.t_e):
                raise TraceError(f"event {ev.id}: t_e not inside phase {ev.p_e}")
            if self.phase_index(ev.p_s) > self.phase_index(ev.p_e):
                raise TraceError(f"event {ev.id}: p_s after p_e in phase order")
            if ev.dynamic:
                for name in (ev.l_s, ev.l_e):
                    if name not in layer_by_name:
                        raise TraceError(f"event {ev.id}: unknown layer {name!r}")

    def _phase_contains(self, phase: PhaseId, t: int) -> bool:
        i = self._phase_index.get(phase)
        if i is None:
            return False
        span = self.phase_schedule[i]
        return span.start <= t < span.end


def peak_live_bytes(events: Iterable[MemoryRequestEvent]) -> int:
    """Max over time of the total size of live events (half-open lifespans)."""
    deltas: list[tuple[int, int, int]] = []
    for ev in events:
        deltas.append((ev.t_s, 1, ev.size))
        deltas.append((ev.t_e, 0, ev.size))
    deltas.sort()
    peak = cur = 0
    for _, is_alloc, size in deltas:
        if is_alloc:
            cur += size
            if cur > peak:
                peak = cur
        else:
            cur -= size
    return peak


def clique_lower_bound(trace: Trace) -> int:
    """Peak allocated bytes of the trace; no plan can reserve less."""
    return peak_live_bytes(trace.events)
