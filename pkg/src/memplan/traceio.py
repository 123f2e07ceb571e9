"""On-disk formats: line-delimited trace files and single-document plan files.

Trace files are UTF-8 JSONL. The first line is a header carrying the
schema version; every following line is one record. Two layouts exist:

* ``raw``: one line per alloc/free op, in profiling order. The line
  index (0-based, excluding the header) is the record's logical
  timestamp. Record keys: op, id, size, phase, module, dynamic.
* ``paired``: one line per fused event with keys id, size, t_s, t_e,
  p_s, p_e, dynamic, l_s, l_e; the header carries the phase and layer
  schedules explicitly.

Plan files are a single JSON document:
``{version, pool_size, alignment, decisions, reuse_map}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Union

from .intervals import Interval, IntervalSet
from .model import (
    DEFAULT_ALIGNMENT,
    LayerSpan,
    MemoryRequestEvent,
    PhaseId,
    PhaseSpan,
    PlanError,
    Trace,
    TraceError,
    align_up,
)

SCHEMA_VERSION = 1


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# trace reading


def parse_trace(path: Union[str, Path]) -> Trace:
    """Read a trace file (raw or paired layout) into a validated Trace."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise TraceError(f"{path}: empty trace file")
    header = _parse_line(path, 1, lines[0])
    if header.get("kind") != "trace":
        raise TraceError(f"{path}: not a trace file")
    if header.get("version") != SCHEMA_VERSION:
        raise TraceError(f"{path}: unsupported schema version {header.get('version')}")
    fmt = header.get("format", "raw")
    if fmt == "raw":
        trace = _parse_raw(path, lines[1:])
    elif fmt == "paired":
        trace = _parse_paired(path, header, lines[1:])
    else:
        raise TraceError(f"{path}: unknown trace format {fmt!r}")
    trace.validate()
    return trace


def _parse_line(path: Path, lineno: int, line: str) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise TraceError(f"{path}:{lineno}: malformed line: {exc}") from None
    if not isinstance(obj, dict):
        raise TraceError(f"{path}:{lineno}: expected a JSON object")
    return obj


@dataclass
class _OpenAlloc:
    t_s: int
    size: int
    phase: PhaseId
    module: str
    dynamic: bool


def _parse_raw(path: Path, lines: list[str]) -> Trace:
    open_allocs: dict[int, _OpenAlloc] = {}
    closed: list[MemoryRequestEvent] = []
    phase_spans: list[PhaseSpan] = []
    layer_lo: dict[str, int] = {}
    layer_hi: dict[str, int] = {}
    alloc_ids: set[int] = set()

    for t, line in enumerate(lines):
        lineno = t + 2
        rec = _parse_line(path, lineno, line)
        try:
            op = rec["op"]
            rid = int(rec["id"])
            phase = PhaseId.parse(rec["phase"])
        except (KeyError, TypeError, ValueError) as exc:
            raise TraceError(f"{path}:{lineno}: malformed record: {exc}") from None
        module = str(rec.get("module", ""))

        if not phase_spans or phase_spans[-1].phase != phase:
            if any(span.phase == phase for span in phase_spans):
                raise TraceError(f"{path}:{lineno}: phase {phase} re-opened")
            phase_spans.append(PhaseSpan(phase, t, t + 1))
        else:
            last = phase_spans[-1]
            phase_spans[-1] = PhaseSpan(last.phase, last.start, t + 1)

        if op == "alloc":
            if rid in alloc_ids:
                raise TraceError(f"{path}:{lineno}: duplicate alloc id {rid}")
            alloc_ids.add(rid)
            dynamic = bool(rec.get("dynamic", False))
            if dynamic and not module:
                raise TraceError(f"{path}:{lineno}: dynamic event missing layer")
            try:
                size = align_up(int(rec["size"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise TraceError(f"{path}:{lineno}: bad size: {exc}") from None
            open_allocs[rid] = _OpenAlloc(t, size, phase, module, dynamic)
            if dynamic:
                layer_lo.setdefault(module, t)
                layer_hi[module] = t + 1
        elif op == "free":
            if rid not in open_allocs:
                raise TraceError(
                    f"{path}:{lineno}: free without matching alloc (id {rid})"
                )
            start = open_allocs.pop(rid)
            l_s = l_e = None
            if start.dynamic:
                if not module:
                    raise TraceError(f"{path}:{lineno}: dynamic event missing layer")
                l_s, l_e = start.module, module
                layer_lo.setdefault(module, t)
                layer_hi[module] = t + 1
            closed.append(
                MemoryRequestEvent(
                    id=rid,
                    size=start.size,
                    t_s=start.t_s,
                    t_e=t,
                    p_s=start.phase,
                    p_e=phase,
                    dynamic=start.dynamic,
                    l_s=l_s,
                    l_e=l_e,
                )
            )
        else:
            raise TraceError(f"{path}:{lineno}: unknown op {op!r}")

    horizon = len(lines)
    if not phase_spans:
        raise TraceError(f"{path}: trace has no records")
    last_phase = phase_spans[-1].phase
    for rid, start in open_allocs.items():
        if start.dynamic:
            raise TraceError(f"{path}: dynamic event {rid} never freed")
        closed.append(
            MemoryRequestEvent(
                id=rid,
                size=start.size,
                t_s=start.t_s,
                t_e=horizon,
                p_s=start.phase,
                p_e=last_phase,
            )
        )
    closed.sort(key=lambda e: (e.t_s, e.id))
    layers = tuple(
        LayerSpan(name, layer_lo[name], layer_hi[name]) for name in sorted(layer_lo)
    )
    return Trace(tuple(closed), tuple(phase_spans), layers)


def _parse_paired(path: Path, header: dict, lines: list[str]) -> Trace:
    try:
        phases = tuple(
            PhaseSpan(PhaseId.parse(tag), int(s), int(e))
            for tag, s, e in header["phases"]
        )
        layers = tuple(
            LayerSpan(str(n), int(s), int(e)) for n, s, e in header.get("layers", [])
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise TraceError(f"{path}: malformed paired header: {exc}") from None
    events = []
    for i, line in enumerate(lines):
        rec = _parse_line(path, i + 2, line)
        try:
            events.append(
                MemoryRequestEvent(
                    id=int(rec["id"]),
                    size=align_up(int(rec["size"])),
                    t_s=int(rec["t_s"]),
                    t_e=int(rec["t_e"]),
                    p_s=PhaseId.parse(rec["p_s"]),
                    p_e=PhaseId.parse(rec["p_e"]),
                    dynamic=bool(rec["dynamic"]),
                    l_s=rec.get("l_s"),
                    l_e=rec.get("l_e"),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise TraceError(f"{path}:{i + 2}: malformed record: {exc}") from None
    return Trace(tuple(events), phases, layers)


# ---------------------------------------------------------------------------
# trace writing


def write_trace(trace: Trace, path: Union[str, Path], form: str = "raw") -> None:
    """Serialize a trace. The raw layout requires the trace to be
    record-dense (every timestamp in [0, horizon) holds exactly one op)."""
    path = Path(path)
    if form == "raw":
        lines = _emit_raw(trace)
    elif form == "paired":
        lines = _emit_paired(trace)
    else:
        raise ValueError(f"unknown trace format {form!r}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _emit_raw(trace: Trace) -> list[str]:
    slots: list[Optional[dict]] = [None] * trace.horizon
    for ev in trace.events:
        for t, rec in _event_records(ev, trace.horizon):
            if slots[t] is not None:
                raise TraceError(f"two ops share timestamp {t}; raw layout impossible")
            slots[t] = rec
    if any(s is None for s in slots):
        raise TraceError("trace is not record-dense; use the paired layout")
    header = {"kind": "trace", "version": SCHEMA_VERSION, "format": "raw"}
    return [_dump(header)] + [_dump(s) for s in slots]


def _event_records(ev: MemoryRequestEvent, horizon: int):
    yield ev.t_s, {
        "op": "alloc",
        "id": ev.id,
        "size": ev.size,
        "phase": ev.p_s.tag(),
        "module": ev.l_s or "",
        "dynamic": ev.dynamic,
    }
    if ev.t_e < horizon:
        yield ev.t_e, {
            "op": "free",
            "id": ev.id,
            "phase": ev.p_e.tag(),
            "module": ev.l_e or "",
        }


def _emit_paired(trace: Trace) -> list[str]:
    header = {
        "kind": "trace",
        "version": SCHEMA_VERSION,
        "format": "paired",
        "phases": [[s.phase.tag(), s.start, s.end] for s in trace.phase_schedule],
        "layers": [[s.name, s.start, s.end] for s in trace.layer_schedule],
    }
    lines = [_dump(header)]
    for ev in trace.events:
        lines.append(
            _dump(
                {
                    "id": ev.id,
                    "size": ev.size,
                    "t_s": ev.t_s,
                    "t_e": ev.t_e,
                    "p_s": ev.p_s.tag(),
                    "p_e": ev.p_e.tag(),
                    "dynamic": ev.dynamic,
                    "l_s": ev.l_s,
                    "l_e": ev.l_e,
                }
            )
        )
    return lines


# ---------------------------------------------------------------------------
# plan files


@dataclass(frozen=True, slots=True)
class PlanDecision:
    """File-shape allocation decision: event identity plus pool address."""

    id: int
    addr: int
    size: int
    t_s: int
    t_e: int

    @property
    def interval(self) -> Interval:
        return Interval(self.addr, self.addr + self.size)


@dataclass(frozen=True)
class PlanBundle:
    """Everything a simulator needs from a plan file."""

    pool_size: int
    alignment: int
    decisions: tuple[PlanDecision, ...]
    reuse: Mapping[tuple[str, str], IntervalSet]

    def validate(self) -> None:
        for d in self.decisions:
            if d.addr < 0 or d.addr + d.size > self.pool_size:
                raise PlanError(f"decision {d.id} out of pool")
            if d.addr % self.alignment:
                raise PlanError(f"decision {d.id} misaligned address {d.addr}")
        for key, space in self.reuse.items():
            for iv in space:
                if iv.lo < 0 or iv.hi > self.pool_size:
                    raise PlanError(f"reuse entry {key} outside pool")


def write_plan(bundle: PlanBundle, path: Union[str, Path]) -> None:
    doc = {
        "version": SCHEMA_VERSION,
        "pool_size": bundle.pool_size,
        "alignment": bundle.alignment,
        "decisions": [
            {"id": d.id, "addr": d.addr, "size": d.size, "t_s": d.t_s, "t_e": d.t_e}
            for d in bundle.decisions
        ],
        "reuse_map": [
            {
                "l_s": l_s,
                "l_e": l_e,
                "intervals": [[iv.lo, iv.hi] for iv in bundle.reuse[(l_s, l_e)]],
            }
            for (l_s, l_e) in sorted(bundle.reuse)
        ],
    }
    Path(path).write_text(
        json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def read_plan(path: Union[str, Path]) -> PlanBundle:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise PlanError(f"{path}: malformed plan file: {exc}") from None
    if doc.get("version") != SCHEMA_VERSION:
        raise PlanError(f"{path}: unsupported schema version {doc.get('version')}")
    try:
        decisions = tuple(
            PlanDecision(
                id=int(d["id"]),
                addr=int(d["addr"]),
                size=int(d["size"]),
                t_s=int(d["t_s"]),
                t_e=int(d["t_e"]),
            )
            for d in doc["decisions"]
        )
        reuse = {
            (str(e["l_s"]), str(e["l_e"])): IntervalSet(
                Interval(int(lo), int(hi)) for lo, hi in e["intervals"]
            )
            for e in doc.get("reuse_map", [])
        }
        bundle = PlanBundle(
            pool_size=int(doc["pool_size"]),
            alignment=int(doc.get("alignment", DEFAULT_ALIGNMENT)),
            decisions=decisions,
            reuse=reuse,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise PlanError(f"{path}: malformed plan file: {exc}") from None
    bundle.validate()
    return bundle
