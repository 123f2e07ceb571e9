"""Synthetic training traces with realistic spatio-temporal structure.

The generator emits the allocation patterns that make planning worthwhile:
persistent tensors spanning the whole horizon, scoped activations held
from a forward phase to its matching backward phase and freed in reverse
order, short-lived transients (unary-op intermediates, per-microbatch
weight-gradient temporaries), recomputation variants where activations
live only inside a single phase, interleaved virtual-pipeline schedules,
and expert layers issuing dynamic requests whose sizes are drawn at
generation time.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional

from .model import (
    DEFAULT_ALIGNMENT,
    LayerSpan,
    MemoryRequestEvent,
    MemplanError,
    PhaseId,
    PhaseKind,
    PhaseSpan,
    Trace,
    align_up,
)

MIB = 1024 * 1024

DEFAULT_PALETTE = tuple(n * MIB for n in (2, 3, 4, 6, 8, 12, 16, 24))

PRESETS = (
    "dense",
    "dense_recompute",
    "dense_vpp",
    "dense_vpp_recompute",
    "moe",
    "moe_recompute",
)

# Every second layer hosts an expert block in the MoE presets.
MOE_LAYER_STRIDE = 2
MOE_TENSORS_PER_LAYER = 2


class SynthConfigError(MemplanError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    preset: str
    num_layers: int = 12
    num_microbatches: int = 4
    num_chunks: int = 1
    size_palette: tuple[int, ...] = DEFAULT_PALETTE
    distinct_sizes: int = len(DEFAULT_PALETTE)
    persistent_bytes: int = 1024 * MIB
    transient_ratio: float = 0.3
    moe_size_range: tuple[int, int] = (1 * MIB, 12 * MIB)
    seed: int = 0
    alignment: int = DEFAULT_ALIGNMENT

    @property
    def recompute(self) -> bool:
        return self.preset.endswith("_recompute")

    @property
    def vpp(self) -> bool:
        return "vpp" in self.preset

    @property
    def moe(self) -> bool:
        return self.preset.startswith("moe")

    @classmethod
    def for_preset(cls, preset: str, **overrides) -> "SynthConfig":
        if preset not in PRESETS:
            raise SynthConfigError(f"unknown preset {preset!r}")
        if "vpp" in preset:
            overrides.setdefault("num_chunks", 2)
        cfg = cls(preset=preset, **overrides)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.preset not in PRESETS:
            raise SynthConfigError(f"unknown preset {self.preset!r}")
        if self.distinct_sizes != len(self.size_palette):
            raise SynthConfigError("distinct_sizes must equal len(size_palette)")
        if any(s <= 0 or s % self.alignment for s in self.size_palette):
            raise SynthConfigError("palette sizes must be positive and aligned")
        if self.num_chunks < 1:
            raise SynthConfigError("num_chunks must be >= 1")
        if self.vpp and self.num_chunks < 2:
            raise SynthConfigError("vpp presets need num_chunks >= 2")
        if not self.vpp and self.num_chunks != 1:
            raise SynthConfigError("non-vpp presets use num_chunks = 1")
        if self.num_layers < self.num_chunks:
            raise SynthConfigError("need at least one layer per chunk")
        if self.num_microbatches < 1:
            raise SynthConfigError("num_microbatches must be >= 1")
        if self.persistent_bytes < (self.num_layers + 2) * self.alignment:
            raise SynthConfigError("persistent_bytes too small to split")
        if self.transient_ratio < 0:
            raise SynthConfigError("transient_ratio must be >= 0")
        if self.moe:
            lo, hi = self.moe_size_range
            if not (0 < lo <= hi):
                raise SynthConfigError("moe_size_range must satisfy 0 < min <= max")


class _Recorder:
    """Accumulates a record-dense op stream and pairs it into events."""

    def __init__(self) -> None:
        self._t = 0
        self._next_id = 0
        self._phase: Optional[PhaseId] = None
        self._phase_start = 0
        self._spans: list[PhaseSpan] = []
        self._open: dict[int, dict] = {}
        self._events: list[MemoryRequestEvent] = []
        self._layer_lo: dict[str, int] = {}
        self._layer_hi: dict[str, int] = {}

    def begin(self, phase: PhaseId) -> None:
        self._close_span()
        self._phase = phase
        self._phase_start = self._t

    def _close_span(self) -> None:
        if self._phase is not None:
            if self._t == self._phase_start:
                raise SynthConfigError(f"phase {self._phase} emitted no records")
            self._spans.append(PhaseSpan(self._phase, self._phase_start, self._t))

    def alloc(self, size: int, module: str = "", dynamic: bool = False) -> int:
        rid = self._next_id
        self._next_id += 1
        self._open[rid] = {
            "t_s": self._t,
            "size": size,
            "p_s": self._phase,
            "module": module,
            "dynamic": dynamic,
        }
        if dynamic:
            self._touch_layer(module)
        self._t += 1
        return rid

    def free(self, rid: int, module: str = "") -> None:
        start = self._open.pop(rid)
        l_s = l_e = None
        if start["dynamic"]:
            l_s, l_e = start["module"], module or start["module"]
            self._touch_layer(l_e)
        self._events.append(
            MemoryRequestEvent(
                id=rid,
                size=start["size"],
                t_s=start["t_s"],
                t_e=self._t,
                p_s=start["p_s"],
                p_e=self._phase,
                dynamic=start["dynamic"],
                l_s=l_s,
                l_e=l_e,
            )
        )
        self._t += 1

    def _touch_layer(self, name: str) -> None:
        self._layer_lo.setdefault(name, self._t)
        self._layer_hi[name] = self._t + 1

    def build(self) -> Trace:
        self._close_span()
        horizon = self._t
        last_phase = self._spans[-1].phase
        for rid, start in sorted(self._open.items()):
            self._events.append(
                MemoryRequestEvent(
                    id=rid,
                    size=start["size"],
                    t_s=start["t_s"],
                    t_e=horizon,
                    p_s=start["p_s"],
                    p_e=last_phase,
                )
            )
        self._events.sort(key=lambda e: (e.t_s, e.id))
        layers = tuple(
            LayerSpan(n, self._layer_lo[n], self._layer_hi[n])
            for n in sorted(self._layer_lo)
        )
        trace = Trace(tuple(self._events), tuple(self._spans), layers)
        trace.validate()
        return trace


def _schedule(cfg: SynthConfig) -> list[tuple[str, int, int]]:
    """Phase order as (kind, microbatch, chunk) triples."""
    M, C = cfg.num_microbatches, cfg.num_chunks
    if not cfg.vpp:
        out: list[tuple[str, int, int]] = []
        for m in range(M):
            out.append(("F", m, 0))
            out.append(("B", m, 0))
        return out
    # Interleaved schedule: warm up the first two microbatches across all
    # chunks, then run one-backward-one-forward until forwards drain.
    warm_m = min(2, M)
    warmup = [("F", m, c) for c in range(C) for m in range(warm_m)]
    rest = [("F", m, c) for m in range(warm_m, M) for c in range(C)]
    backs = [("B", m, c) for m in range(M) for c in reversed(range(C))]
    out = list(warmup)
    for i, fwd in enumerate(rest):
        out.append(backs[i])
        out.append(fwd)
    out.extend(backs[len(rest):])
    return out


def _chunk_layers(cfg: SynthConfig, chunk: int) -> range:
    L, C = cfg.num_layers, cfg.num_chunks
    return range(chunk * L // C, (chunk + 1) * L // C)


def _persistent_blocks(cfg: SynthConfig) -> list[int]:
    n = cfg.num_layers + 2
    base = align_up(max(cfg.persistent_bytes // n, cfg.alignment), cfg.alignment)
    blocks = [base] * (n - 1)
    rest = cfg.persistent_bytes - base * (n - 1)
    blocks.append(align_up(max(rest, cfg.alignment), cfg.alignment))
    return blocks


def _layer_size(cfg: SynthConfig, layer: int) -> int:
    return cfg.size_palette[layer % len(cfg.size_palette)]


def _n_transients(rng: random.Random, ratio: float) -> int:
    n = int(ratio)
    if rng.random() < ratio - n:
        n += 1
    return n


def _is_moe_layer(cfg: SynthConfig, layer: int) -> bool:
    return cfg.moe and layer % MOE_LAYER_STRIDE == 1


def _moe_size(cfg: SynthConfig, rng: random.Random) -> int:
    lo, hi = cfg.moe_size_range
    return align_up(rng.randint(lo, hi), cfg.alignment)


def synth_trace(cfg: SynthConfig) -> Trace:
    """Generate a deterministic trace for the configured preset."""
    cfg.validate()
    rng = random.Random(cfg.seed)
    rec = _Recorder()

    rec.begin(PhaseId(PhaseKind.INIT))
    for size in _persistent_blocks(cfg):
        rec.alloc(size)

    # ids of scoped activations, per (microbatch, chunk), in alloc order
    scoped: dict[tuple[int, int], list[int]] = {}
    # ids of open dynamic expert tensors, per (layer, microbatch)
    moe_open: dict[tuple[int, int], list[int]] = {}
    # gradient shards: materialized in the final backward pass of each
    # chunk and consumed by the optimizer step
    shards: list[int] = []

    last_mb = cfg.num_microbatches - 1
    for kind, m, c in _schedule(cfg):
        if kind == "F":
            rec.begin(PhaseId(PhaseKind.FORWARD, m, c))
            _forward_phase(cfg, rng, rec, m, c, scoped, moe_open)
        else:
            rec.begin(PhaseId(PhaseKind.BACKWARD, m, c))
            _backward_phase(cfg, rng, rec, m, c, scoped, moe_open,
                            shards if m == last_mb else None)

    rec.begin(PhaseId(PhaseKind.OPTIMIZER))
    for rid in shards:
        rec.free(rid)
    for i in range(2):
        rid = rec.alloc(_layer_size(cfg, i))
        rec.free(rid)

    return rec.build()


def _emit_transients(cfg: SynthConfig, rng: random.Random, rec: _Recorder) -> None:
    for _ in range(_n_transients(rng, cfg.transient_ratio)):
        rid = rec.alloc(rng.choice(cfg.size_palette))
        rec.free(rid)


def _forward_phase(cfg, rng, rec, m, c, scoped, moe_open) -> None:
    prev_act: Optional[int] = None
    for l in _chunk_layers(cfg, c):
        act = rec.alloc(_layer_size(cfg, l))
        _emit_transients(cfg, rng, rec)
        if _is_moe_layer(cfg, l):
            inst = f"L{l:02d}.moe.F{m}"
            ids = [
                rec.alloc(_moe_size(cfg, rng), module=inst, dynamic=True)
                for _ in range(MOE_TENSORS_PER_LAYER)
            ]
            if cfg.recompute:
                for rid in ids:
                    rec.free(rid, module=inst)
            else:
                moe_open[(l, m)] = ids
        if cfg.recompute:
            if prev_act is not None:
                rec.free(prev_act)
            prev_act = act
        else:
            scoped.setdefault((m, c), []).append(act)
    if cfg.recompute and prev_act is not None:
        rec.free(prev_act)


def _backward_phase(cfg, rng, rec, m, c, scoped, moe_open, shards=None) -> None:
    prev_act: Optional[int] = None
    acts = None if cfg.recompute else scoped.pop((m, c))
    for l in reversed(_chunk_layers(cfg, c)):
        if cfg.recompute:
            act = rec.alloc(_layer_size(cfg, l))
        # weight-gradient temporary (weight-shaped, so smaller than the
        # activation), folded into the persistent accumulator right away
        dw = rec.alloc(align_up(_layer_size(cfg, l) // 2, cfg.alignment))
        rec.free(dw)
        _emit_transients(cfg, rng, rec)
        if _is_moe_layer(cfg, l):
            inst = f"L{l:02d}.moe.B{m}"
            if cfg.recompute:
                ids = [
                    rec.alloc(_moe_size(cfg, rng), module=inst, dynamic=True)
                    for _ in range(MOE_TENSORS_PER_LAYER)
                ]
                for rid in ids:
                    rec.free(rid, module=inst)
            else:
                for rid in moe_open.pop((l, m)):
                    rec.free(rid, module=inst)
        if cfg.recompute:
            if prev_act is not None:
                rec.free(prev_act)
            prev_act = act
        else:
            rec.free(acts.pop())
        if shards is not None:
            # reduced gradient shard for this layer, held for the optimizer
            shards.append(rec.alloc(_layer_size(cfg, l)))
    if cfg.recompute and prev_act is not None:
        rec.free(prev_act)
