"""Structural properties of the synthetic traces."""

import pytest

from memplan.model import PhaseKind, clique_lower_bound
from memplan.synth import MIB, PRESETS, SynthConfig, SynthConfigError, synth_trace


def scoped_events(trace):
    """Activations held from a forward phase into a backward phase."""
    return [
        e
        for e in trace.events
        if not e.dynamic
        and e.t_e < trace.horizon
        and e.p_s.kind == PhaseKind.FORWARD
        and e.p_e.kind == PhaseKind.BACKWARD
    ]


def test_same_seed_same_trace():
    for preset in PRESETS:
        a = synth_trace(SynthConfig.for_preset(preset, seed=42))
        b = synth_trace(SynthConfig.for_preset(preset, seed=42))
        assert a.events == b.events
        assert a.phase_schedule == b.phase_schedule
    c = synth_trace(SynthConfig.for_preset("dense", seed=43))
    assert c.events != a.events


def test_traces_validate():
    for preset in PRESETS:
        synth_trace(SynthConfig.for_preset(preset, seed=5)).validate()


def test_spatial_regularity_independent_of_microbatches():
    sizes = {}
    for m in (1, 2, 5):
        cfg = SynthConfig.for_preset("dense", seed=0, num_microbatches=m)
        tr = synth_trace(cfg)
        sizes[m] = {e.size for e in scoped_events(tr)}
        assert len(sizes[m]) == cfg.distinct_sizes
    assert sizes[1] == sizes[2] == sizes[5]


def test_lifo_scoped_frees():
    tr = synth_trace(SynthConfig.for_preset("dense", seed=1))
    for m in range(4):
        mb = [
            e
            for e in scoped_events(tr)
            if e.p_s.kind == PhaseKind.FORWARD and e.p_s.microbatch == m
        ]
        by_alloc = sorted(mb, key=lambda e: e.t_s)
        by_free = sorted(mb, key=lambda e: e.t_e)
        assert by_free == by_alloc[::-1]


def test_recompute_has_no_cross_phase_activations():
    tr = synth_trace(SynthConfig.for_preset("dense_recompute", seed=2))
    assert scoped_events(tr) == []
    for e in tr.events:
        if not e.dynamic and e.t_e < tr.horizon and e.p_s.kind == PhaseKind.FORWARD:
            assert e.p_s == e.p_e  # every activation lives inside one phase


def test_vpp_schedule_interleaves_chunks():
    cfg = SynthConfig.for_preset("dense_vpp", seed=0, num_microbatches=2)
    tr = synth_trace(cfg)
    tags = [s.phase.tag() for s in tr.phase_schedule]
    assert tags[:5] == ["init", "F:0", "F:1", "F:0.1", "F:1.1"]
    assert tags[-1] == "opt"
    forwards = [t for t in tags if t.startswith("F")]
    backs = [t for t in tags if t.startswith("B")]
    assert len(forwards) == len(backs) == cfg.num_microbatches * cfg.num_chunks


def test_moe_layer_keys():
    # recompute: expert tensors alloc and free inside the same layer instance
    tr = synth_trace(SynthConfig.for_preset("moe_recompute", seed=3))
    dyn = tr.dynamic_events()
    assert dyn and all(e.l_s == e.l_e for e in dyn)
    # without recompute the free happens in the backward-pass instance
    tr = synth_trace(SynthConfig.for_preset("moe", seed=3))
    dyn = tr.dynamic_events()
    assert dyn and all(e.l_s != e.l_e for e in dyn)
    for e in dyn:
        assert ".moe.F" in e.l_s and ".moe.B" in e.l_e


def test_moe_sizes_within_range_and_aligned():
    cfg = SynthConfig.for_preset("moe", seed=4, moe_size_range=(1 * MIB, 3 * MIB))
    tr = synth_trace(cfg)
    for e in tr.dynamic_events():
        assert 1 * MIB <= e.size <= 3 * MIB + 512
        assert e.size % 512 == 0


def test_recompute_reduces_theoretical_peak():
    for preset_pair in (("dense", "dense_recompute"), ("dense_vpp", "dense_vpp_recompute")):
        dense = synth_trace(SynthConfig.for_preset(preset_pair[0], seed=6))
        rcp = synth_trace(SynthConfig.for_preset(preset_pair[1], seed=6))
        assert clique_lower_bound(dense) >= clique_lower_bound(rcp)


def test_config_validation():
    with pytest.raises(SynthConfigError):
        SynthConfig.for_preset("nope")
    with pytest.raises(SynthConfigError):
        SynthConfig.for_preset("dense", num_chunks=3)
    with pytest.raises(SynthConfigError):
        SynthConfig.for_preset("dense_vpp", num_chunks=1)
    with pytest.raises(SynthConfigError):
        SynthConfig.for_preset("moe", moe_size_range=(0, 0))
    with pytest.raises(SynthConfigError):
        SynthConfig.for_preset("dense", size_palette=(1000,), distinct_sizes=1)


def test_persistent_block_total():
    cfg = SynthConfig.for_preset("dense", seed=7)
    tr = synth_trace(cfg)
    persist = [e for e in tr.events if e.t_e == tr.horizon]
    assert sum(e.size for e in persist) >= cfg.persistent_bytes
    assert all(e.p_s.kind == PhaseKind.INIT for e in persist)
