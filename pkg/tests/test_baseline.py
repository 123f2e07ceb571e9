"""Online caching-allocator model."""

import pytest

from memplan.baseline import CachingAllocator, run_baseline
from memplan.model import SimulationError, clique_lower_bound
from memplan.synth import MIB, SynthConfig, synth_trace

from conftest import make_trace

A = 4 * MIB // 512  # 8192 alignment units
B = 2 * MIB // 512


def test_disjoint_equal_pow2_events_one_segment():
    # perfect reuse: one segment, efficiency 1.0
    events = [(i, A, 2 * i, 2 * i + 1, "F:0", "F:0") for i in range(5)]
    trace = make_trace([("F:0", 0, 10)], events)
    report = run_baseline(trace)
    assert report.reserved_peak == 4 * MIB
    assert report.allocated_peak == 4 * MIB
    assert report.efficiency == 1.0


def test_interleaved_pattern_fragments():
    """Hand-replayed state machine, sizes A,B,A,B with staggered frees.

    t0 alloc e1(4Mi) -> new 4Mi segment, e1@0
    t1 alloc e2(2Mi) -> no free block, new 2Mi segment
    t2 free  e1      -> segment 0 free [0,4Mi)
    t3 alloc e3(2Mi) -> best fit splits [0,4Mi): e3@0, hole [2Mi,4Mi)
    t4 alloc e4(4Mi) -> hole too small, new 4Mi segment
    peak live 8Mi, reserved 10Mi -> E = 0.8
    """
    events = [
        (1, A, 0, 2, "F:0", "F:0"),
        (2, B, 1, 5, "F:0", "F:0"),
        (3, B, 3, 6, "F:0", "F:0"),
        (4, A, 4, 7, "F:0", "F:0"),
    ]
    trace = make_trace([("F:0", 0, 8)], events)
    report = run_baseline(trace)
    assert report.allocated_peak == 8 * MIB
    assert report.reserved_peak == 10 * MIB
    assert report.efficiency == pytest.approx(0.8)
    assert report.fragmentation == pytest.approx(0.2)


def test_baseline_deterministic():
    trace = synth_trace(SynthConfig.for_preset("dense_vpp", seed=8))
    assert run_baseline(trace) == run_baseline(trace)


def test_reserved_never_shrinks_and_dominates_clique():
    for preset in ("dense", "dense_recompute", "moe"):
        trace = synth_trace(SynthConfig.for_preset(preset, seed=3))
        cache = CachingAllocator()
        ops = []
        for ev in trace.events:
            ops.append((ev.t_s, 1, ev))
            ops.append((ev.t_e, 0, ev))
        ops.sort(key=lambda o: (o[0], o[1], o[2].id))
        prev = 0
        for _, is_alloc, ev in ops:
            if is_alloc:
                cache.malloc(ev.id, ev.size)
            else:
                cache.free(ev.id)
            assert cache.reserved >= prev
            prev = cache.reserved
        assert cache.reserved >= clique_lower_bound(trace)


def test_split_and_merge_round_trip():
    cache = CachingAllocator(min_segment=1024)
    a, _ = cache.malloc(1, 512)
    b, _ = cache.malloc(2, 512)
    assert (a, b) == (0, 512)  # split of the first segment
    cache.free(1)
    cache.free(2)
    seg = cache.segments[0]
    assert seg.free == [(0, 1024)]  # adjacent blocks merged back


def test_best_fit_prefers_tightest_block():
    cache = CachingAllocator(min_segment=512)
    for rid, size in ((1, 4096), (2, 1024)):
        cache.malloc(rid, size)
    cache.free(1)
    cache.free(2)
    # blocks now: [0,4096) and [4096,5120); the 1024 request must take the hole
    addr, grown = cache.malloc(3, 1024)
    assert addr == 4096
    assert grown == 0


def test_cache_free_unknown_id():
    cache = CachingAllocator()
    with pytest.raises(SimulationError, match="unknown id"):
        cache.free(7)


def test_cache_double_alloc_same_id():
    cache = CachingAllocator()
    cache.malloc(1, 512)
    with pytest.raises(SimulationError, match="already live"):
        cache.malloc(1, 512)
