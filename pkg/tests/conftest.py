from memplan.model import MemoryRequestEvent, PhaseId, PhaseSpan, Trace

U = 512  # alignment unit; spec-style small numbers get scaled by this


def make_trace(phases, events, layers=()):
    """Build a Trace from compact tuples.

    phases: [(tag, start, end), ...]
    events: [(id, size_units, t_s, t_e, tag_s, tag_e[, l_s, l_e]), ...]
            sizes are multiples of the 512-byte alignment unit
    """
    spans = tuple(PhaseSpan(PhaseId.parse(t), s, e) for t, s, e in phases)
    evs = []
    for spec in events:
        eid, su, t_s, t_e, tag_s, tag_e, *rest = spec
        l_s, l_e = (rest + [None, None])[:2]
        evs.append(
            MemoryRequestEvent(
                id=eid,
                size=su * U,
                t_s=t_s,
                t_e=t_e,
                p_s=PhaseId.parse(tag_s),
                p_e=PhaseId.parse(tag_e),
                dynamic=l_s is not None,
                l_s=l_s,
                l_e=l_e,
            )
        )
    return Trace(tuple(evs), spans, tuple(layers))
