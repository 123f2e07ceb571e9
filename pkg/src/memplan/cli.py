"""Command-line surface: gen, plan, simulate, baseline, compare, render.

Exit codes: 0 success, 1 validation failure, 2 I/O failure, 3 internal
invariant violation. Errors are emitted as one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .baseline import run_baseline
from .model import MemplanError, PlanError, SimulationError, TraceError
from .planner import PlanStats, synthesize_static_plan
from .render import render_compare_figure, render_svg
from .reuse import derive_reuse_map
from .sim import simulate
from .synth import MIB, PRESETS, SynthConfig, SynthConfigError, synth_trace
from .traceio import read_plan, parse_trace, write_plan, write_trace

log = logging.getLogger("memplan")


class CliError(MemplanError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); bad usage is code 1
        raise CliError(message)


def build_parser() -> _Parser:
    p = _Parser(prog="memplan", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic trace")
    g.add_argument("--preset", required=True, choices=PRESETS)
    g.add_argument("--layers", type=int, default=12)
    g.add_argument("--microbatches", type=int, default=4)
    g.add_argument("--chunks", type=int, default=None)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--persistent-mib", type=int, default=512)
    g.add_argument("--transient-ratio", type=float, default=0.3)
    g.add_argument("--palette", type=str, default=None,
                   help="comma-separated activation sizes in MiB")
    g.add_argument("--moe-min-mib", type=int, default=1)
    g.add_argument("--moe-max-mib", type=int, default=12)
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=_cmd_gen)

    pl = sub.add_parser("plan", help="synthesize a static plan for a trace")
    pl.add_argument("trace")
    pl.add_argument("-o", "--output", required=True)
    pl.add_argument("--no-fusion", action="store_true")
    pl.add_argument("--no-gap-insert", action="store_true")
    pl.set_defaults(func=_cmd_plan)

    si = sub.add_parser("simulate", help="replay a trace against a plan")
    si.add_argument("trace")
    si.add_argument("--plan", required=True)
    si.add_argument("--no-reuse", action="store_true")
    si.add_argument("-o", "--output", default=None)
    si.add_argument("--log", default=None, help="write the full event log (JSONL)")
    si.set_defaults(func=_cmd_simulate)

    ba = sub.add_parser("baseline", help="replay a trace through the caching allocator")
    ba.add_argument("trace")
    ba.add_argument("-o", "--output", default=None)
    ba.set_defaults(func=_cmd_baseline)

    co = sub.add_parser("compare", help="planner vs baseline on one trace")
    co.add_argument("trace")
    co.add_argument("--plan", required=True)
    co.add_argument("-o", "--output", default=None)
    co.add_argument("--figure", default=None, help="figure path (.png)")
    co.add_argument("--no-figure", action="store_true")
    co.set_defaults(func=_cmd_compare)

    re = sub.add_parser("render", help="render a plan as an SVG timeline")
    re.add_argument("plan")
    re.add_argument("--trace", default=None)
    re.add_argument("-o", "--output", required=True)
    re.set_defaults(func=_cmd_render)
    return p


def _cmd_gen(args) -> int:
    overrides = {
        "num_layers": args.layers,
        "num_microbatches": args.microbatches,
        "persistent_bytes": args.persistent_mib * MIB,
        "transient_ratio": args.transient_ratio,
        "moe_size_range": (args.moe_min_mib * MIB, args.moe_max_mib * MIB),
        "seed": args.seed,
    }
    if args.chunks is not None:
        overrides["num_chunks"] = args.chunks
    if args.palette:
        palette = tuple(int(float(s) * MIB) for s in args.palette.split(","))
        overrides["size_palette"] = palette
        overrides["distinct_sizes"] = len(palette)
    cfg = SynthConfig.for_preset(args.preset, **overrides)
    trace = synth_trace(cfg)
    write_trace(trace, args.output)
    print(
        f"wrote {args.output}: {len(trace.events)} events, "
        f"{len(trace.phase_schedule)} phases, horizon {trace.horizon}"
    )
    return 0


def _cmd_plan(args) -> int:
    trace = parse_trace(args.trace)
    stats = PlanStats()
    plan = synthesize_static_plan(
        trace,
        fusion=not args.no_fusion,
        gap_insert=not args.no_gap_insert,
        stats=stats,
    )
    rmap = derive_reuse_map(plan, trace)
    write_plan(plan.to_bundle(rmap), args.output)
    sidecar = _sidecar_path(args.output)
    sidecar.write_text(
        json.dumps(stats.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    eff = stats.static_peak / plan.pool_size if plan.pool_size else 1.0
    print(
        f"wrote {args.output}: pool {plan.pool_size} bytes, "
        f"{len(plan.decisions)} decisions, {stats.num_layers} layers, "
        f"static peak/pool {eff:.3f}"
    )
    return 0


def _sidecar_path(out: str) -> Path:
    path = Path(out)
    return path.with_suffix(".stats.json") if path.suffix else Path(out + ".stats.json")


def _cmd_simulate(args) -> int:
    trace = parse_trace(args.trace)
    plan = read_plan(args.plan)
    report, _ = simulate(trace, plan, reuse=not args.no_reuse, log_path=args.log)
    _emit_report(report.to_dict(), args.output, label="simulate")
    return 0


def _cmd_baseline(args) -> int:
    trace = parse_trace(args.trace)
    report = run_baseline(trace)
    _emit_report(report.to_dict(), args.output, label="baseline")
    return 0


def _cmd_compare(args) -> int:
    trace = parse_trace(args.trace)
    plan = read_plan(args.plan)
    planner_report, _ = simulate(trace, plan)
    baseline_report = run_baseline(trace)
    frag_p = planner_report.fragmentation
    frag_b = baseline_report.fragmentation
    if frag_b > 0:
        reduction = 1.0 - frag_p / frag_b
    else:
        reduction = 0.0 if frag_p == 0 else float("-inf")
    doc = {
        "planner": planner_report.to_dict(),
        "baseline": baseline_report.to_dict(),
        "fragmentation_reduction": reduction,
        "memory_saved_bytes": baseline_report.reserved_peak
        - planner_report.reserved_peak,
    }
    _emit_report(doc, args.output, label=None)
    for name, rep in (("planner", planner_report), ("baseline", baseline_report)):
        print(_report_line(name, rep.to_dict()))
    print(
        f"fragmentation reduction {reduction:.1%}  "
        f"memory saved {doc['memory_saved_bytes'] / MIB:.1f} MiB"
    )
    figure = args.figure
    if figure is None and args.output and not args.no_figure:
        figure = str(Path(args.output).with_suffix(".png"))
    if figure and not args.no_figure:
        render_compare_figure(doc, figure)
        print(f"wrote {figure}")
    return 0


def _cmd_render(args) -> int:
    plan = read_plan(args.plan)
    trace = parse_trace(args.trace) if args.trace else None
    fallback_peak = 0
    if trace is not None:
        report, _ = simulate(trace, plan)
        fallback_peak = report.fallback_bytes_peak
    render_svg(plan, args.output, trace=trace, fallback_peak=fallback_peak)
    print(f"wrote {args.output}: {len(plan.decisions)} decisions")
    return 0


def _report_line(label: str, rep: dict) -> str:
    return (
        f"{label:9s} efficiency {rep['efficiency']:.3f}  "
        f"allocated {rep['allocated_peak'] / MIB:8.1f} MiB  "
        f"reserved {rep['reserved_peak'] / MIB:8.1f} MiB  "
        f"fallbacks {rep['fallback_count']}  mismatches {rep['mismatch_count']}"
    )


def _emit_report(doc: dict, output, label) -> None:
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if output:
        Path(output).write_text(text, encoding="utf-8")
        print(f"wrote {output}")
    else:
        sys.stdout.write(text)
    if label:
        print(_report_line(label, doc))


def main(argv=None) -> int:
    level = os.environ.get("MEMPLAN_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (CliError, TraceError, PlanError, SynthConfigError) as exc:
        return _fail(1, exc)
    except OSError as exc:
        return _fail(2, exc)
    except SimulationError as exc:
        return _fail(3, exc)
    except MemplanError as exc:
        return _fail(3, exc)


def _fail(code: int, exc: Exception) -> int:
    doc = {"error": {"type": type(exc).__name__, "message": str(exc)}}
    sys.stderr.write(json.dumps(doc, sort_keys=True) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
