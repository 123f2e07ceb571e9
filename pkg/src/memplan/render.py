"""Timeline rendering: address-vs-time SVG for plans, and the matplotlib
comparison figure written alongside compare reports.

The SVG uses one <rect> element per allocation decision and nothing else;
reusable-space shading, the fallback band, axes and labels are drawn with
<path>, <line> and <text> so the rectangle count stays meaningful.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Union

from .model import Trace
from .traceio import PlanBundle

_WIDTH, _HEIGHT = 1000, 620
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 70, 20, 24, 36

_HEADER = (
    '<?xml version="1.0" encoding="UTF-8" standalone="no"?>\n'
    '<!DOCTYPE svg PUBLIC "-//W3C//DTD SVG 1.1//EN" '
    '"http://www.w3.org/Graphics/SVG/1.1/DTD/svg11.dtd">\n'
)


def _color(size: int, alignment: int) -> str:
    hue = (size // max(alignment, 1)) * 47 % 360
    return f"hsl({hue},62%,70%)"


def render_svg(
    plan: PlanBundle,
    path: Union[str, Path],
    *,
    trace: Optional[Trace] = None,
    fallback_peak: int = 0,
) -> None:
    """Write the plan as an SVG 1.1 timeline.

    With a trace, reusable-space entries are shaded over their temporal
    range and a hatched band above the pool shows the fallback peak.
    """
    horizon = max([d.t_e for d in plan.decisions] + [1])
    if trace is not None:
        horizon = max(horizon, trace.horizon)
    addr_top = max(plan.pool_size + fallback_peak, 1)

    plot_w = _WIDTH - _MARGIN_L - _MARGIN_R
    plot_h = _HEIGHT - _MARGIN_T - _MARGIN_B

    def x(t: float) -> float:
        return _MARGIN_L + t / horizon * plot_w

    def y(addr: float) -> float:
        # address 0 sits at the bottom of the canvas
        return _MARGIN_T + (1 - addr / addr_top) * plot_h

    parts: list[str] = []
    parts.append(_HEADER)
    parts.append(
        f'<svg version="1.1" xmlns="http://www.w3.org/2000/svg" '
        f'width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}">\n'
    )
    parts.append(
        f'<path d="M {_MARGIN_L} {_MARGIN_T} L {_MARGIN_L} {_MARGIN_T + plot_h} '
        f'L {_MARGIN_L + plot_w} {_MARGIN_T + plot_h}" '
        'fill="none" stroke="#333" stroke-width="1"/>\n'
    )
    parts.append(
        f'<text x="{_MARGIN_L + plot_w / 2:.1f}" y="{_HEIGHT - 8}" '
        'font-size="12" text-anchor="middle">time (record index)</text>\n'
    )
    parts.append(
        f'<text x="16" y="{_MARGIN_T + plot_h / 2:.1f}" font-size="12" '
        f'text-anchor="middle" transform="rotate(-90 16 {_MARGIN_T + plot_h / 2:.1f})">'
        "address (bytes)</text>\n"
    )

    # reusable-space shading needs the layer schedule for temporal extents
    if trace is not None and plan.reuse:
        layer_spans = {s.name: s for s in trace.layer_schedule}
        for (l_s, l_e) in sorted(plan.reuse):
            space = plan.reuse[(l_s, l_e)]
            if l_s not in layer_spans or l_e not in layer_spans:
                continue
            t_lo = layer_spans[l_s].start
            t_hi = layer_spans[l_e].end
            for iv in space:
                parts.append(
                    f'<path d="M {x(t_lo):.1f} {y(iv.hi):.1f} '
                    f'H {x(t_hi):.1f} V {y(iv.lo):.1f} H {x(t_lo):.1f} Z" '
                    'fill="#7fbf7f" fill-opacity="0.18" stroke="none"/>\n'
                )

    if plan.pool_size:
        parts.append(
            f'<line x1="{_MARGIN_L}" y1="{y(plan.pool_size):.1f}" '
            f'x2="{_MARGIN_L + plot_w}" y2="{y(plan.pool_size):.1f}" '
            'stroke="#888" stroke-width="1" stroke-dasharray="6,3"/>\n'
        )
        parts.append(
            f'<text x="{_MARGIN_L + 4}" y="{y(plan.pool_size) - 4:.1f}" '
            f'font-size="11" fill="#555">pool {plan.pool_size}</text>\n'
        )

    if fallback_peak > 0:
        top = plan.pool_size + fallback_peak
        parts.append(
            f'<path d="M {x(0):.1f} {y(top):.1f} H {x(horizon):.1f} '
            f'V {y(plan.pool_size):.1f} H {x(0):.1f} Z" '
            'fill="#d97373" fill-opacity="0.25" stroke="#a33" stroke-width="0.5"/>\n'
        )
        parts.append(
            f'<text x="{_MARGIN_L + 4}" y="{y(top) + 12:.1f}" font-size="11" '
            f'fill="#a33">fallback peak {fallback_peak}</text>\n'
        )

    for d in plan.decisions:
        parts.append(
            f'<rect x="{x(d.t_s):.2f}" y="{y(d.addr + d.size):.2f}" '
            f'width="{max(x(d.t_e) - x(d.t_s), 0.5):.2f}" '
            f'height="{max(y(d.addr) - y(d.addr + d.size), 0.5):.2f}" '
            f'fill="{_color(d.size, plan.alignment)}" stroke="#444" '
            f'stroke-width="0.4"><title>id={d.id} size={d.size} '
            f"[{d.t_s},{d.t_e})</title></rect>\n"
        )

    parts.append("</svg>\n")
    Path(path).write_text("".join(parts), encoding="utf-8")


def render_compare_figure(compare: dict, path: Union[str, Path]) -> None:
    """Bar charts of efficiency and memory for planner vs baseline."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    planner = compare["planner"]
    base = compare["baseline"]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))

    names = ["planner", "baseline"]
    ax1.bar(names, [planner["efficiency"], base["efficiency"]], color=["#4878a8", "#b0b0b0"])
    ax1.set_ylim(0, 1.05)
    ax1.set_ylabel("memory efficiency")
    for i, v in enumerate([planner["efficiency"], base["efficiency"]]):
        ax1.text(i, v + 0.02, f"{v:.3f}", ha="center", fontsize=9)

    mib = 1024 * 1024
    ax2.bar(
        [0, 1],
        [planner["reserved_peak"] / mib, base["reserved_peak"] / mib],
        color=["#4878a8", "#b0b0b0"],
        label="reserved",
    )
    ax2.bar(
        [0, 1],
        [planner["allocated_peak"] / mib, base["allocated_peak"] / mib],
        color=["#1b4060", "#707070"],
        width=0.45,
        label="allocated peak",
    )
    ax2.set_xticks([0, 1])
    ax2.set_xticklabels(names)
    ax2.set_ylabel("MiB")
    ax2.legend(fontsize=8)

    fig.suptitle("planner vs caching-allocator baseline", fontsize=11)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
