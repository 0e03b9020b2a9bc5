"""Standalone SVG energy plots.

One line per group (mean energy per step) with a shaded +-1 std band when the
group holds more than one run. Output is plain SVG text, no plotting backend.
"""

from __future__ import annotations

import math
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Optional, Sequence
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .energy import EmptyInputError, aggregate_trajectories
from .runio import RunArtifacts

GROUP_BY = ("sampler", "scale", "schedule")
PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)

WIDTH, HEIGHT = 760, 460
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 190, 40, 55


def group_label(art: RunArtifacts, group_by: str) -> Optional[tuple]:
    """``(sort_key, label)`` of a run under ``group_by``; None if the run does not belong."""
    key = art.key
    if group_by == "sampler":
        return ((key.sampler,), key.sampler)
    if group_by == "scale":
        if key.scale is None:
            return None
        return ((key.scale,), f"s={key.scale:g}")
    if group_by == "schedule":
        label = f"fixed({key.scale:g})" if key.scale is not None else key.schedule
        return ((key.scale is None, key.scale or 0.0, label), label)
    raise ValueError(f"group_by must be one of {GROUP_BY}, got {group_by!r}")


def panel_label(art: RunArtifacts, group_by: str) -> str:
    """The complementary dimension used to split runs across SVG files."""
    key = art.key
    if group_by == "sampler":
        return f"fixed({key.scale:g})" if key.scale is not None else key.schedule
    return key.sampler


def nice_ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    span = hi - lo
    raw = span / max(target, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        ticks.append(round(v, 12))
        v += step
    return ticks


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def render_energy_svg(
    series: Sequence[tuple[str, np.ndarray, Optional[np.ndarray]]],
    title: str = "",
) -> str:
    """Render ``(label, mean, std_or_None)`` series into an SVG document."""
    if not series:
        raise EmptyInputError("nothing to plot")
    n_steps = max(len(m) for _, m, _ in series)
    lows, highs = [], []
    for _, mean, std in series:
        band = std if std is not None else 0.0
        lows.append(float(np.min(mean - band)))
        highs.append(float(np.max(mean + band)))
    y_lo, y_hi = min(lows), max(highs)
    if y_hi - y_lo < 1e-12:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    else:
        pad = 0.05 * (y_hi - y_lo)
        y_lo, y_hi = y_lo - pad, y_hi + pad
    x_hi = max(n_steps - 1, 1)

    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def px(step: float) -> float:
        return MARGIN_L + plot_w * step / x_hi

    def py(e: float) -> float:
        return MARGIN_T + plot_h * (1.0 - (e - y_lo) / (y_hi - y_lo))

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        out.append(
            f'<text x="{MARGIN_L + plot_w / 2:.2f}" y="24" text-anchor="middle" '
            f'font-size="14">{escape(title)}</text>'
        )

    out.append('<g class="axes" stroke="#333" stroke-width="1">')
    out.append(
        f'<line x1="{MARGIN_L}" y1="{MARGIN_T + plot_h}" x2="{MARGIN_L + plot_w}" y2="{MARGIN_T + plot_h}"/>'
    )
    out.append(f'<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" y2="{MARGIN_T + plot_h}"/>')
    out.append("</g>")

    out.append('<g class="ticks" fill="#333">')
    for xv in nice_ticks(0, x_hi):
        x = px(xv)
        out.append(
            f'<line x1="{_fmt(x)}" y1="{MARGIN_T + plot_h}" x2="{_fmt(x)}" '
            f'y2="{MARGIN_T + plot_h + 5}" stroke="#333"/>'
        )
        out.append(f'<text x="{_fmt(x)}" y="{MARGIN_T + plot_h + 18}" text-anchor="middle">{xv:g}</text>')
    for yv in nice_ticks(y_lo, y_hi):
        y = py(yv)
        out.append(
            f'<line x1="{MARGIN_L}" y1="{_fmt(y)}" x2="{MARGIN_L + plot_w}" y2="{_fmt(y)}" '
            f'stroke="#ddd"/>'
        )
        out.append(f'<text x="{MARGIN_L - 8}" y="{_fmt(y + 4)}" text-anchor="end">{yv:g}</text>')
    out.append("</g>")
    out.append(
        f'<text class="xlabel" x="{MARGIN_L + plot_w / 2:.2f}" y="{HEIGHT - 12}" '
        f'text-anchor="middle">step</text>'
    )
    out.append(
        f'<text class="ylabel" x="18" y="{MARGIN_T + plot_h / 2:.2f}" text-anchor="middle" '
        f'transform="rotate(-90 18 {MARGIN_T + plot_h / 2:.2f})">energy</text>'
    )

    for i, (label, mean, std) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        steps = np.arange(len(mean))
        if std is not None and np.any(std > 0):
            upper = [f"{_fmt(px(s))},{_fmt(py(m + d))}" for s, m, d in zip(steps, mean, std)]
            lower = [f"{_fmt(px(s))},{_fmt(py(m - d))}" for s, m, d in zip(steps, mean, std)]
            out.append(
                f'<polygon class="band" points="{" ".join(upper + lower[::-1])}" '
                f'fill="{color}" fill-opacity="0.18" stroke="none"/>'
            )
        pts = " ".join(f"{_fmt(px(s))},{_fmt(py(m))}" for s, m in zip(steps, mean))
        out.append(
            f'<polyline class="series" data-label={quoteattr(label)} points="{pts}" '
            f'fill="none" stroke="{color}" stroke-width="1.8"/>'
        )

    lx = WIDTH - MARGIN_R + 16
    out.append('<g class="legend">')
    for i, (label, _, _) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        y = MARGIN_T + 10 + 20 * i
        out.append(
            f'<g class="legend-entry"><line x1="{lx}" y1="{y}" x2="{lx + 22}" y2="{y}" '
            f'stroke="{color}" stroke-width="3"/>'
            f'<text x="{lx + 28}" y="{y + 4}">{escape(label)}</text></g>'
        )
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def grouped_series(
    runs: Iterable[RunArtifacts], group_by: str
) -> list[tuple[str, np.ndarray, Optional[np.ndarray]]]:
    buckets: dict[tuple, list[np.ndarray]] = defaultdict(list)
    labels: dict[tuple, str] = {}
    for art in runs:
        g = group_label(art, group_by)
        if g is None:
            continue
        buckets[g[0]].append(art.record.energies)
        labels[g[0]] = g[1]
    series = []
    for sort_key in sorted(buckets):
        trajs = buckets[sort_key]
        mean, var = aggregate_trajectories(trajs)
        series.append((labels[sort_key], mean, np.sqrt(var) if len(trajs) > 1 else None))
    return series


def emit_energy_plot(
    runs: Sequence[RunArtifacts], group_by: str, out_path: str | Path, title: str = ""
) -> Path:
    if group_by not in GROUP_BY:
        raise ValueError(f"group_by must be one of {GROUP_BY}, got {group_by!r}")
    series = grouped_series(runs, group_by)
    if not series:
        raise EmptyInputError(f"no runs to plot when grouping by {group_by}")
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(render_energy_svg(series, title), encoding="utf-8")
    return out_path


def emit_plots(runs: Sequence[RunArtifacts], group_by: str, out_dir: str | Path) -> list[Path]:
    """One SVG per panel (the dimension not grouped on), one line per group."""
    panels: dict[str, list[RunArtifacts]] = defaultdict(list)
    for art in runs:
        if group_label(art, group_by) is not None:
            panels[panel_label(art, group_by)].append(art)
    if not panels:
        raise EmptyInputError(f"no runs to plot when grouping by {group_by}")
    paths = []
    for panel in sorted(panels):
        safe = "".join(c if c.isalnum() or c in "._-" else "_" for c in panel)
        paths.append(
            emit_energy_plot(
                panels[panel],
                group_by,
                Path(out_dir) / f"energy_by_{group_by}__{safe}.svg",
                title=f"{panel}: energy by {group_by}",
            )
        )
    return paths
