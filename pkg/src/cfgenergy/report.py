"""Sampler-by-scale summary tables of mean stability scores."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from typing import Optional

from .energy import EmptyInputError
from .metrics import MetricsReport

SAMPLER_ORDER = ("dpmpp_2m", "ddim", "euler_ancestral")
SCORE_FIELDS = ("stab", "cons", "eff", "conv")


def format_cell(value: Optional[float]) -> str:
    """Four decimals, round-half-even on the shortest decimal representation."""
    if value is None:
        return "--"
    return str(Decimal(repr(float(value))).quantize(Decimal("0.0001"), rounding=ROUND_HALF_EVEN))


def _sampler_sort(name: str) -> tuple:
    return (SAMPLER_ORDER.index(name) if name in SAMPLER_ORDER else len(SAMPLER_ORDER), name)


@dataclass
class SummaryTable:
    text: str
    csv: str
    long_csv: str
    rows: list[str]
    columns: list[str]
    cells: dict[tuple[str, str], Optional[float]]


def _text_table(header: list[str], body: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) if i == 0 else h.rjust(w) for i, (h, w) in enumerate(zip(header, widths)))]
    lines.append("  ".join("-" * w for w in widths))
    for r in body:
        lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))))
    return "\n".join(lines)


def summary_table(report: MetricsReport, score: str = "stab") -> SummaryTable:
    """Rows are samplers, columns are fixed CFG scales followed by adaptive schedules."""
    if not report.groups:
        raise EmptyInputError("empty report")
    idx = SCORE_FIELDS.index(score)
    samplers = sorted({g[0] for g in report.groups}, key=_sampler_sort)
    scales = sorted({g[2] for g in report.groups if g[2] is not None})
    schedules = sorted({g[1] for g in report.groups if g[2] is None})
    columns = [f"{s:g}" for s in scales] + schedules

    cells: dict[tuple[str, str], Optional[float]] = {}
    for sampler in samplers:
        for s in scales:
            summary = report.groups.get((sampler, "fixed", s))
            cells[(sampler, f"{s:g}")] = summary.scores[idx] if summary else None
        for label in schedules:
            summary = report.groups.get((sampler, label, None))
            cells[(sampler, label)] = summary.scores[idx] if summary else None

    header = ["sampler"] + columns
    body = [[sampler] + [format_cell(cells[(sampler, c)]) for c in columns] for sampler in samplers]
    text = f"mean S_{score} by sampler (rows) and CFG scale / schedule (columns)\n" + _text_table(header, body)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(body)

    long_buf = io.StringIO()
    lw = csv.writer(long_buf, lineterminator="\n")
    lw.writerow(["sampler", "schedule", "scale", "count", *SCORE_FIELDS])
    for (sampler, schedule, scale), summary in sorted(
        report.groups.items(), key=lambda kv: (_sampler_sort(kv[0][0]), kv[0][2] is None, kv[0][2] or 0.0, kv[0][1])
    ):
        lw.writerow(
            [sampler, schedule, "" if scale is None else f"{scale:g}", summary.count]
            + [format(v, ".17g") for v in summary.scores]
        )
    return SummaryTable(
        text=text, csv=buf.getvalue(), long_csv=long_buf.getvalue(),
        rows=samplers, columns=columns, cells=cells,
    )
