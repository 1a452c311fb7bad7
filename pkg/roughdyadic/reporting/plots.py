"""Standalone SVG slope plots and the markdown run report."""

import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from jinja2 import Environment, PackageLoader, select_autoescape

from roughdyadic.models import EstimateRow, Verdict

logger = logging.getLogger(__name__)

WIDTH, HEIGHT = 640, 400
MARGIN = 60


@lru_cache
def templates() -> Environment:
    return Environment(
        loader=PackageLoader("roughdyadic", "templates"),
        autoescape=select_autoescape(enabled_extensions=("svg.j2",), default_for_string=False),
        trim_blocks=True,
        lstrip_blocks=True,
        keep_trailing_newline=True,
    )


@dataclass
class Series:
    statistic: str
    anchor: str
    axis: str
    q: float | None
    slope: float
    verdict: Verdict | None
    x: list[float] = field(default_factory=list)
    y: list[float] = field(default_factory=list)

    @property
    def label(self) -> str:
        q = "" if self.q is None else f", q={self.q:g}"
        return f"{self.statistic} vs {self.axis}{q}"


def slope_series(rows: Iterable[EstimateRow]) -> list[Series]:
    """Group fitted sweeps: rows sharing statistic, q, anchor and fitted slope."""
    groups: dict[tuple, list[EstimateRow]] = {}
    for row in rows:
        if row.slope is None or row.estimate <= 0.0:
            continue
        groups.setdefault((row.statistic, row.q, row.anchor, row.slope), []).append(row)

    series = []
    for (statistic, q, anchor, slope), members in groups.items():
        ms = {r.m for r in members}
        axis = "m" if len(ms) > 1 else "n"
        xs = [float(r.m if axis == "m" else r.n) for r in members]
        ys = [math.log2(r.estimate) for r in members]
        series.append(Series(statistic, anchor, axis, q, slope, members[0].verdict, xs, ys))
    return series


def _scale(values: Sequence[float], low: float, high: float) -> tuple[float, float]:
    lo, hi = min(values), max(values)
    if hi == lo:
        lo, hi = lo - 1.0, hi + 1.0
    span = (high - low) / (hi - lo)
    return span, low - lo * span


def render_slope_svg(series: Series) -> str:
    x = np.asarray(series.x)
    y = np.asarray(series.y)
    intercept = float(np.mean(y - series.slope * x))
    fitted = intercept + series.slope * x
    sx, ox = _scale(x.tolist(), MARGIN, WIDTH - MARGIN / 2)
    # svg y grows downwards
    sy, oy = _scale(np.concatenate([y, fitted]).tolist(), HEIGHT - MARGIN, MARGIN / 2)
    points = [
        {"x": xi, "y": yi, "px": sx * xi + ox, "py": sy * yi + oy}
        for xi, yi in zip(x.tolist(), y.tolist())
    ]
    line = {
        "x1": sx * x.min() + ox,
        "y1": sy * (intercept + series.slope * x.min()) + oy,
        "x2": sx * x.max() + ox,
        "y2": sy * (intercept + series.slope * x.max()) + oy,
    }
    return templates().get_template("slope_plot.svg.j2").render(
        series=series, points=points, line=line, width=WIDTH, height=HEIGHT, margin=MARGIN
    )


def write_lemma_plots(lemma_id: str, rows: Iterable[EstimateRow], out_dir: Path) -> list[Path]:
    written = []
    for i, series in enumerate(slope_series(rows), start=1):
        target = out_dir / f"{lemma_id}_slope_{i:02d}.svg"
        target.write_text(render_slope_svg(series))
        written.append(target)
    if written:
        logger.info("Wrote %d plot(s) for %s to %s", len(written), lemma_id, out_dir)
    return written


@dataclass
class ReportEntry:
    lemma_id: str
    verdict: Verdict
    summary: str
    citations: list[tuple[str, str]]
    rows: int
    plots: list[str]


def render_report(entries: Sequence[ReportEntry], runs: Sequence[dict], target: Path) -> Path:
    text = templates().get_template("report.md.j2").render(entries=entries, runs=runs)
    target.write_text(text)
    logger.info("Wrote report for %d lemma(s) to %s", len(entries), target)
    return target
