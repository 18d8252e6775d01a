"""Static SVG heatmaps of envelope test results.

Each cell is drawn in one of three classes: above the upper envelope,
inside the envelope, or below the lower envelope. Output depends only on
the report, so identical reports give byte-identical files.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .report import TestReport

PALETTE = {"above": "#d7301f", "inside": "#f0f0f0", "below": "#2b6cb0"}

_CELL = 18
_MARGIN_LEFT = 90
_MARGIN_TOP = 40
_MARGIN_BOTTOM = 80
_LEGEND_WIDTH = 110


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.4g}"
    return str(value)


def _display(report: TestReport):
    """Class matrix and axis labels, with the first display row at the top.

    Tables keep their layout. Grids over the data put x on the horizontal
    axis and y on the vertical axis, increasing upwards.
    """
    geo = report.geometry
    classes = np.where(report.above, 2, np.where(report.below, 0, 1))
    kind = geo["kind"]
    if kind == "table_cells":
        shape = (len(geo["row_labels"]), len(geo["col_labels"]))
        return classes.reshape(shape), geo["row_labels"], geo["col_labels"], "x", "y"
    if kind == "quantile_grid":
        shape = (len(geo["values_x"]), len(geo["values_y"]))
        # stored as (x index, y index)
        grid = classes.reshape(shape).T[::-1]
        return grid, geo["values_y"][::-1], geo["values_x"], "y", "x"
    if kind == "pixel_grid":
        shape = (geo["rows"], geo["cols"])
        rows = geo.get("y_quantiles") or [(i + 0.5) / shape[0] for i in range(shape[0])]
        cols = geo.get("x_quantiles") or [(j + 0.5) / shape[1] for j in range(shape[1])]
        # stored as (y index, x index)
        return classes.reshape(shape)[::-1], rows[::-1], cols, "y", "x"
    raise ValueError(f"unknown geometry kind {kind!r}")


def _label_step(count: int) -> int:
    return max(1, -(-count // 16))


def render_svg(report: TestReport, title: str | None = None) -> str:
    """SVG document showing where the observed statistic leaves the envelope."""
    grid, row_labels, col_labels, row_axis, col_axis = _display(report)
    n_rows, n_cols = grid.shape
    width = _MARGIN_LEFT + n_cols * _CELL + _LEGEND_WIDTH
    height = _MARGIN_TOP + n_rows * _CELL + _MARGIN_BOTTOM
    names = ("below", "inside", "above")
    if title is None:
        title = f"{report.method}: p = {report.p_value:.4g}, alpha = {report.alpha:g}, s = {report.s}"
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">',
        f'<text x="{_MARGIN_LEFT}" y="20" font-size="12">{escape(title)}</text>',
    ]
    for i in range(n_rows):
        for j in range(n_cols):
            x = _MARGIN_LEFT + j * _CELL
            y = _MARGIN_TOP + i * _CELL
            cls = names[grid[i, j]]
            out.append(
                f'<rect x="{x}" y="{y}" width="{_CELL}" height="{_CELL}" '
                f'fill="{PALETTE[cls]}" stroke="#ffffff" stroke-width="0.5" class="{cls}"/>'
            )
    step = _label_step(n_rows)
    for i in range(0, n_rows, step):
        y = _MARGIN_TOP + i * _CELL + _CELL / 2 + 3
        out.append(f'<text x="{_MARGIN_LEFT - 4}" y="{y}" text-anchor="end">{escape(_fmt(row_labels[i]))}</text>')
    step = _label_step(n_cols)
    base = _MARGIN_TOP + n_rows * _CELL + 6
    for j in range(0, n_cols, step):
        x = _MARGIN_LEFT + j * _CELL + _CELL / 2
        out.append(
            f'<text x="{x}" y="{base}" text-anchor="end" '
            f'transform="rotate(-60 {x} {base})">{escape(_fmt(col_labels[j]))}</text>'
        )
    cx = _MARGIN_LEFT + n_cols * _CELL / 2
    out.append(f'<text x="{cx}" y="{height - 8}" text-anchor="middle">{col_axis}</text>')
    cy = _MARGIN_TOP + n_rows * _CELL / 2
    out.append(f'<text x="14" y="{cy}" text-anchor="middle" transform="rotate(-90 14 {cy})">{row_axis}</text>')
    lx = _MARGIN_LEFT + n_cols * _CELL + 14
    for k, (cls, label) in enumerate(
        (("above", "above upper"), ("inside", "inside"), ("below", "below lower"))
    ):
        ly = _MARGIN_TOP + k * 20
        out.append(f'<rect x="{lx}" y="{ly}" width="12" height="12" fill="{PALETTE[cls]}" stroke="#999999"/>')
        out.append(f'<text x="{lx + 18}" y="{ly + 10}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
