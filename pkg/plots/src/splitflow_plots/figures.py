"""The four figure families.

Pure plotting over the run directory's files: particle snapshots as an
evolution row, the same snapshots colored by divergence or by the
leading strain eigenvalue with the top-k particles circled, and the
indicator pair (cumulative integral, slope) with the reported t*.

Matplotlib is used through the object API (no pyplot state), so
rendering the same inputs twice produces identical files.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np
from matplotlib.figure import Figure

from .io import (
    PlotSchemaError,
    discover_snapshots,
    read_report,
    read_table,
    require_columns,
)

KINDS = ("evolution", "delta_map", "eigen_map", "indicator")
INTENSITY_FIELDS = {"delta_map": "delta", "eigen_map": "lambda_max"}
HIGHLIGHT_COLOR = "deeppink"


@dataclass(frozen=True)
class FigureSpec:
    in_dir: str
    kind: str
    out_path: str
    snapshot_times: Optional[tuple] = None
    colormap: str = "viridis"
    marker_size: float = 6.0
    highlight_size: float = 90.0
    dpi: int = 150

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PlotSchemaError(
                f"unknown figure kind {self.kind!r}; choose from {KINDS}")


def _snapshot_tables(spec: FigureSpec, columns):
    tables = []
    for _, path in discover_snapshots(spec.in_dir):
        table = read_table(path)
        require_columns(table, columns, path)
        tables.append(table)
    if spec.snapshot_times is not None:
        chosen = []
        for requested in spec.snapshot_times:
            gaps = [abs(t["t"][0] - requested) for t in tables]
            chosen.append(tables[int(np.argmin(gaps))])
        tables = chosen
    return tables


def _panel_row(n: int):
    fig = Figure(figsize=(3.0 * n + 1.0, 3.2))
    axes = fig.subplots(1, n, sharex=True, sharey=True, squeeze=False)[0]
    return fig, axes


def _save(fig: Figure, spec: FigureSpec) -> Figure:
    out_dir = os.path.dirname(os.path.abspath(spec.out_path))
    os.makedirs(out_dir, exist_ok=True)
    fig.savefig(spec.out_path, dpi=spec.dpi)
    return fig


def render_evolution(spec: FigureSpec) -> Figure:
    """One scatter panel per snapshot, shared axes, titled by time."""
    tables = _snapshot_tables(spec, ("t", "x", "y"))
    fig, axes = _panel_row(len(tables))
    for ax, table in zip(axes, tables):
        ax.scatter(table["x"], table["y"], s=spec.marker_size,
                   c="steelblue", linewidths=0)
        ax.set_title(f"t = {table['t'][0]:.2f}")
        ax.set_aspect("equal")
    fig.suptitle("Particle evolution")
    return _save(fig, spec)


def render_intensity_map(spec: FigureSpec, field: str) -> Figure:
    """Snapshots colored by a per-particle field, top-k circled."""
    if field not in ("delta", "lambda_max"):
        raise PlotSchemaError(
            f"unknown intensity field {field!r}; "
            "choose 'delta' or 'lambda_max'")
    tables = _snapshot_tables(spec, ("t", "x", "y", "top_k", field))
    lo = min(float(t[field].min()) for t in tables)
    hi = max(float(t[field].max()) for t in tables)
    if lo == hi:
        hi = lo + 1.0
    fig, axes = _panel_row(len(tables))
    mappable = None
    for ax, table in zip(axes, tables):
        mappable = ax.scatter(table["x"], table["y"], c=table[field],
                              cmap=spec.colormap, vmin=lo, vmax=hi,
                              s=spec.marker_size, linewidths=0)
        flagged = table["top_k"] == 1
        ax.scatter(table["x"][flagged], table["y"][flagged],
                   facecolors="none", edgecolors=HIGHLIGHT_COLOR,
                   s=spec.highlight_size, linewidths=1.2)
        ax.set_title(f"t = {table['t'][0]:.2f}")
        ax.set_aspect("equal")
    fig.colorbar(mappable, ax=list(axes), label=field)
    fig.suptitle(f"Intensity: {field}")
    return _save(fig, spec)


def render_indicator(spec: FigureSpec) -> Figure:
    """Cumulative integral and slope panels with the reported t*."""
    path = os.path.join(spec.in_dir, "indicator.csv")
    table = read_table(path)
    require_columns(
        table, ("t", "topk_mean_lambda", "cumulative_integral", "slope"),
        path)
    report = read_report(spec.in_dir)
    echoed = report.get("config_echo", {}).get("grid", {}).get("n_nodes")
    if echoed is not None and int(echoed) != len(table["t"]):
        raise PlotSchemaError(
            f"indicator rows ({len(table['t'])}) disagree with the "
            f"reported grid ({echoed} nodes)")

    fig = Figure(figsize=(9.0, 3.6))
    left, right = fig.subplots(1, 2)
    left.plot(table["t"], table["cumulative_integral"], color="steelblue")
    left.set_title(f"Cumulative top-{report['k']} integral")
    left.set_xlabel("t")
    right.plot(table["t"], table["slope"], color="steelblue")
    right.set_title("Slope")
    right.set_xlabel("t")
    if report["t_star"] is not None:
        for ax in (left, right):
            ax.axvline(report["t_star"], linestyle="--", color="black")
    else:
        right.text(0.5, 0.5, "no split detected",
                   transform=right.transAxes, ha="center", va="center")
    return _save(fig, spec)


def render(spec: FigureSpec) -> Figure:
    if spec.kind == "evolution":
        return render_evolution(spec)
    if spec.kind in INTENSITY_FIELDS:
        return render_intensity_map(spec, INTENSITY_FIELDS[spec.kind])
    return render_indicator(spec)
