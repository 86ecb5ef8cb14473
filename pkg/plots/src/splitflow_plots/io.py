"""Readers for the run directory's CSV and JSON files.

The file contracts belong to the producing command-line tool; this
module only parses them. Leading lines starting with '#' are comments
(the producer stamps a config hash there).
"""

from __future__ import annotations

import json
import os
import re

import numpy as np


class PlotFileError(OSError):
    """A required file is missing, empty, or unreadable."""


class PlotSchemaError(ValueError):
    """A file exists but does not match the expected layout."""


SNAPSHOT_PATTERN = re.compile(r"snapshots_t(\d+)\.csv$")


def read_table(path) -> dict:
    """Column name -> float array from a comma-separated file."""
    with open(path) as fh:
        lines = [line for line in fh.read().splitlines()
                 if line and not line.startswith("#")]
    if not lines:
        raise PlotFileError(f"no table content in {path}")
    header = lines[0].split(",")
    if len(lines) == 1:
        raise PlotFileError(f"no data rows in {path}")
    rows = []
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != len(header):
            raise PlotSchemaError(
                f"row width {len(parts)} != header width {len(header)} "
                f"in {path}")
        rows.append([float(v) for v in parts])
    data = np.asarray(rows, dtype=float)
    return {name: data[:, i] for i, name in enumerate(header)}


def require_columns(table: dict, names, path) -> None:
    missing = [n for n in names if n not in table]
    if missing:
        raise PlotSchemaError(f"{path} lacks column(s) {missing}; "
                              f"has {sorted(table)}")


def read_report(in_dir) -> dict:
    path = os.path.join(in_dir, "report.json")
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as err:
            raise PlotSchemaError(f"{path} is not valid JSON: {err}") from err
    for key in ("t_star", "no_split", "k"):
        if key not in payload:
            raise PlotSchemaError(f"{path} lacks required key {key!r}")
    return payload


def discover_snapshots(in_dir):
    """[(index, path), ...] for snapshots_t{idx}.csv, ordered by index."""
    found = []
    for name in os.listdir(in_dir):
        match = SNAPSHOT_PATTERN.fullmatch(name)
        if match:
            found.append((int(match.group(1)), os.path.join(in_dir, name)))
    if not found:
        raise PlotFileError(f"no snapshot files in {in_dir}")
    return sorted(found)
