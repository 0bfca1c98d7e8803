"""
Text formats for measures, grid densities and trajectory directories.

Measure files start with `circleflow-measure v1 N=<int>` followed by N
lines `<left> <spacing>`; grid files start with `circleflow-grid v1 M=<int>`
followed by M values. Numbers are written with 17 significant digits so
that a write/read/write cycle reproduces the text exactly.
"""

import os
import re
import json
from typing import Dict, List, Optional, Tuple

import numpy as np

from measure import CellMeasure, GridDensity
from utils.logger import SeriesLogger


MEASURE_HEADER = 'circleflow-measure v1 N={}'
GRID_HEADER = 'circleflow-grid v1 M={}'
_MEASURE_RE = re.compile(r'^circleflow-measure v1 N=(\d+)$')
_GRID_RE = re.compile(r'^circleflow-grid v1 M=(\d+)$')

SNAPSHOT_PATTERN = 'snap_{:06d}.msr'
_SNAPSHOT_RE = re.compile(r'^snap_(\d{6})\.msr$')


class SnapshotFormatError(Exception):
    """Raised when a snapshot file cannot be parsed."""

    def __init__(self, path: str, line: int, reason: str):
        self.path = path
        self.line = line
        self.reason = reason
        super().__init__(f"{path}:{line}: {reason}")


def _num(x: float) -> str:
    return f"{x:.17g}"


def format_measure(m: CellMeasure) -> str:
    lines = [MEASURE_HEADER.format(m.N)]
    lines.extend(f"{_num(a)} {_num(h)}" for a, h in zip(m.lefts, m.spacings))
    return "\n".join(lines) + "\n"


def format_grid(g: GridDensity) -> str:
    lines = [GRID_HEADER.format(g.M)]
    lines.extend(_num(v) for v in g.values)
    return "\n".join(lines) + "\n"


def _body(text: str, pattern, path: str) -> Tuple[int, List[str]]:
    lines = text.splitlines()
    if not lines:
        raise SnapshotFormatError(path, 1, 'empty file')
    match = pattern.match(lines[0].strip())
    if not match:
        raise SnapshotFormatError(path, 1, f"malformed header {lines[0].strip()!r}")
    count = int(match.group(1))
    body = [line for line in lines[1:] if line.strip()]
    if len(body) != count:
        raise SnapshotFormatError(
            path, len(lines), f"expected {count} records, found {len(body)}"
        )
    return count, lines[1:]


def _parse_fields(line: str, expected: int, path: str, lineno: int) -> List[float]:
    parts = line.split()
    if len(parts) != expected:
        raise SnapshotFormatError(path, lineno, f"expected {expected} fields, found {len(parts)}")
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise SnapshotFormatError(path, lineno, f"not a number: {line.strip()!r}")
    if not all(np.isfinite(values)):
        raise SnapshotFormatError(path, lineno, 'non-finite entry')
    return values


def parse_measure(text: str, path: str = '<string>') -> CellMeasure:
    """
    Parse the measure text format.

    Args:
        text: File contents
        path: Name used in error messages

    Returns:
        CellMeasure

    Raises:
        SnapshotFormatError: On a bad header, record count or entry
    """
    _, lines = _body(text, _MEASURE_RE, path)
    lefts, spacings = [], []
    for offset, line in enumerate(lines):
        if not line.strip():
            continue
        a, h = _parse_fields(line, 2, path, offset + 2)
        lefts.append(a)
        spacings.append(h)
    try:
        return CellMeasure(np.array(lefts), np.array(spacings))
    except ValueError as e:
        raise SnapshotFormatError(path, 2, str(e))


def parse_grid(text: str, path: str = '<string>') -> GridDensity:
    """Parse the grid text format."""
    _, lines = _body(text, _GRID_RE, path)
    values = []
    for offset, line in enumerate(lines):
        if not line.strip():
            continue
        values.extend(_parse_fields(line, 1, path, offset + 2))
    try:
        return GridDensity(np.array(values))
    except ValueError as e:
        raise SnapshotFormatError(path, 2, str(e))


def write_measure(path: str, m: CellMeasure) -> str:
    with open(path, 'w', newline='\n') as f:
        f.write(format_measure(m))
    return path


def read_measure(path: str) -> CellMeasure:
    with open(path, 'r') as f:
        return parse_measure(f.read(), path)


def write_grid(path: str, g: GridDensity) -> str:
    with open(path, 'w', newline='\n') as f:
        f.write(format_grid(g))
    return path


def read_grid(path: str) -> GridDensity:
    with open(path, 'r') as f:
        return parse_grid(f.read(), path)


def series_rows(traj) -> List[Dict]:
    """Rows of series.csv for a FlowTrajectory."""
    dist = traj.dist_to_minimizer()
    rows = []
    for k, t in enumerate(traj.times):
        energy = traj.energies[k]
        rows.append({
            't': t,
            'entropy': energy.entropy,
            'interaction': energy.interaction,
            'total_energy': energy.total,
            'dist_to_minimizer': float(dist[k]),
            'step_cost': traj.step_costs[k],
            'inner_iterations': traj.inner_iterations[k],
        })
    return rows


def write_trajectory(
    directory: str,
    traj,
    meta: Optional[Dict] = None,
    every: int = 1
) -> List[str]:
    """
    Write a trajectory directory: numbered snapshots, series.csv and meta.json.

    Args:
        directory: Output directory (created if missing)
        traj: FlowTrajectory
        meta: Configuration echo stored in meta.json
        every: Keep every n-th snapshot (the final one is always kept)

    Returns:
        List of files written
    """
    if every < 1:
        raise ValueError("snapshot_every must be >= 1")
    os.makedirs(directory, exist_ok=True)
    written = []

    last = len(traj.snapshots) - 1
    for k, m in enumerate(traj.snapshots):
        if k % every == 0 or k == last:
            written.append(write_measure(os.path.join(directory, SNAPSHOT_PATTERN.format(k)), m))

    series = SeriesLogger()
    for row in series_rows(traj):
        series.log(row)
    written.append(series.write(os.path.join(directory, 'series.csv')))

    meta_path = os.path.join(directory, 'meta.json')
    with open(meta_path, 'w') as f:
        json.dump(meta or {}, f, indent=2, sort_keys=True)
        f.write("\n")
    written.append(meta_path)
    return written


def read_trajectory(directory: str) -> Tuple[Dict[int, CellMeasure], Dict]:
    """
    Load the snapshots and metadata of a trajectory directory.

    Returns:
        Tuple of ({step index: measure}, meta dictionary)
    """
    snapshots = {}
    for name in sorted(os.listdir(directory)):
        match = _SNAPSHOT_RE.match(name)
        if match:
            snapshots[int(match.group(1))] = read_measure(os.path.join(directory, name))
    meta_path = os.path.join(directory, 'meta.json')
    meta = {}
    if os.path.exists(meta_path):
        with open(meta_path, 'r') as f:
            meta = json.load(f)
    return snapshots, meta
