"""CSV snapshots of nodal fields.

A snapshot ``name.csv`` holds the bulk field (columns
``node_index,x,y,u``) and ``name_boundary.csv`` next to it the boundary
trace (columns ``boundary_index,x,u_gamma``).
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .mesh import Mesh, PhasePair

__all__ = ["write_snapshot", "read_snapshot", "boundary_path"]

BULK_COLUMNS = ("node_index", "x", "y", "u")
BOUNDARY_COLUMNS = ("boundary_index", "x", "u_gamma")


def boundary_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + "_boundary" + path.suffix)


def write_snapshot(path, mesh: Mesh, u: PhasePair) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BULK_COLUMNS)
        for i in range(mesh.n_bulk):
            w.writerow([i, repr(float(mesh.x[i])), repr(float(mesh.y[i])), repr(float(u.bulk[i]))])
    with boundary_path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BOUNDARY_COLUMNS)
        for b, i in enumerate(mesh.trace_map):
            w.writerow([b, repr(float(mesh.x[i])), repr(float(u.boundary[b]))])


def read_snapshot(path, mesh: Mesh) -> np.ndarray:
    """Bulk nodal ``u`` from a snapshot written by :func:`write_snapshot`."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"snapshot file {str(path)!r} does not exist")
    values = np.full(mesh.n_bulk, np.nan)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != BULK_COLUMNS:
            raise ConfigError(f"snapshot {path} must have columns {','.join(BULK_COLUMNS)}")
        for row in reader:
            i = int(row["node_index"])
            if not 0 <= i < mesh.n_bulk:
                raise ConfigError(f"snapshot {path} has node index {i} outside the mesh")
            values[i] = float(row["u"])
    if np.any(np.isnan(values)):
        raise ConfigError(f"snapshot {path} does not match the mesh ({mesh.n_bulk} bulk nodes expected)")
    return values
