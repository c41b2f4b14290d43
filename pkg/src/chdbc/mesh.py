"""Uniform meshes with matched bulk and boundary node sets.

Two geometries are supported:

* ``interval``: ``n`` nodes on ``[0, length]``. The boundary is the two end
  nodes and the surface integral is the counting sum over them, so
  ``|Gamma| = 2``.
* ``strip``: ``nx * ny`` nodes on ``[0, lx) x [0, ly]``, periodic in ``x``.
  The boundary is the two lines ``y = 0`` and ``y = ly``, so
  ``|Gamma| = 2 lx``.

Boundary nodes are bulk nodes; ``trace_map`` gives the bulk index of every
boundary node. A pair ``(u, u_Gamma)`` built with :meth:`Mesh.pair` is
therefore trace compatible by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NonZeroMean

__all__ = ["Mesh", "PhasePair", "DualPair", "build_mesh", "mean", "project", "inner_h", "norm_h"]


@dataclass(frozen=True)
class PhasePair:
    """Bulk field and its boundary values."""

    bulk: np.ndarray
    boundary: np.ndarray

    def __add__(self, other):
        return type(self)(self.bulk + other.bulk, self.boundary + other.boundary)

    def __sub__(self, other):
        return type(self)(self.bulk - other.bulk, self.boundary - other.boundary)

    def __mul__(self, scalar):
        return type(self)(scalar * self.bulk, scalar * self.boundary)

    __rmul__ = __mul__

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.bulk)), np.max(np.abs(self.boundary), initial=0.0)))


class DualPair(PhasePair):
    """Zero-mean pair; stands for an element of the dual of the mean-free space."""


@dataclass(frozen=True, eq=False)
class Mesh:
    kind: str
    shape: tuple
    lengths: tuple
    x: np.ndarray
    y: np.ndarray
    bulk_weights: np.ndarray
    boundary_weights: np.ndarray
    trace_map: np.ndarray
    h: float

    @property
    def n_bulk(self) -> int:
        return self.x.size

    @property
    def n_boundary(self) -> int:
        return self.trace_map.size

    @property
    def volume(self) -> float:
        return float(np.sum(self.bulk_weights))

    @property
    def area(self) -> float:
        return float(np.sum(self.boundary_weights))

    @property
    def total_measure(self) -> float:
        return self.volume + self.area

    @property
    def nodal_mass(self) -> np.ndarray:
        """Diagonal of the combined bulk + surface lumped mass on bulk nodes."""
        m = self.bulk_weights.copy()
        np.add.at(m, self.trace_map, self.boundary_weights)
        return m

    @property
    def surface_mass(self) -> np.ndarray:
        """Surface weights scattered onto bulk nodes (zero off the boundary)."""
        m = np.zeros(self.n_bulk)
        np.add.at(m, self.trace_map, self.boundary_weights)
        return m

    def pair(self, bulk) -> PhasePair:
        bulk = np.array(bulk, dtype=float)
        return PhasePair(bulk, bulk[self.trace_map].copy())

    def dual(self, bulk) -> DualPair:
        bulk = np.array(bulk, dtype=float)
        return DualPair(bulk, bulk[self.trace_map].copy())

    def constant(self, value: float) -> PhasePair:
        return self.pair(np.full(self.n_bulk, float(value)))

    def is_trace_compatible(self, p: PhasePair, atol: float = 0.0) -> bool:
        return bool(np.all(np.abs(p.boundary - p.bulk[self.trace_map]) <= atol))


def build_mesh(kind: str, **res) -> Mesh:
    """Build an ``interval`` (``n``, ``length``) or ``strip`` (``nx``, ``ny``, ``lx``, ``ly``) mesh."""
    if kind == "interval":
        n = int(res.get("n", 0))
        length = float(res.get("length", 1.0))
        if n < 4 or not length > 0:
            raise ConfigError(f"interval mesh needs n >= 4 and length > 0 (got n={n}, length={length})")
        h = length / (n - 1)
        x = np.linspace(0.0, length, n)
        w = np.full(n, h)
        w[[0, -1]] = 0.5 * h
        return Mesh(
            kind="interval",
            shape=(n,),
            lengths=(length,),
            x=x,
            y=np.zeros(n),
            bulk_weights=w,
            boundary_weights=np.ones(2),
            trace_map=np.array([0, n - 1]),
            h=h,
        )
    if kind == "strip":
        nx, ny = int(res.get("nx", 0)), int(res.get("ny", 0))
        lx, ly = float(res.get("lx", 1.0)), float(res.get("ly", 1.0))
        if nx < 4 or ny < 4 or not (lx > 0 and ly > 0):
            raise ConfigError(f"strip mesh needs nx, ny >= 4 and positive lengths (got {nx}x{ny}, {lx}x{ly})")
        hx, hy = lx / nx, ly / (ny - 1)
        xs = np.arange(nx) * hx
        ys = np.linspace(0.0, ly, ny)
        X, Y = np.meshgrid(xs, ys)  # row j is the line y = ys[j]
        wy = np.full(ny, hy)
        wy[[0, -1]] = 0.5 * hy
        w = (wy[:, None] * np.full(nx, hx)[None, :]).ravel()
        trace = np.concatenate([np.arange(nx), (ny - 1) * nx + np.arange(nx)])
        return Mesh(
            kind="strip",
            shape=(nx, ny),
            lengths=(lx, ly),
            x=X.ravel(),
            y=Y.ravel(),
            bulk_weights=w,
            boundary_weights=np.full(2 * nx, hx),
            trace_map=trace,
            h=max(hx, hy),
        )
    raise ConfigError(f"unknown mesh kind {kind!r}")


def mean(mesh: Mesh, p: PhasePair) -> float:
    """Generalized mean over bulk and boundary, normalized by ``|Omega| + |Gamma|``."""
    total = np.dot(mesh.bulk_weights, p.bulk) + np.dot(mesh.boundary_weights, p.boundary)
    return float(total / mesh.total_measure)


def project(mesh: Mesh, p: PhasePair) -> DualPair:
    m = mean(mesh, p)
    return DualPair(p.bulk - m, p.boundary - m)


def inner_h(mesh: Mesh, p: PhasePair, q: PhasePair) -> float:
    return float(np.dot(mesh.bulk_weights, p.bulk * q.bulk) + np.dot(mesh.boundary_weights, p.boundary * q.boundary))


def norm_h(mesh: Mesh, p: PhasePair) -> float:
    return float(np.sqrt(max(inner_h(mesh, p, p), 0.0)))


def require_zero_mean(mesh: Mesh, p: PhasePair, tol: float = 1e-10) -> None:
    scale = max(1.0, float(np.max(np.abs(p.bulk), initial=0.0)))
    m = mean(mesh, p)
    if abs(m) > tol * scale:
        raise NonZeroMean(f"pair has mean {m:.3e}; a zero-mean functional is required")
