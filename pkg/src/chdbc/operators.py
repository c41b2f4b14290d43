"""Discrete Dirichlet forms, the duality map and its inverse.

All forms are assembled from edge differences, ``K = G^T diag(w) G``, where
``G`` is a signed incidence matrix. Applying ``K`` through ``G`` keeps the
constant pair in the kernel exactly (no rounding), which the mass and
steady-state checks rely on.

The bilinear form is

    a_sigma(z, q) = z^T K_bulk q + sigma * z_Gamma^T K_surf q_Gamma

and the duality map sends a zero-mean pair ``w`` to the functional
``z -> a_sigma(w, z)``. Functionals are represented by their Riesz
representative in ``H`` (lumped bulk + surface mass), so that
``<f, z> = (f, z)_H``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import SolverStall
from .mesh import DualPair, Mesh, PhasePair, inner_h, project, require_zero_mean

__all__ = [
    "OperatorSet",
    "assemble_operators",
    "apply_a_sigma",
    "apply_duality",
    "solve_a_sigma_inverse",
    "dual_norm",
    "poincare_constant",
    "dump_matrix",
]


def _incidence(pairs, n):
    pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)
    m = pairs.shape[0]
    rows = np.repeat(np.arange(m), 2)
    cols = pairs.ravel()
    vals = np.tile([1.0, -1.0], m)
    return sp.csr_matrix((vals, (rows, cols)), shape=(m, n))


@dataclass(frozen=True, eq=False)
class OperatorSet:
    """Operators assembled once per mesh and ``sigma``.

    ``laplacian_bulk`` holds the interior rows of the lumped Laplacian
    (boundary rows are zero: at those nodes the bulk flux couples to the
    surface equation). ``laplace_beltrami`` acts on boundary values and is
    the zero matrix for the interval. ``normal_derivative`` is the
    one-sided three-point outward derivative at each boundary node.
    """

    mesh: Mesh
    sigma: float
    grad_bulk: sp.csr_matrix
    edge_w_bulk: np.ndarray
    grad_surf: sp.csr_matrix
    edge_w_surf: np.ndarray
    stiff_bulk: sp.csr_matrix
    stiff_surf: sp.csr_matrix
    stiff_surf_nodal: sp.csr_matrix
    a_sigma: sp.csr_matrix
    laplacian_bulk: sp.csr_matrix
    laplace_beltrami: sp.csr_matrix
    normal_derivative: sp.csr_matrix
    trace: sp.csr_matrix

    def k_bulk(self, u: np.ndarray) -> np.ndarray:
        return self.grad_bulk.T @ (self.edge_w_bulk * (self.grad_bulk @ u))

    def k_surf(self, u_gamma: np.ndarray) -> np.ndarray:
        return self.grad_surf.T @ (self.edge_w_surf * (self.grad_surf @ u_gamma))

    def k_surf_nodal(self, u: np.ndarray) -> np.ndarray:
        return self.trace.T @ self.k_surf(u[self.mesh.trace_map])

    def k_sigma(self, u: np.ndarray) -> np.ndarray:
        out = self.k_bulk(u)
        if self.sigma:
            out = out + self.sigma * self.k_surf_nodal(u)
        return out


def _bulk_edges(mesh: Mesh):
    if mesh.kind == "interval":
        n = mesh.n_bulk
        pairs = np.column_stack([np.arange(n - 1), np.arange(1, n)])
        return pairs, np.full(n - 1, 1.0 / mesh.h)
    nx, ny = mesh.shape
    lx, ly = mesh.lengths
    hx, hy = lx / nx, ly / (ny - 1)
    idx = np.arange(nx * ny).reshape(ny, nx)
    wy = np.full(ny, hy)
    wy[[0, -1]] = 0.5 * hy
    xa, xb = idx.ravel(), np.roll(idx, -1, axis=1).ravel()
    xw = np.repeat(wy / hx, nx)
    ya, yb = idx[:-1].ravel(), idx[1:].ravel()
    yw = np.full(ya.size, hx / hy)
    pairs = np.column_stack([np.concatenate([xa, ya]), np.concatenate([xb, yb])])
    return pairs, np.concatenate([xw, yw])


def _surface_edges(mesh: Mesh):
    if mesh.kind == "interval":
        return np.zeros((0, 2), dtype=int), np.zeros(0)
    nx, _ = mesh.shape
    hx = mesh.lengths[0] / nx
    line = np.arange(nx)
    a = np.concatenate([line, nx + line])
    b = np.concatenate([np.roll(line, -1), nx + np.roll(line, -1)])
    return np.column_stack([a, b]), np.full(2 * nx, 1.0 / hx)


def _normal_derivative(mesh: Mesh) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    if mesh.kind == "interval":
        n, h = mesh.n_bulk, mesh.h
        stencils = [(0, [0, 1, 2]), (1, [n - 1, n - 2, n - 3])]
        for row, nodes in stencils:
            rows += [row] * 3
            cols += nodes
            vals += [3.0 / (2 * h), -4.0 / (2 * h), 1.0 / (2 * h)]
        return sp.csr_matrix((vals, (rows, cols)), shape=(2, n))
    nx, ny = mesh.shape
    hy = mesh.lengths[1] / (ny - 1)
    for i in range(nx):
        for row, nodes in ((i, [i, nx + i, 2 * nx + i]), (nx + i, [(ny - 1) * nx + i, (ny - 2) * nx + i, (ny - 3) * nx + i])):
            rows += [row] * 3
            cols += nodes
            vals += [3.0 / (2 * hy), -4.0 / (2 * hy), 1.0 / (2 * hy)]
    return sp.csr_matrix((vals, (rows, cols)), shape=(2 * nx, mesh.n_bulk))


@lru_cache(maxsize=32)
def assemble_operators(mesh: Mesh, sigma: float = 0.0) -> OperatorSet:
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    n, nb = mesh.n_bulk, mesh.n_boundary
    pairs, w = _bulk_edges(mesh)
    g_bulk = _incidence(pairs, n)
    k_bulk = (g_bulk.T @ sp.diags(w) @ g_bulk).tocsr()
    spairs, sw = _surface_edges(mesh)
    g_surf = _incidence(spairs, nb)
    k_surf = (g_surf.T @ sp.diags(sw) @ g_surf).tocsr()
    trace = sp.csr_matrix((np.ones(nb), (np.arange(nb), mesh.trace_map)), shape=(nb, n))
    k_surf_nodal = (trace.T @ k_surf @ trace).tocsr()

    interior = np.ones(n)
    interior[mesh.trace_map] = 0.0
    lap = (-sp.diags(interior / mesh.bulk_weights) @ k_bulk).tocsr()
    lap.eliminate_zeros()
    lb = (-sp.diags(1.0 / mesh.boundary_weights) @ k_surf).tocsr()

    return OperatorSet(
        mesh=mesh,
        sigma=float(sigma),
        grad_bulk=g_bulk,
        edge_w_bulk=w,
        grad_surf=g_surf,
        edge_w_surf=sw,
        stiff_bulk=k_bulk,
        stiff_surf=k_surf,
        stiff_surf_nodal=k_surf_nodal,
        a_sigma=(k_bulk + sigma * k_surf_nodal).tocsr(),
        laplacian_bulk=lap,
        laplace_beltrami=lb,
        normal_derivative=_normal_derivative(mesh),
        trace=trace,
    )


def apply_a_sigma(ops: OperatorSet, p: PhasePair, q: PhasePair) -> float:
    gp = ops.grad_bulk @ p.bulk
    gq = ops.grad_bulk @ q.bulk
    value = float(np.dot(ops.edge_w_bulk * gp, gq))
    if ops.sigma and ops.edge_w_surf.size:
        sp_ = ops.grad_surf @ p.boundary
        sq = ops.grad_surf @ q.boundary
        value += ops.sigma * float(np.dot(ops.edge_w_surf * sp_, sq))
    return value


def _load(ops: OperatorSet, f: PhasePair) -> np.ndarray:
    mesh = ops.mesh
    g = mesh.bulk_weights * f.bulk
    np.add.at(g, mesh.trace_map, mesh.boundary_weights * f.boundary)
    return g


def apply_duality(ops: OperatorSet, w: PhasePair) -> DualPair:
    """Riesz representative of ``z -> a_sigma(w, z)``."""
    return ops.mesh.dual(ops.k_sigma(w.bulk) / ops.mesh.nodal_mass)


def _pcg(apply, b, diag, rtol, maxiter, stall_window):
    x = np.zeros_like(b)
    r = b - b.mean()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return x
    z = r / diag
    p = z.copy()
    rz = r @ z
    best, since_best = np.inf, 0
    for _ in range(maxiter):
        ap = apply(p)
        alpha = rz / (p @ ap)
        x += alpha * p
        r -= alpha * ap
        r -= r.mean()
        rnorm = np.linalg.norm(r)
        if rnorm <= rtol * bnorm:
            return x
        if rnorm < 0.999 * best:
            best, since_best = rnorm, 0
        else:
            since_best += 1
            if since_best > stall_window:
                break
        z = r / diag
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverStall(f"conjugate gradients stalled at relative residual {rnorm / bnorm:.3e}")


def solve_a_sigma_inverse(ops: OperatorSet, f: PhasePair, rtol: float = 1e-12) -> DualPair:
    """Zero-mean ``w`` with ``a_sigma(w, z) = (f, z)_H`` for every discrete ``z``.

    Preconditioned conjugate gradients on the singular stiffness matrix; the
    residual is projected off the constants every iteration so roundoff
    cannot feed the kernel.

    Raises
    ------
    NonZeroMean
        If ``m(f)`` is not zero within ``1e-10``.
    SolverStall
        If the residual stops decreasing before reaching ``rtol``.
    """
    mesh = ops.mesh
    require_zero_mean(mesh, f)
    g = _load(ops, f)
    n = mesh.n_bulk
    diag = ops.a_sigma.diagonal()
    x = _pcg(lambda v: ops.a_sigma @ v, g, diag, rtol, maxiter=20 * n + 100, stall_window=2 * n + 50)
    w = mesh.dual(x)
    return project(mesh, w)


def dual_norm(ops: OperatorSet, f: PhasePair) -> float:
    """``sqrt(<f, A_sigma^{-1} f>)`` for a zero-mean pair ``f``."""
    w = solve_a_sigma_inverse(ops, f)
    return float(np.sqrt(max(inner_h(ops.mesh, f, w), 0.0)))


def poincare_constant(ops: OperatorSet, mesh: Mesh | None = None, trials: int = 20, seed: int = 0,
                      power_iters: int = 200, return_history: bool = False):
    """Empirical Poincaré constant ``max ||z||_H^2 / a_sigma(z, z)`` over zero-mean ``z``.

    Random trial pairs give a running maximum that is then refined by
    inverse power iteration with ``A_sigma^{-1}``.
    """
    if trials < 10:
        raise ValueError("need at least 10 trials")
    mesh = mesh or ops.mesh
    rng = np.random.default_rng(seed)
    best, history = 0.0, []
    z = None
    for _ in range(trials):
        cand = project(mesh, mesh.pair(rng.standard_normal(mesh.n_bulk)))
        ratio = inner_h(mesh, cand, cand) / apply_a_sigma(ops, cand, cand)
        if ratio > best:
            best, z = ratio, cand
        history.append(best)
    for _ in range(power_iters):
        z = solve_a_sigma_inverse(ops, z)
        z = z * (1.0 / np.sqrt(inner_h(mesh, z, z)))
        ratio = inner_h(mesh, z, z) / apply_a_sigma(ops, z, z)
        prev = best
        best = max(best, ratio)
        history.append(best)
        if best - prev <= 1e-13 * best:
            break
    return (best, history) if return_history else best


def dump_matrix(matrix, path) -> None:
    """Write a sparse matrix as ``row col value`` lines."""
    coo = sp.coo_matrix(matrix)
    with open(path, "w") as fh:
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{int(r)} {int(c)} {float(v)!r}\n")
