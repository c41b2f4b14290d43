"""Energy-stable, mass-conserving time stepping.

One step solves, for the nodal unknowns ``(u, mu)`` at the new time level,

    M (u - u_old) / dt + (K_sigma + kappa S) mu = 0
    M mu = K_chi u + B(u) + Pi(u_old) + eps_v M (u - u_old) / dt

where ``M`` is the lumped bulk + surface mass, ``S`` the surface mass,
``B`` the monotone (convex-energy) load treated implicitly and ``Pi`` the
Lipschitz (concave-energy) load treated explicitly. Testing the first line
with the constant pair gives exact conservation of ``m(u)`` when
``kappa = 0``; convexity of the implicit part and concavity of the explicit
part give ``E_h(u_new) <= E_h(u_old)`` for every ``dt``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InadmissibleInitialData, NewtonDivergence, SeparationBreach, StepFloorReached
from .mesh import Mesh, PhasePair, mean
from .model import DiscreteModel, ModelParams, Potentials
from .operators import OperatorSet

__all__ = [
    "ModelParams",
    "Potentials",
    "StepConfig",
    "State",
    "InitialProfile",
    "initial_state",
    "step",
    "run",
    "clamp_bound",
    "solve_sparse",
]

log = logging.getLogger(__name__)

SEPARATION_FLOOR = 1e-12
DIRECT_SOLVE_LIMIT = 40_000
# residual (relative to the gradient scale) that counts as converged when
# the line search can no longer make progress
ROUNDOFF_RESIDUAL = 1e-12


@dataclass(frozen=True)
class StepConfig:
    dt: float = 1e-3
    newton_tol: float = 1e-11
    newton_max_iter: int = 50
    linesearch: str = "backtracking"
    clamp_k: int = 2
    dt_min: float | None = None
    dt_max: float | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.clamp_k < 2:
            raise ValueError("clamp_k must be >= 2")
        if self.linesearch not in ("none", "backtracking"):
            raise ValueError("linesearch must be 'none' or 'backtracking'")


@dataclass(frozen=True)
class State:
    t: float
    u: PhasePair
    mu: PhasePair
    step_count: int = 0
    dt_last: float = 0.0
    newton_iters: int = 0


@dataclass(frozen=True)
class InitialProfile:
    """Initial datum before the mean shift.

    ``kind`` is one of ``constant``, ``random``, ``tanh``, ``cosine``,
    ``file`` (a snapshot CSV) or ``values`` (an explicit nodal array).
    """

    kind: str = "constant"
    amplitude: float = 0.05
    width: float = 1.0
    seed: int = 0
    values: np.ndarray | None = field(default=None, repr=False)
    path: str | None = None

    def evaluate(self, mesh: Mesh, m0: float) -> np.ndarray:
        x, y = mesh.x, mesh.y
        if self.kind == "constant":
            return np.full(mesh.n_bulk, m0)
        if self.kind == "random":
            rng = np.random.default_rng(self.seed)
            return m0 + self.amplitude * rng.uniform(-1.0, 1.0, mesh.n_bulk)
        if self.kind == "tanh":
            if mesh.kind == "interval":
                s = (x - 0.5 * mesh.lengths[0]) / self.width
            else:
                lx = mesh.lengths[0]
                s = lx / (2 * np.pi) * np.cos(2 * np.pi * x / lx) / self.width
            return m0 + self.amplitude * np.tanh(s)
        if self.kind == "cosine":
            if mesh.kind == "interval":
                return m0 + self.amplitude * np.cos(np.pi * x / mesh.lengths[0])
            lx, ly = mesh.lengths
            return m0 + self.amplitude * np.cos(2 * np.pi * x / lx) * np.cos(np.pi * y / ly)
        if self.kind == "values":
            values = np.asarray(self.values, dtype=float)
            if values.shape != (mesh.n_bulk,):
                raise InadmissibleInitialData(f"expected {mesh.n_bulk} nodal values, got {values.shape}")
            return values.copy()
        if self.kind == "file":
            from .io import read_snapshot

            return read_snapshot(self.path, mesh)
        raise ValueError(f"unknown initial profile {self.kind!r}")


def _check_admissible(values: np.ndarray, model: DiscreteModel, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise InadmissibleInitialData(f"{what} contains non-finite values")
    if model.potentials.singular:
        worst = float(np.max(np.abs(values)))
        if worst >= 1.0 - SEPARATION_FLOOR:
            raise InadmissibleInitialData(f"{what} reaches a pure state (max |u| = {worst!r})")


def initial_state(mesh: Mesh, profile: InitialProfile, params: ModelParams, potentials: Potentials,
                  ops: OperatorSet | None = None) -> State:
    """State at ``t = 0`` with ``m(u) = m0`` and ``mu`` from one evaluation of the energy gradient."""
    model = DiscreteModel(mesh, params, potentials, ops)
    values = profile.evaluate(mesh, params.m0)
    _check_admissible(values, model, "initial profile")
    values = values + (params.m0 - mean(mesh, mesh.pair(values)))
    _check_admissible(values, model, "mean-shifted initial profile")
    return State(t=0.0, u=mesh.pair(values), mu=mesh.pair(model.chemical_potential(values)))


def clamp_bound(u_ref: np.ndarray, clamp_k: int) -> float:
    """Upper clamp ``1 - 1/k`` with ``k = max(clamp_k, ceil(2 / delta))``."""
    delta = 1.0 - float(np.max(np.abs(u_ref)))
    k = max(clamp_k, math.ceil(2.0 / max(delta, 1e-300)))
    return 1.0 - 1.0 / k


def solve_sparse(matrix: sp.spmatrix, rhs: np.ndarray) -> np.ndarray:
    """Direct sparse solve for desk-scale systems, ILU-preconditioned GMRES beyond."""
    matrix = matrix.tocsc()
    if matrix.shape[0] <= DIRECT_SOLVE_LIMIT:
        return spla.splu(matrix).solve(rhs)
    ilu = spla.spilu(matrix, drop_tol=1e-6, fill_factor=20)
    x, info = spla.gmres(matrix, rhs, M=spla.LinearOperator(matrix.shape, ilu.solve), rtol=1e-13, restart=200)
    if info != 0:
        raise NewtonDivergence(f"GMRES failed to converge (info={info})")
    return x


class _StepSystem:
    def __init__(self, model: DiscreteModel, u_old: np.ndarray, dt: float):
        self.model = model
        self.u_old = u_old
        self.dt = dt
        self.pi_old = model.pi_load(u_old)
        self.mass = model.mass
        self.flux = model.k_flux_matrix()
        self.kchi = model.k_chi_matrix()
        self.visc = model.params.viscous_eps / dt

    def residual(self, u, mu):
        m, model = self.mass, self.model
        r1 = m * (u - self.u_old) + self.dt * model.k_flux(mu)
        rhs = model.k_chi(u) + model.beta_load(u)[0] + self.pi_old
        if self.visc:
            rhs = rhs + self.visc * m * (u - self.u_old)
        r2 = m * mu - rhs
        return r1, r2

    def norm(self, r1, r2):
        return float(np.sqrt(np.sum(r1 * r1 / self.mass) + np.sum(r2 * r2 / self.mass)))

    def jacobian(self, u):
        _, bjac = self.model.beta_load(u)
        diag = bjac + self.visc * self.mass
        m = sp.diags(self.mass)
        return sp.bmat([[m, self.dt * self.flux], [-(self.kchi + sp.diags(diag)), m]], format="csc")


def _newton(model: DiscreteModel, u_old: np.ndarray, dt: float, cfg: StepConfig):
    sysm = _StepSystem(model, u_old, dt)
    n = u_old.size
    u = u_old.copy()
    mu = (model.k_chi(u) + model.beta_load(u)[0] + sysm.pi_old) / model.mass
    bound = clamp_bound(u_old, cfg.clamp_k) if model.exact_singular else None
    r1, r2 = sysm.residual(u, mu)
    res = sysm.norm(r1, r2)
    scale = 1.0 + float(np.sqrt(np.sum(model.gradient(u) ** 2 / model.mass)))
    if res <= 1e-15 * scale:
        return u, mu, 0
    for it in range(1, cfg.newton_max_iter + 1):
        delta = solve_sparse(sysm.jacobian(u), -np.concatenate([r1, r2]))
        du, dmu = delta[:n], delta[n:]
        alpha = 1.0
        while True:
            u_try = u + alpha * du
            clamped = False
            if bound is not None and np.any(np.abs(u_try) > bound):
                u_try = np.clip(u_try, -bound, bound)
                clamped = True
            mu_try = mu + alpha * dmu
            r1_try, r2_try = sysm.residual(u_try, mu_try)
            res_try = sysm.norm(r1_try, r2_try)
            if cfg.linesearch == "none" or res_try <= (1.0 - 1e-4 * alpha) * res or res_try <= 1e-14 * scale:
                break
            alpha *= 0.5
            if alpha < 2.0**-30:
                if res <= ROUNDOFF_RESIDUAL * scale:
                    return u, mu, it
                raise NewtonDivergence(f"line search failed at Newton iteration {it} (residual {res:.3e})")
        u, mu, r1, r2, res = u_try, mu_try, r1_try, r2_try, res_try
        if not np.all(np.isfinite(u)) or not np.all(np.isfinite(mu)):
            raise NewtonDivergence("non-finite Newton iterate")
        small = float(np.max(np.abs(du))) <= cfg.newton_tol or res <= ROUNDOFF_RESIDUAL * scale
        if alpha == 1.0 and not clamped and small:
            return u, mu, it
    raise NewtonDivergence(f"Newton did not converge in {cfg.newton_max_iter} iterations (residual {res:.3e})")


def step(state: State, mesh: Mesh, ops: OperatorSet, params: ModelParams, potentials: Potentials,
         cfg: StepConfig, dt: float | None = None) -> State:
    """Advance ``state`` by one backward-Euler convex-splitting step.

    Raises
    ------
    NewtonDivergence
        The nonlinear solve failed; a smaller ``dt`` usually helps.
    SeparationBreach
        A converged node reached ``1 - 1e-12`` in magnitude under the
        unregularized singular potential.
    """
    dt = cfg.dt if dt is None else dt
    model = DiscreteModel(mesh, params, potentials, ops)
    u, mu, iters = _newton(model, state.u.bulk, dt, cfg)
    if model.exact_singular:
        worst = float(np.max(np.abs(u)))
        if worst >= 1.0 - SEPARATION_FLOOR:
            raise SeparationBreach(f"max |u| = {worst!r} at t = {state.t + dt:g}")
    return State(
        t=state.t + dt,
        u=mesh.pair(u),
        mu=mesh.pair(mu),
        step_count=state.step_count + 1,
        dt_last=dt,
        newton_iters=iters,
    )


def run(state: State, mesh: Mesh, ops: OperatorSet, params: ModelParams, potentials: Potentials,
        cfg: StepConfig, t_end: float, callbacks=()) -> State:
    """Step until ``t_end`` with adaptive ``dt``.

    ``dt`` is halved on :class:`NewtonDivergence` (down to ``cfg.dt_min``)
    and doubled after 10 consecutive accepted steps (up to ``cfg.dt_max``,
    which defaults to ``cfg.dt``). Each callback is called as
    ``callback(new_state, old_state)`` after every accepted step.
    """
    if t_end < state.t:
        raise ValueError("t_end precedes the current time")
    dt = cfg.dt
    dt_min = cfg.dt_min if cfg.dt_min is not None else cfg.dt / 2**10
    dt_max = cfg.dt_max if cfg.dt_max is not None else cfg.dt
    streak = 0
    t_tol = 1e-12 * max(1.0, abs(t_end))
    while t_end - state.t > t_tol:
        remaining = t_end - state.t
        h = remaining if remaining <= dt * (1.0 + 1e-9) else dt
        try:
            new = step(state, mesh, ops, params, potentials, cfg, dt=h)
        except NewtonDivergence as exc:
            dt *= 0.5
            streak = 0
            log.debug("step rejected at t=%g (%s); dt -> %g", state.t, exc, dt)
            if dt < dt_min:
                raise StepFloorReached(f"dt fell below dt_min={dt_min:g} at t={state.t:g}: {exc}") from exc
            continue
        if h == remaining:
            new = replace(new, t=t_end)
        for cb in callbacks:
            cb(new, state)
        state = new
        streak += 1
        if streak >= 10 and dt < dt_max:
            dt = min(2.0 * dt, dt_max)
            streak = 0
    return state
