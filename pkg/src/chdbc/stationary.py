"""Steady states of the mass-constrained nonlocal elliptic problem.

A steady state solves

    K_chi u + B(u) + Pi(u) = mu_s * M 1,      m(u) = m0,

with a constant chemical potential ``mu_s``. The scalar ``mu_s`` is the
Lagrange multiplier of the mass constraint, so Newton runs on the bordered
system in ``(u, mu_s)``. Summing the first block of equations gives the
average formula for ``mu_s`` as an exact consequence, which
:func:`mu_s_from_average` checks independently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateSamples, NewtonDivergence, NonAdmissibleIterate
from .mesh import Mesh, PhasePair, inner_h, mean, project
from .model import DiscreteModel, ModelParams, Potentials
from .operators import OperatorSet
from .potentials import eval_beta, eval_pi
from .stepper import clamp_bound, solve_sparse

__all__ = [
    "SteadyState",
    "SeparationReport",
    "LojasiewiczEstimate",
    "solve_steady",
    "mu_s_from_average",
    "steady_separation_report",
    "estimate_lojasiewicz",
]

# pseudo-transient continuation: initial pseudo time step and the value
# beyond which the shift is dropped
PTC_TAU0 = 1.0
PTC_SWITCH_BACK = 1e8


@dataclass(frozen=True)
class SteadyState:
    u: PhasePair
    mu_s: float
    residual_norm: float
    delta_sep: float
    iterations: int = 0
    clamp_events: int = 0


def _residual(model: DiscreteModel, u, mu_s, m0):
    mesh = model.mesh
    r = model.gradient(u) - mu_s * model.mass
    g = mean(mesh, mesh.pair(u)) - m0
    return r, g


def _h_norm_of_load(model: DiscreteModel, r) -> float:
    return float(np.sqrt(np.sum(r * r / model.mass)))


def solve_steady(mesh: Mesh, ops: OperatorSet, params: ModelParams, potentials: Potentials,
                 guess: PhasePair, tol: float = 1e-10, max_iter: int = 100,
                 clamp_k: int = 2, max_clamp_events: int = 25) -> SteadyState:
    """Newton on the bordered steady-state system.

    The guess is shifted to mean ``params.m0`` first. Trial iterates are
    clamped with the same truncation as the time stepper and globalized by
    residual backtracking. Inside the spinodal region the Jacobian is
    indefinite and the residual norm can stall at a nonzero local minimum;
    when backtracking fails the iteration switches to pseudo-transient
    continuation (Jacobian shifted by ``M / tau``, ``tau`` grown by the
    residual ratio) and returns to plain Newton once ``tau`` is large.
    Convergence means the ``H``-norm of the residual and the mass defect
    are both at most ``tol``.

    Raises
    ------
    NonAdmissibleIterate
        If the guess is not strictly inside ``(-1, 1)`` or clamping is
        needed on more than ``max_clamp_events`` iterations.
    NewtonDivergence
        If the iteration fails to converge.
    """
    model = DiscreteModel(mesh, params, potentials, ops)
    m0 = params.m0
    u = guess.bulk + (m0 - mean(mesh, guess))
    if model.exact_singular and float(np.max(np.abs(u))) >= 1.0 - 1e-12:
        raise NonAdmissibleIterate("guess is not strictly inside (-1, 1) after the mean shift")
    mu_s = mu_s_from_average(mesh, mesh.pair(u), potentials, params)
    n = u.size
    mvec = model.mass
    border = sp.csr_matrix(mvec.reshape(-1, 1))
    constraint = sp.csr_matrix((mvec / mesh.total_measure).reshape(1, -1))
    kchi = model.k_chi_matrix()
    clamps = 0
    tau = math.inf

    r, g = _residual(model, u, mu_s, m0)
    res = np.hypot(_h_norm_of_load(model, r), g)
    it = 0
    while res > tol:
        it += 1
        if it > max_iter:
            raise NewtonDivergence(f"steady Newton did not converge in {max_iter} iterations (residual {res:.3e})")
        _, bjac = model.beta_load(u)
        diag = bjac + model.pi_jac(u)
        if math.isfinite(tau):
            diag = diag + mvec / tau
        jac = sp.bmat([[kchi + sp.diags(diag), -border], [constraint, None]], format="csc")
        delta = solve_sparse(jac, -np.concatenate([r, [g]]))
        du, dmu = delta[:n], delta[n]
        bound = clamp_bound(u, clamp_k) if model.exact_singular else None

        def trial(alpha):
            u_try = u + alpha * du
            clamped = bound is not None and bool(np.any(np.abs(u_try) > bound))
            if clamped:
                u_try = np.clip(u_try, -bound, bound)
            mu_try = mu_s + alpha * dmu
            r_try, g_try = _residual(model, u_try, mu_try, m0)
            return u_try, mu_try, r_try, g_try, np.hypot(_h_norm_of_load(model, r_try), g_try), clamped

        if math.isfinite(tau):
            u_try, mu_try, r_try, g_try, res_try, clamped = trial(1.0)
            if not np.isfinite(res_try) or res_try > 10.0 * res:
                tau *= 0.25
                if tau < 1e-12:
                    raise NewtonDivergence(f"steady continuation stalled (residual {res:.3e})")
                continue
            tau *= min(4.0, res / res_try)
            if tau > PTC_SWITCH_BACK:
                tau = math.inf
        else:
            alpha = 1.0
            while True:
                u_try, mu_try, r_try, g_try, res_try, clamped = trial(alpha)
                if res_try <= (1.0 - 1e-4 * alpha) * res or res_try <= tol:
                    break
                alpha *= 0.5
                if alpha < 2.0**-30:
                    break
            if alpha < 2.0**-30:
                tau = PTC_TAU0
                continue
        if clamped:
            clamps += 1
            if clamps > max_clamp_events:
                raise NonAdmissibleIterate(f"iterates clamped on {clamps} Newton steps")
        u, mu_s, r, g, res = u_try, mu_try, r_try, g_try, res_try

    pair = mesh.pair(u)
    return SteadyState(
        u=pair,
        mu_s=float(mu_s),
        residual_norm=float(res),
        delta_sep=1.0 - pair.max_abs(),
        iterations=it,
        clamp_events=clamps,
    )


def mu_s_from_average(mesh: Mesh, u: PhasePair, potentials: Potentials, params: ModelParams | None = None) -> float:
    """Average of ``beta + pi`` over bulk and boundary.

    Evaluates the exact singular ``beta`` (raising ``DomainError`` near
    ``+-1``) unless ``params.yosida_eps > 0``.
    """
    if params is not None and params.yosida_eps > 0:
        model = DiscreteModel(mesh, params, potentials)
        load, _ = model.beta_load(u.bulk)
        return float((np.sum(load) + np.sum(model.pi_load(u.bulk))) / mesh.total_measure)
    pb, ps = potentials.bulk, potentials.surface
    bulk = np.asarray(eval_beta(pb, u.bulk)) + np.asarray(eval_pi(pb, u.bulk))
    surf = np.asarray(eval_beta(ps, u.boundary)) + np.asarray(eval_pi(ps, u.boundary))
    total = np.dot(mesh.bulk_weights, bulk) + np.dot(mesh.boundary_weights, surf)
    return float(total / mesh.total_measure)


@dataclass(frozen=True)
class SeparationReport:
    delta_sep: float
    mu_abs: float
    delta_threshold: float
    mesh_tol: float

    @property
    def certified(self) -> bool:
        return self.delta_sep >= self.delta_threshold - self.mesh_tol

    def lines(self):
        yield f"delta_sep        {self.delta_sep:.12g}"
        yield f"|mu_s|           {self.mu_abs:.12g}"
        yield f"delta_threshold  {self.delta_threshold:.12g}"
        yield f"mesh_tol         {self.mesh_tol:.3g}"
        yield f"certified        {self.certified}"


def _f(spec, r):
    r = np.asarray(r, dtype=float)
    return spec.beta_raw(r) + spec.pi(r)


def _edge_threshold(spec, level: float, sign: int) -> float:
    """Largest ``delta`` with ``sign * f(sign * r) >= level`` on ``[1 - delta, 1]``.

    ``f = beta + pi`` is increasing next to the singular end, so the set of
    admissible ``r`` near ``sign * 1`` is an interval; its inner end is
    bracketed by stepping away from the end and refined by bisection.
    """
    edge = 1.0 - 1e-15
    if sign * _f(spec, sign * edge) < level:
        return 0.0
    hi = edge  # admissible
    lo = None
    d = 1e-12
    while d < 2.0:
        r = 1.0 - d
        if sign * _f(spec, sign * r) < level:
            lo = r
            break
        hi = r
        d *= 2.0
    if lo is None:
        return 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if sign * _f(spec, sign * mid) >= level:
            hi = mid
        else:
            lo = mid
    return 1.0 - hi


def steady_separation_report(ss: SteadyState, potentials: Potentials, params: ModelParams | None = None,
                             mesh_tol: float = 0.0) -> SeparationReport:
    """Compare the measured separation with the threshold built from ``|mu_s|``.

    The threshold is the largest ``delta`` such that
    ``f(r) - |mu_s| >= 1`` on ``[1 - delta, 1]`` and ``f(r) + |mu_s| <= -1``
    on ``[-1, -1 + delta]`` for both bulk and surface ``f = beta + pi``.
    """
    level = abs(ss.mu_s) + 1.0
    deltas = []
    for spec in {id(potentials.bulk): potentials.bulk, id(potentials.surface): potentials.surface}.values():
        deltas.append(_edge_threshold(spec, level, +1))
        deltas.append(_edge_threshold(spec, level, -1))
    return SeparationReport(
        delta_sep=ss.delta_sep,
        mu_abs=abs(ss.mu_s),
        delta_threshold=float(min(deltas)),
        mesh_tol=mesh_tol,
    )


@dataclass(frozen=True)
class LojasiewiczEstimate:
    theta_hat: float
    max_slope: float
    fit_residual: float
    slopes: np.ndarray
    n_samples: int


def estimate_lojasiewicz(mesh: Mesh, ops: OperatorSet, ss: SteadyState, potentials: Potentials,
                         params: ModelParams, n_samples: int = 200, radius: float = 1e-2,
                         n_directions: int = 20, seed: int = 0) -> LojasiewiczEstimate:
    """Empirical gradient-inequality exponent around a steady state.

    Perturbations ``w = u_s + s * xi`` use zero-mean random directions ``xi``
    (normalized to unit max-norm) and radii ``s`` log-spaced in
    ``[radius * 1e-3, radius]``. Along each direction the slope of
    ``log ||P mu(w)||_H`` against ``log |E(w) - E(u_s)|`` is fitted; the
    inequality with exponent ``theta`` needs every slope ``<= 1 - theta``,
    so ``theta_hat = 1 - max slope``, clipped to ``(0, 1/2]``.

    Raises
    ------
    DegenerateSamples
        If every energy gap is below ``1e-14``.
    """
    model = DiscreteModel(mesh, params, potentials, ops)
    rng = np.random.default_rng(seed)
    per_dir = max(3, n_samples // n_directions)
    radii = radius * np.logspace(-3, 0, per_dir)
    e_ref = model.energy(ss.u.bulk)
    e_floor = max(1e-14, 1e-13 * abs(e_ref))
    slopes, residuals, used, any_valid = [], [], 0, False
    for _ in range(n_directions):
        xi = project(mesh, mesh.pair(rng.standard_normal(mesh.n_bulk))).bulk
        xi /= np.max(np.abs(xi))
        log_g, log_e = [], []
        for s in radii:
            w = ss.u.bulk + s * xi
            if model.exact_singular and np.max(np.abs(w)) >= 1.0 - 1e-12:
                continue
            e = abs(model.energy(w) - e_ref)
            if e < e_floor:
                continue
            any_valid = True
            grad = project(mesh, mesh.pair(model.chemical_potential(w)))
            g = np.sqrt(inner_h(mesh, grad, grad))
            log_g.append(np.log(g))
            log_e.append(np.log(e))
        if len(log_e) < 3:
            continue
        coeffs, res, *_ = np.polyfit(log_e, log_g, 1, full=True)
        slopes.append(coeffs[0])
        residuals.append(np.sqrt(res[0] / len(log_e)) if res.size else 0.0)
        used += len(log_e)
    if not any_valid or not slopes:
        raise DegenerateSamples("all sampled energy gaps are below 1e-14")
    slopes = np.array(slopes)
    theta = float(np.clip(1.0 - slopes.max(), 1e-12, 0.5))
    return LojasiewiczEstimate(
        theta_hat=theta,
        max_slope=float(slopes.max()),
        fit_residual=float(np.sqrt(np.mean(np.square(residuals)))),
        slopes=slopes,
        n_samples=used,
    )
