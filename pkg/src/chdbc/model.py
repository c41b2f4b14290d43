"""Discrete free energy and its variational derivative.

Shared by the time stepper, the stationary solver and the diagnostics so
that all three see exactly the same discrete problem.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError
from .mesh import Mesh, PhasePair
from .operators import OperatorSet, assemble_operators
from .potentials import (
    PotentialSpec,
    YosidaConfig,
    eval_beta,
    eval_beta_hat,
    eval_beta_prime,
    yosida_beta,
    yosida_beta_hat,
    yosida_beta_prime,
)

__all__ = ["ModelParams", "Potentials", "DiscreteModel"]


@dataclass(frozen=True)
class ModelParams:
    sigma: float = 0.0
    chi: float = 1.0
    kappa: float = 0.0
    viscous_eps: float = 0.0
    yosida_eps: float = 0.0
    m0: float = 0.0

    def __post_init__(self):
        for name in ("sigma", "kappa", "viscous_eps", "yosida_eps"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if not self.chi > 0:
            raise ConfigError("chi must be positive")
        if not -1.0 < self.m0 < 1.0:
            raise ConfigError("m0 must lie in open interval (-1,1)")


@dataclass(frozen=True)
class Potentials:
    """Bulk and surface potentials; the surface defaults to the bulk one."""

    bulk: PotentialSpec
    surface: PotentialSpec = field(default=None)

    def __post_init__(self):
        if self.surface is None:
            object.__setattr__(self, "surface", self.bulk)

    @property
    def singular(self) -> bool:
        return self.bulk.singular or self.surface.singular


class DiscreteModel:
    """Lumped-mass discretization of the bulk-surface energy.

    With nodal values ``u`` (boundary values are the trace) the energy is

        E_h(u) = 1/2 u^T K_bulk u + chi/2 u_G^T K_surf u_G
                 + sum_i w_i F(u_i) + sum_b w_b F_Gamma(u_b)

    and the chemical potential is its gradient divided by the nodal mass,
    i.e. the ``H``-Riesz representative of ``dE_h``.
    """

    def __init__(self, mesh: Mesh, params: ModelParams, potentials: Potentials, ops: OperatorSet | None = None):
        self.mesh = mesh
        self.params = params
        self.potentials = potentials
        self.ops = ops if ops is not None else assemble_operators(mesh, params.sigma)
        if self.ops.sigma != params.sigma:
            raise ConfigError("operator set was assembled with a different sigma")
        self.wb = mesh.bulk_weights
        self.ws = mesh.surface_mass
        self.mass = mesh.nodal_mass
        eps = params.yosida_eps
        if eps > 0:
            self._ycfg_bulk = YosidaConfig(eps)
            self._ycfg_surf = YosidaConfig(potentials.bulk.c1 * eps)
        else:
            self._ycfg_bulk = self._ycfg_surf = None

    @property
    def exact_singular(self) -> bool:
        """True when ``beta`` is the unregularized singular graph."""
        return self.potentials.singular and self.params.yosida_eps == 0

    def _beta(self, spec, cfg, u):
        if cfg is None:
            return eval_beta(spec, u)
        return yosida_beta(spec, cfg, u)

    def _beta_prime(self, spec, cfg, u):
        if cfg is None:
            return eval_beta_prime(spec, u)
        return yosida_beta_prime(spec, cfg, u)

    def _beta_hat(self, spec, cfg, u):
        if cfg is None:
            return eval_beta_hat(spec, u)
        return yosida_beta_hat(spec, cfg, u)

    def _boundary(self, u):
        return u[self.mesh.trace_map]

    def _scatter(self, values_b):
        out = np.zeros(self.mesh.n_bulk)
        np.add.at(out, self.mesh.trace_map, self.mesh.boundary_weights * values_b)
        return out

    def beta_load(self, u):
        """Nodal load of the monotone part and the diagonal of its Jacobian."""
        pb, ps = self.potentials.bulk, self.potentials.surface
        ub = self._boundary(u)
        load = self.wb * self._beta(pb, self._ycfg_bulk, u) + self._scatter(self._beta(ps, self._ycfg_surf, ub))
        jac = self.wb * self._beta_prime(pb, self._ycfg_bulk, u) + self._scatter(
            self._beta_prime(ps, self._ycfg_surf, ub)
        )
        return load, jac

    def pi_load(self, u):
        pb, ps = self.potentials.bulk, self.potentials.surface
        return self.wb * pb.pi(u) + self._scatter(ps.pi(self._boundary(u)))

    def pi_jac(self, u):
        pb, ps = self.potentials.bulk, self.potentials.surface
        return self.wb * pb.pi_prime(u) + self._scatter(ps.pi_prime(self._boundary(u)))

    def k_chi(self, u):
        ops = self.ops
        return ops.k_bulk(u) + self.params.chi * ops.k_surf_nodal(u)

    def k_chi_matrix(self):
        return self.ops.stiff_bulk + self.params.chi * self.ops.stiff_surf_nodal

    def k_flux(self, mu):
        """Mobility form acting on the chemical potential, including wall permeability."""
        out = self.ops.k_sigma(mu)
        if self.params.kappa:
            out = out + self.params.kappa * self.ws * mu
        return out

    def k_flux_matrix(self):
        mat = self.ops.a_sigma
        if self.params.kappa:
            mat = mat + self.params.kappa * sp.diags(self.ws)
        return mat.tocsr()

    def gradient(self, u):
        """``dE_h/du`` as a nodal load vector."""
        return self.k_chi(u) + self.beta_load(u)[0] + self.pi_load(u)

    def chemical_potential(self, u) -> np.ndarray:
        return self.gradient(u) / self.mass

    def energy(self, u) -> float:
        ops, pb, ps = self.ops, self.potentials.bulk, self.potentials.surface
        gu = ops.grad_bulk @ u
        value = 0.5 * float(np.dot(ops.edge_w_bulk, gu * gu))
        ub = self._boundary(u)
        if ops.edge_w_surf.size:
            gs = ops.grad_surf @ ub
            value += 0.5 * self.params.chi * float(np.dot(ops.edge_w_surf, gs * gs))
        value += float(np.dot(self.wb, self._beta_hat(pb, self._ycfg_bulk, u) + pb.pi_hat(u)))
        value += float(
            np.dot(self.mesh.boundary_weights, self._beta_hat(ps, self._ycfg_surf, ub) + ps.pi_hat(ub))
        )
        return value

    def pair(self, u) -> PhasePair:
        return self.mesh.pair(u)
