"""Conserved, dissipated and decaying quantities along a trajectory."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .errors import IdentityNotApplicable, NotDecaying
from .mesh import Mesh, PhasePair, mean, norm_h, project
from .model import DiscreteModel, ModelParams, Potentials
from .operators import OperatorSet, dual_norm

__all__ = [
    "DiagnosticsRecord",
    "DecayFit",
    "CSV_COLUMNS",
    "energy",
    "record",
    "check_energy_identity",
    "fit_decay",
    "write_csv",
    "read_csv",
    "write_decay_fit",
]

# fits with a decay exponent this close to 1/2 come from faster than
# algebraic (typically exponential) decay
SATURATION_THETA = 0.49


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mass: float
    total_mass_raw: float
    energy: float
    dissipation: float
    boundary_mu_integral: float
    separation: float
    mu_mean: float
    dist_to_steady: float = math.nan


CSV_COLUMNS = tuple(f.name for f in fields(DiagnosticsRecord))


def energy(mesh: Mesh, ops: OperatorSet, u: PhasePair, potentials: Potentials, params: ModelParams) -> float:
    """Discrete free energy of ``u`` (bulk and chi-weighted surface gradients plus potentials)."""
    return DiscreteModel(mesh, params, potentials, ops).energy(u.bulk)


def record(state, mesh: Mesh, ops: OperatorSet, potentials: Potentials, params: ModelParams,
           prev_state=None, reference: PhasePair | None = None) -> DiagnosticsRecord:
    """Diagnostics of one state.

    The dissipation is the squared dual norm of ``(u - u_prev) / dt``; it is
    zero when there is no previous state. With permeable walls the rate
    has nonzero mean, and the dual norm is taken of its zero-mean part.
    ``dist_to_steady`` is the ``H``-norm distance to ``reference`` (NaN
    without one).
    """
    u, mu = state.u, state.mu
    diss = 0.0
    if prev_state is not None:
        dt = state.t - prev_state.t
        if dt > 0:
            rate = (u - prev_state.u) * (1.0 / dt)
            diss = dual_norm(ops, project(mesh, rate)) ** 2
    dist = math.nan if reference is None else norm_h(mesh, u - reference)
    return DiagnosticsRecord(
        t=float(state.t),
        mass=mean(mesh, u),
        total_mass_raw=float(np.dot(mesh.bulk_weights, u.bulk) + np.dot(mesh.boundary_weights, u.boundary)),
        energy=energy(mesh, ops, u, potentials, params),
        dissipation=float(diss),
        boundary_mu_integral=float(np.dot(mesh.boundary_weights, mu.boundary)),
        separation=1.0 - u.max_abs(),
        mu_mean=mean(mesh, mu),
        dist_to_steady=float(dist),
    )


def check_energy_identity(series, dt: float | None = None, kappa: float = 0.0, t_min: float = 0.0) -> float:
    """Largest defect ``|dE/dt + dissipation|`` over consecutive records.

    Each difference quotient uses the time gap of its two records (``dt``
    is only a fallback for records with equal times). The defect is
    normalized by ``max(1, |E|)`` and is first order in the time step.
    Pairs ending at or before ``t_min`` are skipped; data that do not
    satisfy the boundary equation at ``t = 0`` have an initial layer whose
    first-step defect does not shrink with ``dt``.

    Raises
    ------
    IdentityNotApplicable
        For ``kappa > 0``, where boundary outflow adds a dissipation term.
    """
    if kappa > 0:
        raise IdentityNotApplicable("energy identity holds only for impermeable walls (kappa = 0)")
    worst = 0.0
    for prev, cur in zip(series[:-1], series[1:]):
        if cur.t <= t_min:
            continue
        h = cur.t - prev.t
        if not h > 0:
            if dt is None:
                continue
            h = dt
        defect = abs((cur.energy - prev.energy) / h + cur.dissipation) / max(1.0, abs(cur.energy))
        worst = max(worst, defect)
    return worst


@dataclass(frozen=True)
class DecayFit:
    theta_from_rate: float
    prefactor: float
    fit_window: tuple
    rms_residual: float
    slope: float
    saturated: bool = False
    n_points: int = 0


def fit_decay(series, reference=None, window: tuple | None = None, monotone_rtol: float = 1e-9,
              floor: float = 0.0) -> DecayFit:
    """Fit ``dist ~ C (1+t)^s`` and convert the rate to an exponent.

    ``series`` is a sequence of records or a pair of arrays ``(t, dist)``.
    Records already carry the distance to the steady state they were
    recorded against, so ``reference`` only serves as a label. The window
    defaults to the last half of the time span. The decay exponent is ``theta = |s| / (1 + 2|s|)``;
    fits with ``theta >= 0.49`` are flagged ``saturated``, the signature of
    faster than algebraic decay. Distances at or below ``floor`` are
    dropped from the fit.

    Raises
    ------
    NotDecaying
        If the distance increases by more than ``monotone_rtol`` (relative)
        anywhere in the window, if fewer than 3 points remain, or if the
        fitted slope is not negative.
    """
    if isinstance(series, tuple) and len(series) == 2 and not isinstance(series[0], DiagnosticsRecord):
        t, d = (np.asarray(a, dtype=float) for a in series)
    else:
        t = np.array([r.t for r in series], dtype=float)
        d = np.array([r.dist_to_steady for r in series], dtype=float)
    if t.size == 0:
        raise NotDecaying("empty series")
    lo, hi = window if window is not None else (t[0] + 0.5 * (t[-1] - t[0]), t[-1])
    sel = (t >= lo) & (t <= hi) & np.isfinite(d)
    tw, dw = t[sel], d[sel]
    if np.any(np.diff(dw) > monotone_rtol * dw[:-1]):
        k = int(np.argmax(np.diff(dw) > monotone_rtol * dw[:-1]))
        raise NotDecaying(f"distance increases at t={tw[k + 1]:g} inside the fit window [{lo:g}, {hi:g}]")
    keep = dw > floor
    tw, dw = tw[keep], dw[keep]
    if tw.size < 3:
        raise NotDecaying(f"only {tw.size} usable points in the fit window [{lo:g}, {hi:g}]")
    x, y = np.log1p(tw), np.log(dw)
    (slope, intercept), *_ = np.linalg.lstsq(np.column_stack([x, np.ones_like(x)]), y, rcond=None)
    if not slope < 0:
        raise NotDecaying(f"fitted slope {slope:.3g} is not negative")
    rms = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    s = abs(float(slope))
    theta = s / (1.0 + 2.0 * s)
    return DecayFit(
        theta_from_rate=theta,
        prefactor=float(np.exp(intercept)),
        fit_window=(float(lo), float(hi)),
        rms_residual=rms,
        slope=float(slope),
        saturated=theta >= SATURATION_THETA,
        n_points=int(tw.size),
    )


def write_csv(path, series) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for rec in series:
            w.writerow([repr(float(v)) for v in asdict(rec).values()])


def read_csv(path) -> list[DiagnosticsRecord]:
    with Path(path).open(newline="") as fh:
        return [DiagnosticsRecord(**{k: float(v) for k, v in row.items()}) for row in csv.DictReader(fh)]


def write_decay_fit(path, fit: DecayFit) -> None:
    lines = [
        f"slope          {fit.slope:.12g}",
        f"theta          {fit.theta_from_rate:.12g}",
        f"prefactor      {fit.prefactor:.12g}",
        f"window         {fit.fit_window[0]:.12g} {fit.fit_window[1]:.12g}",
        f"rms_residual   {fit.rms_residual:.6g}",
        f"saturated      {fit.saturated}",
        f"points         {fit.n_points}",
        "norm           H (lumped bulk + surface L2)",
    ]
    Path(path).write_text("\n".join(lines) + "\n")
