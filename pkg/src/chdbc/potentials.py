"""Singular and regular double-well potentials.

A potential is split as ``F = beta_hat + pi_hat`` where ``beta_hat`` is convex
with maximal monotone derivative ``beta`` and ``pi_hat`` is a smooth concave
(or Lipschitz) perturbation with derivative ``pi(r) = -2 c r``.

Three kinds are supported:

``logarithmic``
    ``beta(r) = ln((1 + r) / (1 - r))`` on ``(-1, 1)``.
``polynomial``
    ``beta(r) = quartic * r**3 + linear * r`` on the whole real line; the
    classical ``(r**2 - 1)**2 / 4`` well is ``quartic=1, linear=1, c=1``
    (up to an additive constant).
``custom``
    ``beta`` tabulated on a grid inside ``(-1, 1)`` and interpolated with a
    monotone cubic (PCHIP) spline.

All evaluators accept scalars or arrays and are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import xlogy

from .errors import AssumptionViolation, ConvergenceError, DomainError, NotDoubleWell

__all__ = [
    "PotentialSpec",
    "YosidaConfig",
    "AssumptionReport",
    "logarithmic",
    "polynomial",
    "custom",
    "eval_F",
    "eval_beta",
    "eval_beta_prime",
    "eval_beta_hat",
    "eval_pi",
    "yosida_resolvent",
    "yosida_beta",
    "yosida_beta_prime",
    "yosida_beta_hat",
    "truncate_hk",
    "validate_assumptions",
    "double_well_minima",
]

KINDS = ("logarithmic", "polynomial", "custom")

# beta is never evaluated this close to the ends of a singular domain
DOMAIN_GUARD = 1e-12
# bracket margin used by the resolvent solve
RESOLVENT_MARGIN = 1e-14


@dataclass(frozen=True)
class PotentialSpec:
    """Parameters of one potential ``F = beta_hat + pi_hat``.

    Attributes
    ----------
    kind : str
        One of ``"logarithmic"``, ``"polynomial"``, ``"custom"``.
    c : float
        Concave coefficient, ``pi(r) = -2 c r``.
    gamma : float
        Claimed lower bound of ``beta'``.
    lipschitz_L : float
        Claimed bound on ``|pi'|``.
    c0 : float
        Growth constant in ``|beta'(r)| <= exp(c0 |beta(r)| + c0)``.
    c1, c2 : float
        Domination constants in ``|beta| <= c1 |beta_surface| + c2``. Only
        the bulk spec's values are consulted.
    quartic, linear : float
        Coefficients of the polynomial kind.
    table_r, table_beta : tuple of float
        Samples for the custom kind.
    """

    kind: str
    c: float = 0.0
    gamma: float = 0.0
    lipschitz_L: float = 0.0
    c0: float = 1.0
    c1: float = 1.0
    c2: float = 0.0
    quartic: float = 0.0
    linear: float = 0.0
    table_r: tuple = field(default=(), repr=False)
    table_beta: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "custom":
            r = np.asarray(self.table_r, dtype=float)
            if r.size < 4 or r.shape != np.asarray(self.table_beta).shape:
                raise ValueError("custom potential needs >= 4 matching (r, beta) samples")
            if np.any(np.diff(r) <= 0) or r[0] <= -1.0 or r[-1] >= 1.0:
                raise ValueError("custom table abscissae must increase strictly inside (-1, 1)")

    @property
    def singular(self) -> bool:
        return self.kind != "polynomial"

    @property
    def domain(self) -> tuple[float, float]:
        if self.kind == "logarithmic":
            return (-1.0, 1.0)
        if self.kind == "custom":
            return (float(self.table_r[0]), float(self.table_r[-1]))
        return (-math.inf, math.inf)

    @cached_property
    def _spline(self):
        return PchipInterpolator(np.asarray(self.table_r, float), np.asarray(self.table_beta, float))

    @cached_property
    def _spline_prime(self):
        return self._spline.derivative()

    @cached_property
    def _spline_hat(self):
        anti = self._spline.antiderivative()
        offset = float(anti(0.0))
        return lambda r: anti(r) - offset

    # Unguarded evaluators. Callers that may sit on the domain edge (the
    # resolvent solve, closure limits) use these directly.

    def beta_raw(self, r):
        if self.kind == "logarithmic":
            return np.log1p(r) - np.log1p(-r)
        if self.kind == "polynomial":
            return self.quartic * r**3 + self.linear * r
        return self._spline(r)

    def beta_prime_raw(self, r):
        if self.kind == "logarithmic":
            with np.errstate(divide="ignore"):
                return 2.0 / ((1.0 - r) * (1.0 + r))
        if self.kind == "polynomial":
            return 3.0 * self.quartic * r**2 + self.linear
        return self._spline_prime(r)

    def beta_hat_raw(self, r):
        if self.kind == "logarithmic":
            return xlogy(1.0 + r, 1.0 + r) + xlogy(1.0 - r, 1.0 - r)
        if self.kind == "polynomial":
            return 0.25 * self.quartic * r**4 + 0.5 * self.linear * r**2
        return self._spline_hat(r)

    def pi(self, r):
        return -2.0 * self.c * np.asarray(r, dtype=float)

    def pi_prime(self, r):
        return np.full_like(np.asarray(r, dtype=float), -2.0 * self.c)

    def pi_hat(self, r):
        r = np.asarray(r, dtype=float)
        return -self.c * r**2


def logarithmic(c: float, **overrides) -> PotentialSpec:
    """Logarithmic potential with the constants it satisfies exactly."""
    values = dict(gamma=2.0, lipschitz_L=2.0 * c, c0=1.0, c1=1.0, c2=0.0)
    values.update(overrides)
    return PotentialSpec("logarithmic", c=c, **values)


def polynomial(quartic: float = 1.0, linear: float = 1.0, c: float = 1.0, **overrides) -> PotentialSpec:
    values = dict(gamma=linear, lipschitz_L=2.0 * abs(c), c0=1.0, c1=1.0, c2=0.0)
    values.update(overrides)
    return PotentialSpec("polynomial", c=c, quartic=quartic, linear=linear, **values)


def custom(table_r, table_beta, c: float = 0.0, **overrides) -> PotentialSpec:
    values = dict(gamma=0.0, lipschitz_L=2.0 * abs(c), c0=1.0, c1=1.0, c2=0.0)
    values.update(overrides)
    return PotentialSpec(
        "custom",
        c=c,
        table_r=tuple(float(v) for v in table_r),
        table_beta=tuple(float(v) for v in table_beta),
        **values,
    )


def _out(value, like):
    value = np.asarray(value, dtype=float)
    return float(value) if np.ndim(like) == 0 else value


def _guard(spec: PotentialSpec, r):
    r = np.asarray(r, dtype=float)
    if spec.singular:
        lo, hi = spec.domain
        bad = (r <= lo + DOMAIN_GUARD) | (r >= hi - DOMAIN_GUARD) | ~np.isfinite(r)
        if np.any(bad):
            witness = float(np.ravel(r)[np.argmax(np.ravel(bad))])
            raise DomainError(f"{spec.kind} potential evaluated at r={witness!r}, outside the open domain {spec.domain}")
    return r


def eval_F(spec: PotentialSpec, r, closure: bool = False):
    """Free energy density ``beta_hat(r) + pi_hat(r)``.

    With ``closure=True`` points on the closed interval ``[-1, 1]`` are
    accepted and the continuous extension is returned.
    """
    if closure and spec.kind == "logarithmic":
        rr = np.asarray(r, dtype=float)
        if np.any(np.abs(rr) > 1.0):
            raise DomainError("closure of the logarithmic potential is only defined on [-1, 1]")
    else:
        rr = _guard(spec, r)
    return _out(spec.beta_hat_raw(rr) + spec.pi_hat(rr), r)


def eval_beta(spec: PotentialSpec, r):
    rr = _guard(spec, r)
    return _out(spec.beta_raw(rr), r)


def eval_beta_prime(spec: PotentialSpec, r):
    rr = _guard(spec, r)
    return _out(spec.beta_prime_raw(rr), r)


def eval_beta_hat(spec: PotentialSpec, r):
    rr = _guard(spec, r)
    return _out(spec.beta_hat_raw(rr), r)


def eval_pi(spec: PotentialSpec, r):
    return _out(spec.pi(r), r)


@dataclass(frozen=True)
class YosidaConfig:
    epsilon: float
    newton_tol: float = 1e-14
    newton_max_iter: int = 200

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("Yosida epsilon must be positive")


def yosida_resolvent(spec: PotentialSpec, cfg: YosidaConfig, r):
    """Solve ``J + eps * beta(J) = r`` for ``J`` (vectorised).

    The root lies between 0 and ``r`` because ``beta(0) = 0``; this bracket,
    clipped to the open domain, safeguards a Newton iteration that falls
    back to bisection whenever a step leaves it.
    """
    eps = cfg.epsilon
    r = np.asarray(r, dtype=float)
    lo = np.minimum(r, 0.0)
    hi = np.maximum(r, 0.0)
    if spec.singular:
        dlo, dhi = spec.domain
        lo = np.clip(lo, dlo + RESOLVENT_MARGIN, dhi - RESOLVENT_MARGIN)
        hi = np.clip(hi, dlo + RESOLVENT_MARGIN, dhi - RESOLVENT_MARGIN)
    j = np.clip(r / (1.0 + eps * max(spec.gamma, 0.0)), lo, hi)
    scale = np.maximum(1.0, np.abs(r))
    for _ in range(cfg.newton_max_iter):
        g = j + eps * spec.beta_raw(j) - r
        done = (np.abs(g) <= cfg.newton_tol * scale) | (hi - lo <= 4e-16 * np.maximum(1.0, np.abs(j)))
        if np.all(done):
            return _out(j, r)
        hi = np.where(g > 0, j, hi)
        lo = np.where(g < 0, j, lo)
        gp = 1.0 + eps * spec.beta_prime_raw(j)
        with np.errstate(invalid="ignore", divide="ignore"):
            step = j - g / gp
        inside = (step > lo) & (step < hi) & np.isfinite(step)
        j = np.where(done, j, np.where(inside, step, 0.5 * (lo + hi)))
    raise ConvergenceError(
        f"Yosida resolvent did not converge in {cfg.newton_max_iter} iterations (eps={eps})"
    )


def yosida_beta(spec: PotentialSpec, cfg: YosidaConfig, r):
    """Yosida approximation ``(r - J_eps(r)) / eps``; defined for every real ``r``."""
    j = np.asarray(yosida_resolvent(spec, cfg, r))
    return _out((np.asarray(r, dtype=float) - j) / cfg.epsilon, r)


def yosida_beta_prime(spec: PotentialSpec, cfg: YosidaConfig, r):
    j = np.asarray(yosida_resolvent(spec, cfg, r))
    bp = spec.beta_prime_raw(j)
    with np.errstate(divide="ignore"):
        value = 1.0 / (1.0 / bp + cfg.epsilon)
    return _out(value, r)


def yosida_beta_hat(spec: PotentialSpec, cfg: YosidaConfig, r):
    """Moreau envelope of ``beta_hat``; its derivative is :func:`yosida_beta`."""
    rr = np.asarray(r, dtype=float)
    j = np.asarray(yosida_resolvent(spec, cfg, rr))
    return _out(spec.beta_hat_raw(j) + (rr - j) ** 2 / (2.0 * cfg.epsilon), r)


def truncate_hk(k: int, r):
    """Clamp ``r`` into ``[-1 + 1/k, 1 - 1/k]``."""
    if k < 2:
        raise ValueError("truncation level k must be >= 2")
    bound = 1.0 - 1.0 / k
    return _out(np.clip(np.asarray(r, dtype=float), -bound, bound), r)


@dataclass
class AssumptionReport:
    checks: dict
    c4: float
    c5: float

    @property
    def passed(self) -> bool:
        return all(ok for ok, _, _ in self.checks.values())

    @property
    def failures(self):
        return [(name, w, d) for name, (ok, w, d) in self.checks.items() if not ok]

    def lines(self):
        for name, (ok, witness, detail) in self.checks.items():
            yield f"{name:5s} {'PASS' if ok else 'FAIL'}  {detail}" + ("" if ok else f" (witness r={witness:.6g})")
        yield f"gms   c4={self.c4:.6g} c5={self.c5:.6g}"


def _sample_grid(spec_bulk: PotentialSpec, spec_surf: PotentialSpec, samples: int) -> np.ndarray:
    lo = max(spec_bulk.domain[0], spec_surf.domain[0], -1.0)
    hi = min(spec_bulk.domain[1], spec_surf.domain[1], 1.0)
    inner = np.linspace(lo, hi, samples + 2)[1:-1]
    if spec_bulk.singular or spec_surf.singular:
        gaps = 10.0 ** -np.arange(2, 11)
        edges = np.concatenate([lo + gaps * (hi - lo) / 2, hi - gaps * (hi - lo) / 2])
        inner = np.concatenate([inner, edges])
    return np.unique(inner)


def _first(mask, grid):
    idx = np.flatnonzero(mask)
    return float(grid[idx[0]]) if idx.size else float("nan")


def _check_a1(spec: PotentialSpec, grid: np.ndarray, label: str):
    b = spec.beta_raw(grid)
    bp = spec.beta_prime_raw(grid)
    if abs(float(spec.beta_raw(np.array(0.0)))) > 1e-12 or abs(float(spec.beta_hat_raw(np.array(0.0)))) > 1e-12:
        return False, 0.0, f"{label}: normalization beta(0) = beta_hat(0) = 0 fails"
    dec = np.diff(b) <= 0
    if np.any(dec):
        return False, _first(np.append(dec, False), grid), f"{label}: beta not strictly increasing"
    if not spec.gamma > 0:
        return False, 0.0, f"{label}: gamma must be positive"
    low = bp < spec.gamma * (1.0 - 1e-12)
    if np.any(low):
        return False, _first(low, grid), f"{label}: beta' below gamma={spec.gamma:g}"
    core = np.linspace(-0.99, 0.99, 1001)
    core = core[(core > spec.domain[0]) & (core < spec.domain[1])]
    d2 = np.diff(spec.beta_prime_raw(core), 2)
    scale = max(1.0, float(np.max(np.abs(spec.beta_prime_raw(core)))))
    concave = d2 < -1e-8 * scale
    if np.any(concave):
        return False, _first(np.concatenate([[False], concave, [False]]), core), f"{label}: beta' not convex"
    if spec.singular:
        top, bottom = float(b[-1]), float(b[0])
        if top < 10.0 or bottom > -10.0:
            return False, float(grid[-1]), f"{label}: beta does not blow up at the domain ends"
    return True, float("nan"), f"{label}: monotone, beta' >= {spec.gamma:g}, beta' convex"


def validate_assumptions(
    spec_bulk: PotentialSpec,
    spec_surf: PotentialSpec,
    m0: float,
    samples: int = 1000,
    raise_on_failure: bool = True,
) -> AssumptionReport:
    """Check the structural hypotheses on a sample grid of ``(-1, 1)``.

    Checks ``A1`` (normalization, monotonicity, ``beta' >= gamma``, convex
    ``beta'``, blow-up), ``A2`` (``|beta| <= c1 |beta_surface| + c2``),
    ``A3`` (``|pi'| <= L``) and ``A5`` (``beta' <= exp(c0 |beta| + c0)``).
    Also reports empirical constants ``(c4, c5)`` with
    ``beta(r) (r - m0) >= c4 |beta(r)| - c5`` for both potentials.

    Raises
    ------
    AssumptionViolation
        If any check fails and ``raise_on_failure`` is true.
    """
    if not -1.0 < m0 < 1.0:
        raise ValueError("m0 must lie in the open interval (-1, 1)")
    if samples < 100:
        raise ValueError("need at least 100 samples")
    grid = _sample_grid(spec_bulk, spec_surf, samples)
    checks = {}

    ok_b = _check_a1(spec_bulk, grid, "bulk")
    ok_s = _check_a1(spec_surf, grid, "surface")
    checks["A1"] = ok_b if not ok_b[0] else ok_s if not ok_s[0] else (True, float("nan"), ok_b[2] + "; " + ok_s[2])

    b = spec_bulk.beta_raw(grid)
    bs = spec_surf.beta_raw(grid)
    c1, c2 = spec_bulk.c1, spec_bulk.c2
    bad = np.abs(b) > c1 * np.abs(bs) + c2 + 1e-12 * (1.0 + np.abs(b))
    checks["A2"] = (
        not np.any(bad),
        _first(bad, grid),
        f"|beta| <= {c1:g}|beta_surface| + {c2:g}",
    )

    wide = np.linspace(-2.0, 2.0, samples)
    a3 = []
    for spec, label in ((spec_bulk, "bulk"), (spec_surf, "surface")):
        bad = np.abs(spec.pi_prime(wide)) > spec.lipschitz_L * (1.0 + 1e-12)
        if np.any(bad):
            a3.append((False, _first(bad, wide), f"{label}: |pi'| exceeds L={spec.lipschitz_L:g}"))
    checks["A3"] = a3[0] if a3 else (True, float("nan"), "|pi'| <= L for bulk and surface")

    bp = spec_bulk.beta_prime_raw(grid)
    c0 = spec_bulk.c0
    with np.errstate(over="ignore"):
        bad = np.abs(bp) > np.exp(c0 * np.abs(b) + c0)
    checks["A5"] = (not np.any(bad), _first(bad, grid), f"|beta'| <= exp({c0:g}|beta| + {c0:g})")

    c4 = 0.5 * (1.0 - abs(m0))
    c5 = 0.0
    for spec in (spec_bulk, spec_surf):
        beta = spec.beta_raw(grid)
        slack = c4 * np.abs(beta) - beta * (grid - m0)
        c5 = max(c5, float(np.max(slack)))
        if spec.singular and (slack[0] > 0 or slack[-1] > 0):
            checks["gms"] = (False, float(grid[0] if slack[0] > 0 else grid[-1]), "c5 not attained in the interior")
    checks.setdefault("gms", (True, float("nan"), f"beta(r)(r - m0) >= {c4:.4g}|beta| - {c5:.4g}"))

    report = AssumptionReport(checks=checks, c4=c4, c5=c5)
    if raise_on_failure and not report.passed:
        raise AssumptionViolation(report.failures)
    return report


def double_well_minima(spec: PotentialSpec) -> tuple[float, float]:
    """Positive root of ``beta(r) + pi(r) = 0``, returned as ``(r_star, -r_star)``."""
    hi = min(spec.domain[1], 1.0) if spec.singular else 10.0
    grid = np.linspace(0.0, hi, 4001)[1:-1]
    fpp = spec.beta_prime_raw(grid) + spec.pi_prime(grid)
    if np.all(fpp >= 0):
        raise NotDoubleWell(f"F'' >= 0 on all samples (c={spec.c:g}); the potential is convex")

    def fprime(r):
        return float(spec.beta_raw(np.array(r)) + spec.pi(np.array(r)))

    vals = np.array([fprime(r) for r in grid])
    neg = np.flatnonzero(vals < 0)
    if neg.size == 0:
        raise NotDoubleWell("F' has no negative values on (0, 1)")
    lo = float(grid[neg[-1]])
    b = hi - RESOLVENT_MARGIN if spec.singular else hi
    if fprime(b) <= 0:
        raise NotDoubleWell("F' does not change sign on (0, 1)")
    a = lo
    for _ in range(200):
        mid = 0.5 * (a + b)
        if mid <= a or mid >= b:
            break
        if fprime(mid) < 0:
            a = mid
        else:
            b = mid
    r_star = 0.5 * (a + b)
    return r_star, -r_star
