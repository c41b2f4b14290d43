"""Command line driver: ``simulate``, ``steady`` and ``verify``.

Configuration files are plain text, one ``section.key = value`` per line;
``#`` starts a comment. Every key has a default, so an empty file is a
valid configuration (the 1D spinodal reference run).

Exit codes: 0 success, 1 a verification check failed, 2 configuration
error, 3 runtime divergence.
"""

from __future__ import annotations

import argparse
import math
import platform
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .diagnostics import (
    check_energy_identity,
    fit_decay,
    record,
    write_csv,
    write_decay_fit,
)
from .errors import (
    ChdbcError,
    ConfigError,
    InadmissibleInitialData,
    NewtonDivergence,
    NonAdmissibleIterate,
    NotDecaying,
    SeparationBreach,
    StepFloorReached,
)
from .io import read_snapshot, write_snapshot
from .mesh import Mesh, build_mesh, norm_h
from .model import ModelParams, Potentials
from .operators import assemble_operators
from .potentials import PotentialSpec, custom, logarithmic, polynomial, validate_assumptions
from .stationary import estimate_lojasiewicz, mu_s_from_average, solve_steady, steady_separation_report
from .stepper import InitialProfile, State, StepConfig, initial_state, run, step

__all__ = ["RunConfig", "parse_config", "cmd_simulate", "cmd_steady", "cmd_verify", "main"]

EXIT_OK, EXIT_VERIFY_FAIL, EXIT_CONFIG, EXIT_DIVERGENCE = 0, 1, 2, 3
RUNTIME_ERRORS = (NewtonDivergence, StepFloorReached, SeparationBreach, NonAdmissibleIterate)


def _optional_float(text):
    return None if text.lower() == "none" else float(text)


def _choice(*options):
    def check(v):
        return v in options, "one of " + ", ".join(options)

    return check


def _positive(v):
    return v > 0, "> 0"


def _nonneg(v):
    return v >= 0, ">= 0"


def _at_least(n):
    def check(v):
        return v >= n, f">= {n}"

    return check


def _m0(v):
    return -1.0 < v < 1.0, "m0 must lie in open interval (-1,1)"


def _opt_positive(v):
    return v is None or v > 0, "> 0 or none"


def _any(v):
    return True, ""


_POTENTIAL_KEYS = {
    "kind": (str, "logarithmic", _choice("logarithmic", "polynomial", "custom")),
    "c": (float, 3.0, _any),
    "quartic": (float, 1.0, _any),
    "linear": (float, 1.0, _any),
    "table": (str, "", _any),
    "gamma": (_optional_float, None, _opt_positive),
    "lipschitz_L": (_optional_float, None, lambda v: (v is None or v >= 0, ">= 0 or none")),
    "c0": (_optional_float, None, _opt_positive),
    "c1": (_optional_float, None, _opt_positive),
    "c2": (_optional_float, None, lambda v: (v is None or v >= 0, ">= 0 or none")),
}

# key -> (parser, default, check)
SCHEMA = {
    "mesh.kind": (str, "interval", _choice("interval", "strip")),
    "mesh.n": (int, 129, _at_least(4)),
    "mesh.length": (float, 9.0, _positive),
    "mesh.nx": (int, 32, _at_least(4)),
    "mesh.ny": (int, 17, _at_least(4)),
    "mesh.lx": (float, 6.0, _positive),
    "mesh.ly": (float, 1.0, _positive),
    "params.sigma": (float, 0.0, _nonneg),
    "params.chi": (float, 1.0, _positive),
    "params.kappa": (float, 0.0, _nonneg),
    "params.viscous_eps": (float, 0.0, _nonneg),
    "params.yosida_eps": (float, 0.0, _nonneg),
    "params.m0": (float, 0.1, _m0),
    **{f"potential.{k}": v for k, v in _POTENTIAL_KEYS.items()},
    **{f"surface.{k}": v for k, v in _POTENTIAL_KEYS.items()},
    "surface.kind": (str, "same", _choice("same", "logarithmic", "polynomial", "custom")),
    "step.dt": (float, 1e-3, _positive),
    "step.t_end": (float, 1.0, _nonneg),
    "step.newton_tol": (float, 1e-11, _positive),
    "step.newton_max_iter": (int, 50, _at_least(1)),
    "step.linesearch": (str, "backtracking", _choice("none", "backtracking")),
    "step.clamp_k": (int, 2, _at_least(2)),
    "step.dt_min": (_optional_float, None, _opt_positive),
    "step.dt_max": (_optional_float, None, _opt_positive),
    "init.profile": (str, "tanh", _choice("constant", "random", "tanh", "cosine", "file")),
    "init.seed": (int, 0, _nonneg),
    "init.amplitude": (float, 0.85, _nonneg),
    "init.width": (float, 0.7, _positive),
    "init.file": (str, "", _any),
    "output.every_steps": (int, 100, _at_least(1)),
    "steady.tol": (float, 1e-10, _positive),
    "steady.guess": (str, "constant", _choice("constant", "from-file")),
    "steady.file": (str, "", _any),
    "steady.radius": (float, 1e-2, _positive),
    "steady.samples": (int, 200, _nonneg),
    "decay.t_lo": (_optional_float, None, _any),
    "decay.t_hi": (_optional_float, None, _any),
    "verify.eta": (float, 0.01, _nonneg),
    "verify.horizon": (float, 0.2, _positive),
}

# alternative section names accepted in config files
KEY_ALIASES = {"surface_potential": "surface"}

_FILE_KEYS = {
    "potential.table": lambda v: v["potential.kind"] == "custom",
    "surface.table": lambda v: v["surface.kind"] == "custom",
    "init.file": lambda v: v["init.profile"] == "file",
    "steady.file": lambda v: v["steady.guess"] == "from-file",
}


@dataclass
class RunConfig:
    """Validated run configuration.

    ``values`` maps every schema key to its value; ``explicit`` lists the
    keys set in the file with their line numbers.
    """

    values: dict
    source: str = "<defaults>"
    explicit: dict = field(default_factory=dict)
    base_dir: Path = field(default_factory=Path.cwd)

    def __getitem__(self, key):
        return self.values[key]

    def with_values(self, **updates) -> "RunConfig":
        vals = dict(self.values)
        for k, v in updates.items():
            vals[k.replace("__", ".")] = v
        return replace(self, values=vals)

    def path(self, key) -> Path:
        p = Path(self.values[key])
        return p if p.is_absolute() else self.base_dir / p

    def echo(self) -> str:
        lines = []
        for key in SCHEMA:
            tag = "" if key in self.explicit else "  # default"
            lines.append(f"{key} = {_format(self.values[key])}{tag}")
        return "\n".join(lines)

    def mesh(self) -> Mesh:
        v = self.values
        if v["mesh.kind"] == "interval":
            return build_mesh("interval", n=v["mesh.n"], length=v["mesh.length"])
        return build_mesh("strip", nx=v["mesh.nx"], ny=v["mesh.ny"], lx=v["mesh.lx"], ly=v["mesh.ly"])

    def params(self) -> ModelParams:
        v = self.values
        return ModelParams(
            sigma=v["params.sigma"],
            chi=v["params.chi"],
            kappa=v["params.kappa"],
            viscous_eps=v["params.viscous_eps"],
            yosida_eps=v["params.yosida_eps"],
            m0=v["params.m0"],
        )

    def _potential(self, section) -> PotentialSpec:
        v = {k: self.values[f"{section}.{k}"] for k in _POTENTIAL_KEYS}
        overrides = {k: v[k] for k in ("gamma", "lipschitz_L", "c0", "c1", "c2") if v[k] is not None}
        if v["kind"] == "logarithmic":
            return logarithmic(v["c"], **overrides)
        if v["kind"] == "polynomial":
            return polynomial(v["quartic"], v["linear"], v["c"], **overrides)
        table = np.loadtxt(self.path(f"{section}.table"), delimiter=",", ndmin=2)
        return custom(table[:, 0], table[:, 1], v["c"], **overrides)

    def potentials(self) -> Potentials:
        bulk = self._potential("potential")
        surf = bulk if self.values["surface.kind"] == "same" else self._potential("surface")
        return Potentials(bulk, surf)

    def step_config(self) -> StepConfig:
        v = self.values
        return StepConfig(
            dt=v["step.dt"],
            newton_tol=v["step.newton_tol"],
            newton_max_iter=v["step.newton_max_iter"],
            linesearch=v["step.linesearch"],
            clamp_k=v["step.clamp_k"],
            dt_min=v["step.dt_min"],
            dt_max=v["step.dt_max"],
        )

    def profile(self) -> InitialProfile:
        v = self.values
        path = str(self.path("init.file")) if v["init.profile"] == "file" else None
        return InitialProfile(
            kind=v["init.profile"], amplitude=v["init.amplitude"], width=v["init.width"], seed=v["init.seed"], path=path
        )


def _format(value):
    if value is None:
        return "none"
    return repr(value) if isinstance(value, float) else str(value)


def parse_config(path) -> RunConfig:
    """Read and validate a configuration file.

    Raises
    ------
    ConfigError
        On the first malformed line, unknown key, unparsable value, value
        out of range or missing referenced file; the message names the
        line and key.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {str(path)!r}: {exc.strerror}") from exc
    values = {k: d for k, (_, d, _) in SCHEMA.items()}
    explicit = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'section.key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
            value = value[1:-1]
        section, _, name = key.partition(".")
        if section in KEY_ALIASES:
            key = f"{KEY_ALIASES[section]}.{name}"
        if key not in SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in explicit:
            raise ConfigError(f"{path}:{lineno}: key {key!r} already set on line {explicit[key]}")
        parser, _, check = SCHEMA[key]
        try:
            parsed = parser(value)
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: {key} = {value!r} is not a valid {parser.__name__.lstrip('_')}") from None
        ok, constraint = check(parsed)
        if not ok:
            if key == "params.m0":
                raise ConfigError(f"{path}:{lineno}: {constraint} (params.m0 = {value})")
            raise ConfigError(f"{path}:{lineno}: {key} must be {constraint} (got {value})")
        values[key] = parsed
        explicit[key] = lineno
    cfg = RunConfig(values=values, source=str(path), explicit=explicit, base_dir=path.parent)
    for key, needed in _FILE_KEYS.items():
        if needed(values):
            where = f"{path}:{explicit[key]}: " if key in explicit else f"{path}: "
            if not values[key]:
                raise ConfigError(f"{where}{key} is required by the chosen options")
            if not cfg.path(key).is_file():
                raise ConfigError(f"{where}{key} refers to missing file {values[key]!r}")
    lo, hi = values["decay.t_lo"], values["decay.t_hi"]
    if lo is not None and hi is not None and not lo < hi:
        raise ConfigError(f"{path}: decay.t_lo must be smaller than decay.t_hi")
    try:
        cfg.params()
        cfg.potentials()
        cfg.step_config()
    except ChdbcError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return cfg


# ---------------------------------------------------------------- simulate


@dataclass
class Trajectory:
    mesh: Mesh
    states: list
    records: list
    steady: object = None
    decay: object = None
    decay_error: str = ""


def simulate(cfg: RunConfig, out: Path | None = None, t_end: float | None = None,
             with_steady: bool = True) -> Trajectory:
    """Run the configured simulation, recording diagnostics every step."""
    mesh = cfg.mesh()
    params, pots, scfg = cfg.params(), cfg.potentials(), cfg.step_config()
    ops = assemble_operators(mesh, params.sigma)
    t_end = cfg["step.t_end"] if t_end is None else t_end
    every = cfg["output.every_steps"]
    state = initial_state(mesh, cfg.profile(), params, pots, ops)
    states = [state]
    records = [record(state, mesh, ops, pots, params)]
    if out is not None:
        write_snapshot(out / "snapshots" / "step_00000000.csv", mesh, state.u)

    def on_step(new, old):
        states.append(new)
        records.append(record(new, mesh, ops, pots, params, old))
        if out is not None and new.step_count % every == 0:
            write_snapshot(out / "snapshots" / f"step_{new.step_count:08d}.csv", mesh, new.u)

    final = run(state, mesh, ops, params, pots, scfg, t_end, callbacks=[on_step])
    if out is not None and final.step_count % every != 0:
        write_snapshot(out / "snapshots" / f"step_{final.step_count:08d}.csv", mesh, final.u)
    traj = Trajectory(mesh=mesh, states=states, records=records)
    if with_steady and final.step_count > 0:
        try:
            traj.steady = solve_steady(mesh, ops, params, pots, final.u, tol=cfg["steady.tol"])
        except RUNTIME_ERRORS as exc:
            traj.decay_error = f"steady solve from the final state failed: {exc}"
            return traj
        traj.records = [
            replace(r, dist_to_steady=norm_h(mesh, s.u - traj.steady.u)) for r, s in zip(records, states)
        ]
        window = None
        if cfg["decay.t_lo"] is not None or cfg["decay.t_hi"] is not None:
            t0, t1 = traj.records[0].t, traj.records[-1].t
            lo = cfg["decay.t_lo"] if cfg["decay.t_lo"] is not None else t0 + 0.5 * (t1 - t0)
            hi = cfg["decay.t_hi"] if cfg["decay.t_hi"] is not None else t1
            window = (lo, hi)
        try:
            traj.decay = fit_decay(traj.records, traj.steady, window=window)
        except NotDecaying as exc:
            traj.decay_error = str(exc)
    return traj


def _manifest(cfg: RunConfig, command: str, status: str, wall: float, extra=()) -> str:
    lines = [
        f"command        {command}",
        f"config         {cfg.source}",
        f"status         {status}",
        f"seed           {cfg['init.seed']}",
        f"wall_time_s    {wall:.3f}",
        f"chdbc          {__version__}",
        f"python         {platform.python_version()}",
        f"numpy          {np.__version__}",
        f"scipy          {scipy.__version__}",
        f"platform       {platform.platform()}",
        *extra,
        "",
        "# configuration",
        cfg.echo(),
    ]
    return "\n".join(lines) + "\n"


def _fail(tag: str, exc) -> None:
    print(f"FAILURE {tag}: {exc}", file=sys.stderr)


def cmd_simulate(cfg: RunConfig, out) -> int:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        traj = simulate(cfg, out)
    except RUNTIME_ERRORS as exc:
        _fail(exc.tag, exc)
        (out / "manifest.txt").write_text(_manifest(cfg, "simulate", f"FAILED {exc.tag}", time.perf_counter() - t0))
        return EXIT_DIVERGENCE
    except InadmissibleInitialData as exc:
        _fail(exc.tag, exc)
        return EXIT_CONFIG
    write_csv(out / "diagnostics.csv", traj.records)
    if traj.decay is not None:
        write_decay_fit(out / "decay_fit.txt", traj.decay)
    else:
        (out / "decay_fit.txt").write_text(f"unavailable    {traj.decay_error or 'no steps taken'}\n")
    last = traj.records[-1]
    extra = [
        f"steps          {traj.states[-1].step_count}",
        f"final_t        {last.t!r}",
        f"final_energy   {last.energy!r}",
        "dist_norm      H (lumped bulk + surface L2)",
    ]
    (out / "manifest.txt").write_text(_manifest(cfg, "simulate", "OK", time.perf_counter() - t0, extra))
    print(f"simulate: {traj.states[-1].step_count} steps to t={last.t:g}, energy {last.energy:.10g}, "
          f"separation {last.separation:.6g}")
    return EXIT_OK


# ------------------------------------------------------------------ steady


def cmd_steady(cfg: RunConfig, out) -> int:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    mesh = cfg.mesh()
    params, pots = cfg.params(), cfg.potentials()
    ops = assemble_operators(mesh, params.sigma)
    if cfg["steady.guess"] == "constant":
        guess = mesh.constant(params.m0)
    else:
        guess = mesh.pair(read_snapshot(cfg.path("steady.file"), mesh))
    try:
        ss = solve_steady(mesh, ops, params, pots, guess, tol=cfg["steady.tol"])
    except RUNTIME_ERRORS as exc:
        _fail(exc.tag, exc)
        (out / "manifest.txt").write_text(_manifest(cfg, "steady", f"FAILED {exc.tag}", time.perf_counter() - t0))
        return EXIT_DIVERGENCE
    write_snapshot(out / "steady.csv", mesh, ss.u)
    lines = [
        f"residual_norm    {ss.residual_norm:.6g}",
        f"newton_iters     {ss.iterations}",
        f"mu_s             {ss.mu_s:.15g}",
        f"mu_s_average     {mu_s_from_average(mesh, ss.u, pots, params):.15g}",
    ]
    if pots.singular:
        lines += list(steady_separation_report(ss, pots, params, mesh_tol=mesh.h).lines())
    else:
        lines.append(f"delta_sep        {ss.delta_sep:.12g}")
    if cfg["steady.samples"] > 0:
        radius = cfg["steady.radius"]
        try:
            est = [estimate_lojasiewicz(mesh, ops, ss, pots, params, cfg["steady.samples"], r) for r in (radius, radius / 2)]
            lines += [
                f"theta_hat        {est[0].theta_hat:.6g}  (radius {radius:g}, fit residual {est[0].fit_residual:.3g})",
                f"theta_hat_half   {est[1].theta_hat:.6g}  (radius {radius / 2:g}, fit residual {est[1].fit_residual:.3g})",
            ]
        except ChdbcError as exc:
            lines.append(f"theta_hat        unavailable ({exc.tag}: {exc})")
    (out / "steady_report.txt").write_text("\n".join(lines) + "\n")
    (out / "manifest.txt").write_text(_manifest(cfg, "steady", "OK", time.perf_counter() - t0))
    print("\n".join(lines))
    return EXIT_OK


# ------------------------------------------------------------------ verify


@dataclass
class CheckResult:
    name: str
    status: str  # PASS, FAIL or SKIPPED
    detail: str

    def line(self) -> str:
        return f"{self.name:24s} {self.status:7s} {self.detail}"


def _check(name, ok, detail):
    return CheckResult(name, "PASS" if ok else "FAIL", detail)


def _short(cfg: RunConfig, horizon: float, **updates) -> Trajectory:
    return simulate(cfg.with_values(**updates), t_end=min(horizon, cfg["step.t_end"]), with_steady=False)


def verify_checks(cfg: RunConfig, fast: bool = False):
    """Run every verification check; yields :class:`CheckResult` objects."""
    params, pots = cfg.params(), cfg.potentials()
    horizon = cfg["verify.horizon"] * (0.5 if fast else 1.0)
    eta = cfg["verify.eta"]

    report = validate_assumptions(pots.bulk, pots.surface, params.m0, raise_on_failure=False)
    failed = ", ".join(name for name, _, _ in report.failures)
    yield _check("ASSUMPTIONS", report.passed, "A1 A2 A3 A5 gms hold" if report.passed else f"violated: {failed}")

    traj = simulate(cfg)
    recs = traj.records
    mesh = traj.mesh

    if params.kappa == 0:
        err = max(abs(r.mass - params.m0) for r in recs)
        yield _check("MASS_CONSERVATION", err <= 1e-12, f"max |m(u) - m0| = {err:.3e} (tol 1e-12)")
    else:
        yield CheckResult("MASS_CONSERVATION", "SKIPPED", "permeable wall (kappa > 0)")

    rises = [(b.energy - a.energy) / max(1.0, abs(a.energy)) for a, b in zip(recs[:-1], recs[1:])]
    worst = max(rises, default=0.0)
    yield _check("ENERGY_MONOTONE", worst <= 1e-10, f"max relative energy increase {worst:.3e} (slack 1e-10)")

    if params.kappa == 0:
        dt = cfg["step.dt"]
        d1 = check_energy_identity(_short(cfg, horizon).records, t_min=eta)
        d2 = check_energy_identity(_short(cfg, horizon, step__dt=dt / 2, step__dt_max=dt / 2).records, t_min=eta)
        ratio = d1 / d2 if d2 > 0 else math.inf
        first = check_energy_identity(recs[:2])
        yield _check(
            "ENERGY_IDENTITY_ORDER",
            1.6 <= ratio <= 2.4 or (d1 <= 1e-12 and d2 <= 1e-12),
            f"defect {d1:.3e} (dt) / {d2:.3e} (dt/2) = {ratio:.3f} for t > {eta:g}; first-step defect {first:.3e}",
        )
    else:
        yield CheckResult("ENERGY_IDENTITY_ORDER", "SKIPPED", "identity needs kappa = 0")

    if pots.singular:
        tail = [r.separation for r in recs if r.t >= eta]
        low = min(tail, default=min(r.separation for r in recs))
        yield _check("SEPARATION_POSITIVE", low > 0, f"min separation for t >= {eta:g}: {low:.6g}")
    else:
        yield CheckResult("SEPARATION_POSITIVE", "SKIPPED", "potential is not singular")

    if params.yosida_eps > 0 or params.viscous_eps > 0:
        yield CheckResult("YOSIDA_LIMIT", "SKIPPED", "config fixes eps > 0; the limit needs an eps = 0 reference")
    else:
        ref = _short(cfg, horizon).states[-1].u
        gaps = []
        for eps in (1e-1, 1e-2, 1e-3, 1e-4):
            u = _short(cfg, horizon, params__viscous_eps=eps, params__yosida_eps=eps).states[-1].u
            gaps.append(norm_h(mesh, u - ref))
        factors = [a / b if b > 0 else math.inf for a, b in zip(gaps[:-1], gaps[1:])]
        yield _check(
            "YOSIDA_LIMIT",
            all(f >= 2.0 for f in factors),
            "gaps " + " ".join(f"{g:.3e}" for g in gaps) + "; factors " + " ".join(f"{f:.2f}" for f in factors),
        )

    ss = traj.steady
    if ss is None:
        yield CheckResult("STEADY_CONSISTENCY", "FAIL", traj.decay_error or "no steady state")
    else:
        ops = assemble_operators(mesh, params.sigma)
        avg = mu_s_from_average(mesh, ss.u, pots, params)
        st = State(t=0.0, u=ss.u, mu=mesh.constant(ss.mu_s))
        moved = float(np.max(np.abs(step(st, mesh, ops, params, pots, cfg.step_config()).u.bulk - ss.u.bulk)))
        tol = cfg["steady.tol"]
        ok = ss.residual_norm <= tol and abs(ss.mu_s - avg) <= 10 * tol and moved <= 1e-8
        yield _check(
            "STEADY_CONSISTENCY",
            ok,
            f"residual {ss.residual_norm:.2e}, |mu_s - average| {abs(ss.mu_s - avg):.2e}, one step moves {moved:.2e}",
        )

    kappa = params.kappa if params.kappa > 0 else 0.5
    kt = _short(cfg, horizon, params__kappa=kappa)
    worst = 0.0
    for a, b in zip(kt.records[:-1], kt.records[1:]):
        h = b.t - a.t
        scale = max(1.0, abs(a.total_mass_raw), kappa * h * abs(b.boundary_mu_integral))
        worst = max(worst, abs(b.total_mass_raw - a.total_mass_raw + kappa * h * b.boundary_mu_integral) / scale)
    yield _check("MASS_BALANCE_KAPPA", worst <= 1e-10, f"kappa={kappa:g}: max relative balance defect {worst:.3e}")

    fit = traj.decay
    dists = [r.dist_to_steady for r in traj.records]
    if fit is None and ss is not None and max(dists) <= 1e-12:
        yield CheckResult("DECAY_FIT_STABLE", "SKIPPED", "trajectory starts at its steady state")
    elif fit is None:
        yield CheckResult("DECAY_FIT_STABLE", "FAIL", traj.decay_error or "no decay fit")
    else:
        ok = 0.0 < fit.theta_from_rate <= 0.5 and fit.rms_residual < 0.1
        yield _check(
            "DECAY_FIT_STABLE",
            ok,
            f"theta {fit.theta_from_rate:.4f}, slope {fit.slope:.3f}, rms {fit.rms_residual:.3g}"
            + (" (saturated)" if fit.saturated else ""),
        )


def cmd_verify(cfg: RunConfig, fast: bool = False) -> int:
    t0 = time.perf_counter()
    failed = False
    try:
        for res in verify_checks(cfg, fast=fast):
            print(res.line(), flush=True)
            failed |= res.status == "FAIL"
    except RUNTIME_ERRORS as exc:
        _fail(exc.tag, exc)
        return EXIT_DIVERGENCE
    print(f"verify: {'FAIL' if failed else 'PASS'} in {time.perf_counter() - t0:.1f} s")
    return EXIT_VERIFY_FAIL if failed else EXIT_OK


# -------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chdbc", description="Cahn-Hilliard with dynamic boundary conditions")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("simulate", "run a time evolution"), ("steady", "solve for a steady state")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="configuration file")
        p.add_argument("--out", required=True, help="output directory")
    p = sub.add_parser("verify", help="run the invariant checks")
    p.add_argument("--config", required=True, help="configuration file")
    p.add_argument("--fast", action="store_true", help="shorter auxiliary runs")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        _fail(exc.tag, exc)
        return EXIT_CONFIG
    print(cfg.echo())
    try:
        if args.command == "simulate":
            return cmd_simulate(cfg, args.out)
        if args.command == "steady":
            return cmd_steady(cfg, args.out)
        return cmd_verify(cfg, fast=args.fast)
    except (ConfigError, InadmissibleInitialData) as exc:
        _fail(exc.tag, exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
