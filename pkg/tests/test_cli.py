import csv
import math
from pathlib import Path

import numpy as np
import pytest

from chdbc.cli import SCHEMA, main, parse_config
from chdbc.errors import ConfigError
from chdbc.io import read_snapshot

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

EQUILIBRIUM = """\
mesh.n = 33
params.m0 = 0.1
init.profile = constant
step.t_end = 0.02
output.every_steps = 5
"""

SMALL_SPINODAL = """\
mesh.n = 33
params.m0 = 0.1
init.profile = tanh
step.t_end = 0.05
output.every_steps = 10
steady.samples = 0
"""


def write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


def read_columns(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}


def test_minimal_config_fills_defaults(tmp_path):
    cfg = parse_config(write(tmp_path, "params.m0 = 0.2\n"))
    assert cfg["params.m0"] == 0.2
    assert cfg["mesh.n"] == SCHEMA["mesh.n"][1]
    assert cfg["step.dt"] == 1e-3
    echo = cfg.echo()
    assert "params.m0 = 0.2" in echo and "mesh.kind = interval" in echo


def test_comments_and_blank_lines(tmp_path):
    cfg = parse_config(write(tmp_path, "# header\n\nmesh.n = 17  # trailing\n"))
    assert cfg["mesh.n"] == 17


def test_quoted_values_and_section_alias(tmp_path):
    cfg = parse_config(write(tmp_path, 'potential.kind = "logarithmic"\nsurface_potential.kind = polynomial\n'))
    assert cfg["potential.kind"] == "logarithmic"
    assert cfg["surface.kind"] == "polynomial"


def test_m0_out_of_range(tmp_path):
    with pytest.raises(ConfigError, match=r"m0 must lie in open interval \(-1,1\)"):
        parse_config(write(tmp_path, "params.m0 = 1.0\n"))


def test_unknown_key_named_with_line(tmp_path):
    with pytest.raises(ConfigError, match=r"run.cfg:2: unknown key 'params.mu0'"):
        parse_config(write(tmp_path, "mesh.n = 17\nparams.mu0 = 0.1\n"))


@pytest.mark.parametrize("text, pattern", [
    ("mesh.n = 17\nmesh.n = 33\n", r":2: key 'mesh.n' already set on line 1"),
    ("mesh.n = many\n", r":1: mesh.n = 'many' is not a valid"),
    ("step.dt = -1\n", r":1: step.dt must be"),
    ("just words\n", r":1: expected 'section.key = value'"),
    ("init.profile = file\ninit.file = nowhere.csv\n", r"missing file 'nowhere.csv'"),
])
def test_config_errors(tmp_path, text, pattern):
    with pytest.raises(ConfigError, match=pattern):
        parse_config(write(tmp_path, text))


def test_missing_config_exits_2(tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "none.cfg"), "--out", str(tmp_path / "o")]) == 2
    assert "FAILURE CONFIG_ERROR" in capsys.readouterr().err


def test_shipped_configs_parse():
    for path in sorted(CONFIGS.glob("*.cfg")):
        parse_config(path)


def test_simulate_equilibrium(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["simulate", "--config", str(write(tmp_path, EQUILIBRIUM)), "--out", str(out)]) == 0
    cols = read_columns(out / "diagnostics.csv")
    assert np.allclose(cols["t"], np.linspace(0, 0.02, 21), rtol=0, atol=1e-15)
    for name in ("mass", "energy", "separation", "mu_mean"):
        assert np.ptp(cols[name]) == 0.0, name
    assert np.all(cols["dissipation"] == 0.0)
    assert (out / "manifest.txt").read_text().count("OK") >= 1
    assert "params.m0 = 0.1" in capsys.readouterr().out


def test_simulate_spinodal_outputs(tmp_path):
    cfg = write(tmp_path, SMALL_SPINODAL)
    out = tmp_path / "o"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    snaps = sorted(p.name for p in (out / "snapshots").glob("step_*.csv") if "boundary" not in p.name)
    assert snaps == [f"step_{k:08d}.csv" for k in range(0, 51, 10)]
    cols = read_columns(out / "diagnostics.csv")
    assert np.max(np.abs(cols["mass"] - 0.1)) <= 1e-12
    assert np.all(np.diff(cols["energy"]) <= 1e-12)
    assert np.all(np.isfinite(cols["dist_to_steady"]))
    assert (out / "decay_fit.txt").exists()

    again = tmp_path / "o2"
    assert main(["simulate", "--config", str(cfg), "--out", str(again)]) == 0
    assert (out / "diagnostics.csv").read_bytes() == (again / "diagnostics.csv").read_bytes()


def test_simulate_forced_divergence(tmp_path, capsys):
    text = SMALL_SPINODAL.replace("step.t_end = 0.05", "step.t_end = 20")
    text += "step.dt = 10\nstep.newton_max_iter = 2\nstep.dt_min = 1\n"
    out = tmp_path / "o"
    assert main(["simulate", "--config", str(write(tmp_path, text)), "--out", str(out)]) == 3
    assert "FAILURE NEWTON_DIVERGENCE" in capsys.readouterr().err
    assert "FAILED NEWTON_DIVERGENCE" in (out / "manifest.txt").read_text()


def test_simulate_rejects_pure_initial_state(tmp_path, capsys):
    text = "mesh.n = 17\ninit.profile = tanh\ninit.amplitude = 1.0\ninit.width = 0.01\nparams.m0 = 0.0\n"
    assert main(["simulate", "--config", str(write(tmp_path, text)), "--out", str(tmp_path / "o")]) == 2
    assert "INADMISSIBLE_INITIAL_DATA" in capsys.readouterr().err


def test_steady_command(tmp_path):
    sim = tmp_path / "sim"
    assert main(["simulate", "--config", str(write(tmp_path, SMALL_SPINODAL)), "--out", str(sim)]) == 0
    final = sim / "snapshots" / "step_00000050.csv"
    text = SMALL_SPINODAL.replace("steady.samples = 0\n", "steady.samples = 40\n")
    text += f"steady.guess = from-file\nsteady.file = {final}\n"
    out = tmp_path / "st"
    assert main(["steady", "--config", str(write(tmp_path, text, "st.cfg")), "--out", str(out)]) == 0
    report = dict(line.split(None, 1) for line in (out / "steady_report.txt").read_text().splitlines())
    assert float(report["residual_norm"]) <= 1e-10
    assert abs(float(report["mu_s"]) - float(report["mu_s_average"])) <= 1e-9
    assert "theta_hat_half" in report
    u = read_snapshot(out / "steady.csv", parse_config(out.parent / "st.cfg").mesh())
    assert np.max(np.abs(u)) < 1


def test_verify_equilibrium_passes(tmp_path, capsys):
    assert main(["verify", "--fast", "--config", str(write(tmp_path, EQUILIBRIUM))]) == 0
    out = capsys.readouterr().out
    for name in ("MASS_CONSERVATION", "ENERGY_MONOTONE", "ENERGY_IDENTITY_ORDER", "SEPARATION_POSITIVE",
                 "YOSIDA_LIMIT", "STEADY_CONSISTENCY", "MASS_BALANCE_KAPPA", "DECAY_FIT_STABLE"):
        assert name in out
    assert "FAIL " not in out


def test_verify_skips_yosida_when_regularized(tmp_path, capsys):
    main(["verify", "--fast", "--config", str(write(tmp_path, EQUILIBRIUM + "params.yosida_eps = 0.5\n"))])
    line = next(x for x in capsys.readouterr().out.splitlines() if x.startswith("YOSIDA_LIMIT"))
    assert "SKIPPED" in line


def test_verify_detects_tampered_potential(tmp_path, capsys):
    assert main(["verify", "--fast", "--config", str(write(tmp_path, EQUILIBRIUM + "potential.lipschitz_L = 1\n"))]) == 1
    line = next(x for x in capsys.readouterr().out.splitlines() if x.startswith("ASSUMPTIONS"))
    assert "FAIL" in line and "A3" in line


def test_nan_free_decay_file(tmp_path):
    out = tmp_path / "o"
    main(["simulate", "--config", str(write(tmp_path, EQUILIBRIUM)), "--out", str(out)])
    text = (out / "decay_fit.txt").read_text()
    assert text.strip()
    assert not any(math.isnan(float(v)) for v in text.split() if v.replace(".", "").isdigit())
