import json
import re

import pytest
from hypothesis import given, strategies as st

from nlspread.cli import main
from nlspread.config import (ConfigError, Mode, ProblemConfig, parse_config, parse_config_text,
                             serialize_config)

COARSE = """\
[cell]
T = 1.0
p = 2.0
n_t = 64
n_x = 32

[kernel]
name = "biweight"
r0 = 1.0

[a0]
constant = 1.0

[[a0.modes]]
m = 0
n = 1
amp = 0.3

[b]
constant = 1.0

[solver]
seed = 3
"""


def _line_of_error(text):
    with pytest.raises(ConfigError) as exc:
        parse_config_text(text, "case.toml")
    return exc.value


def test_defaults_and_modes():
    cfg = parse_config_text(COARSE)
    assert cfg.cell.n_t == 64 and cfg.solver.seed == 3
    assert cfg.a0.modes == (Mode(0, 1, 0.3, 0.0),)
    assert cfg.solver.eigen_tol == 1e-10
    fs = cfg.make_fitness()
    assert fs.a0.max() == pytest.approx(1.3)


def test_unknown_kernel_points_at_its_line():
    err = _line_of_error(COARSE.replace('"biweight"', '"gauss"'))
    assert err.line == 8
    assert "case.toml:8:" in str(err) and "biweight, triweight" in str(err)


def test_nonpositive_saturation_rejected():
    err = _line_of_error(COARSE.replace("[b]\nconstant = 1.0", "[b]\nconstant = -0.5"))
    assert "strictly positive" in str(err) and err.line == 19            # the [b] header


@pytest.mark.parametrize("edit,needle", [
    (("n_x = 32", "n_x = 4"), "at least 8"),
    (("T = 1.0", "T = 0.0"), "T must be positive"),
    (("r0 = 1.0", "r0 = -1.0"), "r0 must be positive"),
    (("seed = 3", "seed = 3\nbogus = 1"), "unknown key 'bogus'"),
    (("seed = 3", "eigen_tol = \"x\""), "must be a number"),
    (("amp = 0.3", "amplitude = 0.3"), "unknown key|lacks 'amp'"),
])
def test_validation_messages_carry_lines(edit, needle):
    err = _line_of_error(COARSE.replace(*edit))
    assert err.line is not None
    assert re.search(needle, str(err))


def test_missing_section_and_bad_toml():
    err = _line_of_error(COARSE.replace("[solver]\nseed = 3\n", ""))
    assert "missing section [solver]" in str(err)
    assert "not valid TOML" in str(_line_of_error("[cell\n"))


@given(n_t=st.sampled_from([16, 32, 64]), amp=st.floats(-0.5, 0.5), seed=st.integers(0, 99),
       phase=st.floats(-3.0, 3.0))
def test_serialization_round_trip(n_t, amp, seed, phase):
    cfg = parse_config_text(COARSE).with_cell(n_t=n_t).with_solver(seed=seed)
    cfg = ProblemConfig(cfg.cell, cfg.kernel, cfg.a0.__class__(1.0, (Mode(1, 1, amp, phase),)),
                        cfg.b, cfg.solver)
    back = parse_config_text(serialize_config(cfg))
    assert back == cfg
    assert back.hash() == cfg.hash()


def test_missing_config_file(tmp_path, capsys):
    assert main(["speed", "--config", str(tmp_path / "none.toml")]) == 1
    assert "cannot read config" in capsys.readouterr().err


@pytest.fixture
def coarse_file(tmp_path):
    path = tmp_path / "coarse.toml"
    path.write_text(COARSE)
    return path


def test_speed_outputs_are_deterministic(coarse_file, tmp_path):
    runs = []
    for name in ("one", "two"):
        out = tmp_path / name
        assert main(["speed", "--config", str(coarse_file), "--out", str(out)]) == 0
        runs.append((out / "speed.json").read_text())
        man = json.loads((out / "speed.manifest.json").read_text())
        assert man["exit_status"] == 0 and "speed_samples.csv" in man["artifacts"]
        assert (out / "speed_samples.csv").read_text().startswith("# config_hash=")
    assert runs[0] == runs[1]
    data = json.loads(runs[0])
    assert data["config_hash"] == parse_config(coarse_file).hash()


def test_wave_at_minimal_speed_is_invalid(coarse_file, tmp_path, capsys):
    code = main(["wave", "--config", str(coarse_file), "--out", str(tmp_path),
                 "--speed-multiple", "1.0"])
    assert code == 1
    assert "minimal speed" in capsys.readouterr().err


def test_bad_config_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text(COARSE.replace('"biweight"', '"gauss"'))
    assert main(["eigen", "--config", str(path)]) == 1
    assert f"{path}:8:" in capsys.readouterr().err


def test_eigen_and_sweep_write_tables(coarse_file, tmp_path):
    assert main(["eigen", "--config", str(coarse_file), "--out", str(tmp_path),
                 "--mu", "0", "--mu", "1"]) == 0
    eig = json.loads((tmp_path / "eigen.json").read_text())
    assert eig["config_hash"] == parse_config(coarse_file).hash()
    assert main(["sweep", "--config", str(coarse_file), "--out", str(tmp_path),
                 "--values", "0.5", "1", "2"]) == 0
    assert (tmp_path / "sweep.json").exists()
