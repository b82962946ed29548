import json

import pytest

from carnot import cli
from carnot.cli import ConfigError, ExperimentConfig, main, parse_box

SHEAR = {"kind": "heisenberg_shear", "psi": [0, 0, 1]}


@pytest.fixture
def shear_file(tmp_path):
    path = tmp_path / "shear.json"
    path.write_text(json.dumps(SHEAR))
    return path


def test_law_json(capsys):
    assert main(["law", "heisenberg(1)", "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["text"][2] == "1/2*x1*y2 - 1/2*x2*y1"


def test_algebra_validate_and_errors(tmp_path, capsys):
    assert main(["algebra", "validate", "engel"]) == 0
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"layer_dims": [2, 1], "constants": [[1, 2, 3, 1, 1], [1, 3, 1, 1, 1]]}))
    assert main(["algebra", "validate", str(bad)]) == 1
    assert main(["algebra", "validate", "nothing"]) == 2


def test_decompose_output(tmp_path, capsys):
    assert main(["decompose", "heisenberg(1)", "--point", "0,0,1", "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "decompose.json").read_text())
    assert data["k0"] == 6


def test_lift_writes_curve(tmp_path):
    assert main(["lift", "heisenberg(1)", "--out", str(tmp_path), "--no-timestamp"]) == 0
    assert (tmp_path / "curve.csv").exists() and (tmp_path / "lift.json").exists()


def test_pansu_trick_suite(tmp_path, shear_file):
    code = main(["pansu", "trick", "--map", str(shear_file), "--A=-1:1", "--Omega=-4:4", "--samples", "20",
                 "--out", str(tmp_path), "--no-timestamp"])
    assert code == 0
    assert json.loads((tmp_path / "pansu_trick.json").read_text())["passed"]


def test_determinism(tmp_path, shear_file):
    outs = []
    for k in range(2):
        out = tmp_path / str(k)
        assert main(["pansu", "trick", "--map", str(shear_file), "--A=-1:1", "--Omega=-4:4", "--samples", "20",
                     "--seed", "3", "--out", str(out), "--no-timestamp"]) == 0
        outs.append(out)
    for name in ("pansu_trick.csv", "pansu_trick.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_output_env(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
    assert main(["decompose", "engel", "--point", "1,0,0,0"]) == 0
    assert (tmp_path / "env" / "decompose.json").exists()


def test_bad_box_is_config_error(tmp_path, shear_file, capsys):
    code = main(["pansu", "rate", "--map", str(shear_file), "--A=1:-1", "--out", str(tmp_path)])
    assert code == 2
    assert "A: min must be < max" in capsys.readouterr().err


def test_missing_map_file(tmp_path):
    assert main(["pansu", "rate", "--map", str(tmp_path / "none.json")]) == 2


def test_config_validation(tmp_path, shear_file):
    with pytest.raises(ConfigError, match="suite"):
        ExperimentConfig.from_dict({"group": "engel"})
    with pytest.raises(ConfigError, match="bogus"):
        ExperimentConfig.from_dict({"suite": "law", "bogus": 1})
    with pytest.raises(ConfigError, match="t_points"):
        ExperimentConfig.from_dict({"suite": "law", "t_points": 2})
    with pytest.raises(ConfigError, match="map"):
        ExperimentConfig.from_dict({"suite": "pansu-rate"})
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"suite": "pansu-trick", "map": shear_file.name, "samples": 5,
                                    "A": "-1:1", "Omega": "-4:4", "timestamp": False}))
    cfg = ExperimentConfig.load(str(cfg_path))
    assert cfg.map == str(shear_file)
    assert main(["run", "--config", str(cfg_path), "--out", str(tmp_path / "run")]) == 0


def test_parse_box():
    box = parse_box("-1,-2:1,2")
    assert box.lo == (-1.0, -2.0) and box.hi == (1.0, 2.0)
    assert parse_box([[0], [1]]).hi == (1.0,)
    with pytest.raises(ConfigError):
        parse_box("1")
