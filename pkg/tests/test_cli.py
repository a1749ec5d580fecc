import json

import numpy as np
import pytest

from cmcloops.cli import main, parse_config
from cmcloops.periods import genus1_coefficient

SMALL = ["--grid", "6,6", "--extent", "0.5", "--N", "16"]


def run(capsys, argv):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_genus1_report(capsys, tmp_path):
    code, out, _ = run(capsys, ["genus1-report", "--r", "0.5", "--out", str(tmp_path / "g1.json")])
    assert code == 0
    rep = json.loads(out)
    b = complex(*rep["b"])
    assert abs(b - genus1_coefficient(0.5, 0.0)) < 1e-6
    assert abs(b.imag) < 1e-9 and b.real < 0
    assert rep["ratio"] > 1 and rep["min_margin"] > 0
    assert rep["torus"]["verdict"] == "no-torus"
    assert (tmp_path / "g1_ratio.png").stat().st_size > 0
    assert json.loads((tmp_path / "g1.json").read_text()) == rep
    assert rep["provenance"]["command"] == "genus1-report"


def test_check_symmetry_on_cylinder(capsys):
    code, out, _ = run(capsys, ["check-symmetry", "--cylinder", "--q", "0.4+0.2j"] + SMALL)
    rep = json.loads(out)
    assert code == 0
    assert rep["source"] == "cylinder"
    assert rep["translation"]["residual"] < 1e-9


def test_check_torus_genus1_fails_verdict(capsys):
    code, out, _ = run(capsys, ["check-torus", "--curve", "0.25"])
    assert code == 1
    assert json.loads(out)["verdict"] == "no-torus"


@pytest.mark.parametrize("argv", [["cylinder", "--grid", "2,2"],
                                  ["cylinder", "--tol", "nonsense=1"],
                                  ["construct"],
                                  ["cylinder", "--r", "1.5"],
                                  ["cylinder", "--N", "4"],
                                  ["no-such-command"]])
def test_usage_errors(capsys, argv):
    code, out, err = run(capsys, argv)
    assert code == 2
    assert out == ""
    payload = json.loads(err.strip().splitlines()[-1])
    assert payload["exit_code"] == 2 and payload["error"]


def test_construct_then_surface(capsys, tmp_path):
    report = tmp_path / "fam.json"
    code, out, _ = run(capsys, ["construct", "--curve", "0.25", "--out", str(report)])
    assert code == 0
    rep = json.loads(out)
    hpath = tmp_path / "fam_hplus.json"
    assert rep["hplus_path"] == str(hpath) and hpath.exists()
    assert rep["on_circle"]["a2_max"] < 1
    mesh = tmp_path / "mesh.obj"
    code, out, _ = run(capsys, ["surface", "--hplus", str(hpath), "--lambda", "1", "--out", str(mesh)] + SMALL)
    assert code == 0
    lines = mesh.read_text().splitlines()
    assert sum(l.startswith("v ") for l in lines) == 36
    assert sum(l.startswith("f ") for l in lines) > 0
    assert (tmp_path / "mesh_mesh.png").exists()


def test_output_is_deterministic(capsys):
    argv = ["cylinder", "--q", "0.3"] + SMALL
    _, first, _ = run(capsys, argv)
    _, second, _ = run(capsys, argv)
    assert first == second


def test_config_file_merges_and_command_line_wins(tmp_path):
    cfg_file = tmp_path / "c.json"
    cfg_file.write_text(json.dumps({"grid": [8, 8], "N": 20, "r": 0.4, "tolerances": {"symmetry": 1e-7}}))
    cfg = parse_config(["cylinder", "--config", str(cfg_file), "--N", "24"])
    assert cfg.grid[:2] == (8, 8)
    assert cfg.N == 24 and cfg.r == 0.4
    assert cfg.tolerances["symmetry"] == 1e-7


def test_defaults():
    cfg = parse_config(["cylinder"])
    assert (cfg.N, cfg.r, cfg.H) == (32, 0.5, -2)
    assert cfg.grid == (64, 64, 2.0)


def test_closing_on_cylinder(capsys):
    code, out, _ = run(capsys, ["closing", "--cylinder", "--q", str(np.pi / 2), "--lambda", "1j"])
    assert code == 0
    res = json.loads(out)["results"][0]
    assert res["order"] == 4 and res["classification"] == "fully_closed"


def test_closing_rejects_lambda_off_circle(capsys):
    code, _, err = run(capsys, ["closing", "--cylinder", "--q", "1", "--lambda", "0.5"])
    assert code == 2 and "unit circle" in err
