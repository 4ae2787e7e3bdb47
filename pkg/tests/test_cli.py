import json
from pathlib import Path

import pytest

from markovrp.cli import main
from markovrp.path_tools import GroupPath

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "simulate" in capsys.readouterr().out


def test_unknown_flag_and_missing_config_exit_two(tmp_path, capsys):
    assert main(["support", "--bogus"]) == 2
    assert main(["support", "--config", str(tmp_path / "none.json")]) == 2
    assert "cannot read" in capsys.readouterr().err


def test_bad_config_value_exit_two(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kind": "support", "alphas": [0.7]}))
    assert main(["support", "--config", str(cfg)]) == 2
    assert "alphas" in capsys.readouterr().err


def test_lift_translate_rde_chain(tmp_path):
    h = tmp_path / "h.csv"
    h.write_text("t,v1,v2\n0,0,0\n1,1,0\n2,1,1\n")
    lift = tmp_path / "lift.json"
    assert main(["lift", "--h", str(h), "--N", "2", "--out", str(lift)]) == 0
    x = GroupPath.from_json(lift)
    assert x[-1].level(2)[0, 1] == pytest.approx(1.0)

    zero = tmp_path / "zero.json"
    GroupPath.identity(2, 2, [0.0, 1.0, 2.0]).to_json(zero)
    moved = tmp_path / "moved.json"
    assert main(["translate", "--path", str(zero), "--h", str(h), "--exact", "--out", str(moved)]) == 0
    assert GroupPath.from_json(moved).max_abs_diff(x) < 1e-14

    sol = tmp_path / "y.csv"
    assert main(["rde", "--fields", "heisenberg", "--driver", str(lift), "--out", str(sol)]) == 0
    last = sol.read_text().strip().splitlines()[-1].split(",")
    assert [float(v) for v in last[1:]] == pytest.approx([1.0, 1.0, 1.0])


def test_simulate_outputs_group_path(capsys):
    assert main(["simulate", "--T", "0.1", "--steps", "64", "--seed", "2"]) == 0
    p = GroupPath.from_json(capsys.readouterr().out)
    assert len(p) == 8 and p.N == 2


def test_hormander_check_from_file(capsys):
    assert main(["hormander-check", "--fields", str(CONFIGS / "heisenberg.json"), "--N", "2", "--depth", "4",
                 "--n-points", "16"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["verdict"] == "holds" and out["dim_lie_W"] == 3


def test_hormander_check_bad_start_point(capsys):
    assert main(["hormander-check", "--fields", "grushin", "--N", "1", "--depth", "3", "--y0", "1", "2", "3"]) == 2


def test_experiment_writes_outputs(tmp_path):
    out_json, out_csv = tmp_path / "r.json", tmp_path / "r.csv"
    code = main(["support", "--M", "200", "--steps", "16", "--seed", "4",
                 "--out-json", str(out_json), "--out-csv", str(out_csv)])
    assert code in (0, 1)
    data = json.loads(out_json.read_text())
    assert data["config"]["seed"] == 4 and data["config"]["M"] == 200
    assert out_csv.read_text().startswith("statistic,alpha,gamma")


def test_density_refusal_exit_two(capsys):
    assert main(["density", "--fields", "heisenberg", "--M", "500"]) == 2
    assert "insufficient samples" in capsys.readouterr().err


def test_lemma_suite_command(tmp_path):
    out = tmp_path / "lemmas.json"
    assert main(["lemma-suite", "--cases", "5", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["violations"] == 0
