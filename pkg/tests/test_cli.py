import json

import pytest

from app.cli import build_dispatcher, main
from app.settings import settings


def _json(capsys):
    return json.loads(capsys.readouterr().out)


def test_bad_k_is_an_input_error(capsys):
    assert main(["threshold", "--k", "2"]) == 2
    assert "error" in capsys.readouterr().err


def test_unknown_verb_suggests_nearest(capsys):
    assert main(["treshold", "--k", "12"]) == 2
    assert "threshold" in capsys.readouterr().err


def test_no_verb_prints_usage(capsys):
    assert main([]) == 2
    assert "usage" in capsys.readouterr().err


def test_missing_required_argument():
    assert main(["gen", "--n", "6"]) == 2


def test_solve_contradiction(capsys, contradiction_path):
    assert main(["solve", "--in", str(contradiction_path)]) == 0
    doc = _json(capsys)
    assert list(doc) == ["schema_id", "tool", "params", "precision", "result"]
    assert doc["result"]["sat"] is False
    assert doc["result"]["Z"] == 0


def test_missing_file_is_an_input_error(tmp_path):
    assert main(["solve", "--in", str(tmp_path / "nope.naesat")]) == 2


def test_non_convergence_exit_code(monkeypatch, capsys):
    monkeypatch.setattr(settings, "max_iter", 1)
    assert main(["fixedpoint", "--k", "10", "--d", "3540"]) == 3
    assert "numeric error" in capsys.readouterr().err


def test_gen_is_byte_identical(capsys):
    assert main(["gen", "--n", "9", "--d", "2", "--k", "3", "--seed", "4"]) == 0
    first = capsys.readouterr().out
    assert main(["gen", "--n", "9", "--d", "2", "--k", "3", "--seed", "4"]) == 0
    assert capsys.readouterr().out == first
    assert json.loads(first)["result"]["instance"].startswith("p naesat 9 6 2 3")


def test_fixedpoint_is_byte_identical(capsys):
    assert main(["fixedpoint", "--k", "12", "--d", "14000"]) == 0
    first = capsys.readouterr().out
    assert main(["fixedpoint", "--k", "12", "--d", "14000"]) == 0
    assert capsys.readouterr().out == first
    doc = json.loads(first)
    assert doc["precision"]["bits"] == 112
    assert doc["result"]["regime"] == "proven"


def test_gen_file_then_enumerate_and_complete(tmp_path, capsys):
    path = tmp_path / "small.naesat"
    assert main(["gen", "--n", "6", "--d", "2", "--k", "3", "--seed", "2", "--out", str(path)]) == 0
    capsys.readouterr()
    assert path.exists()

    assert main(["solve", "--in", str(path), "--format", "text"]) == 0
    assert "sat = " in capsys.readouterr().out

    assert main(["enumerate", "--in", str(path), "--beta-max", "none", "--list"]) == 0
    result = _json(capsys)["result"]
    assert result["bijection_ok"] is True
    assert result["frozen_count"] == len(result["frozen"]) == result["aux_count"]
    if result["frozen"]:
        eta = result["frozen"][0]
        assert main(["complete", "--in", str(path), "--eta", eta]) == 0
        assert "ok" in _json(capsys)["result"]


def test_output_file(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["threshold", "--k", "10", "--format", "csv", "--out", str(out)]) == 0
    assert out.read_text(encoding="utf-8").startswith("key,value\n")


def test_verbs_are_registered_once():
    verbs = set(build_dispatcher().commands)
    assert verbs == {
        "threshold", "fixedpoint", "rate", "hessian", "pair",
        "gen", "solve", "coarsen", "enumerate", "complete",
        "sweep", "survival", "density", "ez",
    }


@pytest.mark.parametrize("argv", [["--version"], ["threshold", "--help"]])
def test_version_and_help_exit_zero(argv, capsys):
    assert main(argv) == 0


def test_sweep_with_k_two_is_an_input_error(capsys):
    assert main(["sweep", "--k", "2", "--d", "2", "--n", "6", "--trials", "2"]) == 2
    assert "error" in capsys.readouterr().err
