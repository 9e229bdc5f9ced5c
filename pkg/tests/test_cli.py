import json

import pandas as pd
import pytest

from src.cli import EXIT_ERROR, EXIT_FOUND, EXIT_OK, main


def run_cli(capsys, *argv):
    code = main(["--no-log-file", "--log-level", "WARNING", *argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_check_ni_verdicts(capsys, data_dir):
    code, out, _ = run_cli(capsys, "check-ni", str(data_dir / "constant_machine.json"), "--horizon", "2")
    assert code == EXIT_OK
    assert "noninterfering up to horizon 2" in out

    code, out, _ = run_cli(capsys, "check-ni", str(data_dir / "echo_machine.json"), "--json")
    assert code == EXIT_FOUND
    data = json.loads(out)
    assert data["verdict"] == "witness"
    assert data["witness"] == [[["0", "0"]], [["1", "0"]]]


def test_check_ni_writes_witness_traces(capsys, data_dir, tmp_path):
    out_path = tmp_path / "witness.json"
    code, _, _ = run_cli(capsys, "check-ni", str(data_dir / "echo_machine.json"), "--witness-out", str(out_path))
    assert code == EXIT_FOUND
    first = json.loads((tmp_path / "witness-1.json").read_text())
    second = json.loads((tmp_path / "witness-2.json").read_text())
    assert first["outputs"] == [["0", "0"], ["0", "0"]]
    assert second["outputs"] == [["0", "0"], ["1", "1"]]


def test_check_ni_possibilistic(capsys, data_dir):
    code, _, _ = run_cli(capsys, "check-ni", str(data_dir / "coin_machine.json"), "--possibilistic")
    assert code == EXIT_OK


def test_mimic_then_check(capsys, data_dir, tmp_path):
    q_n = tmp_path / "q_n.json"
    q_i = tmp_path / "q_i.json"
    assert run_cli(capsys, "mimic", str(data_dir / "observed_trace.json"), "--kind", "ni", "--out", str(q_n))[0] == EXIT_OK
    assert run_cli(capsys, "mimic", str(data_dir / "observed_trace.json"), "--kind", "int", "--out", str(q_i))[0] == EXIT_OK
    assert run_cli(capsys, "check-ni", str(q_n), "--horizon", "2")[0] == EXIT_OK
    assert run_cli(capsys, "check-ni", str(q_i), "--horizon", "1")[0] == EXIT_FOUND


def test_sem_effect(capsys, data_dir):
    sem = str(data_dir / "confounded_sem.json")
    code, out, _ = run_cli(capsys, "sem-effect", sem, "--factors", "A", "--response", "B")
    assert code == EXIT_OK
    assert out.strip() == "no-effect"

    code, out, _ = run_cli(capsys, "sem-effect", sem, "--factors", "A", "--response", "C", "--json")
    assert code == EXIT_FOUND
    assert json.loads(out)["witness"] == [["0"], ["1"]]

    code, _, _ = run_cli(capsys, "sem-effect", sem, "--factors", "B", "--response", "C", "--fixed", "A=1")
    assert code == EXIT_OK


def test_theorem3_single_machine(capsys, data_dir):
    code, out, _ = run_cli(capsys, "theorem3-sweep", "--machine", str(data_dir / "echo_machine.json"), "--json")
    assert code == EXIT_OK
    data = json.loads(out)
    assert data["interference"] and data["effect"] and data["agree"]


def test_simulate_ptest_and_report(capsys, data_dir, tmp_path):
    responses = tmp_path / "responses.csv"
    code, _, _ = run_cli(capsys, "simulate", "--seed", "11", "--coupling", "0.5", "--out", str(responses), "--logs-out", str(tmp_path / "logs.csv"))
    assert code == EXIT_OK
    assert responses.exists()

    code, out, _ = run_cli(
        capsys, "ptest", str(responses), "--stat", "kw",
        "--keywords-file", str(data_dir / "keywords.json"), "--json",
    )
    assert code == EXIT_OK
    rows = json.loads(out)
    assert rows[0]["method"] == "partition"
    assert rows[0]["p_value"] < 0.05

    code, out, _ = run_cli(capsys, "ptest", str(responses), "--stat", "chi2", "--keywords", "car,auto", "--json")
    assert code == EXIT_OK
    assert json.loads(out)[0]["chi2"] > 0

    matrix = tmp_path / "matrix.csv"
    pd.DataFrame({"kw": [0.004, 0.2]}, index=["data set 1", "data set 2"]).to_csv(matrix, index_label="data_set")
    code, out, _ = run_cli(capsys, "report", "--matrix", str(matrix), "--json")
    assert code == EXIT_OK
    data = json.loads(out)
    assert data["summary"] == {"kw": 1}
    assert data["fdr_flags"]["kw"] == {"data set 1": True, "data set 2": False}


def test_power_stored_and_reported(capsys, tmp_path):
    database = f"sqlite:///{tmp_path / 'cli.db'}"
    code, _, err = run_cli(capsys, "power", "--runs", "2", "--store", "--label", "cli", "--database", database)
    assert code == EXIT_OK
    study_id = int(err.strip().split()[-1])
    code, out, _ = run_cli(capsys, "report", "--study-id", str(study_id), "--database", database, "--json")
    assert code == EXIT_OK
    assert set(json.loads(out)["summary"]) == {"sim", "kw", "prc"}


def test_errors_exit_with_one(capsys, data_dir, tmp_path):
    code, _, err = run_cli(capsys, "check-ni", str(tmp_path / "missing.json"))
    assert code == EXIT_ERROR
    assert err.startswith("Error:")
    assert len(err.strip().splitlines()) == 1

    empty = tmp_path / "empty.csv"
    empty.write_text("")
    code, _, err = run_cli(capsys, "report", "--matrix", str(empty))
    assert code == EXIT_ERROR

    code, _, err = run_cli(capsys, "ptest", str(data_dir / "echo_machine.json"), "--stat", "sim")
    assert code == EXIT_ERROR


def test_parser_requires_a_verb():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == EXIT_ERROR


def test_usage_errors_never_look_like_findings(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--no-log-file", "check-ni"])
    assert exc.value.code == EXIT_ERROR
    assert "usage:" in capsys.readouterr().err

    with pytest.raises(SystemExit) as exc:
        main(["--no-log-file", "ptest", "data.csv", "--stat", "bogus"])
    assert exc.value.code == EXIT_ERROR

    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == EXIT_OK
