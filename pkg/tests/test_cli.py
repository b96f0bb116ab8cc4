import json
from pathlib import Path

import numpy as np
import pytest

from liouplan.cli import main
from liouplan.table import TrajectoryTable

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def test_analyze_builtin(capsys):
    assert main(["analyze", "builtin:academic3", "--partition", "eta=x2,x3,xi=x1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["chain"][0]["kind"] == "Integral"
    assert out["pv_error"].startswith("AffineOffset")


def test_analyze_search_order(tmp_path, capsys):
    path = tmp_path / "sys.json"
    path.write_text(json.dumps({"name": "two", "states": ["e", "p", "q"], "inputs": ["u"],
                                "rhs": {"e": "u", "p": "e", "q": "p*q"}}))
    assert main(["analyze", str(path), "--partition", "eta=e,xi=q,p", "--search-order"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["xi"] == ["p", "q"]


def test_plan_writes_csv_and_report(tmp_path, capsys):
    csv, rep = tmp_path / "out.csv", tmp_path / "rep.json"
    code = main(["plan", str(SCENARIOS / "academic3.json"), "-o", str(csv), "--report", str(rep)])
    assert code == 0
    assert "PASS" in capsys.readouterr().out
    assert json.loads(rep.read_text())["pass"] is True
    assert TrajectoryTable.from_csv(csv).n == 200


def test_verify_failure_exit_code(capsys):
    assert main(["verify", str(SCENARIOS / "academic3.json"), "--grid", "4", "--tol", "1e-14"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_config_error_exit_code(tmp_path, capsys):
    assert main(["verify", str(SCENARIOS / "academic3_bad_partition.json")]) == 2
    assert main(["verify", str(tmp_path / "missing.json")]) == 2
    assert main(["analyze", "builtin:academic3", "--partition", "eta=x2,xi=x1"]) == 2


def test_numeric_error_exit_code(tmp_path, capsys):
    system = tmp_path / "sys.json"
    system.write_text(json.dumps({"name": "pole", "states": ["x"], "inputs": ["u"],
                                  "rhs": {"x": "1/(x - 1) + u"}}))
    grid = TrajectoryTable.grid(0, 1, 4)
    inputs = grid.with_columns({"u": np.zeros(5)})
    csv = tmp_path / "u.csv"
    inputs.to_csv(csv)
    assert main(["simulate", str(system), "--inputs", str(csv), "--x0", "1"]) == 3


def test_simulate_to_stdout(tmp_path, capsys):
    grid = TrajectoryTable.grid(0, 1, 10)
    csv = tmp_path / "u.csv"
    grid.with_columns({"u": np.ones(11)}).to_csv(csv)
    assert main(["simulate", "builtin:academic3", "--inputs", str(csv), "--x0", "x1=0,x2=0,x3=0"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "t,x1,x2,x3"
    assert float(lines[-1].split(",")[3]) == pytest.approx(1.0, abs=1e-12)


def test_missing_subcommand():
    with pytest.raises(SystemExit):
        main([])
