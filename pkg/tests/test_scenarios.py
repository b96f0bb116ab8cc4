import json
import math
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from liouplan.errors import ConfigError, ZeroSurfaceFactor
from liouplan.expr import evaluate, to_string
from liouplan.rolling import RATIONAL_STATES
from liouplan.scenarios import (
    EXIT_CONFIG, EXIT_FAIL, EXIT_NUMERIC, EXIT_PASS, ScenarioConfig, builtin_academic,
    builtin_plateball, builtin_plateball_rational, builtin_rolling, liouvillian_outputs_plateball,
    report_schema, resolve_system, run_scenario,
)
from liouplan.table import TrajectoryTable
from liouplan.verify import compare, integrate_ode

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def _load(name):
    return ScenarioConfig.load(SCENARIOS / name)


# -- builtins --------------------------------------------------------------------

def test_academic_builtins():
    assert to_string(builtin_academic(3).rhs["x1"]) == "x2 + x3^2"
    assert to_string(builtin_academic(1).rhs["x1"]) == "x2 + x1^2"
    with pytest.raises(ValueError):
        builtin_academic(0)


def test_rational_model():
    system = builtin_plateball_rational()
    assert system.states == RATIONAL_STATES
    env = {"v1": 0.0, "w1": 0.0, "xi": 0.0, "w2": 0.0, "sigma": 0.0, "u1": 1.0, "u2": 0.0}
    assert evaluate(system.rhs["xi"], env) == 0.5
    assert evaluate(system.rhs["sigma"], {**env, "sigma": 0.7, "u2": 0.3}) == 0.0


def test_general_rolling_matches_hand_written_plateball():
    general = builtin_rolling("1", "cos(v2)")
    rng = np.random.default_rng(4)
    for row in rng.uniform(-1.2, 1.2, size=(200, 7)):
        env = dict(zip(["v1", "w1", "v2", "w2", "psi", "u1", "u2"], row.tolist()))
        for s in general.states:
            assert evaluate(general.rhs[s], env) == pytest.approx(
                evaluate(builtin_plateball().rhs[s], env), rel=1e-12, abs=1e-14)

    grid = TrajectoryTable.grid(0, 1, 100)
    inputs = grid.with_columns({"u1": np.cos(grid.t), "u2": 0.5 * np.sin(2 * grid.t)},
                               {"u1": np.cos(grid.t_mid), "u2": 0.5 * np.sin(2 * grid.t_mid)})
    x0 = [0.1, 0.2, -0.3, 0.0, 0.4]
    a = integrate_ode(general, inputs, x0)
    b = integrate_ode(builtin_plateball(), inputs, x0)
    assert compare(a, b, list(general.states), 1e-12).passed


def test_flat_on_flat_has_no_spin():
    system = builtin_rolling("1", "1")
    assert to_string(system.rhs["psi"]) == "0"


def test_surface_factor_checks():
    with pytest.raises(ZeroSurfaceFactor):
        builtin_rolling("1", "0")
    with pytest.raises(ZeroSurfaceFactor):
        builtin_rolling("v1 - v1", "1")
    with pytest.raises(ValueError):
        builtin_rolling("w2", "1")


def test_outputs_examples():
    zero = dict.fromkeys(["v1", "w1", "v2", "w2", "psi"], 0.0)
    assert liouvillian_outputs_plateball(zero) == (0.0, 0.0, 0.0, 0.0)
    x, y, _, _ = liouvillian_outputs_plateball({**zero, "v1": 1.0, "v2": 1.0})
    assert x == 0.0 and y == 0.0


def test_outputs_half_angle_identities():
    rng = np.random.default_rng(2)
    for v1, w1, v2, w2, psi in rng.uniform(-3, 3, size=(500, 5)):
        row = {"v1": v1, "w1": w1, "v2": v2, "w2": w2, "psi": psi,
               "xi": math.tan(v2 / 2), "sigma": math.tan(psi / 2)}
        x, y, xt, yt = liouvillian_outputs_plateball(row)
        assert abs(x - xt) <= 1e-9 and abs(y - yt) <= 1e-9


def test_resolve_system_forms():
    assert resolve_system("builtin:academic2")[0].name == "academic2"
    system, notes = resolve_system({"builtin": "plateball"})
    assert system.name == "plateball" and notes
    with pytest.raises(ConfigError):
        resolve_system({"builtin": "nope"})
    with pytest.raises(ConfigError):
        resolve_system("academic3.json")


# -- configuration ---------------------------------------------------------------

@pytest.mark.parametrize("patch", [
    {"tolerance": 0},
    {"grid": {"t0": 0, "tf": 1, "N": 1}},
    {"grid": {"t0": 1, "tf": 1, "N": 10}},
    {"method": "magic"},
    {"kind": "other"},
    {"flatness_map": {}},
    {"partition": None},
    {"substeps": 0},
    {"grid": {"N": "many"}},
])
def test_config_validation(patch):
    data = json.loads((SCENARIOS / "academic3.json").read_text())
    data.update(patch)
    if patch.get("partition", 1) is None:
        del data["partition"]
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict(data)


def test_invalid_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{nope")
    with pytest.raises(ConfigError):
        ScenarioConfig.load(p)


# -- pipelines -------------------------------------------------------------------

def test_academic3_passes():
    result = run_scenario(_load("academic3.json"))
    assert result.exit_code == EXIT_PASS
    rep = result.report
    assert rep["classification"] == "Chain"
    assert rep["chain"] == [{"var": "x1", "kind": "Integral", "alpha": "x2 + x3^2"}]
    assert rep["errors"]["x1"]["sup"] <= 1e-6
    assert any("defect <= 1" in n for n in rep["notes"])


def test_academic1_full_state_map_has_empty_chain():
    result = run_scenario(_load("academic1_flat.json"))
    assert result.passed and result.report["chain"] == []


def test_misdeclared_partition_surfaces_not_chain():
    result = run_scenario(_load("academic3_bad_partition.json"))
    assert not result.passed and result.exit_code == EXIT_CONFIG
    failure = result.report["failure"]
    assert failure["stage"] == "structure" and failure["type"] == "NotChain"
    assert "x2" in failure["message"]


def test_unit_triangular_scenario():
    result = run_scenario(_load("pv_unit_triangular.json"))
    assert result.passed
    assert result.report["classification"] == "UnitLowerTriangular"
    assert result.report["matrix"] == [["1", "0"], ["eta1 + sin(t)", "1"]]


def test_transform_scenario():
    result = run_scenario(_load("plateball_transform.json"))
    assert result.passed and result.report["classification"] == "Transform"
    assert {"x", "y", "x_tilde", "y_tilde", "sigma", "xi"} <= set(result.table.names)


def test_tight_tolerance_fails_verification():
    result = run_scenario(_load("academic3.json").replace(tolerance=1e-15, grid=(0.0, 1.0, 10)))
    assert result.exit_code == EXIT_FAIL and result.error is None


def test_numeric_failure_exit_code():
    cfg = _load("academic3.json").replace(flatness_map={"x2": "y", "x3": "y'", "u": "1/y"})
    result = run_scenario(cfg)
    assert result.exit_code == EXIT_NUMERIC
    assert result.report["failure"]["stage"] == "base"


def test_deterministic():
    a = run_scenario(_load("pv_unit_triangular.json"))
    b = run_scenario(_load("pv_unit_triangular.json"))
    ra, rb = dict(a.report), dict(b.report)
    ra.pop("runtime_ms"), rb.pop("runtime_ms")
    assert ra == rb
    assert a.table.to_csv() == b.table.to_csv()


@pytest.mark.parametrize("name", sorted(p.name for p in SCENARIOS.glob("*.json")))
def test_reports_validate_against_schema(name):
    report = run_scenario(_load(name)).report
    jsonschema.validate(json.loads(json.dumps(report)), report_schema())


# -- CSV -------------------------------------------------------------------------

def test_csv_format(tmp_path):
    table = run_scenario(_load("academic3.json")).table
    path = tmp_path / "out.csv"
    table.to_csv(path)
    raw = path.read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    lines = raw.decode().splitlines()
    header = lines[0].split(",")
    assert header[0] == "t" and "x1" in header and "sim_x1" in header
    assert len(lines) == 1 + 201
    back = TrajectoryTable.from_csv(path)
    for name in table.names:
        assert np.array_equal(back[name], table[name])


def test_dense_csv_round_trip(tmp_path):
    table = run_scenario(_load("academic3.json")).table
    path = tmp_path / "dense.csv"
    table.to_csv(path, columns=["u"], dense=True)
    back = TrajectoryTable.from_csv(path, dense=True)
    assert np.array_equal(back.mid("u"), table.mid("u"))
    assert len(path.read_text().splitlines()) == 1 + 401
