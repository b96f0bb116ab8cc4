import json
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liouplan.errors import AffineOffset, ConfigError, NotChain, NotLinear, OpenSubsystem, UnknownCoordinate
from liouplan.expr import compile_expr, evaluate, parse_expression as P
from liouplan.scenarios import builtin_academic
from liouplan.structure import (
    Classification, ExtensionChain, ExtensionStep, Partition, PVForm, StepKind, SystemModel,
    check_chain_structure, classify_matrix, extract_pv_form, is_identically, is_zero,
    search_chain_order,
)
from liouplan.table import TrajectoryTable
from liouplan.verify import compare, integrate_ode

from .oracles import double_integrator_pv, random_triangular

A3_PART = Partition(("x2", "x3"), ("x1",))


# -- zero testing ----------------------------------------------------------------

def test_zero_test_examples():
    assert is_zero(P("sin(x)^2 + cos(x)^2 - 1"))
    assert not is_zero(P("x - x^2"))
    assert is_identically(P("x/x"), 1.0)
    # no evaluable point: reported as not zero
    assert not is_zero(P("ln(-1 - x^2)"))


# -- chains ----------------------------------------------------------------------

def test_academic3_is_one_integral():
    chain = check_chain_structure(builtin_academic(3), A3_PART)
    assert chain.to_list() == [{"var": "x1", "kind": "Integral", "alpha": "x2 + x3^2"}]


def test_single_exponential_step():
    system = SystemModel("exp", ["xi1"], ["u1"], {"xi1": "u1*xi1"})
    chain = check_chain_structure(system, Partition((), ("xi1",)))
    assert chain.steps == (ExtensionStep("xi1", StepKind.EXPONENTIAL, P("u1")),)


def test_academic1_is_not_a_chain():
    with pytest.raises(NotChain) as info:
        check_chain_structure(builtin_academic(1), A3_PART)
    assert info.value.var == "x1" and "nonlinear in x1" in info.value.reason


def test_misdeclared_partition_is_rejected():
    with pytest.raises(NotChain) as info:
        check_chain_structure(builtin_academic(3), Partition(("x1", "x3"), ("x2",)))
    assert info.value.var == "x2"


def test_later_dependency_names_offender():
    system = SystemModel("bad", ["a", "b"], ["u"], {"a": "b", "b": "u"})
    with pytest.raises(NotChain) as info:
        check_chain_structure(system, Partition((), ("a", "b")))
    assert info.value.var == "a" and "'b'" in info.value.reason


def test_affine_step_is_neither_kind():
    system = SystemModel("aff", ["z"], ["u"], {"z": "u*z + 1"})
    with pytest.raises(NotChain) as info:
        check_chain_structure(system, Partition((), ("z",)))
    assert "offset" in info.value.reason


def test_two_step_chain_and_order_search():
    system = SystemModel("two", ["e", "p", "q"], ["u"], {"e": "u", "p": "e", "q": "sin(t)*p*q"})
    chain = check_chain_structure(system, Partition(("e",), ("p", "q")))
    assert [s.kind for s in chain] == [StepKind.INTEGRAL, StepKind.EXPONENTIAL]
    assert chain.is_prefix_closed()
    with pytest.raises(NotChain):
        check_chain_structure(system, Partition(("e",), ("q", "p")))
    part, found = search_chain_order(system, Partition(("e",), ("q", "p")))
    assert part.xi == ("p", "q") and found == chain


def test_search_order_limit():
    system = SystemModel("big", [f"z{i}" for i in range(7)], ["u"], {f"z{i}": "u" for i in range(7)})
    with pytest.raises(ValueError):
        search_chain_order(system, Partition((), tuple(system.states)))


def test_hand_built_chain_prefix_violation_detected():
    bad = ExtensionChain((ExtensionStep("p", StepKind.INTEGRAL, P("q")),
                          ExtensionStep("q", StepKind.INTEGRAL, P("1"))))
    assert not bad.is_prefix_closed()


# -- linear form -----------------------------------------------------------------

def test_pv_read_off_scalar():
    system = SystemModel("s", ["eta1", "xi1"], ["u1"], {"eta1": "u1", "xi1": "(eta1 + u1)*xi1"})
    pv = extract_pv_form(system, Partition(("eta1",), ("xi1",)))
    assert pv.A == ((P("eta1 + u1"),),)


def test_pv_unit_triangular_example():
    system = SystemModel("pv", ["a", "xi1", "xi2"], ["u"], {"a": "u", "xi1": "xi1", "xi2": "a*xi1 + xi2"})
    part = Partition(("a",), ("xi1", "xi2"))
    pv = extract_pv_form(system, part)
    assert pv.to_lists() == [["1", "0"], ["a", "1"]]
    assert pv.classification is Classification.UNIT_LOWER_TRIANGULAR


def test_pv_affine_offset():
    with pytest.raises(AffineOffset) as info:
        extract_pv_form(builtin_academic(3), A3_PART)
    assert info.value.var == "x1"


def test_pv_nonlinear():
    system = SystemModel("nl", ["a", "b"], ["u"], {"a": "a*b", "b": "u*b"})
    with pytest.raises(NotLinear):
        extract_pv_form(system, Partition((), ("a", "b")))


def test_pv_open_subsystem():
    system = SystemModel("open", ["e", "z"], ["u"], {"e": "z + u", "z": "z"})
    with pytest.raises(OpenSubsystem):
        extract_pv_form(system, Partition(("e",), ("z",)))


@pytest.mark.parametrize("A, expected", [
    ([["1", "0"], ["a21", "1"]], Classification.UNIT_LOWER_TRIANGULAR),
    ([["cos(t)", "0"], ["a21", "u1"]], Classification.LOWER_TRIANGULAR),
    ([["0", "1"], ["0", "1/t"]], Classification.GENERAL),
    ([["sin(t)^2 + cos(t)^2", "0*u1"], ["t", "exp(0)"]], Classification.UNIT_LOWER_TRIANGULAR),
    ([["1", "t - t"], ["x", "1 + 1e-3*x"]], Classification.LOWER_TRIANGULAR),
])
def test_classify_examples(A, expected):
    assert classify_matrix(PVForm(A)) is expected


def test_pv_rhs_has_no_stale_classification():
    pv = PVForm([["1"]])
    assert pv.classification is Classification.UNIT_LOWER_TRIANGULAR
    assert PVForm([["2"]]).classification is Classification.LOWER_TRIANGULAR


# -- soundness properties --------------------------------------------------------

@pytest.mark.parametrize("seed", range(5))
def test_pv_soundness_at_random_points(seed):
    rng = random.Random(seed)
    d = rng.randint(1, 4)
    system, part = double_integrator_pv(random_triangular(rng, d, unit=bool(seed % 2)))
    pv = extract_pv_form(system, part)
    nprng = np.random.default_rng(seed)
    names = ["t", "eta1", "eta2", "u", *part.xi]
    rhs = [compile_expr(system.rhs[x]) for x in part.xi]
    A = [[compile_expr(a) for a in row] for row in pv.A]
    for row in nprng.uniform(-2, 2, size=(1000, len(names))):
        env = dict(zip(names, row.tolist()))
        xi = [env[x] for x in part.xi]
        for i in range(d):
            want = rhs[i](env)
            got = sum(A[i][k](env) * xi[k] for k in range(d))
            assert got == pytest.approx(want, rel=1e-9, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4), st.booleans())
def test_classification_lattice_is_monotone(seed, d, unit):
    rng = random.Random(seed)
    pv = PVForm(random_triangular(rng, d, unit))
    cls = classify_matrix(pv)
    assert cls is not Classification.GENERAL
    if unit:
        assert cls is Classification.UNIT_LOWER_TRIANGULAR
    # the unit class sits inside the triangular one: both predicates agree
    upper_zero = all(is_zero(pv.A[i][j]) for i in range(d) for j in range(i + 1, d))
    assert upper_zero


def _rebuilt_system(system, part, chain):
    rhs = {e: system.rhs[e] for e in part.eta}
    rhs.update({s.var: s.rhs() for s in chain})
    return SystemModel(system.name + "_rebuilt", system.states, system.inputs, rhs)


@pytest.mark.parametrize("system, part", [
    (builtin_academic(3), A3_PART),
    (builtin_academic(2), A3_PART),
    (SystemModel("two", ["e", "p", "q"], ["u"], {"e": "u", "p": "e^2", "q": "(sin(t) + p)*q"}),
     Partition(("e",), ("p", "q"))),
])
def test_chain_soundness_by_simulation(system, part):
    chain = check_chain_structure(system, part)
    assert chain.vars == part.xi and chain.is_prefix_closed()
    grid = TrajectoryTable.grid(0, 1, 100)
    inputs = grid.with_columns({"u": np.cos(3 * grid.t)}, {"u": np.cos(3 * grid.t_mid)})
    x0 = {s: 0.1 * (i + 1) for i, s in enumerate(system.states)}
    a = integrate_ode(system, inputs, x0)
    b = integrate_ode(_rebuilt_system(system, part, chain), inputs, x0)
    assert compare(a, b, list(system.states), 1e-12).passed


# -- partitions and JSON ---------------------------------------------------------

def test_partition_parse():
    assert Partition.parse("eta=x2,x3,xi=x1") == A3_PART
    assert Partition.parse("eta=x2:x3 xi=x1") == A3_PART
    assert Partition.parse("xi=xi1") == Partition((), ("xi1",))
    with pytest.raises(ConfigError):
        Partition.parse("foo=x1")
    with pytest.raises(ConfigError):
        Partition.parse("eta=x1,eta=x2")


def test_partition_validation():
    system = builtin_academic(3)
    with pytest.raises(ConfigError):
        Partition(("x2",), ("x1",)).validate(system)
    with pytest.raises(ConfigError):
        Partition(("x2", "x3", "x1"), ("x1",)).validate(system)


def test_system_json_round_trip(tmp_path):
    system = builtin_academic(2)
    path = tmp_path / "sys.json"
    path.write_text(json.dumps(system.to_dict()))
    again = SystemModel.load(path)
    assert again.to_dict() == system.to_dict()
    assert evaluate(again.rhs["x1"], {"x1": 0, "x2": 3.0, "x3": 0}) == 12.0


@pytest.mark.parametrize("data", [
    {"name": "a", "states": ["x"], "inputs": ["u"], "rhs": {"x": "u", "y": "1"}},
    {"name": "a", "states": ["x"], "inputs": [], "rhs": {"x": "1"}},
    {"name": "a", "states": ["x"], "inputs": ["u"], "rhs": {"x": "z"}},
    {"name": "a", "states": ["x"], "inputs": ["u"], "rhs": {"x": "u +"}},
    {"name": "a", "states": ["x"], "inputs": ["u"]},
])
def test_system_validation(data):
    with pytest.raises((ConfigError, UnknownCoordinate)):
        SystemModel.from_dict(data)
