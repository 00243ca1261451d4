import numpy as np
import pytest
from hypothesis import given, strategies as st

from ltlcycler.automaton import (
    IncompleteAutomatonError,
    LDBAFormatError,
    LDBAValidationError,
    jump,
    parse_ldba,
    serialize_ldba,
    step,
)
from ltlcycler.logic import DomainError

from _gen import all_letters, random_ldba_text

HEADER = "ldba v1\naps: a b\nstates: 2\ninitial: 0\naccepting: 1\n"


def test_flatworld_fixture_shape(fw_ldba):
    assert fw_ldba.declared_states == 5
    assert fw_ldba.sink == 5
    assert fw_ldba.num_states == 6
    assert fw_ldba.initial == 4
    assert fw_ldba.accepting == frozenset({0})


def test_flatworld_worked_path(fw_ldba):
    b, _ = step(fw_ldba, fw_ldba.initial, set())
    assert b == 1
    b, _ = step(fw_ldba, b, {"r"})
    assert b == 2
    b, _ = step(fw_ldba, b, {"g"})
    assert b == 3
    b, _ = step(fw_ldba, b, {"y"})
    assert b == 0


def test_blue_goes_to_sink(fw_ldba):
    for s in range(fw_ldba.declared_states):
        assert step(fw_ldba, s, {"b"})[0] == fw_ldba.sink


def test_partial_rejected_without_flag():
    with pytest.raises(LDBAValidationError) as exc:
        parse_ldba(HEADER + "edge: 0 -> 1 : a\nedge: 1 -> 1 : true\n")
    assert exc.value.state == 0
    assert exc.value.letter is not None


def test_overlap_reports_witness():
    text = HEADER + "edge: 0 -> 1 : a\nedge: 0 -> 0 : a | b\nedge: 0 -> 0 : !a & !b\nedge: 1 -> 1 : true\n"
    with pytest.raises(LDBAValidationError) as exc:
        parse_ldba(text)
    assert "a" in exc.value.letter


def test_accepting_in_nondet_rejected():
    text = "ldba v1\naps: a\nstates: 2\ninitial: 0\nnondet: 0\naccepting: 0\nedge: 0 -> 1 : true\n"
    with pytest.raises(LDBAValidationError):
        parse_ldba(text)


def test_eps_from_deterministic_state_rejected():
    text = HEADER + "edge: 0 -> 0 : true\nedge: 1 -> 1 : true\neps: 0 -> 1 : j\n"
    with pytest.raises(LDBAValidationError):
        parse_ldba(text)


def test_deterministic_part_closed():
    text = ("ldba v1\naps: a\nstates: 2\ninitial: 0\nnondet: 0\naccepting: 1\n"
            "edge: 0 -> 0 : true\nedge: 1 -> 0 : true\n")
    with pytest.raises(LDBAValidationError):
        parse_ldba(text)


@pytest.mark.parametrize("text, line", [
    ("ldba v2\n", 1),
    (HEADER + "edge: 0 => 1 : a\n", 6),
    (HEADER + "bogus: 3\n", 6),
    (HEADER + "edge: 0 -> 1 : F(\n", 6),
])
def test_format_errors_carry_line(text, line):
    with pytest.raises(LDBAFormatError) as exc:
        parse_ldba(text)
    assert exc.value.line == line


def test_unified_indexing_and_jump():
    text = ("ldba v1\naps: a\nstates: 3\ninitial: 0\nnondet: 0\naccepting: 2\n"
            "edge: 0 -> 0 : true\nedge: 1 -> 2 : a\nedge: 1 -> 1 : !a\nedge: 2 -> 1 : true\n"
            "eps: 0 -> 1 : go\n")
    ldba = parse_ldba(text)
    assert ldba.num_elements == 5
    assert ldba.is_eps(4) and not ldba.is_eps(3)
    assert jump(ldba, 0, "go") == 1
    with pytest.raises(DomainError):
        jump(ldba, 1, "go")


def test_step_on_incomplete_nondet_state():
    text = ("ldba v1\naps: a\nstates: 2\ninitial: 0\nnondet: 0\naccepting: 1\n"
            "edge: 0 -> 0 : a\nedge: 1 -> 1 : true\neps: 0 -> 1 : j\n")
    ldba = parse_ldba(text)
    with pytest.raises(IncompleteAutomatonError):
        step(ldba, 0, set())


def test_sink_completes_every_letter(fw_ldba):
    nxt, fired = fw_ldba.transition_table()
    assert (fired >= 0).all()


@given(st.integers(0, 50_000))
def test_serialize_roundtrip(seed):
    rng = np.random.default_rng(seed)
    text = random_ldba_text(rng, int(rng.integers(1, 6)), int(rng.integers(1, 4)))
    a = parse_ldba(text, allow_partial=True)
    b = parse_ldba(serialize_ldba(a), allow_partial=True)
    assert a.structure() == b.structure()


@given(st.integers(0, 50_000))
def test_deterministic_states_step_uniquely(seed):
    rng = np.random.default_rng(seed)
    ldba = parse_ldba(random_ldba_text(rng, int(rng.integers(1, 6)), 2), allow_partial=True)
    for s in range(ldba.num_states):
        if s in ldba.nondet:
            continue
        for letter in all_letters(ldba.aps):
            dst, el = step(ldba, s, letter)
            assert ldba.edges[el].src == s and ldba.edges[el].dst == dst
