import numpy as np
import pytest
from hypothesis import given, strategies as st

from ltlcycler.automaton import parse_ldba
from ltlcycler.cycles import MAC, MAIP, brute_force_paths, find_macs, find_maips

from _gen import random_ldba


def _check_invariants(ldba, c):
    states = c.states(ldba)
    for el, (u, v) in zip(c.elements, zip(states, states[1:])):
        assert ldba.element(el).src == u and ldba.element(el).dst == v
    assert states[-1] in ldba.accepting
    inner = states[1:-1]
    assert not any(s in ldba.accepting for s in inner)
    assert len(set(states[:-1])) == len(states) - 1


def test_worked_example_trio(fw_ldba):
    maips = find_maips(fw_ldba, start=1)
    described = [c.describe(fw_ldba) for c in maips]
    assert "{(1, r & !g & !b, 2), (2, g & !y & !b, 3), (3, y & !b, 0)}" in described
    assert "{(1, r & !g & !b, 2), (2, g & y & !b, 0)}" in described
    assert "{(1, r & g & y & !b, 0)}" in described


def test_maips_from_initial_pass_through_state_one(fw_ldba):
    maips = find_maips(fw_ldba)
    assert all(c.start == fw_ldba.initial for c in maips)
    assert any(c.states(fw_ldba)[:3] == [4, 1, 2] for c in maips)


def test_flatworld_macs(fw_ldba):
    macs = find_macs(fw_ldba)
    assert len(macs) == 8
    for c in macs:
        _check_invariants(fw_ldba, c)
        assert c.start == 0 and c.end == 0


def test_sink_never_on_a_path(fw_ldba):
    for c in find_maips(fw_ldba) + find_macs(fw_ldba):
        assert fw_ldba.sink not in c.states(fw_ldba)


def test_no_accepting_states():
    ldba = parse_ldba("ldba v1\naps: a\nstates: 1\ninitial: 0\naccepting:\nedge: 0 -> 0 : true\n")
    assert find_maips(ldba) == [] and find_macs(ldba) == []


def test_self_loop_mac():
    ldba = parse_ldba("ldba v1\naps: a\nstates: 1\ninitial: 0\naccepting: 0\nedge: 0 -> 0 : true\n")
    assert [c.elements for c in find_macs(ldba)] == [(0,)]
    assert [c.elements for c in find_maips(ldba)] == [(0,)]


def test_parallel_edges_give_distinct_paths():
    text = ("ldba v1\naps: a\nstates: 2\ninitial: 0\naccepting: 1\n"
            "edge: 0 -> 1 : a\nedge: 0 -> 1 : !a\nedge: 1 -> 1 : true\n")
    assert [c.elements for c in find_maips(parse_ldba(text))] == [(0,), (1,)]


def test_jumps_are_path_elements():
    text = ("ldba v1\naps: a\nstates: 2\ninitial: 0\nnondet: 0\naccepting: 1\n"
            "edge: 0 -> 0 : true\nedge: 1 -> 1 : a\neps: 0 -> 1 : j\n")
    ldba = parse_ldba(text, allow_partial=True)
    maips = find_maips(ldba)
    assert any(ldba.is_eps(c.elements[0]) for c in maips)


def test_brute_force_size_guard():
    rng = np.random.default_rng(0)
    ldba = random_ldba(rng, 8, 1, max_nondet=0)
    big = parse_ldba("ldba v1\naps: a\nstates: 11\ninitial: 0\naccepting: 0\n"
                     + "".join(f"edge: {i} -> {(i + 1) % 11} : true\n" for i in range(11)))
    brute_force_paths(ldba, [ldba.initial])
    with pytest.raises(ValueError):
        brute_force_paths(big, [0])


def test_frontier_fixture_paths(frontier_ldba):
    assert [c.elements for c in find_maips(frontier_ldba)] == [(0, 1, 2)]
    assert [c.elements for c in find_macs(frontier_ldba)] == [(4, 1, 2)]


@given(st.integers(0, 1_000_000))
def test_dfs_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    ldba = random_ldba(rng, int(rng.integers(1, 7)), int(rng.integers(1, 4)))
    maips = find_maips(ldba)
    macs = find_macs(ldba)
    kind = MAC if ldba.initial in ldba.accepting else MAIP
    expect_maips = brute_force_paths(ldba, [ldba.initial], kind)
    assert [c.elements for c in maips] == [c.elements for c in expect_maips]
    assert macs == brute_force_paths(ldba, sorted(ldba.accepting), MAC)
    for c in maips + macs:
        _check_invariants(ldba, c)
