import json

import numpy as np
import pytest

from ltlcycler.envs import FlatWorld, FlatWorldConfig
from ltlcycler.product import (
    ProductState,
    accepting_visits,
    product_step,
    rollout,
    trajectory_from_json,
    trajectory_to_json,
)
from ltlcycler.automaton import parse_ldba

from conftest import scripted


def test_rollout_length_and_states(worked_traj):
    assert worked_traj.horizon == 3
    assert len(worked_traj.states) == 4
    np.testing.assert_allclose(worked_traj.states[-1], [0.5, 1.0])


def test_frontier_marks_fired_edges(worked_traj, fw_ldba):
    e = worked_traj.final.e
    assert set(np.flatnonzero(e)) == set(worked_traj.edges)


def test_json_roundtrip(worked_traj, fw_ldba, worked_env):
    data = json.loads(json.dumps(trajectory_to_json(worked_traj)))
    back = trajectory_from_json(data, fw_ldba, worked_env)
    assert back.automaton_states == worked_traj.automaton_states
    assert back.edges == worked_traj.edges
    for a, b in zip(back.steps, worked_traj.steps):
        np.testing.assert_array_equal(a.e, b.e)
    assert back.robustness == pytest.approx(worked_traj.robustness)


def test_json_fixture_matches_rollout(fixtures_dir, worked_traj, fw_ldba):
    data = json.loads((fixtures_dir / "worked_example.json").read_text())
    assert data == json.loads(json.dumps(trajectory_to_json(worked_traj)))


def test_json_rejects_bad_edge(worked_traj, fw_ldba):
    data = trajectory_to_json(worked_traj)
    data[1]["edge"] = 0
    with pytest.raises(ValueError):
        trajectory_from_json(data, fw_ldba)


def test_json_rejects_unknown_key(worked_traj, fw_ldba):
    data = trajectory_to_json(worked_traj)
    data[0]["extra"] = 1
    with pytest.raises(ValueError):
        trajectory_from_json(data, fw_ldba)


def test_json_without_terminal_record(worked_traj, fw_ldba):
    data = trajectory_to_json(worked_traj)[:-1]
    back = trajectory_from_json(data, fw_ldba)
    assert back.final.b == 3 and back.final.s is None


def test_accepting_visit_resets_frontier(fw_ldba):
    cfg = FlatWorldConfig(step_scale=1.0, action_bound=2.0)
    env = FlatWorld(cfg)
    # red, green, yellow: each move lands on a region centre
    acts = [np.array([1.5, 0.0]), np.array([0.0, 2.0]), np.array([-1.5, 0.0])]
    traj = rollout(scripted(acts), env, fw_ldba, 3)
    assert traj.automaton_states[-1] == 0
    assert accepting_visits(traj, fw_ldba.accepting) == 1
    assert not traj.final.e.any()


def test_jump_action_keeps_env_state():
    text = ("ldba v1\naps: r\nstates: 2\ninitial: 0\nnondet: 0\naccepting: 1\n"
            "edge: 0 -> 0 : true\nedge: 1 -> 1 : r\neps: 0 -> 1 : go\n")
    ldba = parse_ldba(text, allow_partial=True)
    env = FlatWorld(FlatWorldConfig(regions={"r": FlatWorldConfig().regions["r"]}))
    ps = ProductState(np.array([-1.0, -1.0]), 0, np.zeros(ldba.num_elements, dtype=np.int8))
    nxt, fired, r = product_step(ldba, env, ps, "go")
    assert nxt.b == 1 and ldba.is_eps(fired) and r == 0.0
    np.testing.assert_array_equal(nxt.s, ps.s)
