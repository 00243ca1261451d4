import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ltlcycler.automaton import load_flatworld_ldba, load_ldba
from ltlcycler.envs import FlatWorld, FlatWorldConfig
from ltlcycler.product import rollout

FIXTURES = Path(__file__).parent / "fixtures"

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def fw_ldba():
    return load_flatworld_ldba()


@pytest.fixture(scope="session")
def frontier_ldba():
    return load_ldba(FIXTURES / "frontier.ldba", allow_partial=True)


@pytest.fixture(scope="session")
def worked_env():
    return FlatWorld(FlatWorldConfig.from_dict(json.loads((FIXTURES / "worked_env.json").read_text())))


def scripted(actions):
    it = iter(actions)
    return lambda ps, rng: next(it)


@pytest.fixture
def worked_traj(worked_env, fw_ldba):
    """(-1,-1) -> (0.5,-1) -> (1,0) -> (0.5,1): red, nothing, green."""
    acts = [np.array([1.5, 0.0]), np.array([0.5, 1.0]), np.array([-0.5, 1.0])]
    return rollout(scripted(acts), worked_env, fw_ldba, 3, record_robustness=True)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
