import os

import pytest

from src.core.world_state import AgentState, ObjectState, WorldState
from src.modules.env_mod.scenario import Scenario
from src.modules.planner_mod.stub import StubPlanner, StubScorer
from src.modules.policy_mod.coefficients import PolicyCoefficients

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SCENARIO_DIR = os.path.join(ROOT, "universe", "household", "scenarios")
WORLD_CONFIG = os.path.join(ROOT, "universe", "household", "config.yaml")
SUITE = ("readbook", "putdishwasher", "preparefood", "putfridge", "setuptable", "stowremote")


def scenario_path(name: str) -> str:
    return os.path.join(SCENARIO_DIR, f"{name}.json")


def load_scenario(name: str) -> Scenario:
    return Scenario.from_json(scenario_path(name))


def kitchen_world(**agent) -> WorldState:
    """Small kitchen: a mug on the counter, a closed fridge, a microwave and a chair."""
    objects = [
        ObjectState("mug", "kitchen", {"on(counter)"}, {"grabbable"}),
        ObjectState("counter", "kitchen", set(), {"surface"}),
        ObjectState("fridge", "kitchen", {"closed"}, {"container", "openable"}),
        ObjectState("microwave", "kitchen", {"closed", "switched_off"}, {"container", "openable", "switchable"}),
        ObjectState("chair", "kitchen", set(), {"sittable", "movable"}),
        ObjectState("sofa", "livingroom", set(), {"sittable"}),
    ]
    return WorldState(
        rooms={"kitchen", "livingroom"},
        objects={o.name: o for o in objects},
        agent=AgentState(room=agent.get("room", "kitchen"))
    )


@pytest.fixture
def world() -> WorldState:
    return kitchen_world()


@pytest.fixture
def planner() -> StubPlanner:
    return StubPlanner()


@pytest.fixture
def scorer() -> StubScorer:
    return StubScorer()


@pytest.fixture
def coeffs() -> PolicyCoefficients:
    return PolicyCoefficients()


@pytest.fixture
def suite():
    return {name: load_scenario(name) for name in SUITE}
