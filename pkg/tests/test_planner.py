import os

import pytest

from src.core.exceptions import LLMError, MalformedReply, UnreachableGoal
from src.core.graph import build_graph
from src.modules.env_mod.script import parse_script
from src.modules.planner_mod.base import BannedContext, PlannerRegistry, ReplanRequest
from src.modules.planner_mod.llm import LLMPlanner, LLMScorer, extract_score, parse_plan_reply
from src.modules.planner_mod.stub import StubPlanner, StubScorer
from src.modules.policy_mod.scoring import BeliefContext
from src.utils.llm_client import create_llm_client
from tests.conftest import ROOT, kitchen_world

TEMPLATE_DIR = os.path.join(ROOT, "src", "modules", "planner_mod", "prompt_templates")
FRIDGE_GOALS = ["inside(mug,fridge)", "closed(fridge)"]


def _lines(proposal):
    return proposal.lines()


# -- stub planner --------------------------------------------------------------

def test_stub_planner_backward_chains_goals(world):
    proposal = StubPlanner().generate(FRIDGE_GOALS, world)
    assert _lines(proposal) == ["[grab] <mug>", "[open] <fridge>", "[putin] <mug> <fridge>", "[close] <fridge>"]
    assert {k: [a.render() for a in v] for k, v in proposal.options.items()} == {1: ["[push] <mug>"]}


def test_stub_planner_walks_to_the_target_room():
    proposal = StubPlanner().generate(["sitting(sofa)"], kitchen_world())
    assert _lines(proposal) == ["[walk] <livingroom>", "[sit] <sofa>"]


def test_stub_planner_swaps_banned_verbs(world):
    request = ReplanRequest(FRIDGE_GOALS, world, [BannedContext("grab", "mug", "kitchen")])
    proposal = StubPlanner().generate(FRIDGE_GOALS, world, request)
    assert _lines(proposal)[0] == "[push] <mug>"
    assert proposal.options == {}
    assert proposal.banned_hits(world, request.banned) == []


def test_stub_planner_skips_satisfied_goals(world):
    assert StubPlanner().generate(["closed(fridge)", "on(mug,counter)"], world).plan == []


@pytest.mark.parametrize("goals", [["flying(mug)"], ["holding(piano)"]])
def test_stub_planner_unreachable(world, goals):
    with pytest.raises(UnreachableGoal):
        StubPlanner().generate(goals, world)


def test_stub_planner_every_variant_banned(world):
    banned = [BannedContext("walk", "livingroom", "kitchen"), BannedContext("walktowards", "livingroom", "kitchen")]
    with pytest.raises(UnreachableGoal):
        StubPlanner().generate(["sitting(sofa)"], world, ReplanRequest(["sitting(sofa)"], world, banned))


def test_banned_hits_track_the_room_the_action_runs_in():
    world = kitchen_world(room="livingroom")
    proposal = parse_plan_reply("[walk] <kitchen>\n[grab] <mug>")
    assert proposal.banned_hits(world, [BannedContext("grab", "mug", "kitchen")]) == [
        BannedContext("grab", "mug", "kitchen")
    ]
    assert proposal.banned_hits(world, [BannedContext("grab", "mug", "livingroom")]) == []


# -- stub scorer ----------------------------------------------------------------

def test_stub_scorer_overlap_prefers_grab_on_visible_objects(world):
    scorer = StubScorer()
    goals = frozenset(FRIDGE_GOALS)
    assert scorer.overlap(parse_script("[grab] <mug>"), goals, world) == pytest.approx(2 / 3)
    assert scorer.overlap(parse_script("[push] <mug>"), goals, world) == pytest.approx(1 / 3)
    world.objects["mug"].predicates.add("occluded")
    assert scorer.overlap(parse_script("[push] <mug>"), goals, world) == pytest.approx(2 / 3)
    assert scorer.overlap(None, goals, world) == 0.0


# -- reply parsing -------------------------------------------------------------

def test_parse_plan_reply_with_options_and_list_markers():
    reply = (
        "Here is the plan:\n"
        "1. [walk] <kitchen>\n"
        "2. [grab] <mug>\n"
        "option 2: [push] <mug>\n"
        "option 7: [push] <cup>\n"
    )
    proposal = parse_plan_reply(reply)
    assert _lines(proposal) == ["[walk] <kitchen>", "[grab] <mug>"]
    assert list(proposal.options) == [2]


def test_parse_plan_reply_strips_code_fence():
    proposal = parse_plan_reply("```\n[open] <fridge>\n[close] <fridge>\n```")
    assert _lines(proposal) == ["[open] <fridge>", "[close] <fridge>"]


@pytest.mark.parametrize("reply", ["[walk_to] <kitchen>", "I am not sure what to do.", ""])
def test_parse_plan_reply_malformed(reply):
    with pytest.raises(MalformedReply):
        parse_plan_reply(reply)


@pytest.mark.parametrize("reply, value", [
    ("0.8", 0.8),
    ("Score: 1", 1.0),
    ("I'd say 7/10, so 0.7.", 0.7),
    ("```\n.25\n```", 0.25),
])
def test_extract_score(reply, value):
    assert extract_score(reply) == pytest.approx(value)


def test_extract_score_without_number():
    with pytest.raises(MalformedReply):
        extract_score("looks fine to me")


# -- LLM-backed planner and scorer ---------------------------------------------

def test_llm_planner_uses_reply_and_mentions_banned_pairs(world):
    client = create_llm_client("mock", default="[grab] <mug>\n[putin] <mug> <fridge>\noption 1: [push] <mug>")
    planner = LLMPlanner(client, template_dir=TEMPLATE_DIR)
    request = ReplanRequest(FRIDGE_GOALS, world, [BannedContext("walk", "kitchen", "livingroom")])
    proposal = planner.generate(FRIDGE_GOALS, world, request)
    assert _lines(proposal) == ["[grab] <mug>", "[putin] <mug> <fridge>"]
    prompt = client.provider.call_history[-1]["prompt"]
    assert "walk(kitchen) in livingroom" in prompt
    assert "inside(mug,fridge)" in prompt


def test_llm_planner_falls_back_on_garbage(world):
    client = create_llm_client("mock", default="I cannot help with that.")
    planner = LLMPlanner(client, template_dir=TEMPLATE_DIR, fallback=StubPlanner())
    assert _lines(planner.generate(FRIDGE_GOALS, world))[0] == "[grab] <mug>"
    with pytest.raises(MalformedReply):
        LLMPlanner(client, template_dir=TEMPLATE_DIR).generate(FRIDGE_GOALS, world)


def _grab_edge():
    graph = build_graph([parse_script("[walk] <kitchen>"), parse_script("[grab] <mug>")])
    return graph, graph.forward_edges("s1")[0]


def test_llm_scorer_reads_number(world):
    graph, edge = _grab_edge()
    belief = BeliefContext(node="s1", goals=frozenset(["holding(mug)"]))
    scorer = LLMScorer(create_llm_client("mock", default="0.35"), template_dir=TEMPLATE_DIR)
    assert scorer.score(graph, edge, belief, world) == pytest.approx(0.35)


def test_llm_scorer_falls_back_to_stub(world):
    graph, edge = _grab_edge()
    belief = BeliefContext(node="s1", goals=frozenset(["holding(mug)"]))
    client = create_llm_client("mock", default="great choice")
    scorer = LLMScorer(client, template_dir=TEMPLATE_DIR, fallback=StubScorer())
    assert scorer.score(graph, edge, belief, world) == pytest.approx(2 / 3)
    assert "[grab] <mug>" in client.provider.call_history[-1]["prompt"]


def test_unknown_provider():
    with pytest.raises(LLMError):
        create_llm_client("carrier-pigeon")


def test_registry_knows_both_backends():
    assert PlannerRegistry.get_planner("stub") is StubPlanner
    assert PlannerRegistry.get_planner("llm") is LLMPlanner
    assert set(PlannerRegistry.list_scorers()) >= {"stub", "llm"}
