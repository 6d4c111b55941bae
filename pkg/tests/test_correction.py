import pytest

from src.core.exceptions import (
    BannedActionEmitted,
    BudgetExhausted,
    GraphError,
    NoRuleMatches,
    OptionsExhausted,
    PlannerRejected,
    UnreachableGoal
)
from src.core.graph import EdgeKind, build_graph
from src.core.history import CorrectionBudgets, EpisodeHistory, FailureRecord, Resolution
from src.modules.correction_mod.pipeline import (
    CorrectionPipeline,
    L4Mode,
    TerminationAction,
    replan_request
)
from src.modules.correction_mod.rules import (
    CLOSE_THEN_OPEN,
    REAPPROACH,
    RETRY_ONCE,
    LocalCorrectionRule,
    rules_for
)
from src.modules.env_mod.faults import FaultEntry, FaultSchedule
from src.modules.env_mod.rules import RULEBOOK
from src.modules.env_mod.script import parse_script
from src.modules.env_mod.simulator import EpisodeEnvironment
from src.modules.error_mod.taxonomy import CorrectionLevel, ErrorType, error_class
from src.modules.planner_mod.base import BannedContext, PlanProposal, Planner
from src.modules.planner_mod.stub import StubPlanner, StubScorer
from src.modules.policy_mod.scoring import BeliefContext
from tests.conftest import kitchen_world, load_scenario


def _pipeline(planner=None, **kwargs):
    return CorrectionPipeline(planner or StubPlanner(), StubScorer(), **kwargs)


def _failure(action, error_type=ErrorType.TIMEOUT, node="s1", room="livingroom"):
    return FailureRecord(node, 0, action, error_class(error_type), 1.0, 0, room=room)


class _StubbornPlanner(Planner):
    """Always proposes the same plan, whatever it was told to avoid."""

    name = "stubborn"

    def __init__(self, lines):
        self.lines = lines
        self.calls = 0

    def generate(self, goals, world, constraints=None):
        self.calls += 1
        return PlanProposal([parse_script(line) for line in self.lines])


class _GivingUpPlanner(Planner):
    name = "giving_up"

    def generate(self, goals, world, constraints=None):
        raise UnreachableGoal(goals[0], "no verb produces this predicate")


# -- rule table ----------------------------------------------------------------

def test_rule_scripts_expand_target_with_instance_id():
    action = parse_script("[open] <fridge> (1)")
    rendered = [s.render() for s in CLOSE_THEN_OPEN.scripts(action)]
    assert rendered == ["[close] <fridge> (1)", "[open] <fridge> (1)"]
    assert [s.render() for s in RETRY_ONCE.scripts(action)] == ["[open] <fridge> (1)"]


def test_rules_for_keeps_priority_order():
    assert [r.name for r in rules_for(parse_script("[open] <fridge>"))] == [
        "close_then_open", "relook_then_retry", "reapproach", "retry_once"
    ]
    assert [r.name for r in rules_for(parse_script("[walk] <kitchen>"))] == ["reapproach", "retry_once"]


def test_rule_triggers_on_type_verb_and_error_cap():
    cls = error_class(ErrorType.COLLISION)
    assert REAPPROACH.triggers(cls, 0.5, parse_script("[walk] <kitchen>"))
    assert not REAPPROACH.triggers(error_class(ErrorType.TIMEOUT), 0.5)
    capped = LocalCorrectionRule.from_dict({**REAPPROACH.to_dict(), "max_error": 0.3})
    assert not capped.triggers(cls, 0.5)


@pytest.mark.parametrize("kwargs", [
    {"max_applications": 0},
    {"adjustment": ("{action}", "{action}", "{action}")},
])
def test_malformed_rule(kwargs):
    base = {"name": "bad", "error_types": frozenset({ErrorType.TIMEOUT}), "adjustment": ("{action}",)}
    with pytest.raises(GraphError):
        LocalCorrectionRule(**{**base, **kwargs})


# -- L1 ------------------------------------------------------------------------

def _open_fridge_episode(fault):
    graph = build_graph([parse_script("[open] <fridge>")])
    env = EpisodeEnvironment(kitchen_world(), FaultSchedule((fault,)))
    outcome = env.execute(parse_script("[open] <fridge>"))
    assert not outcome.succeeded
    return graph.node("s1"), env


def test_l1_close_then_open_fixes_perception_mismatch():
    node, env = _open_fridge_episode(FaultEntry(0, ErrorType.PERCEPTION_MISMATCH))
    history = EpisodeHistory()
    result = _pipeline().apply_l1(node, error_class(ErrorType.PERCEPTION_MISMATCH), env, history, 0.5)
    assert result.succeeded
    assert result.level is CorrectionLevel.L1
    assert result.rule == "close_then_open"
    assert [s.render() for s in result.scripts] == ["[close] <fridge>", "[open] <fridge>"]
    assert result.error_value == 0.0
    # sub-steps advance the shared step counter
    assert env.step_index == 3
    assert history.l1_remaining("s1") == 1


def test_l1_retry_that_keeps_failing():
    node, env = _open_fridge_episode(FaultEntry(0, ErrorType.TIMEOUT, sticky=True))
    history = EpisodeHistory()
    pipeline = _pipeline()
    cls = error_class(ErrorType.TIMEOUT)
    result = pipeline.apply_l1(node, cls, env, history, 1.0)
    assert result.rule == "retry_once"
    assert not result.succeeded
    assert len(result.outcomes) == 1
    # retry_once allows a single application
    with pytest.raises(BudgetExhausted):
        pipeline.apply_l1(node, cls, env, history, 1.0)


def test_l1_node_budget():
    node, env = _open_fridge_episode(FaultEntry(0, ErrorType.PERCEPTION_MISMATCH))
    history = EpisodeHistory(CorrectionBudgets(l1_per_node=0))
    with pytest.raises(BudgetExhausted):
        _pipeline().apply_l1(node, error_class(ErrorType.PERCEPTION_MISMATCH), env, history, 0.5)


def test_l1_without_matching_rule():
    node, env = _open_fridge_episode(FaultEntry(0, ErrorType.HARDWARE_FAULT))
    with pytest.raises(NoRuleMatches):
        _pipeline().apply_l1(node, error_class(ErrorType.HARDWARE_FAULT), env, EpisodeHistory(), 1.0)


# -- L2 ------------------------------------------------------------------------

def test_l2_switches_to_untried_option_once():
    scenario = load_scenario("putdishwasher")
    graph = build_graph(scenario.parsed_plan(), scenario.parsed_options())
    _, _, observed = RULEBOOK.apply(scenario.initial_state(), parse_script("[walk] <kitchen>"))
    belief = BeliefContext(node="s2", goals=scenario.goal_set(), options_left=1)
    history = EpisodeHistory()
    pipeline = _pipeline()

    result = pipeline.apply_l2(graph, graph.node("s2"), belief, observed, history, seed=0)
    assert result.succeeded and result.level is CorrectionLevel.L2
    assert result.edge.kind is EdgeKind.OPT
    assert result.edge.dst == "s2.alt1"
    assert result.selection.distribution == [1.0]
    assert history.options_remaining("s2", graph.node("s2").alternatives) == []

    with pytest.raises(OptionsExhausted):
        pipeline.apply_l2(graph, graph.node("s2"), belief, observed, history, seed=0)


# -- L3 ------------------------------------------------------------------------

def _walk_failure_history():
    history = EpisodeHistory()
    history.record_failure(_failure("[walk] <kitchen>"))
    return history


def test_replan_request_bans_failed_contexts():
    history = _walk_failure_history()
    history.banned = [BannedContext("grab", "mug", "kitchen")]
    request = replan_request(["inside(mug,fridge)"], kitchen_world(room="livingroom"), history)
    assert request.banned == [BannedContext("grab", "mug", "kitchen"), BannedContext("walk", "kitchen", "livingroom")]


def test_l3_replans_around_banned_walk():
    history = _walk_failure_history()
    world = kitchen_world(room="livingroom")
    request = replan_request(["inside(mug,fridge)"], world, history)
    graph = _pipeline().apply_l3(request, history)

    assert graph.revision == 1
    assert [a.render() for a in graph.main_actions()] == [
        "[walktowards] <kitchen>", "[grab] <mug>", "[open] <fridge>", "[putin] <mug> <fridge>"
    ]
    assert graph.node("s2").alternatives == ("s2.alt1",)
    assert history.revision == 1 and history.replans_left == 1
    assert history.failures[0].resolution == Resolution.REPLANNED
    assert history.banned == request.banned


def test_l3_without_replans_left():
    history = EpisodeHistory(CorrectionBudgets(replans=0))
    request = replan_request(["inside(mug,fridge)"], kitchen_world(), history)
    with pytest.raises(BudgetExhausted):
        _pipeline().apply_l3(request, history)


def test_l3_rejects_planner_that_repeats_banned_action():
    planner = _StubbornPlanner(["[walk] <kitchen>", "[grab] <mug>"])
    history = _walk_failure_history()
    request = replan_request(["holding(mug)"], kitchen_world(room="livingroom"), history)
    with pytest.raises(BannedActionEmitted):
        _pipeline(planner, banned_retries=2).apply_l3(request, history)
    assert planner.calls == 3
    assert history.revision == 0


def test_l3_wraps_planner_errors():
    request = replan_request(["flying(mug)"], kitchen_world(), EpisodeHistory())
    with pytest.raises(PlannerRejected):
        _pipeline(_GivingUpPlanner()).apply_l3(request, EpisodeHistory())


def test_l3_rejects_empty_plan():
    request = replan_request(["holding(mug)"], kitchen_world(), EpisodeHistory())
    with pytest.raises(PlannerRejected):
        _pipeline(_StubbornPlanner([])).apply_l3(request, EpisodeHistory())


# -- L4 ------------------------------------------------------------------------

def test_l4_auto_abort_carries_dossier():
    failures = [_failure("[walk] <kitchen>", ErrorType.HARDWARE_FAULT)]
    termination = _pipeline().escalate_l4(failures, node="s1", reason="Hardware-Fault-Error")
    assert termination.action == TerminationAction.ABORT
    assert termination.status == "Escalated"
    assert termination.terminal
    assert termination.dossier[0]["error_type"] == "Hardware-Fault-Error"


@pytest.mark.parametrize("reply, action", [
    ("skip-node", TerminationAction.SKIP),
    (" R ", TerminationAction.RETRY),
    ("abort", TerminationAction.ABORT),
    ("whatever", TerminationAction.ABORT),
])
def test_l4_interactive_reply(reply, action):
    pipeline = _pipeline(l4_mode=L4Mode.INTERACTIVE, reader=lambda prompt: reply)
    termination = pipeline.escalate_l4([], node="s3", reason="budget")
    assert termination.action == action
    assert termination.mode == L4Mode.INTERACTIVE


def test_l4_interactive_without_input_aborts():
    def closed_stdin(prompt):
        raise EOFError

    pipeline = _pipeline(reader=closed_stdin)
    termination = pipeline.escalate_l4([], node="s1", mode=L4Mode.INTERACTIVE)
    assert termination.action == TerminationAction.ABORT


def test_unknown_l4_mode():
    with pytest.raises(ValueError):
        _pipeline(l4_mode="panic")
