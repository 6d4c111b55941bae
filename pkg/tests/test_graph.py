import random

import pytest

from src.core.exceptions import DanglingAlternative, EmptyPlan, ThresholdOrderViolation, UnknownNode
from src.core.graph import (
    SENTINEL_ID,
    TERMINAL_ID,
    EdgeKind,
    TaskEdge,
    TaskGraph,
    ThresholdConfig,
    ViolationKind,
    build_graph,
    validate
)
from src.modules.env_mod.script import parse_script


def _plan(*lines):
    return [parse_script(line) for line in lines]


def _three_step():
    plan = _plan("[walk] <kitchen>", "[grab] <mug>", "[putin] <mug> <dishwasher>")
    return build_graph(plan, {2: _plan("[push] <mug>")})


def test_main_chain_ends_at_terminal():
    graph = _three_step()
    assert graph.root == "s1"
    assert graph.main_path() == ["s1", "s2", "s3"]
    assert graph.outgoing("s3", EdgeKind.MAIN) == [TaskEdge("s3", EdgeKind.MAIN, TERMINAL_ID)]
    assert validate(graph).ok


def test_option_hangs_off_previous_decision_point_and_rejoins():
    graph = _three_step()
    alt = graph.node("s2.alt1")
    assert alt.alternative_of == "s2"
    assert graph.node("s2").alternatives == ("s2.alt1",)
    assert TaskEdge("s1", EdgeKind.OPT, "s2.alt1") in graph.edges
    assert TaskEdge("s2.alt1", EdgeKind.OPT, "s3") in graph.edges
    assert graph.options_for("s2") == [TaskEdge("s1", EdgeKind.OPT, "s2.alt1")]
    assert graph.continuation("s2.alt1") == ["s2.alt1", "s3"]


def test_option_on_first_step_hangs_off_root():
    graph = build_graph(_plan("[grab] <mug>", "[walk] <kitchen>"), {1: _plan("[push] <mug>")})
    assert TaskEdge("s1", EdgeKind.OPT, "s1.alt1") in graph.edges
    # an alternative of the current node is not a forward move from it
    assert [e.dst for e in graph.forward_edges("s1")] == ["s2"]
    assert validate(graph).ok


def test_every_action_node_has_corr_loop_and_fb_edge():
    graph = _three_step()
    for node in graph.action_nodes():
        kinds = {e.kind: e.dst for e in graph.outgoing(node.id)}
        assert kinds[EdgeKind.CORR] == node.id
        assert kinds[EdgeKind.FB] == SENTINEL_ID


def test_outgoing_orders_by_kind_then_destination():
    graph = _three_step()
    kinds = [e.kind for e in graph.outgoing("s1")]
    assert kinds == sorted(kinds, key=lambda k: k.order)
    assert [e.kind for e in graph.outgoing("s1", EdgeKind.OPT)] == [EdgeKind.OPT]


def test_expected_outcome_comes_from_rule_book():
    graph = _three_step()
    assert graph.node("s2").expected_outcome == frozenset({"holding(mug)", "grabbed(mug)", "reachable(mug)"})
    assert graph.node("s3").expected_outcome == frozenset({"inside(mug,dishwasher)", "reachable(dishwasher)"})


def test_local_rules_attached_per_verb():
    graph = _three_step()
    names = [r.name for r in graph.node("s2").local_rules]
    assert "relook_then_retry" in names
    assert "close_then_open" not in names


def test_empty_plan_rejected():
    with pytest.raises(EmptyPlan):
        build_graph([])


def test_dangling_alternative_rejected():
    with pytest.raises(DanglingAlternative):
        build_graph(_plan("[walk] <kitchen>"), {3: _plan("[push] <mug>")})


def test_threshold_order_violation_on_build():
    thresholds = ThresholdConfig(overrides={"s1": (0.8, 0.5)})
    with pytest.raises(ThresholdOrderViolation):
        build_graph(_plan("[walk] <kitchen>"), thresholds=thresholds)


def test_unknown_node_lookup():
    with pytest.raises(UnknownNode):
        _three_step().node("s9")


def test_scaled_thresholds_clamp_to_unit_interval():
    local, maximum = ThresholdConfig(scale=2.0).for_node("s1")
    assert (local, maximum) == (0.5, 1.0)
    assert ThresholdConfig().scaled(0.5).for_node("s1") == (0.125, 0.375)


def test_validate_reports_missing_root_and_dangling_edges():
    graph = _three_step()
    broken = TaskGraph(
        nodes=graph.nodes,
        edges=graph.edges + (TaskEdge("s3", EdgeKind.MAIN, "nowhere"),),
        root="s0",
        terminal=graph.terminal
    )
    kinds = validate(broken).kinds()
    assert ViolationKind.MISSING_ROOT in kinds
    assert ViolationKind.DANGLING_EDGE in kinds


def test_validate_reports_main_cycle():
    graph = _three_step()
    cyclic = TaskGraph(
        nodes=graph.nodes,
        edges=graph.edges + (TaskEdge("s3", EdgeKind.MAIN, "s1"),),
        root=graph.root,
        terminal=graph.terminal
    )
    report = validate(cyclic)
    assert not report.ok
    assert ViolationKind.MAIN_CYCLE in report.kinds()
    assert "MainCycle" in str(report)


def test_validate_reports_main_self_loop_and_missing_rejoin():
    graph = _three_step()
    edges = tuple(e for e in graph.edges if not (e.src == "s2.alt1" and e.kind is EdgeKind.OPT))
    edges += (TaskEdge("s1", EdgeKind.MAIN, "s1"),)
    kinds = validate(TaskGraph(graph.nodes, edges, graph.root, graph.terminal)).kinds()
    assert ViolationKind.MAIN_SELF_LOOP in kinds
    assert ViolationKind.MISSING_REJOIN in kinds


def test_graph_json_round_trip(tmp_path):
    graph = _three_step()
    path = graph.to_json(str(tmp_path / "graph.json"))
    loaded = TaskGraph.from_json(path)
    assert loaded.to_dict() == graph.to_dict()
    assert validate(loaded).ok


HOUSEHOLD_LINES = [
    "[walk] <kitchen>", "[walktowards] <fridge>", "[lookat] <mug>", "[grab] <mug>", "[push] <mug>",
    "[open] <fridge>", "[close] <fridge>", "[putin] <mug> <fridge>", "[putback] <mug> <counter>",
    "[switchon] <microwave>", "[switchoff] <microwave>", "[move] <chair>", "[sit] <chair>", "[standup]",
]


@pytest.mark.parametrize("seed", range(50))
def test_random_plans_build_well_formed_graphs(seed, tmp_path):
    rng = random.Random(seed)
    lines = [rng.choice(HOUSEHOLD_LINES) for _ in range(rng.randint(1, 12))]
    n = len(lines)
    options = {k: _plan(*rng.sample(HOUSEHOLD_LINES, rng.randint(1, 3)))
               for k in rng.sample(range(1, n + 1), rng.randint(0, n))}
    graph = build_graph(_plan(*lines), options)

    assert graph.main_path() == [f"s{i}" for i in range(1, n + 1)]
    assert [a.render() for a in graph.main_actions()] == [parse_script(line).render() for line in lines]
    assert len(graph.nodes) == n + sum(len(alts) for alts in options.values()) + 2
    report = validate(graph)
    assert report.ok, str(report)

    for k, alts in options.items():
        owner = f"s{k}"
        decision = f"s{k - 1}" if k > 1 else owner
        rejoin = f"s{k + 1}" if k < n else TERMINAL_ID
        assert [e.dst for e in graph.options_for(owner)] == [f"{owner}.alt{j}" for j in range(1, len(alts) + 1)]
        for edge in graph.options_for(owner):
            assert edge.src == decision
            assert graph.next_node(edge.dst) == rejoin

    again = TaskGraph.from_dict(graph.to_dict())
    assert again.to_dict() == graph.to_dict()
    assert again.main_path() == graph.main_path()
    loaded = TaskGraph.from_json(graph.to_json(str(tmp_path / "graph.json")))
    assert loaded.to_dict() == graph.to_dict()
    assert validate(loaded).ok
