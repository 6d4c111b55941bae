import csv
import json
import random
import statistics
from collections import Counter

import pytest

from src.core.exceptions import MissingReference
from src.core.graph import ThresholdConfig
from src.core.history import EpisodeHistory, FailureRecord, Resolution, StepRecord
from src.core.traversal import EpisodeResult, EpisodeStatus, run_episode
from src.modules.error_mod.taxonomy import ErrorType, error_class
from src.modules.metrics_mod.formulas import (
    action_accuracy,
    coefficient_of_variation,
    compliance_metrics,
    episode_efficiency,
    error_ratios,
    main_routing_share,
    plan_metrics,
    regime_counts,
    replan_gain,
    soft_precision,
    task_complexity,
    tsr_correction,
    tsr_replan,
    tsr_suite
)
from src.modules.metrics_mod.report import build_report, render_table, write_all
from src.modules.planner_mod.stub import StubPlanner, StubScorer
from src.modules.policy_mod.coefficients import PolicyCoefficients
from tests.conftest import kitchen_world, load_scenario


class _Facts:
    """Minimal world view: a fixed fact set."""

    def __init__(self, *facts):
        self._facts = set(facts)

    def facts(self):
        return set(self._facts)

    def holds(self, predicate):
        return predicate in self._facts


def _result(succeeded=True, goal_ratio=1.0, failures=(), replans=0, scenario="task", steps=5, substeps=0,
            executed=(), reference=None, regimes=(), replanned_at=None):
    history = EpisodeHistory()
    for error_type, resolution in failures:
        record = history.record_failure(FailureRecord("s1", 0, "[grab] <mug>", error_class(error_type), 0.5, 0))
        record.resolution = resolution
    history.replans_used = replans
    for i, (regime, edge_kind, error) in enumerate(regimes):
        history.append_step(StepRecord(i, f"s{i + 1}", "[walk] <kitchen>", edge_kind, error, regime=regime))
    if replanned_at is not None:
        history.replans_used = max(replans, 1)
        history.append_step(StepRecord(history.next_step(), "s9", "[walk] <kitchen>", "fb", 1.0, level="L3",
                                       goal_ratio=replanned_at))
    return EpisodeResult(
        scenario=scenario,
        status=EpisodeStatus.SUCCESS if succeeded else EpisodeStatus.FAILED,
        steps=steps,
        goal_ratio=goal_ratio,
        history=history,
        substeps=substeps,
        executed_actions=list(executed),
        reference=reference,
        optimal_length=5
    )


RECOVERED = ((ErrorType.TIMEOUT, Resolution.RETRIED),)
REPLANNED = ((ErrorType.TIMEOUT, Resolution.REPLANNED),)


# -- plan metrics --------------------------------------------------------------

def test_success_rate_three_of_four():
    results = [_result(), _result(), _result(), _result(succeeded=False, goal_ratio=0.5)]
    assert plan_metrics(results)["sr_final"] == 0.75


def test_improvement_counts_successes_that_needed_a_replan():
    results = [_result(), _result(replans=1, failures=REPLANNED), _result(succeeded=False), _result()]
    metrics = plan_metrics(results)
    assert metrics["sr_final"] == 0.75
    assert metrics["sr_original"] == 0.5
    assert metrics["improvement"] == pytest.approx(0.25)


def test_action_accuracy_positional():
    reference = ["[walk] <kitchen>", "[grab] <mug>", "[open] <fridge>", "[putin] <mug> <fridge>", "[close] <fridge>"]
    executed = ["[walk] <kitchen>", "[push] <mug>", "[open] <fridge>", "[putin] <mug> <fridge>", "[close] <fridge>"]
    assert action_accuracy(executed, reference) == pytest.approx(0.8)
    assert action_accuracy([], reference) == 0.0


def test_action_accuracy_needs_reference():
    with pytest.raises(MissingReference):
        action_accuracy(["[walk] <kitchen>"], None)
    assert plan_metrics([_result(executed=["[walk] <kitchen>"])])["aa"] is None


def test_cv_of_equal_ratios_is_zero_and_undefined_at_zero_mean():
    assert plan_metrics([_result(goal_ratio=0.5), _result(goal_ratio=0.5)])["cv"] == 0.0
    assert coefficient_of_variation([0.0, 0.0]) is None


def test_efficiency_counts_substeps():
    assert episode_efficiency(_result(steps=5, substeps=5)) == 0.5
    assert episode_efficiency(_result(steps=3)) == 1.0
    with pytest.raises(ValueError):
        episode_efficiency(_result(), optimal_len=-1)


def test_plan_metrics_ignore_episode_order():
    results = [_result(goal_ratio=r, succeeded=r == 1.0) for r in (1.0, 0.5, 0.25, 1.0, 0.0, 0.75)]
    shuffled = list(results)
    random.Random(3).shuffle(shuffled)
    assert plan_metrics(shuffled) == plan_metrics(results)


# -- task success family -------------------------------------------------------

def test_tsr_is_mean_goal_ratio():
    suite = tsr_suite({"task": [_result(goal_ratio=1.0), _result(succeeded=False, goal_ratio=0.5)]})
    assert suite["task"]["tsr"] == 0.75


def test_tsr_replan_without_failures_is_zero():
    assert tsr_replan([_result(), _result(goal_ratio=0.5)]) == (0.0, 0.0)


def test_tsr_replan_mean_and_summed_forms():
    results = [
        _result(failures=REPLANNED, replanned_at=0.0),
        _result(goal_ratio=0.5, failures=REPLANNED, replanned_at=0.0),
        _result(goal_ratio=0.2)
    ]
    mean_form, summed = tsr_replan(results)
    assert mean_form == pytest.approx(0.75)
    assert summed == pytest.approx(1.5)


def test_tsr_replan_credits_only_goals_reached_after_a_replan():
    local_only = _result(failures=RECOVERED)
    replanned = _result(failures=REPLANNED, replanned_at=0.25)
    clean = _result()
    assert replan_gain(local_only) == 0.0
    assert replan_gain(replanned) == pytest.approx(0.75)
    mean_form, summed = tsr_replan([local_only, replanned, clean])
    assert mean_form == pytest.approx(0.375)
    assert summed == pytest.approx(0.75)


def test_tsr_replan_on_household_traces():
    local = run_episode(None, load_scenario("readbook"), PolicyCoefficients(), StubPlanner(), StubScorer())
    assert local.failures and local.replans == 0
    assert tsr_replan([local]) == (0.0, 0.0)

    replanned = run_episode(None, load_scenario("preparefood"), PolicyCoefficients(), StubPlanner(), StubScorer())
    assert replanned.replans == 1
    # closed(microwave) already held when the kitchen walk timed out
    assert replan_gain(replanned) == pytest.approx(0.75)
    assert tsr_replan([local, replanned])[0] == pytest.approx(0.375)


def test_tsr_correction_three_of_four():
    results = [_result(failures=RECOVERED) for _ in range(3)] + [_result(replans=1, failures=REPLANNED), _result()]
    assert tsr_correction(results) == 0.75
    assert tsr_correction([_result()]) is None


def test_error_ratios_sum_to_one_and_partition_into_families():
    results = [
        _result(failures=((ErrorType.TIMEOUT, None), (ErrorType.PERCEPTION_MISMATCH, Resolution.RETRIED))),
        _result(failures=((ErrorType.SCRIPT_PARSING, None), (ErrorType.TIMEOUT, Resolution.RETRIED))),
    ]
    by_type, by_family = error_ratios(results)
    assert sum(by_type.values()) == pytest.approx(1.0, abs=1e-9)
    assert by_type["Timeout-Error"] == 0.5
    assert by_family == {"grounding": 0.25, "precondition": 0.0, "affordance": 0.25, "execution": 0.5}
    assert sum(error_ratios([_result()])[0].values()) == 0.0


# -- recomputed by hand ----------------------------------------------------------

KITCHEN_PLAN = ["[walk] <kitchen>", "[grab] <mug>", "[open] <fridge>", "[putin] <mug> <fridge>", "[close] <fridge>"]
OUTCOMES = [None, Resolution.RETRIED, Resolution.OPTION, Resolution.REPLANNED, Resolution.SKIPPED]


def _random_fields(rng):
    goal_ratio = rng.choice([0.0, 0.25, 0.5, 0.75, 1.0])
    return {
        "succeeded": goal_ratio == 1.0 and rng.random() < 0.9,
        "goal_ratio": goal_ratio,
        "failures": tuple((rng.choice(list(ErrorType)), rng.choice(OUTCOMES)) for _ in range(rng.randint(0, 3))),
        "replans": rng.randint(0, 2),
        "steps": rng.randint(0, 12),
        "substeps": rng.randint(0, 4),
        "executed": [rng.choice(KITCHEN_PLAN) for _ in range(rng.randint(0, 6))],
        "reference": rng.choice([None, KITCHEN_PLAN]),
        "regimes": [(rng.choice(["low", "moderate", "high"]), rng.choice(["main", "opt", "corr", "fb"]), 0.0)
                    for _ in range(rng.randint(0, 5))],
        "replanned_at": rng.choice([None, rng.random()]),
    }


def _close(value):
    return pytest.approx(value, abs=1e-9)


def _gain(fields):
    replans = fields["replans"] if fields["replanned_at"] is None else max(fields["replans"], 1)
    if replans == 0:
        return 0.0
    baseline = 0.0 if fields["replanned_at"] is None else fields["replanned_at"]
    return max(0.0, fields["goal_ratio"] - baseline)


@pytest.mark.parametrize("seed", range(4))
def test_metrics_agree_with_a_direct_recount(seed):
    rng = random.Random(seed)
    logs = [_random_fields(rng) for _ in range(50)]
    results = [_result(**fields) for fields in logs]
    n = len(logs)

    metrics = plan_metrics(results)
    replanned = [f["replans"] > 0 or f["replanned_at"] is not None for f in logs]
    assert metrics["sr_final"] == _close(sum(f["succeeded"] for f in logs) / n)
    assert metrics["sr_original"] == _close(sum(f["succeeded"] and not r for f, r in zip(logs, replanned)) / n)
    assert metrics["improvement"] == _close(sum(f["succeeded"] and r for f, r in zip(logs, replanned)) / n)

    accuracies = []
    for f in logs:
        if f["reference"] is None:
            continue
        hits = [a == b for a, b in zip(f["executed"], f["reference"])]
        accuracies.append(sum(hits) / len(f["executed"]) if f["executed"] else 0.0)
    assert metrics["aa"] == _close(statistics.fmean(accuracies))
    assert metrics["efficiency"] == _close(statistics.fmean(
        1.0 if f["steps"] + f["substeps"] == 0 else min(1.0, 5 / (f["steps"] + f["substeps"])) for f in logs
    ))
    ratios = [f["goal_ratio"] for f in logs]
    assert metrics["cv"] == _close(statistics.pstdev(ratios) / statistics.fmean(ratios))

    row = tsr_suite({"task": results})["task"]
    assert row["tsr"] == _close(statistics.fmean(ratios))
    gains = [_gain(f) for f in logs if f["failures"]]
    assert row["tsr_r"] == _close(sum(gains) / len(gains))
    assert row["tsr_r_sum"] == _close(sum(gains))
    recovered = [f for f in logs if f["succeeded"] and f["failures"]]
    corrected = [f for f in recovered if any(o in (Resolution.RETRIED, Resolution.OPTION) for _, o in f["failures"])]
    assert row["tsr_c"] == (_close(len(corrected) / len(recovered)) if recovered else None)
    assert row["ec"] == _close(sum(len(f["failures"]) for f in logs) / n)
    assert row["fer"] == _close(sum(1 for f in logs if not f["succeeded"] and f["failures"]) / n)

    seen = Counter(t for f in logs for t, _ in f["failures"])
    total = sum(seen.values())
    for error_type in ErrorType:
        assert row["error_ratios"][error_type.value] == _close(seen[error_type] / total)
    families = Counter()
    for error_type, count in seen.items():
        families[error_class(error_type).family.value] += count
    for family, share in row["family_ratios"].items():
        assert share == _close(families[family] / total)

    chosen = Counter((regime, kind) for f in logs for regime, kind, _ in f["regimes"])
    counts = regime_counts(results)
    for regime, kinds in counts.items():
        for kind, count in kinds.items():
            assert count == chosen[(regime, kind)]


# -- goal compliance -----------------------------------------------------------

def test_half_of_unit_goals_satisfied():
    goals = {"closed(fridge)": 1.0, "on(mug,counter)": 1.0, "open(fridge)": 1.0, "holding(mug)": 1.0}
    metrics = compliance_metrics(kitchen_world(), goals, executed_len=4, optimal_len=4)
    assert metrics["goal_compliance"] == 0.5
    assert metrics["soft_recall"] == 0.5


def test_weighted_recall():
    goals = {"closed(fridge)": 3.0, "open(fridge)": 1.0}
    metrics = compliance_metrics(kitchen_world(), goals, executed_len=4, optimal_len=4)
    assert metrics["goal_compliance"] == 0.5
    assert metrics["soft_recall"] == 0.75


def test_soft_f1_and_size_penalty():
    initial = _Facts("on(mug,counter)", "closed(fridge)")
    final = _Facts("holding(mug)", "open(fridge)", "closed(fridge)")
    assert soft_precision(initial, final, ["holding(mug)"]) == pytest.approx(2 / 3)
    metrics = compliance_metrics(final, {"holding(mug)": 1.0}, executed_len=10, optimal_len=5, initial=initial)
    assert metrics["soft_recall"] == 1.0
    assert metrics["soft_f1"] == pytest.approx(0.8)
    assert metrics["size_penalty"] == 0.5
    assert metrics["final_score"] == pytest.approx(0.4)


def test_soft_precision_without_changes_is_one():
    world = _Facts("closed(fridge)")
    assert soft_precision(world, world, ["open(fridge)"]) == 1.0


def test_compliance_rejects_bad_weights_and_lengths():
    with pytest.raises(ValueError):
        compliance_metrics(kitchen_world(), {"closed(fridge)": 0.0}, 1, 1)
    with pytest.raises(ValueError):
        compliance_metrics(kitchen_world(), {"closed(fridge)": 1.0}, 1, 0)


# -- regimes and complexity ----------------------------------------------------

def test_regime_counts_and_main_share():
    result = _result(regimes=[("low", "main", 0.0), ("moderate", "corr", 0.5), ("low", "opt", 0.1), ("high", "fb", 1.0)])
    counts = regime_counts([result])
    assert counts["low"] == {"main": 1, "opt": 1, "corr": 0, "fb": 0}
    assert counts["moderate"]["corr"] == 1
    assert counts["high"]["fb"] == 1
    assert main_routing_share([result]) == 0.5
    # rerouted under wider thresholds, the 0.5 step becomes a low-regime step
    assert main_routing_share([result], ThresholdConfig(epsilon=0.6, epsilon_max=0.9)) == 0.75


def test_task_complexity_of_table_setting():
    assert task_complexity(load_scenario("setuptable")) == {
        "actions": 6, "objects": 4, "dependencies": 2, "error_prone": 4, "score": 16
    }


# -- report --------------------------------------------------------------------

def test_report_groups_per_task_and_aggregates(tmp_path):
    results = [
        _result(scenario="a", failures=RECOVERED, substeps=2),
        _result(scenario="a", succeeded=False, goal_ratio=0.5),
        _result(scenario="b", goal_ratio=1.0),
    ]
    report = build_report(results, {"setuptable": load_scenario("setuptable")})
    assert sorted(report.per_task) == ["a", "b"]
    assert report.per_task["a"]["sr_final"] == 0.5
    assert report.aggregate["n"] == 3
    assert report.aggregate["tsr"] == pytest.approx(2.5 / 3)
    assert report.aggregate["mean_substeps"] == pytest.approx(2 / 3)
    assert report.complexity["setuptable"]["score"] == 16

    paths = write_all(report, str(tmp_path))
    with open(paths["json"], encoding="utf-8") as f:
        data = json.load(f)
    assert data["conventions"] == ["soft_precision", "final_score"]
    assert data["per_task"]["b"]["tsr"] == 1.0
    with open(paths["csv"], encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert [row[0] for row in rows] == ["task", "a", "b", "all"]
    with open(paths["regimes"], encoding="utf-8") as f:
        assert next(csv.reader(f)) == ["regime", "main", "opt", "corr", "fb"]


def test_rendered_table_marks_convention_columns():
    table = render_table(build_report([_result()]))
    assert "soft_precision*" in table
    assert "final_score*" in table
    lines = table.splitlines()
    assert lines[0].split()[:2] == ["task", "n"]
    assert lines[-1] == "* convention: soft_precision, final_score"
