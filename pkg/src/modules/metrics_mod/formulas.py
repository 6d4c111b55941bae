"""
Evaluation formulas over episode results.

All aggregates use ``math.fsum`` so results do not depend on episode order.
Functions take EpisodeResult-like objects and read only their public fields.
"""

import math
from typing import TYPE_CHECKING, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from src.core.exceptions import MissingReference, ScriptError
from src.core.graph import EdgeKind, ThresholdConfig
from src.core.world_state import AGENT, WorldState, base_name, parse_fact
from src.modules.env_mod.script import parse_script
from src.modules.error_mod.taxonomy import FAMILY_OF, ErrorFamily, ErrorType
from src.modules.policy_mod.guards import Regime, route
from src.modules.policy_mod.scoring import DEFAULT_BASE_RISK

if TYPE_CHECKING:
    from src.core.traversal import EpisodeResult
    from src.modules.env_mod.scenario import Scenario

EDGE_KINDS = ("main", "opt", "corr", "fb")
REGIMES = (Regime.LOW, Regime.MODERATE, Regime.HIGH)
ERROR_PRONE_RISK = 0.2


def mean(values: Iterable[float]) -> Optional[float]:
    values = list(values)
    if not values:
        return None
    return math.fsum(values) / len(values)


def _ratio(num: float, den: float) -> Optional[float]:
    return num / den if den else None


# -- success, accuracy, efficiency --------------------------------------------

def success_rates(results: Sequence['EpisodeResult']) -> Dict[str, Optional[float]]:
    """
    SR_final over all episodes; SR_original counts successes without a replan;
    Improvement is their difference.
    """
    n = len(results)
    successes = [r for r in results if r.succeeded]
    original = [r for r in successes if r.replans == 0]
    sr_final = _ratio(len(successes), n)
    sr_original = _ratio(len(original), n)
    return {
        'sr_final': sr_final,
        'sr_original': sr_original,
        'sr_replan': sr_final,
        'improvement': None if sr_final is None else sr_final - sr_original
    }


def _action_key(text: str) -> str:
    try:
        return parse_script(text).key()
    except ScriptError:
        return text.strip()


def action_accuracy(executed: Sequence[str], reference: Optional[Sequence[str]]) -> float:
    """
    Positional matches between executed and reference actions over executed actions.

    Raises:
        MissingReference: no reference plan
    """
    if reference is None:
        raise MissingReference()
    if not executed:
        return 0.0
    matches = sum(1 for a, b in zip(executed, reference) if _action_key(a) == _action_key(b))
    return matches / len(executed)


def episode_efficiency(result: 'EpisodeResult', optimal_len: Optional[int] = None) -> float:
    optimal = optimal_len or result.optimal_length
    if optimal < 1:
        raise ValueError(f"optimal length must be at least 1, got {optimal}")
    executed = result.steps + result.substeps
    return 1.0 if executed == 0 else min(1.0, optimal / executed)


def coefficient_of_variation(values: Sequence[float]) -> Optional[float]:
    """Population standard deviation over the mean; None when the mean is 0."""
    mu = mean(values)
    if not mu:
        return None
    variance = math.fsum((v - mu) ** 2 for v in values) / len(values)
    return math.sqrt(variance) / mu


def plan_metrics(
    results: Sequence['EpisodeResult'],
    reference: Optional[Sequence[str]] = None,
    optimal_len: Optional[int] = None
) -> Dict[str, Optional[float]]:
    """
    SR forms, action accuracy, efficiency and CV of goal ratios.

    Action accuracy uses ``reference`` or, failing that, each result's own
    reference; it is None when neither exists.
    """
    out = success_rates(results)
    accuracies = []
    for r in results:
        ref = reference if reference is not None else r.reference
        if ref is not None:
            accuracies.append(action_accuracy(r.executed_actions, ref))
    out['aa'] = mean(accuracies)
    out['efficiency'] = mean(episode_efficiency(r, optimal_len) for r in results)
    out['cv'] = coefficient_of_variation([r.goal_ratio for r in results])
    return out


# -- task success family -------------------------------------------------------

def task_success_ratio(results: Sequence['EpisodeResult']) -> Optional[float]:
    return mean(r.goal_ratio for r in results)


def replan_gain(result: 'EpisodeResult') -> float:
    """
    Share of the goal weight that came to hold after the first replan.

    The baseline is the goal ratio recorded on the step that triggered the first
    L3 correction. Episodes that never replanned gain nothing.
    """
    if result.replans <= 0:
        return 0.0
    baseline = next(
        (s.goal_ratio for s in result.history.steps
         if s.primary and s.level == 'L3' and s.goal_ratio is not None),
        0.0
    )
    return max(0.0, result.goal_ratio - baseline)


def tsr_replan(results: Sequence['EpisodeResult']) -> Tuple[float, float]:
    """
    Goals achieved after replanning, over executions that hit at least one failure.

    A failed execution that recovered without a replan contributes zero.

    Returns:
        (mean form, summed form); both 0 when no execution failed
    """
    gains = [replan_gain(r) for r in results if r.failures]
    if not gains:
        return 0.0, 0.0
    return math.fsum(gains) / len(gains), math.fsum(gains)


def tsr_correction(results: Sequence['EpisodeResult']) -> Optional[float]:
    """
    Successes closed by an L1/L2 correction over all successes that had a failure.

    The denominator is the same failure-conditioned population as ``tsr_replan``,
    restricted to successes: every failed step may escalate to a replan.
    """
    recovered = [r for r in results if r.succeeded and r.failures]
    corrected = [r for r in recovered if r.corrected]
    return _ratio(len(corrected), len(recovered))


def error_ratios(results: Sequence['EpisodeResult']) -> Tuple[Dict[str, float], Dict[str, float]]:
    """Share of each error type and each family among all classified errors."""
    counts = {t.value: 0 for t in ErrorType}
    for r in results:
        for name in r.error_types:
            counts[name] += 1
    total = sum(counts.values())
    by_type = {k: (v / total if total else 0.0) for k, v in counts.items()}
    by_family = {f.value: 0.0 for f in ErrorFamily}
    if total:
        for name, v in counts.items():
            by_family[FAMILY_OF[ErrorType(name)].value] += v
        by_family = {k: v / total for k, v in by_family.items()}
    return by_type, by_family


def error_counts(results: Sequence['EpisodeResult']) -> Dict[str, Optional[float]]:
    """EC: mean classified errors per episode; FER: share of unsuccessful episodes with an error."""
    n = len(results)
    return {
        'ec': mean(len(r.failures) for r in results),
        'fer': _ratio(sum(1 for r in results if not r.succeeded and r.failures), n)
    }


def tsr_suite(groups: Mapping[str, Sequence['EpisodeResult']]) -> Dict[str, Dict[str, object]]:
    """TSR, TSR_R (mean and summed), TSR_C and error ratios per task."""
    out = {}
    for task in sorted(groups):
        results = groups[task]
        tsr_r, tsr_r_sum = tsr_replan(results)
        by_type, by_family = error_ratios(results)
        out[task] = {
            'tsr': task_success_ratio(results),
            'tsr_r': tsr_r,
            'tsr_r_sum': tsr_r_sum,
            'tsr_c': tsr_correction(results),
            'error_ratios': by_type,
            'family_ratios': by_family,
            **error_counts(results)
        }
    return out


# -- goal compliance -----------------------------------------------------------

def _fact_objects(text: str) -> set:
    try:
        _, args = parse_fact(text)
    except ValueError:
        return set()
    return {base_name(a) for a in args if a != AGENT}


def soft_precision(initial: Optional[WorldState], final: WorldState, goals: Iterable[str]) -> float:
    """
    Goal-relevant share of the facts that changed between the initial and final world.

    A changed fact is relevant when it mentions an object named in a goal.
    """
    if initial is None:
        return 1.0
    changed = initial.facts() ^ final.facts()
    if not changed:
        return 1.0
    objects = set()
    for g in goals:
        objects |= _fact_objects(g)
    relevant = sum(1 for f in changed if _fact_objects(f) & objects)
    return relevant / len(changed)


def compliance_metrics(
    final: WorldState,
    goals: Mapping[str, float],
    executed_len: int,
    optimal_len: int,
    initial: Optional[WorldState] = None
) -> Dict[str, float]:
    """
    Goal compliance, weighted soft recall, soft precision, soft F1, size
    penalty and the composite final score (soft F1 times size penalty).
    """
    if optimal_len < 1:
        raise ValueError(f"optimal length must be at least 1, got {optimal_len}")
    if any(w <= 0 for w in goals.values()):
        raise ValueError("goal weights must be positive")
    satisfied = [g for g in goals if final.holds(g)]
    compliance = len(satisfied) / len(goals) if goals else 1.0
    total_weight = math.fsum(goals.values())
    recall = math.fsum(goals[g] for g in satisfied) / total_weight if goals else 1.0
    precision = soft_precision(initial, final, goals)
    f1 = 0.0 if recall + precision == 0 else 2 * recall * precision / (recall + precision)
    size_penalty = 1.0 if executed_len <= 0 else min(1.0, optimal_len / executed_len)
    return {
        'goal_compliance': compliance,
        'soft_recall': recall,
        'soft_precision': precision,
        'soft_f1': f1,
        'size_penalty': size_penalty,
        'final_score': f1 * size_penalty
    }


def episode_compliance(result: 'EpisodeResult') -> Dict[str, float]:
    return compliance_metrics(
        result.final_state, result.goals, result.steps + result.substeps,
        result.optimal_length, result.initial_state
    )


# -- regimes and complexity ----------------------------------------------------

def regime_counts(results: Sequence['EpisodeResult']) -> Dict[str, Dict[str, int]]:
    """Chosen edge kinds of primary steps, partitioned by error regime."""
    counts = {regime: {kind: 0 for kind in EDGE_KINDS} for regime in REGIMES}
    for r in results:
        for record in r.history.primary_steps():
            if record.regime in counts and record.edge_kind in EDGE_KINDS:
                counts[record.regime][record.edge_kind] += 1
    return counts


def regime_distribution(results: Sequence['EpisodeResult']) -> Dict[str, Dict[str, float]]:
    counts = regime_counts(results)
    out = {}
    for regime, kinds in counts.items():
        total = sum(kinds.values())
        out[regime] = {k: (v / total if total else 0.0) for k, v in kinds.items()}
    return out


def main_routing_share(
    results: Sequence['EpisodeResult'],
    thresholds: Optional[ThresholdConfig] = None
) -> Optional[float]:
    """
    Share of primary steps routed to the low-error regime.

    With ``thresholds`` the logged error values are routed again under those
    thresholds instead of reading the recorded regime.
    """
    total = 0
    low = 0
    for r in results:
        for record in r.history.primary_steps():
            if record.regime is None:
                continue
            total += 1
            if thresholds is None:
                low += record.regime == Regime.LOW
            else:
                local, maximum = thresholds.for_node(record.node)
                low += route(record.error_value, local, maximum) is EdgeKind.MAIN
    return _ratio(low, total)


def task_complexity(scenario: 'Scenario', base_risk: Optional[Dict[str, float]] = None) -> Dict[str, int]:
    """
    Plan actions, distinct objects, sequential dependencies and error-prone steps.

    A step depends on an earlier one when one of its objects was touched by
    an earlier step. Error-prone steps are scheduled faults plus steps whose
    verb has base risk of at least 0.2.
    """
    base_risk = DEFAULT_BASE_RISK if base_risk is None else base_risk
    plan = scenario.parsed_plan()
    objects = set()
    dependencies = 0
    for action in plan:
        touched = {a for a in action.base_args if a != AGENT and a not in scenario.initial.rooms}
        if touched & objects:
            dependencies += 1
        objects |= touched
    risky = sum(1 for a in plan if base_risk.get(a.verb, 0.0) >= ERROR_PRONE_RISK)
    error_prone = len(scenario.faults) + risky
    components = {
        'actions': len(plan),
        'objects': len(objects),
        'dependencies': dependencies,
        'error_prone': error_prone
    }
    components['score'] = sum(components.values())
    return components


def group_by_task(results: Iterable['EpisodeResult']) -> Dict[str, List['EpisodeResult']]:
    groups: Dict[str, List['EpisodeResult']] = {}
    for r in results:
        groups.setdefault(r.scenario, []).append(r)
    return groups
