"""
HECG Policy Module

Transition scoring (value, cost, risk, semantic score), softmax selection,
threshold routing and edge guards.
"""

from src.modules.policy_mod.coefficients import PolicyCoefficients, VARIANTS
from src.modules.policy_mod.scoring import (
    BeliefContext,
    TransitionScore,
    Selection,
    DEFAULT_BASE_RISK,
    EDGE_SURCHARGE,
    score_components,
    select_soft,
    softmax,
    decision_seed,
    task_value,
    path_cost,
    edge_risk,
    canonical_fact
)
from src.modules.policy_mod.guards import Regime, route, route_by_threshold, regime_of, eval_guard, admissible

__all__ = [
    "PolicyCoefficients",
    "VARIANTS",
    "BeliefContext",
    "TransitionScore",
    "Selection",
    "DEFAULT_BASE_RISK",
    "EDGE_SURCHARGE",
    "score_components",
    "select_soft",
    "softmax",
    "decision_seed",
    "task_value",
    "path_cost",
    "edge_risk",
    "canonical_fact",
    "Regime",
    "route",
    "route_by_threshold",
    "regime_of",
    "eval_guard",
    "admissible"
]
