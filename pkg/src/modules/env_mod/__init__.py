"""
HECG Environment Module

Deterministic household simulator: script grammar, verb rules, fault injection
and scenario files.
"""

from src.modules.env_mod.script import ActionScript, VerbRegistry, VerbSpec, parse_script
from src.modules.env_mod.rules import Effect, VerbRule, VerbRuleBook, RULEBOOK, default_rulebook
from src.modules.env_mod.faults import FaultEntry, FaultSchedule, FaultInjector, clears
from src.modules.env_mod.simulator import (
    StepOutcome,
    GoalReport,
    EpisodeEnvironment,
    step,
    check_goal
)
from src.modules.env_mod.scenario import Scenario, WeightedGoal

__all__ = [
    "ActionScript",
    "VerbRegistry",
    "VerbSpec",
    "parse_script",
    "Effect",
    "VerbRule",
    "VerbRuleBook",
    "RULEBOOK",
    "default_rulebook",
    "FaultEntry",
    "FaultSchedule",
    "FaultInjector",
    "clears",
    "StepOutcome",
    "GoalReport",
    "EpisodeEnvironment",
    "step",
    "check_goal",
    "Scenario",
    "WeightedGoal"
]
