"""
HECG Correction Module

Local correction rules attached to graph nodes and the four-level correction
pipeline: L1 local adjustment, L2 option switching, L3 replanning with
banned (action, context) pairs, L4 human escalation.
"""

from src.modules.correction_mod.rules import (
    LocalCorrectionRule,
    DEFAULT_RULES,
    CLOSE_THEN_OPEN,
    RELOOK_THEN_RETRY,
    REAPPROACH,
    RETRY_ONCE,
    rules_for
)
from src.modules.correction_mod.pipeline import (
    L4Mode,
    TerminationAction,
    CorrectionOutcome,
    EpisodeTermination,
    CorrectionPipeline,
    replan_request
)
from src.modules.planner_mod.base import BannedContext, ReplanRequest

__all__ = [
    "LocalCorrectionRule",
    "DEFAULT_RULES",
    "CLOSE_THEN_OPEN",
    "RELOOK_THEN_RETRY",
    "REAPPROACH",
    "RETRY_ONCE",
    "rules_for",
    "L4Mode",
    "TerminationAction",
    "CorrectionOutcome",
    "EpisodeTermination",
    "CorrectionPipeline",
    "replan_request",
    "BannedContext",
    "ReplanRequest"
]
