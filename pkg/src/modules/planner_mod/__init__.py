"""
HECG Planner Module

Plan generation and semantic edge scoring: the deterministic stubs used by
tests and experiments, and chat-completion backed adapters with jinja2
prompt templates.
"""

from src.modules.planner_mod.base import (
    BannedContext,
    PlanProposal,
    ReplanRequest,
    Planner,
    SemanticScorer,
    PlannerRegistry
)
from src.modules.planner_mod.stub import StubPlanner, StubScorer
from src.modules.planner_mod.llm import LLMPlanner, LLMScorer, extract_score, parse_plan_reply

__all__ = [
    "BannedContext",
    "PlanProposal",
    "ReplanRequest",
    "Planner",
    "SemanticScorer",
    "PlannerRegistry",
    "StubPlanner",
    "StubScorer",
    "LLMPlanner",
    "LLMScorer",
    "extract_score",
    "parse_plan_reply"
]
