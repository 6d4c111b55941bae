"""
HECG Core Module

Engine layer: exceptions, the symbolic world state and the event bus. The
graph, history, traversal and experiment modules import the feature modules
and are imported by their full path (``src.core.graph``, ``src.core.traversal``).
"""

from src.core.exceptions import HECGError
from src.core.world_state import WorldState, ObjectState, AgentState, fact, parse_fact
from src.core.event_bus import EventBus, Event, EventTypes

__all__ = [
    "HECGError",
    "WorldState",
    "ObjectState",
    "AgentState",
    "fact",
    "parse_fact",
    "EventBus",
    "Event",
    "EventTypes"
]
