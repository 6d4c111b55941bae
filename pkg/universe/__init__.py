"""
HECG Universe Module

World definitions: household world configuration, scenario lookup and registry.
"""

from universe.base_world import HouseholdWorld, WorldConfig, WorldRegistry

__all__ = [
    "HouseholdWorld",
    "WorldConfig",
    "WorldRegistry"
]
