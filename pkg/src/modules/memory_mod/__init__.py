"""
HECG Memory Module

Episodic trajectory memory: past episodes stored as state/action/outcome
graphs and retrieved by semantic and structural similarity to the current
context.
"""

from src.modules.memory_mod.ccgr import (
    MemoryKind,
    Relation,
    MemoryNode,
    MemoryEdge,
    RetrievalQuery,
    RetrievalResult,
    TrajectoryGraph,
    jaccard,
    lcs_length,
    lcs_ratio,
    DEFAULT_WINDOW
)

__all__ = [
    "MemoryKind",
    "Relation",
    "MemoryNode",
    "MemoryEdge",
    "RetrievalQuery",
    "RetrievalResult",
    "TrajectoryGraph",
    "jaccard",
    "lcs_length",
    "lcs_ratio",
    "DEFAULT_WINDOW"
]
