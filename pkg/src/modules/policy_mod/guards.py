"""Threshold routing and edge guards."""

from typing import List, Sequence

from src.core.graph import EdgeKind, TaskEdge, TaskNode


class Regime:
    LOW = "low"
    MODERATE = "moderate"
    HIGH = "high"


_REGIME_OF = {EdgeKind.MAIN: Regime.LOW, EdgeKind.CORR: Regime.MODERATE, EdgeKind.FB: Regime.HIGH}


def route(error: float, local_threshold: float, max_threshold: float) -> EdgeKind:
    if error <= local_threshold:
        return EdgeKind.MAIN
    if error <= max_threshold:
        return EdgeKind.CORR
    return EdgeKind.FB


def route_by_threshold(error: float, node: TaskNode) -> EdgeKind:
    """Main if error <= local threshold, Corr up to the max threshold, Fb above it."""
    return route(error, node.local_threshold, node.max_threshold)


def regime_of(error: float, node: TaskNode) -> str:
    return _REGIME_OF[route_by_threshold(error, node)]


def eval_guard(edge: TaskEdge, belief, error: float) -> bool:
    """
    Whether ``edge`` may fire from the belief's current node at this error.

    Main needs the low regime. Opt fires as a forward alternative in the low
    regime, or as a correction while options remain. Corr needs the moderate
    regime and L1 budget. Fb needs the high regime, or a moderate error with
    both L1 and options spent.
    """
    regime = route(error, belief.local_threshold, belief.max_threshold)
    if edge.kind is EdgeKind.MAIN:
        return regime is EdgeKind.MAIN
    if edge.kind is EdgeKind.OPT:
        return regime is EdgeKind.MAIN or (regime is EdgeKind.CORR and belief.options_left > 0)
    if edge.kind is EdgeKind.CORR:
        return regime is EdgeKind.CORR and belief.l1_left > 0
    return regime is EdgeKind.FB or (
        regime is EdgeKind.CORR and belief.l1_left <= 0 and belief.options_left <= 0
    )


def admissible(edges: Sequence[TaskEdge], belief, error: float) -> List[TaskEdge]:
    return [e for e in edges if eval_guard(e, belief, error)]
