import hashlib
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, List, Optional, Sequence

import numpy as np

from src.core.exceptions import EmptyCandidateSet, PolicyError
from src.core.graph import EdgeKind, TaskEdge, TaskGraph
from src.core.world_state import WorldState, base_name, parse_fact
from src.modules.error_mod.taxonomy import ErrorClass
from src.modules.policy_mod.coefficients import PolicyCoefficients

EDGE_SURCHARGE = {EdgeKind.MAIN: 0.0, EdgeKind.OPT: 0.1, EdgeKind.CORR: 0.05, EdgeKind.FB: 0.3}
FAILURE_RISK = 0.3
ARGMAX_TEMPERATURE = 1e-6

DEFAULT_BASE_RISK: Dict[str, float] = {
    "walk": 0.05, "walktowards": 0.05, "lookat": 0.0, "grab": 0.2, "push": 0.1,
    "open": 0.1, "close": 0.05, "putin": 0.2, "putback": 0.15, "switchon": 0.1,
    "switchoff": 0.05, "move": 0.15, "cut": 0.3, "sit": 0.05, "standup": 0.05,
}


@dataclass
class BeliefContext:
    """Execution-context features standing in for a belief state."""
    node: str
    steps_elapsed: int = 0
    consecutive_failures: Dict[str, int] = field(default_factory=dict)
    last_error: Optional[ErrorClass] = None
    remaining_goals: int = 0
    goals: FrozenSet[str] = frozenset()
    local_threshold: float = 0.25
    max_threshold: float = 0.75
    options_left: int = 0
    l1_left: int = 0

    def __post_init__(self):
        if self.steps_elapsed < 0 or self.remaining_goals < 0 or any(v < 0 for v in self.consecutive_failures.values()):
            raise PolicyError("belief counts must be nonnegative")

    def failures(self, node: str) -> int:
        return self.consecutive_failures.get(node, 0)


@dataclass(frozen=True)
class TransitionScore:
    edge: TaskEdge
    q: float
    c: float
    r: float
    phi: float
    logit: float

    def logit_under(self, coeffs: PolicyCoefficients) -> float:
        return coeffs.alpha * self.q - coeffs.beta * self.c - coeffs.gamma * self.r + coeffs.lam * self.phi

    def to_dict(self) -> dict:
        return {
            'edge': self.edge.to_dict(),
            'q': self.q, 'c': self.c, 'r': self.r, 'phi': self.phi, 'logit': self.logit
        }


@dataclass
class Selection:
    distribution: List[float]
    chosen: TaskEdge
    index: int
    logits: List[float]


def canonical_fact(text: str) -> str:
    """Fact with instance ids stripped, so ``holding(mug#1)`` matches ``holding(mug)``."""
    try:
        name, args = parse_fact(text)
    except ValueError:
        return text
    return f"{name}({','.join(base_name(a) for a in args)})"


def task_value(graph: TaskGraph, dst: str, goals: FrozenSet[str], observed: WorldState) -> float:
    """Share of goals already true or produced along dst's continuation."""
    if not goals:
        return 1.0
    produced = set()
    for nid in graph.continuation(dst):
        produced.update(canonical_fact(f) for f in graph.nodes[nid].expected_outcome)
    hits = sum(1 for g in goals if observed.holds(g) or canonical_fact(g) in produced)
    return hits / len(goals)


def path_cost(graph: TaskGraph, edge: TaskEdge) -> float:
    length = len(graph.continuation(edge.dst))
    return length / (len(graph.action_nodes()) + 1) + EDGE_SURCHARGE[edge.kind]


def edge_risk(graph: TaskGraph, dst: str, belief: BeliefContext, base_risk: Optional[Dict[str, float]] = None) -> float:
    base_risk = DEFAULT_BASE_RISK if base_risk is None else base_risk
    node = graph.nodes[dst]
    base = base_risk.get(node.action.verb, 0.0) if node.action else 0.0
    return min(1.0, FAILURE_RISK * belief.failures(dst) + base)


def score_components(
    graph: TaskGraph,
    edge: TaskEdge,
    belief: BeliefContext,
    observed: WorldState,
    scorer,
    retrieval: Optional[Sequence[Any]] = None,
    coeffs: Optional[PolicyCoefficients] = None,
    base_risk: Optional[Dict[str, float]] = None
) -> TransitionScore:
    """
    Component vector and logit of one outgoing edge.

    Raises:
        ScorerUnavailable: propagated from the scorer
    """
    coeffs = coeffs or PolicyCoefficients()
    graph.node(edge.dst)
    q = task_value(graph, edge.dst, belief.goals, observed)
    c = path_cost(graph, edge)
    r = edge_risk(graph, edge.dst, belief, base_risk)
    phi = min(1.0, max(0.0, float(scorer.score(graph, edge, belief, observed, retrieval))))
    logit = coeffs.alpha * q - coeffs.beta * c - coeffs.gamma * r + coeffs.lam * phi
    return TransitionScore(edge, q, c, r, phi, logit)


def softmax(logits: Sequence[float], temperature: float = 1.0) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    if temperature < ARGMAX_TEMPERATURE:
        out = np.zeros_like(z)
        out[int(np.argmax(z))] = 1.0
        return out
    z = z / temperature
    z = np.exp(z - z.max())
    return z / z.sum()


def decision_seed(seed: int, revision: int, node: str, visit: int) -> int:
    """Stable per-decision seed, shared by every variant at the same decision point."""
    digest = hashlib.sha256(f"{seed}:{revision}:{node}:{visit}".encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'big')


def select_soft(scores: Sequence[TransitionScore], coeffs: PolicyCoefficients, seed: int) -> Selection:
    """
    Sample one edge from ``softmax(logit / temperature)``.

    A single uniform draw from ``default_rng(seed)`` is mapped through the
    cumulative distribution in edge order; below a temperature of 1e-6 the
    first maximal logit wins.

    Raises:
        EmptyCandidateSet: no scores given
    """
    if not scores:
        raise EmptyCandidateSet()
    logits = [s.logit_under(coeffs) for s in scores]
    dist = softmax(logits, coeffs.temperature)
    u = np.random.default_rng(seed).random()
    index = min(int(np.searchsorted(np.cumsum(dist), u, side='right')), len(scores) - 1)
    return Selection([float(p) for p in dist], scores[index].edge, index, logits)
