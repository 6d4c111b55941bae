"""
Typed execution graph: construction, validation and traversal queries.

A plan ``a_1 .. a_n`` compiles into a Main chain ``s1 -> .. -> sN -> goal``.
Each alternative of step k becomes a node ``s<k>.alt<j>`` reached by an Opt edge
from the decision point before step k (the root itself for step 1) and
rejoining the chain at step k+1 with a second Opt edge. Every action node
carries a Corr self-loop and an Fb edge to the ``replan`` sentinel.
"""

import json
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple, Union

import networkx as nx

from src.core.exceptions import DanglingAlternative, EmptyPlan, ThresholdOrderViolation, UnknownNode
from src.core.world_state import AGENT
from src.modules.env_mod.rules import RULEBOOK, VerbRuleBook
from src.modules.env_mod.script import ActionScript
from src.utils.logger import logger

if TYPE_CHECKING:
    from src.modules.correction_mod.rules import LocalCorrectionRule

TERMINAL_ID = "goal"
SENTINEL_ID = "replan"
SCHEMA_VERSION = 1


class EdgeKind(Enum):
    MAIN = "main"
    OPT = "opt"
    CORR = "corr"
    FB = "fb"

    @property
    def order(self) -> int:
        return _EDGE_ORDER[self]


_EDGE_ORDER = {EdgeKind.MAIN: 0, EdgeKind.OPT: 1, EdgeKind.CORR: 2, EdgeKind.FB: 3}


class NodeKind(Enum):
    ACTION = "action"
    SUBTASK = "subtask"
    TERMINAL = "terminal"
    SENTINEL = "sentinel"


@dataclass(frozen=True)
class TaskContext:
    label: str
    objects: FrozenSet[str] = frozenset()

    def to_dict(self) -> dict:
        return {'label': self.label, 'objects': sorted(self.objects)}

    @classmethod
    def from_dict(cls, data: dict) -> 'TaskContext':
        return cls(data['label'], frozenset(data.get('objects', [])))


@dataclass(frozen=True)
class TaskNode:
    id: str
    kind: NodeKind
    task_context: TaskContext
    action: Optional[ActionScript] = None
    expected_outcome: FrozenSet[str] = frozenset()
    local_threshold: float = 0.25
    max_threshold: float = 0.75
    local_rules: Tuple['LocalCorrectionRule', ...] = ()
    successors: Tuple[str, ...] = ()
    alternative_of: Optional[str] = None
    alternatives: Tuple[str, ...] = ()

    @property
    def is_action(self) -> bool:
        return self.kind is NodeKind.ACTION

    def to_dict(self) -> dict:
        return {
            'id': self.id,
            'kind': self.kind.value,
            'task_context': self.task_context.to_dict(),
            'action': self.action.to_dict() if self.action else None,
            'expected_outcome': sorted(self.expected_outcome),
            'local_threshold': self.local_threshold,
            'max_threshold': self.max_threshold,
            'local_rules': [r.to_dict() for r in self.local_rules],
            'successors': list(self.successors),
            'alternative_of': self.alternative_of,
            'alternatives': list(self.alternatives)
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'TaskNode':
        from src.modules.correction_mod.rules import LocalCorrectionRule
        return cls(
            id=data['id'],
            kind=NodeKind(data['kind']),
            task_context=TaskContext.from_dict(data['task_context']),
            action=ActionScript.from_dict(data['action']) if data.get('action') else None,
            expected_outcome=frozenset(data.get('expected_outcome', [])),
            local_threshold=data.get('local_threshold', 0.25),
            max_threshold=data.get('max_threshold', 0.75),
            local_rules=tuple(LocalCorrectionRule.from_dict(r) for r in data.get('local_rules', [])),
            successors=tuple(data.get('successors', [])),
            alternative_of=data.get('alternative_of'),
            alternatives=tuple(data.get('alternatives', []))
        )


@dataclass(frozen=True)
class TaskEdge:
    src: str
    kind: EdgeKind
    dst: str

    def sort_key(self) -> Tuple[str, int, str]:
        return self.src, self.kind.order, self.dst

    def to_dict(self) -> dict:
        return {'src': self.src, 'kind': self.kind.value, 'dst': self.dst}

    @classmethod
    def from_dict(cls, data: dict) -> 'TaskEdge':
        return cls(data['src'], EdgeKind(data['kind']), data['dst'])

    def __str__(self):
        return f"{self.src} -{self.kind.value}-> {self.dst}"


@dataclass
class ThresholdConfig:
    """
    Per-node (epsilon, epsilon_max) thresholds.

    ``scale`` multiplies both values (clamped to [0, 1]) for sensitivity sweeps.
    """
    epsilon: float = 0.25
    epsilon_max: float = 0.75
    overrides: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    scale: float = 1.0

    def for_node(self, node_id: str) -> Tuple[float, float]:
        local, maximum = self.overrides.get(node_id, (self.epsilon, self.epsilon_max))
        if not (0.0 <= local <= maximum <= 1.0):
            raise ThresholdOrderViolation(local, maximum, node_id)
        return min(1.0, max(0.0, local * self.scale)), min(1.0, max(0.0, maximum * self.scale))

    def scaled(self, scale: float) -> 'ThresholdConfig':
        return ThresholdConfig(self.epsilon, self.epsilon_max, dict(self.overrides), scale)

    def to_dict(self) -> dict:
        return {
            'epsilon': self.epsilon,
            'epsilon_max': self.epsilon_max,
            'overrides': {k: list(v) for k, v in self.overrides.items()},
            'scale': self.scale
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'ThresholdConfig':
        return cls(
            epsilon=data.get('epsilon', 0.25),
            epsilon_max=data.get('epsilon_max', 0.75),
            overrides={k: tuple(v) for k, v in (data.get('overrides') or {}).items()},
            scale=data.get('scale', 1.0)
        )


@dataclass(frozen=True)
class TaskGraph:
    """Immutable execution graph; a replan produces a new instance with a higher revision."""
    nodes: Dict[str, TaskNode]
    edges: Tuple[TaskEdge, ...]
    root: str
    terminal: FrozenSet[str]
    sentinel: Optional[str] = SENTINEL_ID
    revision: int = 0

    def node(self, node_id: str) -> TaskNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNode(node_id)

    def outgoing(self, node_id: str, kind_filter: Optional[EdgeKind] = None) -> List[TaskEdge]:
        """Edges leaving ``node_id`` ordered Main < Opt < Corr < Fb, then by destination."""
        if node_id not in self.nodes:
            raise UnknownNode(node_id)
        edges = [e for e in self.edges if e.src == node_id and (kind_filter is None or e.kind is kind_filter)]
        return sorted(edges, key=lambda e: (e.kind.order, e.dst))

    def forward_edges(self, node_id: str) -> List[TaskEdge]:
        """Main and Opt edges usable after ``node_id`` succeeds (not its own alternatives)."""
        return [
            e for e in self.outgoing(node_id)
            if e.kind in (EdgeKind.MAIN, EdgeKind.OPT) and self.nodes[e.dst].alternative_of != node_id
        ]

    def options_for(self, node_id: str) -> List[TaskEdge]:
        """Opt edges entering the alternatives of ``node_id``."""
        alternatives = set(self.node(node_id).alternatives)
        return sorted(
            (e for e in self.edges if e.kind is EdgeKind.OPT and e.dst in alternatives),
            key=lambda e: (e.kind.order, e.dst)
        )

    def next_node(self, node_id: str) -> Optional[str]:
        """Main successor, or the rejoin target for an alternative."""
        for kind in (EdgeKind.MAIN, EdgeKind.OPT):
            for edge in self.outgoing(node_id, kind):
                if self.nodes[edge.dst].alternative_of != node_id:
                    return edge.dst
        return None

    def continuation(self, node_id: str) -> List[str]:
        """Action nodes visited from ``node_id`` (inclusive) to the terminal along the nominal flow."""
        out = []
        current = node_id
        while current is not None and current in self.nodes and self.nodes[current].is_action:
            if current in out:
                break
            out.append(current)
            current = self.next_node(current)
        return out

    def action_nodes(self) -> List[TaskNode]:
        return [n for n in self.nodes.values() if n.is_action]

    def main_path(self) -> List[str]:
        return self.continuation(self.root)

    def main_actions(self) -> List[ActionScript]:
        return [self.nodes[n].action for n in self.main_path()]

    def to_networkx(self, kinds: Optional[Sequence[EdgeKind]] = None) -> nx.MultiDiGraph:
        g = nx.MultiDiGraph()
        g.add_nodes_from(self.nodes)
        for e in self.edges:
            if kinds is None or e.kind in kinds:
                g.add_edge(e.src, e.dst, key=e.kind.value)
        return g

    def to_dict(self) -> dict:
        return {
            'version': SCHEMA_VERSION,
            'revision': self.revision,
            'root': self.root,
            'terminal': sorted(self.terminal),
            'sentinel': self.sentinel,
            'nodes': [self.nodes[k].to_dict() for k in sorted(self.nodes)],
            'edges': [e.to_dict() for e in self.edges]
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'TaskGraph':
        nodes = [TaskNode.from_dict(n) for n in data['nodes']]
        return cls(
            nodes={n.id: n for n in nodes},
            edges=tuple(sorted((TaskEdge.from_dict(e) for e in data['edges']), key=TaskEdge.sort_key)),
            root=data['root'],
            terminal=frozenset(data['terminal']),
            sentinel=data.get('sentinel'),
            revision=data.get('revision', 0)
        )

    def to_json(self, path: str) -> str:
        os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2)
        return path

    @classmethod
    def from_json(cls, path: str) -> 'TaskGraph':
        with open(path, 'r', encoding='utf-8') as f:
            return cls.from_dict(json.load(f))


def _normalize_options(options, length: int) -> Dict[int, List[ActionScript]]:
    if options is None:
        return {}
    if isinstance(options, Mapping):
        normalized = {}
        for key, alts in options.items():
            try:
                index = int(key)
            except (TypeError, ValueError):
                raise DanglingAlternative(key)
            normalized[index] = list(alts)
    else:
        normalized = {i + 1: list(alts) for i, alts in enumerate(options)}
    for index in normalized:
        if not 1 <= index <= length:
            raise DanglingAlternative(index)
    return normalized


def build_graph(
    plan: Sequence[ActionScript],
    options: Optional[Union[Mapping[int, Sequence[ActionScript]], Sequence[Sequence[ActionScript]]]] = None,
    thresholds: Optional[ThresholdConfig] = None,
    rulebook: Optional[VerbRuleBook] = None,
    rules_for=None,
    revision: int = 0
) -> TaskGraph:
    """
    Compile a plan and its per-step alternatives into a TaskGraph.

    Args:
        plan: Ordered actions
        options: Alternatives keyed by 1-based step, or a per-step list of lists
        thresholds: Threshold defaults, overrides and scale
        rulebook: Verb table supplying expected outcomes
        rules_for: Callable mapping an action to its local correction rules
        revision: Graph revision (0 for the initial plan, +1 per replan)

    Raises:
        EmptyPlan: empty plan
        DanglingAlternative: option attached outside the plan
        ThresholdOrderViolation: a node's local threshold exceeds its maximum
    """
    if not plan:
        raise EmptyPlan()
    thresholds = thresholds or ThresholdConfig()
    rulebook = rulebook or RULEBOOK
    if rules_for is None:
        from src.modules.correction_mod.rules import rules_for
    n = len(plan)
    alts = _normalize_options(options, n)

    main_ids = [f"s{i}" for i in range(1, n + 1)]
    edges = set()
    successors: Dict[str, List[str]] = {nid: [] for nid in main_ids}
    alternatives: Dict[str, List[str]] = {nid: [] for nid in main_ids}
    alt_actions: Dict[str, Tuple[ActionScript, str]] = {}

    for i, nid in enumerate(main_ids):
        nxt = main_ids[i + 1] if i + 1 < n else TERMINAL_ID
        edges.add(TaskEdge(nid, EdgeKind.MAIN, nxt))
        successors[nid].append(nxt)

    for k in sorted(alts):
        owner = main_ids[k - 1]
        decision = main_ids[k - 2] if k > 1 else owner
        rejoin = main_ids[k] if k < n else TERMINAL_ID
        for j, action in enumerate(alts[k], start=1):
            alt_id = f"{owner}.alt{j}"
            alt_actions[alt_id] = (action, owner)
            alternatives[owner].append(alt_id)
            edges.add(TaskEdge(decision, EdgeKind.OPT, alt_id))
            successors[decision].append(alt_id)
            edges.add(TaskEdge(alt_id, EdgeKind.OPT, rejoin))
            successors[alt_id] = [rejoin]

    def make_node(nid: str, action: ActionScript, alternative_of: Optional[str] = None) -> TaskNode:
        local, maximum = thresholds.for_node(nid)
        edges.add(TaskEdge(nid, EdgeKind.CORR, nid))
        edges.add(TaskEdge(nid, EdgeKind.FB, SENTINEL_ID))
        return TaskNode(
            id=nid,
            kind=NodeKind.ACTION,
            task_context=TaskContext(action.render(), frozenset(a for a in action.base_args if a != AGENT)),
            action=action,
            expected_outcome=rulebook.expected_outcome(action),
            local_threshold=local,
            max_threshold=maximum,
            local_rules=tuple(rules_for(action)),
            successors=tuple(successors[nid]),
            alternative_of=alternative_of,
            alternatives=tuple(alternatives.get(nid, ()))
        )

    nodes: Dict[str, TaskNode] = {}
    for nid, action in zip(main_ids, plan):
        nodes[nid] = make_node(nid, action)
    for alt_id, (action, owner) in alt_actions.items():
        nodes[alt_id] = make_node(alt_id, action, alternative_of=owner)

    nodes[TERMINAL_ID] = TaskNode(TERMINAL_ID, NodeKind.TERMINAL, TaskContext("goal"))
    nodes[SENTINEL_ID] = TaskNode(SENTINEL_ID, NodeKind.SENTINEL, TaskContext("replan"), successors=(TERMINAL_ID,))
    edges.add(TaskEdge(SENTINEL_ID, EdgeKind.MAIN, TERMINAL_ID))

    graph = TaskGraph(
        nodes=nodes,
        edges=tuple(sorted(edges, key=TaskEdge.sort_key)),
        root=main_ids[0],
        terminal=frozenset({TERMINAL_ID}),
        sentinel=SENTINEL_ID,
        revision=revision
    )
    logger.debug(f"Graph r{revision} built: {len(nodes)} nodes, {len(graph.edges)} edges")
    return graph


def outgoing(graph: TaskGraph, node: str, kind_filter: Optional[EdgeKind] = None) -> List[TaskEdge]:
    return graph.outgoing(node, kind_filter)


# -- validation ---------------------------------------------------------------

class ViolationKind(Enum):
    MISSING_ROOT = "MissingRoot"
    DANGLING_EDGE = "DanglingEdge"
    UNKNOWN_SUCCESSOR = "UnknownSuccessor"
    MAIN_SELF_LOOP = "MainSelfLoop"
    MISSING_MAIN_EDGE = "MissingMainEdge"
    MISSING_REJOIN = "MissingRejoin"
    OPTION_CHAIN = "OptionChain"
    MAIN_CYCLE = "MainCycle"
    TERMINAL_UNREACHABLE = "TerminalUnreachable"
    THRESHOLD_ORDER = "ThresholdOrderViolation"
    EMPTY_EXPECTATION = "EmptyExpectation"
    DUPLICATE_EDGE = "DuplicateEdge"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    subject: str
    detail: str = ""

    def to_dict(self) -> dict:
        return {'kind': self.kind.value, 'subject': self.subject, 'detail': self.detail}

    def __str__(self):
        return f"{self.kind.value}({self.subject}){': ' + self.detail if self.detail else ''}"


@dataclass
class ValidationReport:
    violations: List[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> List[ViolationKind]:
        return [v.kind for v in self.violations]

    def add(self, kind: ViolationKind, subject: str, detail: str = ""):
        self.violations.append(Violation(kind, subject, detail))

    def to_dict(self) -> dict:
        return {'ok': self.ok, 'violations': [v.to_dict() for v in self.violations]}

    def __len__(self):
        return len(self.violations)

    def __str__(self):
        return "ok" if self.ok else "; ".join(str(v) for v in self.violations)


def validate(graph: TaskGraph) -> ValidationReport:
    """List every violated graph or node invariant; an empty report means well-formed."""
    report = ValidationReport()
    nodes = graph.nodes

    if graph.root not in nodes:
        report.add(ViolationKind.MISSING_ROOT, graph.root)

    seen = set()
    for e in graph.edges:
        triple = (e.src, e.kind, e.dst)
        if triple in seen:
            report.add(ViolationKind.DUPLICATE_EDGE, str(e))
        seen.add(triple)
        for end in (e.src, e.dst):
            if end not in nodes:
                report.add(ViolationKind.DANGLING_EDGE, str(e), f"unknown endpoint {end}")
        if e.kind is EdgeKind.MAIN and e.src == e.dst:
            report.add(ViolationKind.MAIN_SELF_LOOP, e.src)
        if (e.kind is EdgeKind.OPT and e.src in nodes and e.dst in nodes
                and nodes[e.src].alternative_of and nodes[e.dst].alternative_of):
            report.add(ViolationKind.OPTION_CHAIN, str(e))

    for nid, node in sorted(nodes.items()):
        for succ in node.successors:
            if succ not in nodes:
                report.add(ViolationKind.UNKNOWN_SUCCESSOR, nid, succ)
        if not (0.0 <= node.local_threshold <= node.max_threshold <= 1.0):
            report.add(ViolationKind.THRESHOLD_ORDER, nid,
                       f"local {node.local_threshold} > max {node.max_threshold}")
        if node.is_action and not node.expected_outcome:
            report.add(ViolationKind.EMPTY_EXPECTATION, nid)
        if nid in graph.terminal:
            continue
        kinds = {e.kind for e in graph.edges if e.src == nid}
        if node.alternative_of:
            if EdgeKind.OPT not in kinds:
                report.add(ViolationKind.MISSING_REJOIN, nid)
        elif EdgeKind.MAIN not in kinds:
            report.add(ViolationKind.MISSING_MAIN_EDGE, nid)

    main = nx.DiGraph()
    main.add_nodes_from(nodes)
    main.add_edges_from((e.src, e.dst) for e in graph.edges
                        if e.kind is EdgeKind.MAIN and e.src in nodes and e.dst in nodes)
    if not nx.is_directed_acyclic_graph(main):
        cycle = nx.find_cycle(main)
        report.add(ViolationKind.MAIN_CYCLE, cycle[0][0], " -> ".join(str(u) for u, _ in cycle))
    elif graph.root in nodes:
        reach = nx.descendants(main, graph.root) | {graph.root}
        if not reach & set(graph.terminal):
            report.add(ViolationKind.TERMINAL_UNREACHABLE, graph.root)

    if not report.ok:
        logger.debug(f"Graph r{graph.revision} validation: {report}")
    return report
