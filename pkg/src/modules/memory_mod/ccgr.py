"""
Episodic graph memory over past trajectories.

Every executed step becomes a State -> Action -> Outcome triple in one
networkx multigraph. Retrieval scores bounded windows of each stored episode
against the current context: a Jaccard overlap of tokens (semantic) and a
longest-common-subsequence ratio of action verbs (structural).
"""

import json
import os
import threading
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import networkx as nx

from src.core.exceptions import ConfigError, ScriptError
from src.core.history import EpisodeHistory, RecordType, StepRecord
from src.core.world_state import WorldState
from src.modules.env_mod.script import parse_script
from src.modules.error_mod.taxonomy import CorrectionLevel
from src.modules.policy_mod.scoring import canonical_fact
from src.utils.logger import logger

MEMORY_VERSION = 1
DEFAULT_WINDOW = 5

_RECOVERING_LEVELS = {CorrectionLevel.L1.value, CorrectionLevel.L2.value, CorrectionLevel.L3.value}


class MemoryKind:
    STATE = "State"
    ACTION = "Action"
    OUTCOME = "Outcome"


class Relation:
    TEMPORAL = "Temporal"
    CAUSES = "Causes"
    ENABLES = "Enables"
    RECOVERS_FROM = "RecoversFrom"

    ALL = (TEMPORAL, CAUSES, ENABLES, RECOVERS_FROM)


@dataclass(frozen=True)
class MemoryNode:
    """
    One remembered state, action or outcome.

    ``label`` carries the action key (``grab(mug)``) for actions and the error
    type, or ``success``, for outcomes.
    """
    kind: str
    payload: FrozenSet[str]
    episode: str
    step: int
    label: str = ""

    @property
    def key(self) -> str:
        return f"{self.episode}:{self.step}:{self.kind}"

    def to_dict(self) -> dict:
        return {
            'kind': self.kind,
            'payload': sorted(self.payload),
            'episode': self.episode,
            'step': self.step,
            'label': self.label
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'MemoryNode':
        return cls(data['kind'], frozenset(data['payload']), data['episode'], data['step'], data.get('label', ''))


@dataclass(frozen=True)
class MemoryEdge:
    src: str
    dst: str
    relation: str

    def to_dict(self) -> dict:
        return {'src': self.src, 'dst': self.dst, 'relation': self.relation}


@dataclass
class RetrievalQuery:
    """Current context: goal facts, observed predicates and recently executed verbs."""
    goal_tokens: FrozenSet[str] = frozenset()
    predicates: FrozenSet[str] = frozenset()
    recent_actions: Tuple[str, ...] = ()

    @property
    def tokens(self) -> FrozenSet[str]:
        return self.goal_tokens | self.predicates | frozenset(self.recent_actions)

    @classmethod
    def from_context(cls, goals: Iterable[str], observed: Optional[WorldState] = None,
                     recent_actions: Sequence[str] = ()) -> 'RetrievalQuery':
        predicates = frozenset(canonical_fact(f) for f in observed.facts()) if observed is not None else frozenset()
        return cls(
            goal_tokens=frozenset(canonical_fact(g) for g in goals),
            predicates=predicates,
            recent_actions=tuple(recent_actions)
        )


@dataclass
class RetrievalResult:
    """A scored window of one stored episode."""
    episode: str
    anchor: int
    nodes: List[str]
    edges: List[MemoryEdge]
    semantic: float
    structural: float
    combined: float
    recency: int
    provenance: Dict[str, List[str]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            'episode': self.episode,
            'anchor': self.anchor,
            'nodes': list(self.nodes),
            'edges': [e.to_dict() for e in self.edges],
            'semantic': self.semantic,
            'structural': self.structural,
            'combined': self.combined,
            'recency': self.recency,
            'provenance': {k: list(v) for k, v in self.provenance.items()}
        }


def jaccard(a: FrozenSet[str], b: FrozenSet[str]) -> float:
    if not a and not b:
        return 0.0
    return len(a & b) / len(a | b)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def lcs_ratio(a: Sequence[str], b: Sequence[str]) -> float:
    longest = max(len(a), len(b))
    return lcs_length(a, b) / longest if longest else 0.0


def _action_tokens(text: str) -> Tuple[FrozenSet[str], str, str]:
    """Payload, key and verb of a logged action line."""
    try:
        action = parse_script(text)
    except ScriptError:
        return frozenset({text}), text, text
    return frozenset({action.verb} | set(action.base_args)), action.key(), action.verb


class TrajectoryGraph:
    """
    Trajectory memory shared across episodes of a run.

    Ingest and retrieve hold one lock, so a single writer never interleaves
    with readers.
    """

    def __init__(
        self,
        window: int = DEFAULT_WINDOW,
        semantic_weight: float = 0.5,
        structural_weight: float = 0.5
    ):
        if window < 1:
            raise ConfigError(f"retrieval window must be at least 1, got {window}")
        self._check_weights(semantic_weight, structural_weight)
        self.window = window
        self.semantic_weight = semantic_weight
        self.structural_weight = structural_weight
        self.graph = nx.MultiDiGraph()
        self._episodes: List[str] = []
        self._goals: Dict[str, FrozenSet[str]] = {}
        self._steps: Dict[str, List[int]] = {}
        self._lock = threading.Lock()

    @staticmethod
    def _check_weights(ws: float, wt: float):
        if ws < 0 or wt < 0 or abs(ws + wt - 1.0) > 1e-9:
            raise ConfigError(f"retrieval weights must be nonnegative and sum to 1, got {ws} and {wt}")

    # -- structure ------------------------------------------------------------

    def __len__(self):
        return self.graph.number_of_nodes()

    @property
    def episodes(self) -> List[str]:
        return list(self._episodes)

    def node(self, key: str) -> MemoryNode:
        return self.graph.nodes[key]['data']

    def edges(self, relation: Optional[str] = None) -> List[MemoryEdge]:
        return [
            MemoryEdge(u, v, rel) for u, v, rel in self.graph.edges(keys=True)
            if relation is None or rel == relation
        ]

    def _add_node(self, node: MemoryNode):
        if not node.payload:
            node = MemoryNode(node.kind, frozenset({f"{node.kind.lower()}:empty"}), node.episode, node.step, node.label)
        self.graph.add_node(node.key, data=node)

    def _add_edge(self, src: str, dst: str, relation: str):
        self.graph.add_edge(src, dst, key=relation)

    # -- ingest ---------------------------------------------------------------

    def _episode_id(self, requested: Optional[str]) -> str:
        base = requested or f"ep{len(self._episodes)}"
        candidate, n = base, 1
        while candidate in self._goals:
            candidate = f"{base}-{n}"
            n += 1
        return candidate

    def ingest(self, history: EpisodeHistory, goals: Iterable[str], episode_id: Optional[str] = None) -> int:
        """
        Store one finished episode.

        Temporal edges chain ``S -> A -> O -> S_next``; Causes links each
        action to its outcome; Enables links a state to the action when the
        action's preconditions held there; RecoversFrom links the first action
        taken after a corrected failure (L1 sub-step, L2 alternative or first
        step of a replanned graph) to the failing outcome.

        Returns:
            Number of memory nodes added (0 for an empty history)
        """
        records: List[StepRecord] = [s for s in history.steps if s.record_type != RecordType.DOSSIER]
        if not records:
            logger.warning("Refusing to ingest an empty episode history")
            return 0

        with self._lock:
            episode = self._episode_id(episode_id)
            before = self.graph.number_of_nodes()
            previous_outcome: Optional[str] = None
            pending_failure: Optional[str] = None
            steps = []

            for record in records:
                payload, key, _ = _action_tokens(record.action)
                state = MemoryNode(MemoryKind.STATE, frozenset(canonical_fact(f) for f in record.pre_facts),
                                   episode, record.step)
                action = MemoryNode(MemoryKind.ACTION, payload, episode, record.step, key)
                outcome_label = record.error_type or "success"
                outcome = MemoryNode(
                    MemoryKind.OUTCOME,
                    frozenset(canonical_fact(f) for f in record.post_facts) | {f"outcome:{outcome_label}"},
                    episode, record.step, outcome_label
                )
                for node in (state, action, outcome):
                    self._add_node(node)

                if previous_outcome is not None:
                    self._add_edge(previous_outcome, state.key, Relation.TEMPORAL)
                self._add_edge(state.key, action.key, Relation.TEMPORAL)
                self._add_edge(action.key, outcome.key, Relation.TEMPORAL)
                self._add_edge(action.key, outcome.key, Relation.CAUSES)
                if record.preconditions_held:
                    self._add_edge(state.key, action.key, Relation.ENABLES)
                if pending_failure is not None:
                    self._add_edge(action.key, pending_failure, Relation.RECOVERS_FROM)
                    pending_failure = None
                if record.primary and record.error_type and record.level in _RECOVERING_LEVELS:
                    pending_failure = outcome.key

                previous_outcome = outcome.key
                steps.append(record.step)

            self._episodes.append(episode)
            self._goals[episode] = frozenset(canonical_fact(g) for g in goals)
            self._steps[episode] = steps
            added = self.graph.number_of_nodes() - before

        logger.info(f"Memory ingested episode {episode}: {added} nodes, {len(records)} steps")
        return added

    # -- retrieval ------------------------------------------------------------

    def _window_keys(self, episode: str, steps: Sequence[int]) -> List[str]:
        return [f"{episode}:{s}:{kind}" for s in steps for kind in (MemoryKind.STATE, MemoryKind.ACTION, MemoryKind.OUTCOME)]

    def window_context(self, episode: str, anchor: int) -> Tuple[FrozenSet[str], List[str]]:
        """Tokens and verb sequence of the window starting at position ``anchor``."""
        steps = self._steps[episode][anchor:anchor + self.window]
        tokens = set(self._goals[episode])
        verbs = []
        for s in steps:
            tokens |= self.node(f"{episode}:{s}:{MemoryKind.STATE}").payload
            action = self.node(f"{episode}:{s}:{MemoryKind.ACTION}")
            verb = action.label.split('(', 1)[0]
            tokens.add(verb)
            verbs.append(verb)
        return frozenset(tokens), verbs

    def _score_window(self, episode: str, anchor: int, query: RetrievalQuery,
                      ws: float, wt: float, recency: int) -> RetrievalResult:
        tokens, verbs = self.window_context(episode, anchor)
        semantic = jaccard(tokens, query.tokens)
        structural = lcs_ratio(verbs, query.recent_actions)
        keys = self._window_keys(episode, self._steps[episode][anchor:anchor + self.window])
        inside = set(keys)
        edges = [
            MemoryEdge(u, v, rel) for u, v, rel in self.graph.edges(keys, keys=True)
            if v in inside or rel == Relation.RECOVERS_FROM
        ]
        actions = [self.node(k) for k in keys if k.endswith(MemoryKind.ACTION)]
        outcomes = [self.node(k) for k in keys if k.endswith(MemoryKind.OUTCOME)]
        provenance = {
            'candidate_actions': list(dict.fromkeys(a.label for a in actions)),
            'failure_modes': list(dict.fromkeys(o.label for o in outcomes if o.label != "success")),
            'recovery_patterns': list(dict.fromkeys(
                self.node(e.src).label for e in edges if e.relation == Relation.RECOVERS_FROM
            ))
        }
        return RetrievalResult(
            episode=episode,
            anchor=anchor,
            nodes=keys,
            edges=edges,
            semantic=semantic,
            structural=structural,
            combined=ws * semantic + wt * structural,
            recency=recency,
            provenance=provenance
        )

    def _anchors(self, episode: str, query: RetrievalQuery) -> List[int]:
        wanted = query.tokens
        out = []
        for i, s in enumerate(self._steps[episode]):
            state = self.node(f"{episode}:{s}:{MemoryKind.STATE}").payload
            action = self.node(f"{episode}:{s}:{MemoryKind.ACTION}").payload
            if (state | action) & wanted:
                out.append(i)
        return out

    def retrieve(self, query: RetrievalQuery, k: int = 3,
                 weights: Optional[Tuple[float, float]] = None) -> List[RetrievalResult]:
        """
        Top-k episode windows for the query.

        Every window (a run of at most ``window`` steps starting at a step whose
        state or action shares a token with the query) is scored, but each
        stored episode contributes only its best one, the earliest on ties; the
        ranking is over episodes, not over all windows. Results are ordered by
        combined score, then by recency (later ingestion first), then by episode id.

        Raises:
            ConfigError: k < 1 or weights that do not sum to 1
        """
        if k < 1:
            raise ConfigError(f"k must be at least 1, got {k}")
        ws, wt = weights if weights is not None else (self.semantic_weight, self.structural_weight)
        self._check_weights(ws, wt)

        with self._lock:
            if not self._episodes:
                return []
            results = []
            for recency, episode in enumerate(self._episodes):
                best = None
                for anchor in self._anchors(episode, query):
                    scored = self._score_window(episode, anchor, query, ws, wt, recency)
                    if best is None or scored.combined > best.combined:
                        best = scored
                if best is not None:
                    results.append(best)

        results.sort(key=lambda r: (-r.combined, -r.recency, r.episode))
        logger.debug(f"Memory retrieval: {len(results)} candidate episodes, returning {min(k, len(results))}")
        return results[:k]

    # -- persistence ----------------------------------------------------------

    def to_dict(self) -> dict:
        with self._lock:
            return {
                'version': MEMORY_VERSION,
                'window': self.window,
                'weights': [self.semantic_weight, self.structural_weight],
                'episodes': [
                    {'id': e, 'goals': sorted(self._goals[e]), 'steps': list(self._steps[e])}
                    for e in self._episodes
                ],
                'nodes': [self.node(k).to_dict() for k in self.graph.nodes],
                'edges': [e.to_dict() for e in self.edges()]
            }

    def save(self, path: str) -> str:
        os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2)
        logger.info(f"Memory saved to {path} ({len(self)} nodes)")
        return path

    @classmethod
    def from_dict(cls, data: dict) -> 'TrajectoryGraph':
        if data.get('version') != MEMORY_VERSION:
            raise ConfigError(f"unsupported memory version: {data.get('version')}")
        ws, wt = data.get('weights', [0.5, 0.5])
        memory = cls(window=data.get('window', DEFAULT_WINDOW), semantic_weight=ws, structural_weight=wt)
        for raw in data.get('nodes', []):
            node = MemoryNode.from_dict(raw)
            memory.graph.add_node(node.key, data=node)
        for raw in data.get('edges', []):
            if raw['relation'] not in Relation.ALL:
                raise ConfigError(f"unknown memory relation: {raw['relation']}")
            memory.graph.add_edge(raw['src'], raw['dst'], key=raw['relation'])
        for episode in data.get('episodes', []):
            memory._episodes.append(episode['id'])
            memory._goals[episode['id']] = frozenset(episode.get('goals', []))
            memory._steps[episode['id']] = list(episode.get('steps', []))
        return memory

    @classmethod
    def load(cls, path: str) -> 'TrajectoryGraph':
        if not os.path.exists(path):
            raise ConfigError(f"memory file not found: {path}")
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"memory file {path} is not valid JSON: {e}")
        memory = cls.from_dict(data)
        logger.info(f"Memory loaded from {path}: {len(memory.episodes)} episodes, {len(memory)} nodes")
        return memory
