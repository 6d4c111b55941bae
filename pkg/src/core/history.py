"""
Episode bookkeeping shared by the error engine, the correction pipeline and
the traversal loop: step records, failure records and correction budgets.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Set

from src.core.exceptions import HECGError
from src.modules.error_mod.taxonomy import CorrectionLevel, ErrorClass, ErrorType, error_class


class RecordType:
    STEP = "step"
    SUBSTEP = "substep"
    DOSSIER = "dossier"


class Resolution:
    RETRIED = "retried"
    OPTION = "option"
    REPLANNED = "replanned"
    SKIPPED = "skipped"


@dataclass
class StepRecord:
    """One line of the trajectory log."""
    step: int
    node: str
    action: str
    edge_kind: Optional[str]
    error_value: float
    error_type: Optional[str] = None
    level: Optional[str] = None
    outcome: Dict[str, Any] = field(default_factory=dict)
    record_type: str = RecordType.STEP
    revision: int = 0
    regime: Optional[str] = None
    env_step: Optional[int] = None
    preconditions_held: Optional[bool] = None
    pre_facts: List[str] = field(default_factory=list)
    post_facts: List[str] = field(default_factory=list)
    goal_ratio: Optional[float] = None

    @property
    def primary(self) -> bool:
        return self.record_type == RecordType.STEP

    @property
    def action_verb(self) -> str:
        head = self.action.split(']', 1)[0]
        return head.lstrip('[')

    def to_dict(self) -> dict:
        return {
            'step': self.step,
            'node': self.node,
            'action': self.action,
            'edge_kind': self.edge_kind,
            'error_value': self.error_value,
            'error_type': self.error_type,
            'level': self.level,
            'outcome': self.outcome,
            'record_type': self.record_type,
            'revision': self.revision,
            'regime': self.regime,
            'env_step': self.env_step,
            'preconditions_held': self.preconditions_held,
            'pre_facts': self.pre_facts,
            'post_facts': self.post_facts,
            'goal_ratio': self.goal_ratio
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'StepRecord':
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})


@dataclass
class FailureRecord:
    """A classified failure at one node; levels are appended as correction proceeds."""
    node: str
    revision: int
    action: str
    error_class: ErrorClass
    error_value: float
    step_index: int
    room: str = ""
    attempted_levels: List[CorrectionLevel] = field(default_factory=list)
    resolution: Optional[str] = None

    @property
    def unresolved(self) -> bool:
        return self.resolution in (None, Resolution.SKIPPED)

    def attempt(self, level: CorrectionLevel):
        self.attempted_levels.append(level)

    def to_dict(self) -> dict:
        return {
            'node': self.node,
            'revision': self.revision,
            'action': self.action,
            'error_type': self.error_class.name.value,
            'severity': self.error_class.severity.value,
            'recoverable': self.error_class.recoverable.value,
            'error_value': self.error_value,
            'step_index': self.step_index,
            'room': self.room,
            'attempted_levels': [level.value for level in self.attempted_levels],
            'resolution': self.resolution
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'FailureRecord':
        return cls(
            node=data['node'],
            revision=data.get('revision', 0),
            action=data['action'],
            error_class=error_class(ErrorType(data['error_type'])),
            error_value=data.get('error_value', 0.0),
            step_index=data.get('step_index', 0),
            room=data.get('room', ''),
            attempted_levels=[CorrectionLevel(v) for v in data.get('attempted_levels', [])],
            resolution=data.get('resolution')
        )


@dataclass
class CorrectionBudgets:
    """Budget limits; usage lives in EpisodeHistory."""
    l1_per_node: int = 2
    replans: int = 2
    step_limit: int = 100

    def to_dict(self) -> dict:
        return {'l1_per_node': self.l1_per_node, 'replans': self.replans, 'step_limit': self.step_limit}

    @classmethod
    def from_dict(cls, data: dict) -> 'CorrectionBudgets':
        return cls(
            l1_per_node=data.get('l1_per_node', 2),
            replans=data.get('replans', 2),
            step_limit=data.get('step_limit', 100)
        )


class EpisodeHistory:
    """
    Append-only record of one episode.

    Per-node counters are keyed by ``"<revision>:<node>"`` so a replanned graph
    starts with fresh L1 and option budgets while the replan count carries over.
    """

    def __init__(self, budgets: Optional[CorrectionBudgets] = None):
        self.budgets = budgets or CorrectionBudgets()
        self.steps: List[StepRecord] = []
        self.failures: List[FailureRecord] = []
        self.revision = 0
        self.replans_used = 0
        self.banned: List[Any] = []
        self._l1_used: Dict[str, int] = {}
        self._rule_used: Dict[str, int] = {}
        self._options_attempted: Dict[str, Set[str]] = {}
        self._highest: Dict[str, CorrectionLevel] = {}
        self._streak: Dict[str, int] = {}

    def key(self, node: str) -> str:
        return f"{self.revision}:{node}"

    def __len__(self):
        return len(self.steps)

    # -- records --------------------------------------------------------------

    def append_step(self, record: StepRecord):
        if self.steps and record.step <= self.steps[-1].step:
            raise HECGError(f"step index {record.step} does not follow {self.steps[-1].step}")
        self.steps.append(record)

    def next_step(self) -> int:
        return self.steps[-1].step + 1 if self.steps else 0

    def record_failure(self, record: FailureRecord) -> FailureRecord:
        self.failures.append(record)
        return record

    def unresolved_failures(self, exclude_node: Optional[str] = None) -> List[FailureRecord]:
        return [
            f for f in self.failures
            if f.unresolved and not (exclude_node and f.node == exclude_node and f.revision == self.revision)
        ]

    def resolve_node(self, node: str, resolution: str):
        """Close every open failure of ``node`` in the current revision."""
        for f in self.failures:
            if f.node == node and f.revision == self.revision and f.resolution is None:
                f.resolution = resolution

    def resolve_revision(self, resolution: str):
        for f in self.failures:
            if f.revision == self.revision and f.resolution is None:
                f.resolution = resolution

    def primary_steps(self) -> List[StepRecord]:
        return [s for s in self.steps if s.record_type == RecordType.STEP]

    def substeps(self) -> List[StepRecord]:
        return [s for s in self.steps if s.record_type == RecordType.SUBSTEP]

    # -- budgets --------------------------------------------------------------

    def l1_remaining(self, node: str) -> int:
        return self.budgets.l1_per_node - self._l1_used.get(self.key(node), 0)

    def rule_remaining(self, node: str, rule) -> int:
        return rule.max_applications - self._rule_used.get(f"{self.key(node)}:{rule.name}", 0)

    def use_l1(self, node: str, rule):
        k = self.key(node)
        self._l1_used[k] = self._l1_used.get(k, 0) + 1
        rk = f"{k}:{rule.name}"
        self._rule_used[rk] = self._rule_used.get(rk, 0) + 1

    def attempted_options(self, node: str) -> Set[str]:
        return set(self._options_attempted.get(self.key(node), set()))

    def mark_option(self, node: str, option: str):
        self._options_attempted.setdefault(self.key(node), set()).add(option)

    def options_remaining(self, node: str, alternatives: Iterable[str]) -> List[str]:
        tried = self._options_attempted.get(self.key(node), set())
        return [a for a in alternatives if a not in tried]

    @property
    def replans_left(self) -> int:
        return self.budgets.replans - self.replans_used

    def use_replan(self):
        self.replans_used += 1
        self.revision += 1

    # -- escalation state -----------------------------------------------------

    def highest_level(self, node: str) -> Optional[CorrectionLevel]:
        return self._highest.get(self.key(node))

    def note_level(self, node: str, level: CorrectionLevel):
        k = self.key(node)
        current = self._highest.get(k)
        self._highest[k] = level if current is None else CorrectionLevel.highest(current, level)

    def failure_streak(self, node: str) -> int:
        return self._streak.get(self.key(node), 0)

    def bump_streak(self, node: str) -> int:
        k = self.key(node)
        self._streak[k] = self._streak.get(k, 0) + 1
        return self._streak[k]

    def reset_streak(self, node: str):
        self._streak.pop(self.key(node), None)

    def last_error_class(self) -> Optional[ErrorClass]:
        return self.failures[-1].error_class if self.failures else None

    def to_dict(self) -> dict:
        return {
            'steps': [s.to_dict() for s in self.steps],
            'failures': [f.to_dict() for f in self.failures],
            'budgets': self.budgets.to_dict(),
            'revision': self.revision,
            'replans_used': self.replans_used,
            'banned': [b.to_list() for b in self.banned]
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'EpisodeHistory':
        """Rebuild the logged part of a history; per-node counters are not restored."""
        from src.modules.planner_mod.base import BannedContext
        history = cls(CorrectionBudgets.from_dict(data.get('budgets', {})))
        history.steps = [StepRecord.from_dict(s) for s in data.get('steps', [])]
        history.failures = [FailureRecord.from_dict(f) for f in data.get('failures', [])]
        history.revision = data.get('revision', 0)
        history.replans_used = data.get('replans_used', 0)
        history.banned = [BannedContext(*b) for b in data.get('banned', [])]
        return history
