from dataclasses import dataclass, field
from typing import FrozenSet, List, Optional, Tuple

from src.core.exceptions import GraphError
from src.modules.env_mod.script import ActionScript, parse_script
from src.modules.error_mod.taxonomy import ErrorClass, ErrorType

ACTION_SLOT = "{action}"


@dataclass(frozen=True)
class LocalCorrectionRule:
    """
    Declarative L1 rule attached to a node.

    ``adjustment`` holds up to two script templates. ``{action}`` re-issues the
    node's own action; ``{target}`` expands to the rendered target argument,
    so ``"[close] {target}"`` on ``[open] <fridge> (1)`` gives
    ``[close] <fridge> (1)``.
    """
    name: str
    error_types: FrozenSet[ErrorType]
    adjustment: Tuple[str, ...]
    max_applications: int = 2
    max_error: float = 1.0
    verbs: FrozenSet[str] = field(default_factory=frozenset)
    description: str = ""

    def __post_init__(self):
        if self.max_applications < 1:
            raise GraphError(f"rule {self.name}: max_applications must be at least 1")
        if not 1 <= len(self.adjustment) <= 2:
            raise GraphError(f"rule {self.name}: adjustment must hold one or two scripts")

    def applies_to(self, action: ActionScript) -> bool:
        return not self.verbs or action.verb in self.verbs

    def triggers(self, cls: ErrorClass, error: float, action: Optional[ActionScript] = None) -> bool:
        if cls.name not in self.error_types or error > self.max_error:
            return False
        return action is None or self.applies_to(action)

    def scripts(self, action: ActionScript) -> List[ActionScript]:
        """Expand the adjustment templates against a node action."""
        target = _render_arg(action.target)
        out = []
        for template in self.adjustment:
            if template == ACTION_SLOT:
                out.append(action)
            else:
                out.append(parse_script(template.format(target=target, action=action.render())))
        return out

    def to_dict(self) -> dict:
        return {
            'name': self.name,
            'error_types': sorted(t.value for t in self.error_types),
            'adjustment': list(self.adjustment),
            'max_applications': self.max_applications,
            'max_error': self.max_error,
            'verbs': sorted(self.verbs),
            'description': self.description
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'LocalCorrectionRule':
        return cls(
            name=data['name'],
            error_types=frozenset(ErrorType.parse(t) for t in data['error_types']),
            adjustment=tuple(data['adjustment']),
            max_applications=data.get('max_applications', 2),
            max_error=data.get('max_error', 1.0),
            verbs=frozenset(data.get('verbs', [])),
            description=data.get('description', '')
        )


def _render_arg(token: str) -> str:
    name, _, ident = token.partition('#')
    return f"<{name}> ({ident})" if ident else f"<{name}>"


_OBJECT_VERBS = frozenset({
    "lookat", "grab", "push", "open", "close", "putin", "putback",
    "switchon", "switchoff", "move", "cut", "sit"
})

CLOSE_THEN_OPEN = LocalCorrectionRule(
    name="close_then_open",
    error_types=frozenset({ErrorType.PERCEPTION_MISMATCH}),
    adjustment=("[close] {target}", ACTION_SLOT),
    verbs=frozenset({"open"}),
    description="re-close a container believed open, then open it again"
)

RELOOK_THEN_RETRY = LocalCorrectionRule(
    name="relook_then_retry",
    error_types=frozenset({ErrorType.PERCEPTION_MISMATCH, ErrorType.SENSOR_FAILURE}),
    adjustment=("[lookat] {target}", ACTION_SLOT),
    verbs=_OBJECT_VERBS,
    description="re-observe the target before retrying"
)

REAPPROACH = LocalCorrectionRule(
    name="reapproach",
    error_types=frozenset({ErrorType.AGENT_POSITIONING, ErrorType.COLLISION}),
    adjustment=("[walktowards] {target}", ACTION_SLOT),
    verbs=_OBJECT_VERBS | {"walk", "walktowards"},
    description="re-approach the target, then retry"
)

RETRY_ONCE = LocalCorrectionRule(
    name="retry_once",
    error_types=frozenset({ErrorType.TIMEOUT, ErrorType.ACTION_NAME_MISMATCH}),
    adjustment=(ACTION_SLOT,),
    max_applications=1,
    description="re-issue the same action"
)

DEFAULT_RULES: Tuple[LocalCorrectionRule, ...] = (CLOSE_THEN_OPEN, RELOOK_THEN_RETRY, REAPPROACH, RETRY_ONCE)


def rules_for(action: ActionScript) -> Tuple[LocalCorrectionRule, ...]:
    """Default rules attached to a node running ``action``, in priority order."""
    return tuple(rule for rule in DEFAULT_RULES if rule.applies_to(action))
