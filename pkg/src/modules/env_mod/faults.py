from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Tuple

from src.core.exceptions import ScenarioError
from src.core.world_state import WorldState, base_name
from src.modules.env_mod.script import ActionScript
from src.modules.error_mod.taxonomy import ErrorType


@dataclass(frozen=True)
class FaultEntry:
    """Scripted fault fired at one global environment step index."""
    step: int
    error_type: ErrorType
    sticky: bool = False
    verb: Optional[str] = None
    target: Optional[str] = None

    def matches(self, step_index: int, action: ActionScript) -> bool:
        if step_index != self.step:
            return False
        if self.verb and action.verb != self.verb:
            return False
        if self.target and base_name(self.target) not in action.base_args:
            return False
        return True

    def to_dict(self) -> dict:
        data = {'step': self.step, 'error_type': self.error_type.value, 'sticky': self.sticky}
        if self.verb:
            data['verb'] = self.verb
        if self.target:
            data['target'] = self.target
        return data

    @classmethod
    def from_dict(cls, data: dict) -> 'FaultEntry':
        try:
            step = int(data['step'])
            error_type = ErrorType.parse(data['error_type'])
        except (KeyError, ValueError, TypeError) as e:
            raise ScenarioError(f"invalid fault entry {data}: {e}")
        if step < 0:
            raise ScenarioError(f"fault step index must be nonnegative, got {step}")
        return cls(step, error_type, bool(data.get('sticky', False)), data.get('verb'), data.get('target'))


@dataclass(frozen=True)
class FaultSchedule:
    entries: Tuple[FaultEntry, ...] = field(default_factory=tuple)

    def at(self, step_index: int, action: ActionScript) -> Optional[FaultEntry]:
        """First entry firing on this step, in declaration order."""
        for entry in self.entries:
            if entry.matches(step_index, action):
                return entry
        return None

    def types(self) -> List[ErrorType]:
        return [e.error_type for e in self.entries]

    def to_list(self) -> List[dict]:
        return [e.to_dict() for e in self.entries]

    @classmethod
    def from_list(cls, items: Optional[List[dict]]) -> 'FaultSchedule':
        return cls(tuple(FaultEntry.from_dict(item) for item in items or []))

    def __len__(self):
        return len(self.entries)


# Verbs whose execution clears a sticky fault; other types clear on any different verb.
STICKY_CLEARERS: Dict[ErrorType, FrozenSet[str]] = {
    ErrorType.PERCEPTION_MISMATCH: frozenset({"lookat", "close"}),
    ErrorType.SENSOR_FAILURE: frozenset({"lookat"}),
    ErrorType.AGENT_POSITIONING: frozenset({"walk", "walktowards"}),
    ErrorType.COLLISION: frozenset({"walk", "walktowards"}),
}

CORRUPTED_VERBS = {
    "walk": "walk_to",
    "walktowards": "walk_towards",
    "lookat": "look_at",
    "putin": "put_in",
    "putback": "put_back",
    "switchon": "switch_on",
    "switchoff": "switch_off",
    "standup": "stand_up",
}

_PAST = {
    "open": "opened", "close": "closed", "grab": "grabbed", "push": "grabbed",
    "putin": "placed", "putback": "placed", "switchon": "switched on",
    "switchoff": "switched off", "lookat": "in view", "cut": "cut", "sit": "seated",
    "standup": "standing", "walk": "there", "walktowards": "there", "move": "moved",
}


def clears(error_type: ErrorType, faulted_verb: str, action: ActionScript) -> bool:
    """Whether executing ``action`` clears a sticky fault of this type."""
    if error_type is ErrorType.HARDWARE_FAULT:
        return False
    if error_type in STICKY_CLEARERS:
        return action.verb in STICKY_CLEARERS[error_type]
    return action.verb != faulted_verb


class FaultInjector:
    """Produces the characteristic failure of each error type for one step."""

    @staticmethod
    def corrupt_script(error_type: ErrorType, action: ActionScript) -> str:
        """Script text for the two script-level types; re-parsing it must fail."""
        if error_type is ErrorType.ACTION_NAME_MISMATCH:
            verb = CORRUPTED_VERBS.get(action.verb, f"{action.verb}_to")
            rendered = action.render()
            return f"[{verb}]" + rendered[len(action.verb) + 2:]
        if len(action.args) == 2:
            # [putin] <obj> with the destination lost
            return action.render().rsplit(" <", 1)[0]
        return f"[{action.verb}] {' '.join(action.base_args)}"

    @staticmethod
    def message(error_type: ErrorType, action: ActionScript) -> str:
        target = base_name(action.target)
        verb = action.verb
        return {
            ErrorType.ACTION_EXECUTION: f"{verb} {target} failed: action could not be executed",
            ErrorType.CASCADING: f"{verb} {target} blocked by an earlier cascading failure",
            ErrorType.SENSOR_FAILURE: f"sensor failure: no reading for {target}",
            ErrorType.COLLISION: f"collision detected: robot collided with an obstacle near {target}",
            ErrorType.TIMEOUT: f"timeout: {verb} {target} did not complete in time",
            ErrorType.HARDWARE_FAULT: f"hardware fault: actuator failure during {verb}",
            ErrorType.PERCEPTION_MISMATCH: f"{target} already {_PAST.get(verb, verb + 'ed')}",
            ErrorType.AGENT_POSITIONING: f"agent positioning error: cannot reach {target} from current pose",
        }[error_type]

    @classmethod
    def disturb(cls, error_type: ErrorType, state: WorldState, action: ActionScript) -> Tuple[str, WorldState]:
        """
        Failure message and post-state for the non-script error types.

        Perception-Mismatch reports the effect as already present but changes nothing,
        so the expected effect is still missing from the returned state.
        """
        after = state.copy()
        if error_type is ErrorType.HARDWARE_FAULT:
            after.halted = True
        elif error_type is ErrorType.AGENT_POSITIONING:
            after.agent.pose_ok = False
        return cls.message(error_type, action), after
