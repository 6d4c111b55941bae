from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, Iterable, List, Optional

import numpy as np

from src.core.exceptions import ScriptError
from src.core.world_state import WorldState
from src.modules.env_mod.faults import FaultInjector, FaultSchedule, clears
from src.modules.env_mod.rules import RULEBOOK, VerbRuleBook
from src.modules.env_mod.script import ActionScript, parse_script
from src.modules.error_mod.taxonomy import ErrorType
from src.utils.logger import logger

SCRIPT_LEVEL_TYPES = (ErrorType.ACTION_NAME_MISMATCH, ErrorType.SCRIPT_PARSING)


@dataclass
class StepOutcome:
    """Result of one environment step."""
    observed: WorldState
    succeeded: bool
    env_message: str
    injected: Optional[ErrorType] = None
    parse_error: Optional[ScriptError] = None
    step_index: int = 0
    action_text: str = ""

    def summary(self) -> Dict[str, Any]:
        """Log-friendly view without the full world snapshot."""
        return {
            'succeeded': self.succeeded,
            'message': self.env_message,
            'injected': self.injected.value if self.injected else None,
            'parse_error': str(self.parse_error) if self.parse_error else None,
            'step_index': self.step_index,
            'action_text': self.action_text
        }


@dataclass
class GoalReport:
    satisfied: FrozenSet[str]
    unsatisfied: FrozenSet[str]

    @property
    def ratio(self) -> float:
        total = len(self.satisfied) + len(self.unsatisfied)
        return 1.0 if total == 0 else len(self.satisfied) / total

    @property
    def complete(self) -> bool:
        return not self.unsatisfied


def check_goal(state: WorldState, goals: Iterable[str]) -> GoalReport:
    """Split goals into satisfied and unsatisfied predicates of ``state``."""
    goals = frozenset(goals)
    satisfied = frozenset(g for g in goals if state.holds(g))
    return GoalReport(satisfied=satisfied, unsatisfied=goals - satisfied)


def _forced_failure(error_type: ErrorType, state: WorldState, action: ActionScript,
                    step_index: int) -> StepOutcome:
    if error_type in SCRIPT_LEVEL_TYPES:
        text = FaultInjector.corrupt_script(error_type, action)
        try:
            parse_script(text)
            parse_error = None
            message = f"script corrupted: {text}"
        except ScriptError as e:
            parse_error = e
            message = str(e)
        return StepOutcome(state.copy(), False, message, error_type, parse_error, step_index, text)
    message, after = FaultInjector.disturb(error_type, state, action)
    return StepOutcome(after, False, message, error_type, None, step_index, action.render())


def step(
    state: WorldState,
    action: ActionScript,
    faults: FaultSchedule,
    step_index: int,
    seed: int,
    rulebook: Optional[VerbRuleBook] = None,
    failure_probability: float = 0.0
) -> StepOutcome:
    """
    Execute one action against a copy of the world.

    The outcome is a pure function of the inputs: sticky faults ride along in
    ``state.active_faults`` and the optional random failure draws from a
    generator seeded by ``(seed, step_index)``.

    Args:
        state: Current world (not mutated)
        action: Parsed action to execute
        faults: Fault schedule of the episode
        step_index: Global 0-based environment step index
        seed: Episode seed
        rulebook: Verb precondition/effect table
        failure_probability: Chance of a spontaneous execution failure

    Returns:
        StepOutcome with the post-step world in ``observed``
    """
    rulebook = rulebook or RULEBOOK
    text = action.render()

    if state.halted:
        return StepOutcome(state.copy(), False, "hardware fault: agent is halted", None, None, step_index, text)

    working = state.copy()
    # Sticky faults either re-fire or are cleared by this action
    for name in sorted(working.active_faults):
        info = working.active_faults[name]
        error_type = ErrorType(name)
        if clears(error_type, info.get('verb', ''), action):
            del working.active_faults[name]
            logger.debug(f"Sticky fault {name} cleared by {text}")
        else:
            return _forced_failure(error_type, working, action, step_index)

    entry = faults.at(step_index, action)
    if entry is not None:
        if entry.sticky:
            working.active_faults[entry.error_type.value] = {'verb': action.verb, 'target': action.target}
        logger.debug(f"Injecting {entry.error_type.value} at step {step_index} on {text}")
        return _forced_failure(entry.error_type, working, action, step_index)

    if failure_probability > 0.0:
        rng = np.random.default_rng([seed, step_index])
        if rng.random() < failure_probability:
            return StepOutcome(working, False, f"{action.verb} {action.target} slipped and failed",
                               None, None, step_index, text)

    succeeded, message, after = rulebook.apply(working, action)
    return StepOutcome(after, succeeded, message, None, None, step_index, text)


class EpisodeEnvironment:
    """
    Environment handle owned by one episode: current world, fault schedule,
    seed and the global step counter shared by primary steps and correction
    sub-steps.
    """

    def __init__(
        self,
        state: WorldState,
        faults: Optional[FaultSchedule] = None,
        seed: int = 0,
        rulebook: Optional[VerbRuleBook] = None,
        failure_probability: float = 0.0
    ):
        self.state = state.copy()
        self.faults = faults or FaultSchedule()
        self.seed = seed
        self.rulebook = rulebook or RULEBOOK
        self.failure_probability = failure_probability
        self.step_index = 0
        self.outcomes: List[StepOutcome] = []

    def execute(self, action: ActionScript) -> StepOutcome:
        outcome = step(self.state, action, self.faults, self.step_index, self.seed,
                       self.rulebook, self.failure_probability)
        self.state = outcome.observed
        self.step_index += 1
        self.outcomes.append(outcome)
        return outcome

    def preconditions_hold(self, action: ActionScript, state: Optional[WorldState] = None) -> bool:
        return self.rulebook.check(state or self.state, action) is None

    def expected_outcome(self, action: ActionScript) -> FrozenSet[str]:
        return self.rulebook.expected_outcome(action)
