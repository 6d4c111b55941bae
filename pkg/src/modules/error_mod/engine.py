from typing import TYPE_CHECKING, Iterable, Optional, Tuple

from src.core.exceptions import MissingParameter, NoFailurePresent, ParseFailure, ScriptError, UnknownVerb
from src.core.world_state import WorldState
from src.modules.error_mod.taxonomy import (
    CorrectionLevel,
    ErrorClass,
    ErrorType,
    Recoverability,
    Severity,
    error_class
)
from src.utils.logger import logger

if TYPE_CHECKING:
    from src.core.graph import TaskNode
    from src.core.history import EpisodeHistory
    from src.modules.env_mod.simulator import StepOutcome

# Checked in order against the lowercased environment message
MESSAGE_KEYWORDS: Tuple[Tuple[Tuple[str, ...], ErrorType], ...] = (
    (("collid", "collision"), ErrorType.COLLISION),
    (("timeout", "timed out"), ErrorType.TIMEOUT),
    (("sensor",), ErrorType.SENSOR_FAILURE),
    (("hardware",), ErrorType.HARDWARE_FAULT),
    (("cascad",), ErrorType.CASCADING),
    (("already", "mismatch"), ErrorType.PERCEPTION_MISMATCH),
    (("position", "reach"), ErrorType.AGENT_POSITIONING),
)


def compute_error(observed: WorldState, expected: Iterable[str]) -> float:
    """
    Fraction of expected predicates not satisfied in the observed world.

    Returns 0.0 for an empty expectation.
    """
    expected = list(expected)
    if not expected:
        return 0.0
    missing = sum(1 for p in expected if not observed.holds(p))
    return missing / len(expected)


def diagnose_message(message: str) -> Optional[ErrorType]:
    text = (message or "").lower()
    for keywords, error_type in MESSAGE_KEYWORDS:
        if any(k in text for k in keywords):
            return error_type
    return None


def classify(
    outcome: 'StepOutcome',
    parse_error: Optional[ScriptError] = None,
    history: Optional['EpisodeHistory'] = None,
    node: Optional[str] = None,
    error: Optional[float] = None
) -> ErrorClass:
    """
    Classify a failed step into one table row.

    Decision order: parse failures, the hardware halt flag, an earlier
    unrecovered failure at another node, the injected type or message keywords,
    then Action-Execution-Error.

    Args:
        outcome: The failed step
        parse_error: Parse failure of the step's script, if any
        history: Episode history for cascade detection
        node: Node that produced the outcome (its own earlier failures do not cascade)
        error: Error value of the step; a succeeded step with positive error is a deviation

    Raises:
        NoFailurePresent: the outcome succeeded with no deviation
    """
    parse_error = parse_error or outcome.parse_error
    deviated = error is not None and error > 0.0
    if outcome.succeeded and parse_error is None and outcome.injected is None and not deviated:
        raise NoFailurePresent()

    if isinstance(parse_error, UnknownVerb):
        return error_class(ErrorType.ACTION_NAME_MISMATCH)
    if isinstance(parse_error, (MissingParameter, ParseFailure)):
        return error_class(ErrorType.SCRIPT_PARSING)

    if outcome.observed.halted:
        return error_class(ErrorType.HARDWARE_FAULT)

    if history is not None and history.unresolved_failures(exclude_node=node):
        return error_class(ErrorType.CASCADING)

    if outcome.injected is not None:
        return error_class(outcome.injected)
    diagnosed = diagnose_message(outcome.env_message)
    if diagnosed is not None:
        return error_class(diagnosed)
    return error_class(ErrorType.ACTION_EXECUTION)


def _l1_available(cls: ErrorClass, error: float, node: 'TaskNode', history: 'EpisodeHistory') -> bool:
    if error > node.max_threshold or history.l1_remaining(node.id) <= 0:
        return False
    return any(
        rule.triggers(cls, error, node.action) and history.rule_remaining(node.id, rule) > 0
        for rule in node.local_rules
    )


def level_for(cls: ErrorClass, error: float, node: 'TaskNode', history: 'EpisodeHistory') -> CorrectionLevel:
    """
    Correction level for a classified failure at ``node``.

    Never returns a level below the highest one already used at the node in the
    current graph revision.
    """
    options_left = bool(history.options_remaining(node.id, node.alternatives))

    if cls.severity is Severity.CRITICAL:
        level = CorrectionLevel.L4
    elif cls.recoverable is Recoverability.NO:
        level = CorrectionLevel.L3
    elif cls.recoverable is Recoverability.PARTIAL:
        level = CorrectionLevel.L2 if options_left else CorrectionLevel.L3
    elif _l1_available(cls, error, node, history):
        level = CorrectionLevel.L1
    else:
        level = CorrectionLevel.L2 if options_left else CorrectionLevel.L3

    floor = history.highest_level(node.id)
    if floor is not None and floor.rank > level.rank:
        level = floor
    if level is CorrectionLevel.L2 and not options_left:
        level = CorrectionLevel.L3
    if level is CorrectionLevel.L3 and history.replans_left <= 0:
        level = CorrectionLevel.L4

    logger.debug(f"level_for {cls.name.value} at {node.id} (error={error:.3f}) -> {level.value}")
    return level
