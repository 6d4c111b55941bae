"""Error types, severities and correction levels for plan execution.

The ten error types, their severity, recoverability, transition flag and
suggested strategy form one fixed table. Each type also belongs to one of four
reporting families:

    | Family       | Types                                                    |
    |--------------|----------------------------------------------------------|
    | grounding    | Action-Execution, Sensor-Failure, Perception-Mismatch    |
    | precondition | Cascading-Execution, Agent-Positioning                   |
    | affordance   | Action-Name-Mismatch, Script-Parsing                     |
    | execution    | Collision-Detected, Timeout, Hardware-Fault              |
"""

import json
import os
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Union


class ErrorType(Enum):
    ACTION_NAME_MISMATCH = "Action-Name-Mismatch-Error"
    SCRIPT_PARSING = "Script-Parsing-Error"
    ACTION_EXECUTION = "Action-Execution-Error"
    CASCADING = "Cascading-Execution-Failure"
    SENSOR_FAILURE = "Sensor-Failure-Error"
    COLLISION = "Collision-Detected-Error"
    TIMEOUT = "Timeout-Error"
    HARDWARE_FAULT = "Hardware-Fault-Error"
    PERCEPTION_MISMATCH = "Perception-Mismatch-Error"
    AGENT_POSITIONING = "Agent-Positioning-Error"

    @classmethod
    def parse(cls, value: Union[str, 'ErrorType']) -> 'ErrorType':
        """Accept the table name (``Timeout-Error``) or the member name (``TIMEOUT``)."""
        if isinstance(value, cls):
            return value
        try:
            return cls(value)
        except ValueError:
            return cls[str(value).upper().replace('-', '_')]


class Severity(Enum):
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"
    CRITICAL = "Critical"


class Recoverability(Enum):
    YES = "Yes"
    PARTIAL = "Partial"
    NO = "No"


class ErrorFamily(Enum):
    GROUNDING = "grounding"
    PRECONDITION = "precondition"
    AFFORDANCE = "affordance"
    EXECUTION = "execution"


class CorrectionLevel(Enum):
    L1 = "L1"
    L2 = "L2"
    L3 = "L3"
    L4 = "L4"

    @property
    def rank(self) -> int:
        return int(self.value[1])

    @classmethod
    def highest(cls, *levels: 'CorrectionLevel') -> 'CorrectionLevel':
        return max(levels, key=lambda level: level.rank)


@dataclass(frozen=True)
class ErrorClass:
    """One row of the error classification table."""
    name: ErrorType
    severity: Severity
    recoverable: Recoverability
    transition_needed: bool
    suggested_strategy: str
    typical_actions: str = ""
    description: str = ""

    @property
    def family(self) -> ErrorFamily:
        return FAMILY_OF[self.name]

    def matches_table(self) -> bool:
        row = ERROR_TABLE[self.name]
        return (self.severity, self.recoverable, self.transition_needed, self.suggested_strategy) == \
            (row.severity, row.recoverable, row.transition_needed, row.suggested_strategy)

    def to_dict(self) -> dict:
        return {
            'name': self.name.value,
            'severity': self.severity.value,
            'recoverable': self.recoverable.value,
            'transition_needed': self.transition_needed,
            'suggested_strategy': self.suggested_strategy,
            'typical_actions': self.typical_actions,
            'description': self.description,
            'family': self.family.value
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'ErrorClass':
        return cls(
            name=ErrorType(data['name']),
            severity=Severity(data['severity']),
            recoverable=Recoverability(data['recoverable']),
            transition_needed=data['transition_needed'],
            suggested_strategy=data['suggested_strategy'],
            typical_actions=data.get('typical_actions', ''),
            description=data.get('description', '')
        )


def _row(name, severity, recoverable, transition, strategy, actions, description) -> ErrorClass:
    return ErrorClass(name, severity, recoverable, transition, strategy, actions, description)


ERROR_TABLE: Dict[ErrorType, ErrorClass] = {row.name: row for row in (
    _row(ErrorType.ACTION_NAME_MISMATCH, Severity.HIGH, Recoverability.YES, True,
         "<walk/walktowards>, <lookat>", "[walk_to], [look_at]",
         "Action name not found in supported actions."),
    _row(ErrorType.SCRIPT_PARSING, Severity.HIGH, Recoverability.NO, False,
         "[putin] <obj1> <obj2>", "[putin] <obj>",
         "Action lacks necessary parameters, resulting in a parsing failure."),
    _row(ErrorType.ACTION_EXECUTION, Severity.MEDIUM, Recoverability.PARTIAL, True,
         "[switchon] <microwave>", "[open] <microwave>",
         "Action failed because target object was not found, not reachable, or not visible."),
    _row(ErrorType.CASCADING, Severity.LOW, Recoverability.NO, True,
         "[open] <fridge> [putin] <bananas> <fridge>", "[putin] <bananas> <fridge>",
         "A cascading failure caused by previous unrecoverable action failures."),
    _row(ErrorType.SENSOR_FAILURE, Severity.MEDIUM, Recoverability.PARTIAL, True,
         "Reinitialize sensor pipeline; use redundant sensor data for fusion.", "",
         "Sensors failed to detect objects or environment state correctly."),
    _row(ErrorType.COLLISION, Severity.HIGH, Recoverability.YES, True,
         "Drop Action", "[move], [push]",
         "Robot collided with obstacle or object during execution."),
    _row(ErrorType.TIMEOUT, Severity.MEDIUM, Recoverability.PARTIAL, True,
         "Retry Action", "",
         "Action did not complete within expected time limits."),
    _row(ErrorType.HARDWARE_FAULT, Severity.CRITICAL, Recoverability.NO, False,
         "Emergency stop; notify human operator.", "",
         "Physical actuator or gripper malfunction prevents action execution."),
    _row(ErrorType.PERCEPTION_MISMATCH, Severity.MEDIUM, Recoverability.YES, True,
         "[close] <fridge> [open] <fridge>", "[open] <fridge> (fridge already opened)",
         "Perceived object pose differs from expected pose; causes partial failure."),
    _row(ErrorType.AGENT_POSITIONING, Severity.MEDIUM, Recoverability.YES, True,
         "<walk> kitchen, <lookat> <kitchentable>", "[lookat] <kitchentable>",
         "Agent is not correctly localized relative to target object or navigation point, "
         "leading to approach failure."),
)}

FAMILY_OF: Dict[ErrorType, ErrorFamily] = {
    ErrorType.ACTION_EXECUTION: ErrorFamily.GROUNDING,
    ErrorType.SENSOR_FAILURE: ErrorFamily.GROUNDING,
    ErrorType.PERCEPTION_MISMATCH: ErrorFamily.GROUNDING,
    ErrorType.CASCADING: ErrorFamily.PRECONDITION,
    ErrorType.AGENT_POSITIONING: ErrorFamily.PRECONDITION,
    ErrorType.ACTION_NAME_MISMATCH: ErrorFamily.AFFORDANCE,
    ErrorType.SCRIPT_PARSING: ErrorFamily.AFFORDANCE,
    ErrorType.COLLISION: ErrorFamily.EXECUTION,
    ErrorType.TIMEOUT: ErrorFamily.EXECUTION,
    ErrorType.HARDWARE_FAULT: ErrorFamily.EXECUTION,
}


def error_class(error_type: Union[str, ErrorType]) -> ErrorClass:
    """Table row for an error type."""
    return ERROR_TABLE[ErrorType.parse(error_type)]


def taxonomy_table() -> List[Dict[str, Any]]:
    """The full table in declaration order, as plain dictionaries."""
    return [row.to_dict() for row in ERROR_TABLE.values()]


def export_taxonomy(path: str) -> str:
    """Write the table as JSON for docs and external tooling."""
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump({'version': 1, 'error_types': taxonomy_table()}, f, indent=2)
    return path
