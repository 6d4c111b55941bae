"""
HECG exception hierarchy.

Environment failures and graph violations are reported as data (StepOutcome,
ValidationReport); the exceptions below cover contract breaches and aborted
operations only.
"""

from typing import Any, List, Optional


class HECGError(Exception):
    """
    Base exception for the plan-execution engine.

    :param message: Description of the error
    """

    def __init__(self, message: str = ""):
        self.message = message
        super().__init__(self.message)

    def __str__(self):
        return self.message


# -- graph --------------------------------------------------------------------

class GraphError(HECGError):
    """Raised when a task graph cannot be built or used."""


class EmptyPlan(GraphError):
    def __init__(self, message: str = "plan must contain at least one action"):
        super().__init__(message)


class DanglingAlternative(GraphError):
    """An alternative was attached to a step index outside the plan."""

    def __init__(self, index: Any, message: str = ""):
        self.index = index
        super().__init__(message or f"alternative attached to invalid step {index}")


class ThresholdOrderViolation(GraphError):
    def __init__(self, local: float, maximum: float, node: Optional[str] = None):
        self.local = local
        self.maximum = maximum
        self.node = node
        where = f" at {node}" if node else ""
        super().__init__(f"local threshold {local} exceeds max threshold {maximum}{where}")


class UnknownNode(GraphError):
    def __init__(self, node: str):
        self.node = node
        super().__init__(f"unknown node: {node}")


class InvalidGraph(GraphError):
    """Raised when a graph handed to the traversal loop fails validation."""

    def __init__(self, report: Any, message: str = "graph failed validation"):
        self.report = report
        super().__init__(f"{message}: {report}")


# -- scripts and scenarios ----------------------------------------------------

class ScriptError(HECGError):
    """
    Raised when an action script line cannot be parsed.

    :attribute raw: The offending script text
    """

    def __init__(self, raw: str, message: str):
        self.raw = raw
        super().__init__(message)

    def __str__(self):
        return f'{self.raw!r} -> {self.message}'


class ParseFailure(ScriptError):
    pass


class MissingParameter(ScriptError):
    pass


class UnknownVerb(ScriptError):
    def __init__(self, raw: str, verb: str, suggestion: Optional[str] = None):
        self.verb = verb
        self.suggestion = suggestion
        hint = f" (did you mean '{suggestion}'?)" if suggestion else ""
        super().__init__(raw, f"unknown verb '{verb}'{hint}")


class ScenarioError(HECGError):
    """Raised for malformed or inconsistent scenario files."""


class EventDeliveryError(HECGError):
    """Raised after publishing when one or more subscribers failed on an event."""

    def __init__(self, event_type: str, errors: List[Exception]):
        self.event_type = event_type
        self.errors = errors
        super().__init__(f"{len(errors)} subscriber(s) failed on {event_type}: {errors[0]}")



# -- error engine -------------------------------------------------------------

class NoFailurePresent(HECGError):
    def __init__(self, message: str = "outcome shows no failure to classify"):
        super().__init__(message)


# -- policy -------------------------------------------------------------------

class PolicyError(HECGError):
    pass


class EmptyCandidateSet(PolicyError):
    def __init__(self, message: str = "no candidate transitions to select from"):
        super().__init__(message)


class ScorerUnavailable(PolicyError):
    pass


# -- correction ---------------------------------------------------------------

class CorrectionError(HECGError):
    pass


class NoRuleMatches(CorrectionError):
    pass


class BudgetExhausted(CorrectionError):
    pass


class OptionsExhausted(CorrectionError):
    pass


class PlannerRejected(CorrectionError):
    pass


class BannedActionEmitted(CorrectionError):
    def __init__(self, banned: List[Any], message: str = ""):
        self.banned = banned
        super().__init__(message or f"planner emitted banned actions: {banned}")


# -- planners and LLM backends ------------------------------------------------

class PlannerError(HECGError):
    pass


class UnreachableGoal(PlannerError):
    def __init__(self, goal: str, reason: str = ""):
        self.goal = goal
        super().__init__(f"cannot reach goal {goal}" + (f": {reason}" if reason else ""))


class LLMError(PlannerError):
    pass


class ReplyTimeout(LLMError):
    pass


class MalformedReply(LLMError):
    def __init__(self, reply: str, message: str = "reply could not be parsed"):
        self.reply = reply
        super().__init__(message)


class AuthFailure(LLMError):
    pass


# -- harness ------------------------------------------------------------------

class ConfigError(HECGError):
    pass


class MissingReference(HECGError):
    def __init__(self, message: str = "action accuracy requested without a reference plan"):
        super().__init__(message)
