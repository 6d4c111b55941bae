from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Type

from src.core.exceptions import ScriptError
from src.core.world_state import WorldState
from src.modules.env_mod.script import ActionScript, parse_script
from src.utils.logger import logger


@dataclass(frozen=True)
class BannedContext:
    """An (action, context) pair a replan must not repeat: verb, base arguments, room."""
    verb: str
    args: str
    room: str

    @classmethod
    def of(cls, action: ActionScript, room: str) -> 'BannedContext':
        return cls(action.verb, ",".join(action.base_args), room)

    def to_list(self) -> List[str]:
        return [self.verb, self.args, self.room]

    def __str__(self):
        return f"{self.verb}({self.args}) in {self.room}"


@dataclass
class PlanProposal:
    """Planner output: an ordered plan plus alternatives keyed by 1-based step."""
    plan: List[ActionScript] = field(default_factory=list)
    options: Dict[int, List[ActionScript]] = field(default_factory=dict)

    def lines(self) -> List[str]:
        return [a.render() for a in self.plan]

    def contexts(self, start: WorldState) -> List[Tuple[ActionScript, str]]:
        """Each plan action paired with the agent room it would run in."""
        room = start.agent.room
        out = []
        for action in self.plan:
            out.append((action, room))
            if action.verb in ("walk", "walktowards"):
                room = start.room_of(action.args[0]) or room
        return out

    def banned_hits(self, start: WorldState, banned: Iterable[BannedContext]) -> List[BannedContext]:
        banned = set(banned)
        return [ctx for ctx in (BannedContext.of(a, r) for a, r in self.contexts(start)) if ctx in banned]


@dataclass
class ReplanRequest:
    """
    Constraints for regenerating a plan: goals, the current world, banned
    (action, context) pairs and the failure records they were derived from.
    """
    goals: List[str]
    world: WorldState
    banned: List[BannedContext] = field(default_factory=list)
    failures: List[Any] = field(default_factory=list)

    @classmethod
    def from_failures(cls, goals: Sequence[str], world: WorldState, failures: Sequence[Any],
                      carried: Iterable[BannedContext] = ()) -> 'ReplanRequest':
        """Ban the context of every unresolved failure, plus pairs banned by earlier replans."""
        banned: List[BannedContext] = list(dict.fromkeys(carried))
        for record in failures:
            if record.resolution is not None:
                continue
            try:
                ctx = BannedContext.of(parse_script(record.action), record.room)
            except ScriptError:
                continue
            if ctx not in banned:
                banned.append(ctx)
        return cls(list(goals), world.copy(), banned, list(failures))

    def world_summary(self) -> str:
        state = self.world
        lines = [f"agent in {state.agent.room}, holding {sorted(state.agent.holdings) or 'nothing'}"]
        for name in sorted(state.objects):
            obj = state.objects[name]
            preds = ", ".join(sorted(obj.predicates)) or "-"
            lines.append(f"{name} ({obj.room}): {preds}")
        return "\n".join(lines)

    def annotated_failures(self) -> List[str]:
        return [
            f"{f.action} failed at step {f.step_index} with {f.error_class.name.value}"
            f" (levels tried: {', '.join(l.value for l in f.attempted_levels) or 'none'})"
            for f in self.failures
        ]

    def to_dict(self) -> dict:
        return {
            'goals': list(self.goals),
            'world': self.world.to_dict(),
            'banned': [b.to_list() for b in self.banned],
            'failures': [f.to_dict() for f in self.failures]
        }


class Planner(ABC):
    """Generates a plan and per-step options for a goal set."""

    name = "planner"
    share_safe = True

    @abstractmethod
    def generate(self, goals: Sequence[str], world: WorldState,
                 constraints: Optional[ReplanRequest] = None) -> PlanProposal:
        pass


class SemanticScorer(ABC):
    """Semantic feasibility score of an edge in [0, 1]."""

    name = "scorer"
    share_safe = True

    @abstractmethod
    def score(self, graph, edge, belief, observed: WorldState, retrieval: Optional[Sequence[Any]] = None) -> float:
        pass


class PlannerRegistry:
    """Registry of planner and scorer implementations by name."""

    _planners: Dict[str, Type[Planner]] = {}
    _scorers: Dict[str, Type[SemanticScorer]] = {}

    @classmethod
    def register_planner(cls, name: str, planner_class: Type[Planner]):
        cls._planners[name] = planner_class
        logger.debug(f"Planner registered: {name}")

    @classmethod
    def register_scorer(cls, name: str, scorer_class: Type[SemanticScorer]):
        cls._scorers[name] = scorer_class
        logger.debug(f"Scorer registered: {name}")

    @classmethod
    def get_planner(cls, name: str) -> Optional[Type[Planner]]:
        return cls._planners.get(name)

    @classmethod
    def get_scorer(cls, name: str) -> Optional[Type[SemanticScorer]]:
        return cls._scorers.get(name)

    @classmethod
    def list_planners(cls) -> List[str]:
        return list(cls._planners.keys())

    @classmethod
    def list_scorers(cls) -> List[str]:
        return list(cls._scorers.keys())
