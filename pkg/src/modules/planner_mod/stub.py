from typing import Any, Dict, List, Optional, Sequence, Set

from src.core.exceptions import UnreachableGoal
from src.core.graph import EdgeKind
from src.core.world_state import AGENT, ObjectState, WorldState, fact_tokens, parse_fact
from src.modules.env_mod.rules import RULEBOOK, VerbRuleBook
from src.modules.env_mod.script import ActionScript, parse_script
from src.modules.error_mod.taxonomy import Recoverability
from src.modules.planner_mod.base import BannedContext, PlanProposal, Planner, PlannerRegistry, ReplanRequest, SemanticScorer

DEFAULT_VERB_ALTERNATIVES: Dict[str, List[str]] = {
    "grab": ["push"],
    "push": ["grab"],
    "walk": ["walktowards"],
    "walktowards": ["walk"],
}

DEFAULT_OPTION_VERBS: Dict[str, List[str]] = {"grab": ["push"]}

DEFAULT_VERB_TAGS: Dict[str, List[str]] = {"grab": ["visible"], "push": ["occluded"]}


def _script(verb: str, *args: str) -> ActionScript:
    parts = [f"[{verb}]"]
    for arg in args:
        name, _, ident = arg.partition('#')
        parts.append(f"<{name}> ({ident})" if ident else f"<{name}>")
    return parse_script(" ".join(parts))


class _PlanBuilder:
    """Backward-chaining state for one generate call."""

    def __init__(self, world: WorldState, banned: Sequence[BannedContext], alternatives: Dict[str, List[str]],
                 option_verbs: Dict[str, List[str]], rulebook: VerbRuleBook):
        self.state = world.copy()
        self.banned: Set[BannedContext] = set(banned)
        self.alternatives = alternatives
        self.option_verbs = option_verbs
        self.rulebook = rulebook
        self.plan: List[ActionScript] = []
        self.options: Dict[int, List[ActionScript]] = {}
        self.goal = ""

    def _allowed(self, action: ActionScript) -> bool:
        return BannedContext.of(action, self.state.agent.room) not in self.banned

    def emit(self, verb: str, *args: str):
        for candidate in [verb] + self.alternatives.get(verb, []):
            action = _script(candidate, *args)
            if self._allowed(action):
                break
        else:
            raise UnreachableGoal(self.goal, f"every variant of [{verb}] {' '.join(args)} is banned")

        options = [
            alt for alt in (_script(v, *args) for v in self.option_verbs.get(action.verb, []))
            if self._allowed(alt)
        ]
        self.plan.append(action)
        if options:
            self.options[len(self.plan)] = options
        effect = self.rulebook.effects(self.state, action)
        self.state.apply(effect.adds, effect.removes)

    def obj(self, name: str) -> ObjectState:
        resolved = self.state.resolve(name)
        if resolved is None:
            raise UnreachableGoal(self.goal, f"unknown object {name}")
        return self.state.objects[resolved]

    def goto(self, target: str):
        room = self.state.room_of(target)
        if room is None:
            raise UnreachableGoal(self.goal, f"unknown place {target}")
        if self.state.agent.room != room:
            self.emit("walk", room)

    def ensure_open(self, name: str):
        obj = self.obj(name)
        if "openable" in obj.properties and not obj.has("open"):
            self.goto(name)
            self.emit("open", obj.name)

    def acquire(self, name: str):
        obj = self.obj(name)
        if obj.name in self.state.agent.holdings:
            return
        container = obj.relation_target("inside")
        if container in self.state.objects:
            self.ensure_open(container)
        self.goto(obj.name)
        self.emit("grab", obj.name)

    def achieve(self, goal: str):
        self.goal = goal
        if self.state.holds(goal):
            return
        name, args = parse_fact(goal)
        x = args[0] if args else AGENT

        if name in ("inside", "on") and len(args) == 2:
            self.acquire(x)
            dest = self.obj(args[1]).name
            self.goto(dest)
            if name == "inside":
                self.ensure_open(dest)
                self.emit("putin", self.obj(x).name, dest)
            else:
                self.emit("putback", self.obj(x).name, dest)
        elif name in ("holding", "grabbed"):
            self.acquire(x)
        elif name == "open":
            self.ensure_open(x)
        elif name == "closed":
            self.goto(x)
            self.emit("close", self.obj(x).name)
        elif name == "switched_on":
            obj = self.obj(x)
            self.goto(obj.name)
            if "openable" in obj.properties and obj.has("open"):
                self.emit("close", obj.name)
            self.emit("switchon", obj.name)
        elif name in ("switched_off", "cut", "moved", "sitting", "facing"):
            verb = {"switched_off": "switchoff", "cut": "cut", "moved": "move",
                    "sitting": "sit", "facing": "lookat"}[name]
            self.goto(x)
            self.emit(verb, self.obj(x).name)
        elif name in ("agent_in", "reachable", "located"):
            if name == "located":
                self.acquire(x)
                x = args[1]
            self.goto(x)
        elif name == "standing":
            self.emit("standup")
        else:
            raise UnreachableGoal(goal, "no verb produces this predicate")


class StubPlanner(Planner):
    """
    Deterministic backward-chaining planner over the verb effect table.

    Goals are handled in list order; each unsatisfied goal expands into the
    walks, grabs and opens it needs. Banned contexts switch a verb to its
    alternative (grab -> push, walk -> walktowards).
    """

    name = "stub"

    def __init__(
        self,
        verb_alternatives: Optional[Dict[str, List[str]]] = None,
        option_verbs: Optional[Dict[str, List[str]]] = None,
        rulebook: Optional[VerbRuleBook] = None
    ):
        self.verb_alternatives = DEFAULT_VERB_ALTERNATIVES if verb_alternatives is None else verb_alternatives
        self.option_verbs = DEFAULT_OPTION_VERBS if option_verbs is None else option_verbs
        self.rulebook = rulebook or RULEBOOK

    def generate(self, goals: Sequence[str], world: WorldState,
                 constraints: Optional[ReplanRequest] = None) -> PlanProposal:
        banned = constraints.banned if constraints else []
        builder = _PlanBuilder(world, banned, self.verb_alternatives, self.option_verbs, self.rulebook)
        for goal in goals:
            builder.achieve(goal)
        return PlanProposal(builder.plan, builder.options)


class StubScorer(SemanticScorer):
    """
    Token-overlap semantic score with fixed bonuses.

    Base score is the share of the destination's tokens (verb, objects and verb
    tags such as ``visible`` for grab) found among goal tokens and the observed
    tokens of the referenced objects.
    """

    name = "stub"

    def __init__(
        self,
        verb_tags: Optional[Dict[str, List[str]]] = None,
        corr_bonus: float = 0.5,
        fb_bonus: float = 0.5,
        fb_failures: int = 3,
        retrieval_bonus: float = 0.2
    ):
        self.verb_tags = DEFAULT_VERB_TAGS if verb_tags is None else verb_tags
        self.corr_bonus = corr_bonus
        self.fb_bonus = fb_bonus
        self.fb_failures = fb_failures
        self.retrieval_bonus = retrieval_bonus

    def target_tokens(self, action: ActionScript) -> Set[str]:
        objects = {a for a in action.base_args if a != AGENT}
        return {action.verb} | objects | set(self.verb_tags.get(action.verb, []))

    @staticmethod
    def context_tokens(goals, observed: WorldState, objects) -> Set[str]:
        tokens: Set[str] = set()
        for goal in goals:
            tokens |= fact_tokens(goal)
        for name in objects:
            resolved = observed.resolve(name)
            if resolved is None:
                continue
            obj = observed.objects[resolved]
            tokens.add(obj.name)
            for p in obj.predicates:
                tokens |= fact_tokens(p)
            if not obj.has("occluded"):
                tokens.add("visible")
        return tokens

    def overlap(self, action: Optional[ActionScript], goals, observed: WorldState) -> float:
        if action is None:
            return 0.0
        target = self.target_tokens(action)
        context = self.context_tokens(goals, observed, action.base_args)
        return len(target & context) / len(target)

    def score(self, graph, edge, belief, observed: WorldState, retrieval: Optional[Sequence[Any]] = None) -> float:
        dst = graph.nodes[edge.dst]
        value = self.overlap(dst.action, belief.goals, observed)

        if edge.kind is EdgeKind.CORR and belief.last_error is not None \
                and belief.last_error.recoverable is not Recoverability.NO:
            value += self.corr_bonus
        if edge.kind is EdgeKind.FB and belief.failures(belief.node) >= self.fb_failures:
            value += self.fb_bonus
        if dst.action is not None and retrieval:
            key = dst.action.key()
            if any(key in getattr(r, 'provenance', {}).get('recovery_patterns', []) for r in retrieval):
                value += self.retrieval_bonus
        return min(1.0, max(0.0, value))


PlannerRegistry.register_planner(StubPlanner.name, StubPlanner)
PlannerRegistry.register_scorer(StubScorer.name, StubScorer)
