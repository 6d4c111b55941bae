from dataclasses import dataclass
from typing import Callable, Dict, FrozenSet, List, Optional, Tuple

from src.core.world_state import AGENT, WorldState, base_name, fact
from src.modules.env_mod.script import ActionScript
from src.utils.logger import logger


@dataclass(frozen=True)
class Effect:
    """Fact strings a successful action adds and removes."""
    adds: FrozenSet[str] = frozenset()
    removes: FrozenSet[str] = frozenset()


Check = Callable[[WorldState, ActionScript], Optional[str]]
Effects = Callable[[WorldState, ActionScript], Effect]
Expected = Callable[[ActionScript], FrozenSet[str]]


@dataclass
class VerbRule:
    """Precondition, effect and expected-outcome rule for one verb."""
    verb: str
    description: str
    check: Check
    effects: Effects
    expected: Expected
    enabled: bool = True


class VerbRuleBook:
    """
    Precondition/effect table for the household verbs.
    The table is the law of the world: the simulator applies nothing else.
    """

    def __init__(self):
        self._rules: Dict[str, VerbRule] = {}

    def register_rule(self, rule: VerbRule):
        self._rules[rule.verb] = rule
        logger.debug(f"Verb rule registered: {rule.verb}")

    def get(self, verb: str) -> Optional[VerbRule]:
        rule = self._rules.get(verb)
        return rule if rule and rule.enabled else None

    def verbs(self) -> List[str]:
        return list(self._rules.keys())

    def check(self, state: WorldState, action: ActionScript) -> Optional[str]:
        """Return the precondition failure message, or None when the action may run."""
        rule = self.get(action.verb)
        if rule is None:
            return f"no rule for verb '{action.verb}'"
        return rule.check(state, action)

    def effects(self, state: WorldState, action: ActionScript) -> Effect:
        return self._rules[action.verb].effects(state, action)

    def apply(self, state: WorldState, action: ActionScript) -> Tuple[bool, str, WorldState]:
        """
        Apply an action to a copy of the state.

        Returns:
            (succeeded, message, new state); the input state is never mutated
        """
        failure = self.check(state, action)
        if failure:
            return False, failure, state.copy()
        effect = self.effects(state, action)
        after = state.copy()
        after.apply(effect.adds, effect.removes)
        return True, f"{action.render()} done", after

    def expected_outcome(self, action: ActionScript) -> FrozenSet[str]:
        rule = self._rules.get(action.verb)
        return rule.expected(action) if rule else frozenset()


# -- shared checks ------------------------------------------------------------

def _locate(state: WorldState, token: str) -> Tuple[Optional[str], Optional[str]]:
    """Resolve an object the agent must be able to touch: (name, failure)."""
    name = state.resolve(token)
    if name is None:
        return None, f"{base_name(token)} not found"
    if state.objects[name].room != state.agent.room:
        return name, f"{name} is out of reach"
    if not state.agent.pose_ok:
        return name, f"agent is not positioned to reach {name}"
    return name, None


def _needs(state: WorldState, token: str, prop: str, failure: str) -> Tuple[Optional[str], Optional[str]]:
    name, problem = _locate(state, token)
    if problem:
        return name, problem
    if prop not in state.objects[name].properties:
        return name, failure.format(name=name)
    return name, None


def _held_relations(state: WorldState, name: str) -> FrozenSet[str]:
    obj = state.objects[name]
    out = set()
    for rel in ("inside", "on"):
        other = obj.relation_target(rel)
        if other:
            out.add(fact(rel, name, other))
    return frozenset(out)


# -- navigation ---------------------------------------------------------------

def _check_walk(state, action):
    if state.room_of(action.args[0]) is None:
        return f"{base_name(action.args[0])} not found"
    return None


def _effects_walk(state, action):
    room = state.room_of(action.args[0])
    adds = {fact("agent_in", room), fact("pose_ok", AGENT)}
    removes = set()
    if room != state.agent.room:
        removes.add(fact("agent_in", state.agent.room))
        for held in state.agent.holdings:
            removes.add(fact("located", held, state.agent.room))
            adds.add(fact("located", held, room))
    if state.agent.facing:
        removes.add(fact("facing", state.agent.facing))
    if state.agent.sitting:
        removes.add(fact("sitting", state.agent.sitting))
    return Effect(frozenset(adds), frozenset(removes))


def _expect_reach(action):
    return frozenset({fact("reachable", action.args[0])})


# -- perception ---------------------------------------------------------------

def _check_lookat(state, action):
    return _locate(state, action.args[0])[1]


def _effects_lookat(state, action):
    name = state.resolve(action.args[0])
    removes = set()
    if state.agent.facing and state.agent.facing != name:
        removes.add(fact("facing", state.agent.facing))
    return Effect(frozenset({fact("facing", name)}), frozenset(removes))


# -- manipulation -------------------------------------------------------------

def _check_pick(state, action, tolerate_occlusion: bool):
    verb = action.verb
    name, problem = _locate(state, action.args[0])
    if problem:
        return problem
    obj = state.objects[name]
    if verb == "grab" and "grabbable" not in obj.properties:
        return f"{name} cannot be grabbed"
    if verb == "push" and not obj.properties & {"grabbable", "movable"}:
        return f"{name} cannot be pushed"
    if name in state.agent.holdings:
        return f"{name} already grabbed"
    if len(state.agent.holdings) >= 2:
        return "both hands are full"
    if not tolerate_occlusion and obj.has("occluded"):
        return f"{name} is not visible"
    container = obj.relation_target("inside")
    if container in state.objects:
        box = state.objects[container]
        if "openable" in box.properties and not box.has("open"):
            return f"{name} is inside closed {container}"
    return None


def _effects_pick(state, action):
    name = state.resolve(action.args[0])
    removes = set(_held_relations(state, name))
    if action.verb == "push" and state.objects[name].has("occluded"):
        removes.add(fact("occluded", name))
    adds = {fact("holding", name), fact("grabbed", name)}
    return Effect(frozenset(adds), frozenset(removes))


def _expect_pick(action):
    x = action.args[0]
    return frozenset({fact("holding", x), fact("grabbed", x), fact("reachable", x)})


def _check_open(state, action):
    name, problem = _needs(state, action.args[0], "openable", "{name} cannot be opened")
    if problem:
        return problem
    if state.objects[name].has("open"):
        return f"{name} already opened"
    return None


def _check_close(state, action):
    return _needs(state, action.args[0], "openable", "{name} cannot be closed")[1]


def _toggle(on: str, off: str):
    def effects(state, action):
        name = state.resolve(action.args[0])
        return Effect(frozenset({fact(on, name)}), frozenset({fact(off, name)}))
    return effects


def _expect_unary(predicate: str):
    def expected(action):
        x = action.args[0]
        return frozenset({fact(predicate, x), fact("reachable", x)})
    return expected


def _check_place(state, action):
    item, dest = action.args
    held = state.resolve(item)
    if held is None or held not in state.agent.holdings:
        return f"not holding {base_name(item)}"
    prop = "container" if action.verb == "putin" else "surface"
    kind = "a container" if prop == "container" else "a surface"
    name, problem = _needs(state, dest, prop, "{name} is not " + kind)
    if problem:
        return problem
    if prop == "container":
        box = state.objects[name]
        if "openable" in box.properties and not box.has("open"):
            return f"{name} is closed"
    return None


def _effects_place(state, action):
    held = state.resolve(action.args[0])
    dest = state.resolve(action.args[1])
    rel = "inside" if action.verb == "putin" else "on"
    adds = {fact(rel, held, dest), fact("located", held, state.objects[dest].room)}
    removes = {fact("holding", held), fact("grabbed", held)}
    if state.objects[held].room != state.objects[dest].room:
        removes.add(fact("located", held, state.objects[held].room))
    return Effect(frozenset(adds), frozenset(removes))


def _expect_place(action):
    rel = "inside" if action.verb == "putin" else "on"
    item, dest = action.args
    return frozenset({fact(rel, item, dest), fact("reachable", dest)})


def _check_switch(turn_on: bool):
    def check(state, action):
        name, problem = _needs(state, action.args[0], "switchable", "{name} cannot be switched")
        if problem:
            return problem
        obj = state.objects[name]
        if turn_on:
            if obj.has("switched_on"):
                return f"{name} already switched on"
            if "openable" in obj.properties and obj.has("open"):
                return f"{name} door is open"
        elif not obj.has("switched_on"):
            return f"{name} already switched off"
        return None
    return check


def _check_move(state, action):
    name, problem = _needs(state, action.args[0], "movable", "{name} cannot be moved")
    if problem:
        return problem
    if name in state.agent.holdings:
        return f"{name} is held"
    return None


def _check_cut(state, action):
    name, problem = _needs(state, action.args[0], "cuttable", "{name} cannot be cut")
    if problem:
        return problem
    if state.objects[name].has("cut"):
        return f"{name} already cut"
    return None


def _set_unary(predicate: str):
    def effects(state, action):
        name = state.resolve(action.args[0])
        return Effect(frozenset({fact(predicate, name)}))
    return effects


# -- posture ------------------------------------------------------------------

def _check_sit(state, action):
    name, problem = _needs(state, action.args[0], "sittable", "{name} is not sittable")
    if problem:
        return problem
    if state.agent.sitting:
        return "agent already sitting"
    return None


def _effects_sit(state, action):
    return Effect(frozenset({fact("sitting", state.resolve(action.args[0]))}))


def _check_standup(state, action):
    return None if state.agent.sitting else "agent already standing"


def _effects_standup(state, action):
    return Effect(removes=frozenset({fact("sitting", state.agent.sitting)}))


def default_rulebook() -> VerbRuleBook:
    """Build the rule book for the fifteen household verbs."""
    book = VerbRuleBook()
    for verb in ("walk", "walktowards"):
        book.register_rule(VerbRule(verb, "move to a room or object", _check_walk, _effects_walk, _expect_reach))
    book.register_rule(VerbRule(
        "lookat", "face an object", _check_lookat, _effects_lookat,
        lambda a: frozenset({fact("facing", a.args[0]), fact("reachable", a.args[0])})
    ))
    book.register_rule(VerbRule(
        "grab", "pick up a visible object",
        lambda s, a: _check_pick(s, a, tolerate_occlusion=False), _effects_pick, _expect_pick
    ))
    book.register_rule(VerbRule(
        "push", "push an object into the gripper",
        lambda s, a: _check_pick(s, a, tolerate_occlusion=True), _effects_pick, _expect_pick
    ))
    book.register_rule(VerbRule("open", "open a container", _check_open, _toggle("open", "closed"), _expect_unary("open")))
    book.register_rule(VerbRule("close", "close a container", _check_close, _toggle("closed", "open"), _expect_unary("closed")))
    for verb in ("putin", "putback"):
        book.register_rule(VerbRule(verb, "place a held object", _check_place, _effects_place, _expect_place))
    book.register_rule(VerbRule(
        "switchon", "switch on", _check_switch(True), _toggle("switched_on", "switched_off"), _expect_unary("switched_on")
    ))
    book.register_rule(VerbRule(
        "switchoff", "switch off", _check_switch(False), _toggle("switched_off", "switched_on"), _expect_unary("switched_off")
    ))
    book.register_rule(VerbRule("move", "shift an object", _check_move, _set_unary("moved"), _expect_unary("moved")))
    book.register_rule(VerbRule("cut", "cut an object", _check_cut, _set_unary("cut"), _expect_unary("cut")))
    book.register_rule(VerbRule("sit", "sit down", _check_sit, _effects_sit, _expect_unary("sitting")))
    book.register_rule(VerbRule(
        "standup", "stand up", _check_standup, _effects_standup,
        lambda a: frozenset({fact("standing", AGENT)})
    ))
    return book


RULEBOOK = default_rulebook()
