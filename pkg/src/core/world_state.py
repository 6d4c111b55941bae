import re
from dataclasses import dataclass, field
from typing import Dict, List, Any, Optional, Set, FrozenSet, Iterable, Tuple

AGENT = "agent"

# Agent-side facts; everything else describes an object
AGENT_PREDICATES = frozenset({"agent_in", "holding", "facing", "sitting", "pose_ok"})
# Evaluated on demand, never stored or diffed
DERIVED_PREDICATES = frozenset({"reachable", "standing"})

_FACT_RE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*\(([^()]*)\)\s*$")


def fact(name: str, *args: str) -> str:
    """Render a fact string such as ``inside(mug,dishwasher)``."""
    return f"{name}({','.join(args)})"


def parse_fact(text: str) -> Tuple[str, Tuple[str, ...]]:
    """Split ``name(a,b)`` into ``('name', ('a', 'b'))``."""
    match = _FACT_RE.match(text)
    if not match:
        raise ValueError(f"malformed predicate: {text!r}")
    args = tuple(a.strip() for a in match.group(2).split(',') if a.strip())
    return match.group(1), args


def base_name(token: str) -> str:
    """Strip an instance id: ``fridge#1`` -> ``fridge``."""
    return token.split('#', 1)[0]


def fact_tokens(text: str) -> Set[str]:
    """Name and argument base names of a fact, used for token overlap scoring."""
    try:
        name, args = parse_fact(text)
    except ValueError:
        return {text}
    return {name} | {base_name(a) for a in args}


@dataclass
class ObjectState:
    """A household object: its room, mutable predicates and static properties."""
    name: str
    room: str
    predicates: Set[str] = field(default_factory=set)
    properties: Set[str] = field(default_factory=set)

    def has(self, predicate: str) -> bool:
        return predicate in self.predicates

    def relation_target(self, relation: str) -> Optional[str]:
        """Target of a stored relation, e.g. the container for ``inside``."""
        prefix = f"{relation}("
        for p in self.predicates:
            if p.startswith(prefix) and p.endswith(")"):
                return p[len(prefix):-1]
        return None

    def copy(self) -> 'ObjectState':
        return ObjectState(self.name, self.room, set(self.predicates), set(self.properties))

    def to_dict(self) -> dict:
        return {
            'name': self.name,
            'room': self.room,
            'predicates': sorted(self.predicates),
            'properties': sorted(self.properties)
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'ObjectState':
        return cls(
            name=data['name'],
            room=data['room'],
            predicates=set(data.get('predicates', [])),
            properties=set(data.get('properties', []))
        )


@dataclass
class AgentState:
    """The single embodied agent."""
    room: str
    holdings: Set[str] = field(default_factory=set)
    pose_ok: bool = True
    facing: Optional[str] = None
    sitting: Optional[str] = None

    def copy(self) -> 'AgentState':
        return AgentState(self.room, set(self.holdings), self.pose_ok, self.facing, self.sitting)

    def to_dict(self) -> dict:
        return {
            'room': self.room,
            'holdings': sorted(self.holdings),
            'pose_ok': self.pose_ok,
            'facing': self.facing,
            'sitting': self.sitting
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'AgentState':
        return cls(
            room=data['room'],
            holdings=set(data.get('holdings', [])),
            pose_ok=data.get('pose_ok', True),
            facing=data.get('facing'),
            sitting=data.get('sitting')
        )


@dataclass
class WorldState:
    """
    Symbolic household world.

    Stored facts are the single source of truth for effects: verb rules describe
    what they add and remove as fact strings and ``apply`` maps those back onto
    the structured state.
    """
    rooms: Set[str]
    objects: Dict[str, ObjectState]
    agent: AgentState
    halted: bool = False
    # error type name -> {"verb": ..., "target": ...} for sticky faults
    active_faults: Dict[str, Dict[str, str]] = field(default_factory=dict)

    # -- lookup ---------------------------------------------------------------

    def resolve(self, token: Optional[str]) -> Optional[str]:
        """Map a script argument to a known object name, or None."""
        if token is None:
            return None
        if token in self.objects:
            return token
        name = base_name(token)
        return name if name in self.objects else None

    def room_of(self, token: str) -> Optional[str]:
        """Room named by a token: the room itself or the room holding an object."""
        if token in self.rooms:
            return token
        name = self.resolve(token)
        return self.objects[name].room if name else None

    def holds(self, predicate: str) -> bool:
        """Evaluate a (possibly derived) predicate against this state."""
        try:
            name, args = parse_fact(predicate)
        except ValueError:
            return False

        if name == "agent_in":
            return bool(args) and self.agent.room == args[0]
        if name == "pose_ok":
            return self.agent.pose_ok
        if name == "standing":
            return self.agent.sitting is None
        if not args:
            return False

        if name == "reachable":
            if args[0] in self.rooms:
                return self.agent.room == args[0]
            obj = self.resolve(args[0])
            return obj is not None and self.objects[obj].room == self.agent.room

        obj = self.resolve(args[0])
        if name == "holding":
            return obj is not None and obj in self.agent.holdings
        if name == "facing":
            return obj is not None and self.agent.facing == obj
        if name == "sitting":
            return obj is not None and self.agent.sitting == obj
        if obj is None:
            return False
        if name == "located":
            return len(args) > 1 and self.objects[obj].room == args[1]
        if len(args) == 2:
            other = self.resolve(args[1]) or args[1]
            return self.objects[obj].has(f"{name}({other})")
        return self.objects[obj].has(name)

    # -- fact view ------------------------------------------------------------

    def object_facts(self) -> FrozenSet[str]:
        out = set()
        for name, obj in self.objects.items():
            out.add(fact("located", name, obj.room))
            for p in obj.predicates:
                if "(" in p:
                    rel, arg = p[:-1].split("(", 1)
                    out.add(fact(rel, name, arg))
                else:
                    out.add(fact(p, name))
        return frozenset(out)

    def agent_facts(self) -> FrozenSet[str]:
        out = {fact("agent_in", self.agent.room)}
        out.update(fact("holding", h) for h in self.agent.holdings)
        if self.agent.pose_ok:
            out.add(fact("pose_ok", AGENT))
        if self.agent.facing:
            out.add(fact("facing", self.agent.facing))
        if self.agent.sitting:
            out.add(fact("sitting", self.agent.sitting))
        return frozenset(out)

    def facts(self) -> FrozenSet[str]:
        """All stored (non-derived) facts."""
        return self.object_facts() | self.agent_facts()

    def apply(self, adds: Iterable[str], removes: Iterable[str]):
        """Mutate in place: remove facts first, then add."""
        for f in removes:
            self._set_fact(f, False)
        for f in adds:
            self._set_fact(f, True)

    def _set_fact(self, text: str, present: bool):
        name, args = parse_fact(text)
        if name in DERIVED_PREDICATES:
            raise ValueError(f"derived predicate cannot be set: {text}")

        if name == "agent_in":
            if present:
                self.agent.room = args[0]
            return
        if name == "pose_ok":
            self.agent.pose_ok = present
            return
        if name == "holding":
            if present:
                self.agent.holdings.add(args[0])
            else:
                self.agent.holdings.discard(args[0])
            return
        if name in ("facing", "sitting"):
            current = getattr(self.agent, name)
            if present:
                setattr(self.agent, name, args[0])
            elif current == args[0]:
                setattr(self.agent, name, None)
            return

        obj = self.objects[args[0]]
        if name == "located":
            if present:
                obj.room = args[1]
            return
        key = f"{name}({args[1]})" if len(args) == 2 else name
        if present:
            obj.predicates.add(key)
        else:
            obj.predicates.discard(key)

    # -- integrity ------------------------------------------------------------

    def violations(self) -> List[str]:
        """Broken structural invariants, empty when the state is consistent."""
        problems = []
        if self.agent.room not in self.rooms:
            problems.append(f"agent room '{self.agent.room}' is not a known room")
        for name, obj in self.objects.items():
            if obj.room not in self.rooms:
                problems.append(f"{name} is in unknown room '{obj.room}'")
            containers = [p for p in obj.predicates if p.startswith("inside(")]
            if len(containers) > 1:
                problems.append(f"{name} is inside more than one container")
        for held in self.agent.holdings:
            if held not in self.objects:
                problems.append(f"agent holds unknown object '{held}'")
            elif not self.objects[held].has("grabbed"):
                problems.append(f"held object {held} lacks predicate grabbed")
        return problems

    # -- copying and serialization --------------------------------------------

    def copy(self) -> 'WorldState':
        return WorldState(
            rooms=set(self.rooms),
            objects={k: v.copy() for k, v in self.objects.items()},
            agent=self.agent.copy(),
            halted=self.halted,
            active_faults={k: dict(v) for k, v in self.active_faults.items()}
        )

    def to_dict(self) -> dict:
        return {
            'rooms': sorted(self.rooms),
            'objects': [self.objects[k].to_dict() for k in sorted(self.objects)],
            'agent': self.agent.to_dict(),
            'halted': self.halted,
            'active_faults': {k: dict(v) for k, v in sorted(self.active_faults.items())}
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'WorldState':
        objects = [ObjectState.from_dict(o) for o in data.get('objects', [])]
        return cls(
            rooms=set(data.get('rooms', [])),
            objects={o.name: o for o in objects},
            agent=AgentState.from_dict(data['agent']),
            halted=data.get('halted', False),
            active_faults={k: dict(v) for k, v in data.get('active_faults', {}).items()}
        )
