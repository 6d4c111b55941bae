import difflib
import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from src.core.exceptions import MissingParameter, ParseFailure, UnknownVerb
from src.core.world_state import AGENT, base_name
from src.utils.logger import logger

_HEAD_RE = re.compile(r"^\s*\[(?P<verb>[^\[\]\s]+)\]\s*(?P<rest>.*?)\s*$")
_ARG_RE = re.compile(r"\s*<(?P<name>[^<>\s]+)>\s*(?:\((?P<id>\d+)\))?")


@dataclass(frozen=True)
class ActionScript:
    """One parsed script line, e.g. ``[putin] <bananas> <fridge>``."""
    verb: str
    args: Tuple[str, ...]
    raw: str = ""

    @property
    def target(self) -> str:
        """The object or room the action is directed at."""
        return self.args[-1] if self.verb in ("putin", "putback") else self.args[0]

    @property
    def base_args(self) -> Tuple[str, ...]:
        return tuple(base_name(a) for a in self.args)

    def render(self) -> str:
        """Canonical script text; instance ids come back as ``(n)`` suffixes."""
        if self.args == (AGENT,):
            return f"[{self.verb}]"
        parts = [f"[{self.verb}]"]
        for arg in self.args:
            name, _, ident = arg.partition('#')
            parts.append(f"<{name}> ({ident})" if ident else f"<{name}>")
        return " ".join(parts)

    def key(self) -> str:
        """Verb plus base arguments, used for matching across episodes."""
        return f"{self.verb}({','.join(self.base_args)})"

    def to_dict(self) -> dict:
        return {'verb': self.verb, 'args': list(self.args), 'raw': self.raw}

    @classmethod
    def from_dict(cls, data: dict) -> 'ActionScript':
        return cls(verb=data['verb'], args=tuple(data['args']), raw=data.get('raw', ''))

    def __str__(self):
        return self.raw or self.render()


@dataclass(frozen=True)
class VerbSpec:
    name: str
    arity: int
    description: str = ""


class VerbRegistry:
    """Registry of the script verbs the household environment understands."""

    _verbs: Dict[str, VerbSpec] = {}

    @classmethod
    def register(cls, spec: VerbSpec):
        cls._verbs[spec.name] = spec
        logger.debug(f"Verb registered: {spec.name}")

    @classmethod
    def get(cls, name: str) -> Optional[VerbSpec]:
        return cls._verbs.get(name)

    @classmethod
    def list_verbs(cls) -> List[str]:
        return list(cls._verbs.keys())

    @classmethod
    def suggest(cls, name: str) -> Optional[str]:
        """Closest registered verb for a misspelled one (``look_at`` -> ``lookat``)."""
        candidates = difflib.get_close_matches(name.replace('_', '').lower(), cls.list_verbs(), n=1)
        return candidates[0] if candidates else None


for _spec in (
    VerbSpec("walk", 1, "go to a room or to an object's room"),
    VerbSpec("walktowards", 1, "approach a room or object"),
    VerbSpec("lookat", 1, "face and observe an object"),
    VerbSpec("grab", 1, "pick up a visible object"),
    VerbSpec("open", 1, "open a closed container"),
    VerbSpec("close", 1, "close a container"),
    VerbSpec("putin", 2, "put a held object into a container"),
    VerbSpec("putback", 2, "put a held object onto a surface"),
    VerbSpec("switchon", 1, "switch an appliance on"),
    VerbSpec("switchoff", 1, "switch an appliance off"),
    VerbSpec("push", 1, "push an object into the gripper"),
    VerbSpec("move", 1, "shift a movable object"),
    VerbSpec("cut", 1, "cut an object"),
    VerbSpec("sit", 1, "sit on a piece of furniture"),
    VerbSpec("standup", 0, "stand up"),
):
    VerbRegistry.register(_spec)


def parse_script(text: str) -> ActionScript:
    """
    Parse one line of the script grammar ``[verb] <arg> (id)? (<arg2> (id)?)?``.

    Args:
        text: Script line

    Returns:
        The parsed ActionScript; argument ids become ``name#id``.

    Raises:
        ParseFailure: malformed brackets or too many arguments
        UnknownVerb: verb not in the registry, with a close-match suggestion
        MissingParameter: a verb received fewer arguments than it needs
    """
    head = _HEAD_RE.match(text or "")
    if not head:
        raise ParseFailure(text, "expected '[verb]' at the start of the line")

    verb = head.group('verb')
    rest = head.group('rest')
    args: List[str] = []
    pos = 0
    while pos < len(rest):
        match = _ARG_RE.match(rest, pos)
        if not match or match.end() == pos:
            raise ParseFailure(text, f"malformed argument near {rest[pos:]!r}")
        name = match.group('name')
        args.append(f"{name}#{match.group('id')}" if match.group('id') else name)
        pos = match.end()

    spec = VerbRegistry.get(verb)
    if spec is None:
        raise UnknownVerb(text, verb, VerbRegistry.suggest(verb))

    if spec.arity == 0:
        if args:
            raise ParseFailure(text, f"[{verb}] takes no arguments")
        return ActionScript(verb, (AGENT,), text)
    if len(args) < spec.arity:
        raise MissingParameter(text, f"[{verb}] needs {spec.arity} arguments, got {len(args)}")
    if len(args) > spec.arity:
        raise ParseFailure(text, f"[{verb}] takes {spec.arity} arguments, got {len(args)}")
    return ActionScript(verb, tuple(args), text)
