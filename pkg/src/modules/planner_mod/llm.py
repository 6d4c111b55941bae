import os
import re
from typing import Any, Dict, List, Optional, Sequence

from jinja2 import BaseLoader, Environment, FileSystemLoader

from src.core.exceptions import LLMError, MalformedReply, ScriptError
from src.core.world_state import WorldState
from src.modules.env_mod.script import ActionScript, parse_script
from src.modules.planner_mod.base import PlanProposal, Planner, PlannerRegistry, ReplanRequest, SemanticScorer
from src.utils.llm_client import LLMClient
from src.utils.logger import logger

DEFAULT_TEMPLATE_DIR = "src/modules/planner_mod/prompt_templates"

_NUMBER_RE = re.compile(r"(?<![\d.])\d*\.?\d+")
_OPTION_RE = re.compile(r"^\s*option\s+(?P<step>\d+)\s*:\s*(?P<script>.+)$", re.IGNORECASE)
_NUMBERED_RE = re.compile(r"^\s*(?:\d+[.)]|[-*])\s+")

_DEFAULT_PLAN_PROMPT = """You control a household robot. Write a plan that achieves every goal.

Goals:
{% for g in goals %}- {{ g }}
{% endfor %}
Current state:
{{ state }}
{% if banned %}
Do not repeat these actions in these rooms:
{% for b in banned %}- {{ b }}
{% endfor %}{% endif %}{% if failures %}
Earlier failures:
{% for f in failures %}- {{ f }}
{% endfor %}{% endif %}
Answer with one script line per step, e.g. [walk] <kitchen>.
Alternatives for step k go on lines of the form: option k: [push] <mug>
"""

_DEFAULT_SCORE_PROMPT = """Rate from 0 to 1 how sensible the robot's next transition is.

Goals: {{ goals | join(', ') }}
Transition: {{ kind }} edge to {{ target }}
Last error: {{ last_error or 'none' }}
{% if retrieval %}Similar past recoveries: {{ retrieval | join('; ') }}
{% endif %}Observed state:
{{ state }}

Answer with a single number between 0 and 1.
"""


def _sanitize(text: str) -> str:
    """Strip a surrounding code fence from a reply."""
    text = (text or "").strip()
    if text.startswith("```"):
        lines = text.splitlines()
        if len(lines) >= 3:
            text = "\n".join(lines[1:-1]).strip()
    return text


def extract_score(reply: str) -> float:
    """
    First decimal number in [0, 1] found in a reply.

    Raises:
        MalformedReply: no number in range
    """
    for match in _NUMBER_RE.finditer(reply or ""):
        value = float(match.group(0))
        if 0.0 <= value <= 1.0:
            return value
    logger.error(f"Unparsable score reply: {reply!r}")
    raise MalformedReply(reply, "no number in [0, 1] found in reply")


def parse_plan_reply(reply: str) -> PlanProposal:
    """
    Parse plan lines and ``option k: ...`` lines from a reply.

    List markers (``1.``, ``-``) are tolerated; prose lines without a
    ``[verb]`` head are ignored.

    Raises:
        MalformedReply: a script line does not parse, or no plan line is present
    """
    plan: List[ActionScript] = []
    options: Dict[int, List[ActionScript]] = {}
    for line in _sanitize(reply).splitlines():
        line = _NUMBERED_RE.sub("", line, count=1).strip()
        option = _OPTION_RE.match(line)
        text = option.group('script').strip() if option else line
        if not text.startswith("["):
            continue
        try:
            action = parse_script(text)
        except ScriptError as e:
            logger.error(f"Unparsable plan reply: {reply!r}")
            raise MalformedReply(reply, f"bad script line {text!r}: {e}")
        if option:
            options.setdefault(int(option.group('step')), []).append(action)
        else:
            plan.append(action)

    if not plan:
        logger.error(f"Plan reply has no script lines: {reply!r}")
        raise MalformedReply(reply, "reply contains no plan lines")
    return PlanProposal(plan, {k: v for k, v in options.items() if 1 <= k <= len(plan)})


class _TemplateMixin:
    """Prompt template loading shared by the LLM planner and scorer."""

    def _setup_templates(self, template_dir: str, name: str, default: str):
        self.template_dir = template_dir
        if os.path.exists(template_dir):
            self.jinja_env = Environment(loader=FileSystemLoader(template_dir))
        else:
            self.jinja_env = Environment(loader=BaseLoader())
            logger.warning(f"Template directory not found: {template_dir}")

        try:
            self.template = self.jinja_env.get_template(f"{name}.jinja2")
        except Exception:
            # Built-in prompt when the file is missing
            self.template = self.jinja_env.from_string(default)


class LLMPlanner(_TemplateMixin, Planner):
    """
    Planner backed by a chat-completion model.

    The reply's script lines become the plan. With a fallback planner set,
    any LLM failure degrades to it with a warning instead of raising.
    """

    name = "llm"

    def __init__(
        self,
        llm_client: Optional[LLMClient] = None,
        template_dir: str = DEFAULT_TEMPLATE_DIR,
        fallback: Optional[Planner] = None
    ):
        self.llm_client = llm_client or LLMClient()
        self.fallback = fallback
        self._setup_templates(template_dir, "plan", _DEFAULT_PLAN_PROMPT)

    @property
    def share_safe(self) -> bool:
        return self.llm_client.share_safe

    def build_prompt(self, goals: Sequence[str], world: WorldState,
                     constraints: Optional[ReplanRequest] = None) -> str:
        request = constraints or ReplanRequest(list(goals), world)
        return self.template.render(
            goals=list(goals),
            state=request.world_summary(),
            banned=[str(b) for b in request.banned],
            failures=request.annotated_failures()
        )

    def generate(self, goals: Sequence[str], world: WorldState,
                 constraints: Optional[ReplanRequest] = None) -> PlanProposal:
        prompt = self.build_prompt(goals, world, constraints)
        try:
            reply = self.llm_client.generate(prompt)
            proposal = parse_plan_reply(reply)
        except LLMError as e:
            if self.fallback is None:
                logger.error(f"LLM plan generation failed: {e}")
                raise
            logger.warning(f"LLM planner failed ({e}); falling back to {self.fallback.name}")
            return self.fallback.generate(goals, world, constraints)

        logger.info(f"LLM planner proposed {len(proposal.plan)} steps")
        return proposal


class LLMScorer(_TemplateMixin, SemanticScorer):
    """Semantic scorer that asks a chat-completion model for a number in [0, 1]."""

    name = "llm"

    def __init__(
        self,
        llm_client: Optional[LLMClient] = None,
        template_dir: str = DEFAULT_TEMPLATE_DIR,
        fallback: Optional[SemanticScorer] = None
    ):
        self.llm_client = llm_client or LLMClient()
        self.fallback = fallback
        self._setup_templates(template_dir, "score", _DEFAULT_SCORE_PROMPT)

    @property
    def share_safe(self) -> bool:
        return self.llm_client.share_safe

    def build_prompt(self, graph, edge, belief, observed: WorldState,
                     retrieval: Optional[Sequence[Any]] = None) -> str:
        dst = graph.nodes[edge.dst]
        last_error = belief.last_error.name.value if belief.last_error is not None else None
        patterns = []
        for result in retrieval or []:
            patterns.extend(getattr(result, 'provenance', {}).get('recovery_patterns', []))
        return self.template.render(
            goals=list(belief.goals),
            kind=edge.kind.value,
            target=dst.action.render() if dst.action is not None else dst.id,
            last_error=last_error,
            retrieval=patterns,
            state=ReplanRequest(list(belief.goals), observed).world_summary()
        )

    def score(self, graph, edge, belief, observed: WorldState, retrieval: Optional[Sequence[Any]] = None) -> float:
        prompt = self.build_prompt(graph, edge, belief, observed, retrieval)
        try:
            return extract_score(self.llm_client.generate(prompt))
        except LLMError as e:
            if self.fallback is None:
                logger.error(f"LLM scoring failed: {e}")
                raise
            logger.warning(f"LLM scorer failed ({e}); falling back to {self.fallback.name}")
            return self.fallback.score(graph, edge, belief, observed, retrieval)


PlannerRegistry.register_planner(LLMPlanner.name, LLMPlanner)
PlannerRegistry.register_scorer(LLMScorer.name, LLMScorer)
