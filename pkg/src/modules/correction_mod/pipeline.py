"""
Four-level correction: local rules (L1), option switching (L2), replanning
under failure constraints (L3) and escalation to a human (L4).
"""

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

from src.core.exceptions import (
    BannedActionEmitted,
    BudgetExhausted,
    GraphError,
    LLMError,
    NoRuleMatches,
    OptionsExhausted,
    PlannerError,
    PlannerRejected
)
from src.core.graph import TaskEdge, TaskGraph, TaskNode, ThresholdConfig, build_graph, validate
from src.core.history import EpisodeHistory, FailureRecord, Resolution
from src.modules.env_mod.rules import RULEBOOK, VerbRuleBook
from src.modules.env_mod.script import ActionScript
from src.modules.env_mod.simulator import EpisodeEnvironment, StepOutcome
from src.modules.error_mod.engine import compute_error
from src.modules.error_mod.taxonomy import CorrectionLevel, ErrorClass
from src.modules.planner_mod.base import PlanProposal, Planner, ReplanRequest, SemanticScorer
from src.modules.policy_mod.coefficients import PolicyCoefficients
from src.modules.policy_mod.scoring import BeliefContext, Selection, score_components, select_soft
from src.utils.logger import logger


class L4Mode:
    AUTO_ABORT = "auto-abort"
    INTERACTIVE = "interactive"

    ALL = (AUTO_ABORT, INTERACTIVE)


class TerminationAction:
    ABORT = "abort"
    RETRY = "retry"
    SKIP = "skip"

    # Accepted spellings of the interactive reply
    ALIASES = {
        "abort": ABORT, "a": ABORT,
        "retry": RETRY, "force-retry": RETRY, "r": RETRY,
        "skip": SKIP, "skip-node": SKIP, "s": SKIP,
    }


@dataclass
class CorrectionOutcome:
    """What one correction attempt did and whether it fixed the node."""
    level: CorrectionLevel
    succeeded: bool
    node: str
    rule: Optional[str] = None
    scripts: List[ActionScript] = field(default_factory=list)
    outcomes: List[StepOutcome] = field(default_factory=list)
    error_value: Optional[float] = None
    edge: Optional[TaskEdge] = None
    selection: Optional[Selection] = None
    graph: Optional[TaskGraph] = None

    def to_dict(self) -> dict:
        return {
            'level': self.level.value,
            'succeeded': self.succeeded,
            'node': self.node,
            'rule': self.rule,
            'scripts': [s.render() for s in self.scripts],
            'outcomes': [o.summary() for o in self.outcomes],
            'error_value': self.error_value,
            'edge': self.edge.to_dict() if self.edge else None,
            'revision': self.graph.revision if self.graph else None
        }


@dataclass
class EpisodeTermination:
    """
    Result of an L4 escalation.

    ``abort`` ends the episode as Escalated; ``retry`` re-executes the node;
    ``skip`` resumes at the node's successor with the failure left open.
    """
    action: str
    node: Optional[str] = None
    mode: str = L4Mode.AUTO_ABORT
    reason: str = ""
    dossier: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def status(self) -> Optional[str]:
        return "Escalated" if self.action == TerminationAction.ABORT else None

    @property
    def terminal(self) -> bool:
        return self.action == TerminationAction.ABORT

    def to_dict(self) -> dict:
        return {
            'action': self.action,
            'status': self.status,
            'node': self.node,
            'mode': self.mode,
            'reason': self.reason,
            'dossier': self.dossier
        }


class CorrectionPipeline:
    """
    Correction levels for one episode.

    The pipeline owns no traversal state: budgets and failure records live in
    the EpisodeHistory passed to each call, and L1 sub-steps run through the
    episode's environment so they advance the global step index.
    """

    def __init__(
        self,
        planner: Planner,
        scorer: SemanticScorer,
        coeffs: Optional[PolicyCoefficients] = None,
        thresholds: Optional[ThresholdConfig] = None,
        rulebook: Optional[VerbRuleBook] = None,
        base_risk: Optional[Dict[str, float]] = None,
        l4_mode: str = L4Mode.AUTO_ABORT,
        banned_retries: int = 1,
        reader: Optional[Callable[[str], str]] = None
    ):
        self.planner = planner
        self.scorer = scorer
        self.coeffs = coeffs or PolicyCoefficients()
        self.thresholds = thresholds or ThresholdConfig()
        self.rulebook = rulebook or RULEBOOK
        self.base_risk = base_risk
        if l4_mode not in L4Mode.ALL:
            raise ValueError(f"unknown L4 mode: {l4_mode}")
        self.l4_mode = l4_mode
        self.banned_retries = banned_retries
        self.reader = reader or input

    # -- L1 -------------------------------------------------------------------

    def apply_l1(
        self,
        node: TaskNode,
        cls: ErrorClass,
        env: EpisodeEnvironment,
        history: EpisodeHistory,
        error: float
    ) -> CorrectionOutcome:
        """
        Run the first triggering local rule with budget left.

        Success means every adjustment script ran and the node's error is back
        within its local threshold.

        Raises:
            NoRuleMatches: no rule of the node triggers on this error
            BudgetExhausted: the node's L1 budget or every triggering rule's budget is spent
        """
        triggered = [r for r in node.local_rules if r.triggers(cls, error, node.action)]
        if not triggered:
            raise NoRuleMatches(f"no local rule for {cls.name.value} at {node.id}")
        if history.l1_remaining(node.id) <= 0:
            raise BudgetExhausted(f"L1 budget spent at {node.id}")
        available = [r for r in triggered if history.rule_remaining(node.id, r) > 0]
        if not available:
            raise BudgetExhausted(f"rules {[r.name for r in triggered]} spent at {node.id}")

        rule = available[0]
        history.use_l1(node.id, rule)
        scripts = rule.scripts(node.action)
        outcomes = []
        for script in scripts:
            outcome = env.execute(script)
            outcomes.append(outcome)
            if not outcome.succeeded:
                break

        post_error = compute_error(env.state, node.expected_outcome)
        succeeded = (
            len(outcomes) == len(scripts)
            and outcomes[-1].succeeded
            and post_error <= node.local_threshold
        )
        logger.info(
            f"L1 {rule.name} at {node.id}: {' '.join(s.render() for s in scripts)} "
            f"-> {'fixed' if succeeded else 'not fixed'} (error={post_error:.3f})"
        )
        return CorrectionOutcome(CorrectionLevel.L1, succeeded, node.id, rule.name, scripts, outcomes, post_error)

    # -- L2 -------------------------------------------------------------------

    def apply_l2(
        self,
        graph: TaskGraph,
        node: TaskNode,
        belief: BeliefContext,
        observed,
        history: EpisodeHistory,
        seed: int,
        retrieval: Optional[Sequence[Any]] = None
    ) -> CorrectionOutcome:
        """
        Switch to one of the node's untried alternatives, chosen by the soft policy.

        Raises:
            OptionsExhausted: every alternative of the node was already tried
        """
        remaining = set(history.options_remaining(node.id, node.alternatives))
        candidates = [e for e in graph.options_for(node.id) if e.dst in remaining]
        if not candidates:
            raise OptionsExhausted(f"no untried option at {node.id}")

        scores = [
            score_components(graph, e, belief, observed, self.scorer, retrieval, self.coeffs, self.base_risk)
            for e in candidates
        ]
        selection = select_soft(scores, self.coeffs, seed)
        history.mark_option(node.id, selection.chosen.dst)
        logger.info(f"L2 at {node.id}: switching to {selection.chosen.dst} (p={selection.distribution[selection.index]:.3f})")
        return CorrectionOutcome(
            CorrectionLevel.L2, True, node.id, edge=selection.chosen, selection=selection
        )

    # -- L3 -------------------------------------------------------------------

    def _propose(self, request: ReplanRequest) -> PlanProposal:
        try:
            return self.planner.generate(request.goals, request.world, request)
        except (PlannerError, LLMError) as e:
            logger.error(f"Planner {self.planner.name} rejected the replan request: {e}")
            raise PlannerRejected(str(e))

    def apply_l3(self, request: ReplanRequest, history: EpisodeHistory) -> TaskGraph:
        """
        Regenerate the plan under the request's banned (action, context) pairs.

        A proposal that repeats a banned pair is retried ``banned_retries``
        times. On success the current revision's open failures are marked
        replanned and the history moves to the new revision.

        Raises:
            BudgetExhausted: no replans left
            PlannerRejected: planner error, empty plan or invalid graph
            BannedActionEmitted: the planner kept emitting banned pairs
        """
        if history.replans_left <= 0:
            raise BudgetExhausted("replan budget spent")

        proposal = self._propose(request)
        hits = proposal.banned_hits(request.world, request.banned)
        attempts = 0
        while hits and attempts < self.banned_retries:
            attempts += 1
            logger.warning(f"Planner emitted banned actions {[str(h) for h in hits]}; retrying")
            proposal = self._propose(request)
            hits = proposal.banned_hits(request.world, request.banned)
        if hits:
            logger.error(f"Planner output still contains banned actions: {[str(h) for h in hits]}")
            raise BannedActionEmitted([str(h) for h in hits])
        if not proposal.plan:
            raise PlannerRejected("planner returned an empty plan for unmet goals")

        try:
            graph = build_graph(proposal.plan, proposal.options, self.thresholds, self.rulebook,
                                revision=history.revision + 1)
        except GraphError as e:
            raise PlannerRejected(f"proposal does not compile: {e}")
        report = validate(graph)
        if not report.ok:
            raise PlannerRejected(f"proposal graph is invalid: {report}")

        history.resolve_revision(Resolution.REPLANNED)
        history.use_replan()
        history.banned = list(request.banned)
        logger.info(
            f"L3 replan -> revision {graph.revision}: {' '.join(proposal.lines())} "
            f"({len(request.banned)} banned, {history.replans_left} replans left)"
        )
        return graph

    # -- L4 -------------------------------------------------------------------

    def _ask(self, node: Optional[str], reason: str) -> str:
        prompt = f"L4 escalation at {node or '?'} ({reason}). abort|retry|skip? "
        try:
            reply = self.reader(prompt)
        except EOFError:
            logger.warning("No operator input; aborting")
            return TerminationAction.ABORT
        action = TerminationAction.ALIASES.get((reply or "").strip().lower())
        if action is None:
            logger.warning(f"Unrecognized operator reply {reply!r}; aborting")
            return TerminationAction.ABORT
        return action

    def escalate_l4(
        self,
        failures: Sequence[FailureRecord],
        node: Optional[str] = None,
        reason: str = "",
        mode: Optional[str] = None
    ) -> EpisodeTermination:
        """
        Hand the episode to a human, or abort when running unattended.

        Args:
            failures: Failure records of the episode; they form the dossier
            node: Node where escalation fired
            reason: Short cause, e.g. the error type or the exhausted budget
            mode: ``auto-abort`` or ``interactive``; defaults to the pipeline's mode
        """
        mode = mode or self.l4_mode
        dossier = [f.to_dict() for f in failures]
        action = TerminationAction.ABORT if mode == L4Mode.AUTO_ABORT else self._ask(node, reason)
        termination = EpisodeTermination(action, node, mode, reason, dossier)
        logger.info(f"L4 escalation at {node} ({reason}): {action}, {len(dossier)} failure records")
        return termination


def replan_request(goals: Sequence[str], world, history: EpisodeHistory) -> ReplanRequest:
    """Request built from every unresolved failure plus the pairs banned by earlier replans."""
    return ReplanRequest.from_failures(goals, world, history.failures, carried=history.banned)
