"""
Error-driven traversal of a task graph.

Each iteration checks the goals, executes the current node's action, measures
the error against the node's expected outcome and routes on the node's
thresholds: a low error advances along a soft-selected Main/Opt edge, a
moderate one goes through classification and local correction, a high one
falls back to replanning or escalation. Every executed step, correction
sub-step and escalation dossier becomes one StepRecord, published on the
episode's EventBus.
"""

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence

from src.core.event_bus import Event, EventBus, EventTypes
from src.core.exceptions import (
    BannedActionEmitted,
    BudgetExhausted,
    ConfigError,
    InvalidGraph,
    NoRuleMatches,
    OptionsExhausted,
    PlannerRejected
)
from src.core.graph import EdgeKind, TERMINAL_ID, TaskGraph, TaskNode, ThresholdConfig, build_graph, validate
from src.core.history import CorrectionBudgets, EpisodeHistory, FailureRecord, RecordType, Resolution, StepRecord
from src.core.world_state import WorldState
from src.modules.correction_mod.pipeline import CorrectionPipeline, L4Mode, TerminationAction, replan_request
from src.modules.env_mod.rules import RULEBOOK, VerbRuleBook
from src.modules.env_mod.scenario import Scenario
from src.modules.env_mod.script import ActionScript
from src.modules.env_mod.simulator import EpisodeEnvironment, StepOutcome, check_goal
from src.modules.error_mod.engine import classify, compute_error, level_for
from src.modules.error_mod.taxonomy import CorrectionLevel, ErrorClass
from src.modules.memory_mod.ccgr import RetrievalQuery, TrajectoryGraph
from src.modules.planner_mod.base import Planner, SemanticScorer
from src.modules.policy_mod.coefficients import PolicyCoefficients
from src.modules.policy_mod.guards import admissible, regime_of, route_by_threshold
from src.modules.policy_mod.scoring import BeliefContext, Selection, decision_seed, score_components, select_soft
from src.utils.logger import logger


class EpisodeStatus:
    SUCCESS = "Success"
    FAILED = "Failed"
    ESCALATED = "Escalated"
    STEP_LIMIT = "StepLimit"

    ALL = (SUCCESS, FAILED, ESCALATED, STEP_LIMIT)


@dataclass
class TraversalSettings:
    """Per-episode knobs that are not policy coefficients."""
    budgets: CorrectionBudgets = field(default_factory=CorrectionBudgets)
    thresholds: ThresholdConfig = field(default_factory=ThresholdConfig)
    rulebook: Optional[VerbRuleBook] = None
    base_risk: Optional[Dict[str, float]] = None
    l4_mode: str = L4Mode.AUTO_ABORT
    banned_retries: int = 1
    failure_probability: float = 0.0
    retrieval_k: int = 3
    ingest_memory: bool = True
    seed: Optional[int] = None
    episode_id: Optional[str] = None
    log_path: Optional[str] = None
    reader: Optional[Callable[[str], str]] = None


@dataclass
class EpisodeResult:
    """Outcome of one episode plus everything the metrics need to recompute from it."""
    scenario: str
    status: str
    steps: int
    goal_ratio: float
    history: EpisodeHistory
    seed: int = 0
    repetition: int = 0
    substeps: int = 0
    recovery: int = 0
    executed_actions: List[str] = field(default_factory=list)
    goals: Dict[str, float] = field(default_factory=dict)
    initial_state: Optional[WorldState] = None
    final_state: Optional[WorldState] = None
    optimal_length: int = 1
    reference: Optional[List[str]] = None
    episode_id: str = ""
    log_path: Optional[str] = None

    @property
    def succeeded(self) -> bool:
        return self.status == EpisodeStatus.SUCCESS

    @property
    def replans(self) -> int:
        return self.history.replans_used

    @property
    def failures(self) -> List[FailureRecord]:
        return self.history.failures

    @property
    def error_types(self) -> List[str]:
        return [f.error_class.name.value for f in self.history.failures]

    @property
    def corrected(self) -> bool:
        """Whether at least one failure was closed by a local correction or an option switch."""
        return any(f.resolution in (Resolution.RETRIED, Resolution.OPTION) for f in self.history.failures)

    def to_dict(self) -> dict:
        return {
            'scenario': self.scenario,
            'episode_id': self.episode_id,
            'status': self.status,
            'steps': self.steps,
            'substeps': self.substeps,
            'recovery': self.recovery,
            'replans': self.replans,
            'goal_ratio': self.goal_ratio,
            'seed': self.seed,
            'repetition': self.repetition,
            'executed_actions': list(self.executed_actions),
            'goals': dict(self.goals),
            'initial_state': self.initial_state.to_dict() if self.initial_state else None,
            'final_state': self.final_state.to_dict() if self.final_state else None,
            'optimal_length': self.optimal_length,
            'reference': self.reference,
            'log_path': self.log_path,
            'history': self.history.to_dict()
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'EpisodeResult':
        return cls(
            scenario=data['scenario'],
            status=data['status'],
            steps=data['steps'],
            goal_ratio=data['goal_ratio'],
            history=EpisodeHistory.from_dict(data.get('history', {})),
            seed=data.get('seed', 0),
            repetition=data.get('repetition', 0),
            substeps=data.get('substeps', 0),
            recovery=data.get('recovery', 0),
            executed_actions=list(data.get('executed_actions', [])),
            goals=dict(data.get('goals', {})),
            initial_state=WorldState.from_dict(data['initial_state']) if data.get('initial_state') else None,
            final_state=WorldState.from_dict(data['final_state']) if data.get('final_state') else None,
            optimal_length=data.get('optimal_length', 1),
            reference=data.get('reference'),
            episode_id=data.get('episode_id', ''),
            log_path=data.get('log_path')
        )


class TrajectoryLog:
    """
    JSON Lines writer for one episode; one line per published step record.

    Attach it to the episode's bus before the episode starts; the file is
    truncated on attach.
    """

    def __init__(self, path: str):
        self.path = path
        self.lines = 0

    def attach(self, event_bus: EventBus) -> 'TrajectoryLog':
        os.makedirs(os.path.dirname(self.path) or '.', exist_ok=True)
        open(self.path, 'w', encoding='utf-8').close()
        event_bus.subscribe(EventTypes.STEP_RECORDED, self.on_step)
        return self

    def on_step(self, event: Event):
        with open(self.path, 'a', encoding='utf-8') as f:
            f.write(json.dumps(event.data, sort_keys=True) + "\n")
        self.lines += 1

    @staticmethod
    def read(path: str) -> List[StepRecord]:
        with open(path, 'r', encoding='utf-8') as f:
            return [StepRecord.from_dict(json.loads(line)) for line in f if line.strip()]


def graph_for_scenario(scenario: Scenario, thresholds: Optional[ThresholdConfig] = None,
                       rulebook: Optional[VerbRuleBook] = None, planner: Optional[Planner] = None) -> TaskGraph:
    """
    Compile the scenario's authored plan and options into revision 0.

    A scenario without an authored plan asks ``planner`` for one.
    """
    if not scenario.plan and planner is not None:
        proposal = planner.generate(sorted(scenario.goal_set()), scenario.initial_state())
        logger.info(f"Scenario {scenario.name} has no plan; {planner.name} proposed {len(proposal.plan)} steps")
        return build_graph(proposal.plan, proposal.options, thresholds, rulebook)
    return build_graph(scenario.parsed_plan(), scenario.parsed_options(), thresholds, rulebook)


class TraversalEngine:
    """
    One episode over one graph.

    The engine owns the environment, the history and the current graph; a
    replan swaps ``self.graph`` for the new revision and restarts at its root.
    """

    def __init__(
        self,
        graph: TaskGraph,
        scenario: Scenario,
        coeffs: PolicyCoefficients,
        planner: Planner,
        scorer: SemanticScorer,
        memory: Optional[TrajectoryGraph] = None,
        settings: Optional[TraversalSettings] = None,
        event_bus: Optional[EventBus] = None
    ):
        report = validate(graph)
        if not report.ok:
            raise InvalidGraph(report)

        self.settings = settings or TraversalSettings()
        self.graph = graph
        self.scenario = scenario
        self.coeffs = coeffs
        self.scorer = scorer
        self.memory = memory
        self.seed = scenario.seed if self.settings.seed is None else self.settings.seed
        self.goals = sorted(scenario.goal_set())
        self.rulebook = self.settings.rulebook or RULEBOOK
        self.event_bus = event_bus or EventBus()
        self.episode_id = self.settings.episode_id or f"{scenario.name}__s{self.seed}"

        self.env = EpisodeEnvironment(
            scenario.initial_state(), scenario.faults, self.seed,
            self.rulebook, self.settings.failure_probability
        )
        self.history = EpisodeHistory(self.settings.budgets)
        self.pipeline = CorrectionPipeline(
            planner, scorer, coeffs,
            thresholds=self.settings.thresholds,
            rulebook=self.rulebook,
            base_risk=self.settings.base_risk,
            l4_mode=self.settings.l4_mode,
            banned_retries=self.settings.banned_retries,
            reader=self.settings.reader
        )

        self.current = graph.root
        self.steps = 0
        self.substeps = 0
        self.recovery = 0
        self.completed: List[str] = []
        self._visits: Dict[str, int] = {}
        self.log: Optional[TrajectoryLog] = None
        if self.settings.log_path:
            self.log = TrajectoryLog(self.settings.log_path).attach(self.event_bus)

    # -- events and records ---------------------------------------------------

    def _emit(self, event_type: str, data: Dict[str, Any]):
        self.event_bus.emit(event_type, data, source=self.episode_id)

    def _append(self, record: StepRecord):
        self.history.append_step(record)
        self._emit(EventTypes.STEP_RECORDED, record.to_dict())

    def _goal_ratio(self, state: Optional[WorldState] = None) -> float:
        return check_goal(state or self.env.state, self.goals).ratio

    def _record(self, node: TaskNode, outcome: StepOutcome, error: float, pre_facts: List[str], held: bool,
                edge: EdgeKind, regime: str, cls: Optional[ErrorClass] = None,
                level: Optional[CorrectionLevel] = None):
        self._append(StepRecord(
            step=outcome.step_index,
            node=node.id,
            action=node.action.render(),
            edge_kind=edge.value,
            error_value=error,
            error_type=cls.name.value if cls else None,
            level=level.value if level else None,
            outcome=outcome.summary(),
            record_type=RecordType.STEP,
            revision=self.graph.revision,
            regime=regime,
            env_step=outcome.step_index,
            preconditions_held=held,
            pre_facts=pre_facts,
            post_facts=sorted(outcome.observed.facts()),
            goal_ratio=self._goal_ratio(outcome.observed)
        ))

    def _record_substep(self, node: TaskNode, script: ActionScript, outcome: StepOutcome,
                        pre_facts: List[str], held: bool):
        expected = self.env.expected_outcome(script)
        self._append(StepRecord(
            step=outcome.step_index,
            node=node.id,
            action=script.render(),
            edge_kind=EdgeKind.CORR.value,
            error_value=compute_error(outcome.observed, expected),
            level=CorrectionLevel.L1.value,
            outcome=outcome.summary(),
            record_type=RecordType.SUBSTEP,
            revision=self.graph.revision,
            env_step=outcome.step_index,
            preconditions_held=held,
            pre_facts=pre_facts,
            post_facts=sorted(outcome.observed.facts()),
            goal_ratio=self._goal_ratio(outcome.observed)
        ))

    # -- decisions ------------------------------------------------------------

    def _belief(self, node: TaskNode) -> BeliefContext:
        streaks = {nid: self.history.failure_streak(nid) for nid in self.graph.nodes}
        return BeliefContext(
            node=node.id,
            steps_elapsed=self.steps,
            consecutive_failures={nid: n for nid, n in streaks.items() if n},
            last_error=self.history.last_error_class(),
            remaining_goals=len(check_goal(self.env.state, self.goals).unsatisfied),
            goals=frozenset(self.goals),
            local_threshold=node.local_threshold,
            max_threshold=node.max_threshold,
            options_left=len(self.history.options_remaining(node.id, node.alternatives)),
            l1_left=self.history.l1_remaining(node.id)
        )

    def _retrieve(self) -> Optional[list]:
        if self.memory is None:
            return None
        recent = [s.action_verb for s in self.history.steps[-self.memory.window:]]
        query = RetrievalQuery.from_context(self.goals, self.env.state, recent)
        return self.memory.retrieve(query, k=self.settings.retrieval_k)

    def _decision_seed(self, node: str) -> int:
        key = f"{self.graph.revision}:{node}"
        self._visits[key] = self._visits.get(key, 0) + 1
        return decision_seed(self.seed, self.graph.revision, node, self._visits[key])

    def _advance(self, node: TaskNode, error: float) -> Selection:
        belief = self._belief(node)
        candidates = admissible(self.graph.forward_edges(node.id), belief, error)
        retrieval = self._retrieve()
        scores = [
            score_components(self.graph, e, belief, self.env.state, self.scorer, retrieval,
                             self.coeffs, self.settings.base_risk)
            for e in candidates
        ]
        selection = select_soft(scores, self.coeffs, self._decision_seed(node.id))
        logger.debug(
            f"{self.episode_id} r{self.graph.revision} {node.id} -> {selection.chosen.dst} "
            f"({selection.chosen.kind.value}, p={selection.distribution[selection.index]:.3f})"
        )
        return selection

    # -- correction -----------------------------------------------------------

    def _next_level(self, node: TaskNode, level: CorrectionLevel) -> CorrectionLevel:
        """Level to try after ``level`` could not be applied at ``node``."""
        if level is CorrectionLevel.L1 and self.history.options_remaining(node.id, node.alternatives):
            return CorrectionLevel.L2
        if level.rank <= CorrectionLevel.L2.rank and self.history.replans_left > 0:
            return CorrectionLevel.L3
        return CorrectionLevel.L4

    def _correct(self, node: TaskNode, outcome: StepOutcome, error: float, kind: EdgeKind,
                 regime: str, pre_facts: List[str], held: bool, room: str) -> Optional[str]:
        self.history.bump_streak(node.id)
        cls = classify(outcome, history=self.history, node=node.id, error=error)
        level = level_for(cls, error, node, self.history)
        if kind is EdgeKind.FB:
            level = CorrectionLevel.highest(CorrectionLevel.L3, level)
            if level is CorrectionLevel.L3 and self.history.replans_left <= 0:
                level = CorrectionLevel.L4

        failure = self.history.record_failure(FailureRecord(
            node=node.id,
            revision=self.graph.revision,
            action=node.action.render(),
            error_class=cls,
            error_value=error,
            step_index=outcome.step_index,
            room=room
        ))
        logger.info(
            f"{self.episode_id} step {outcome.step_index}: {node.action.render()} failed "
            f"with {cls.name.value} (error={error:.3f}) -> {level.value}"
        )

        while True:
            self.history.note_level(node.id, level)
            failure.attempt(level)

            if level is CorrectionLevel.L1:
                try:
                    corr = self.pipeline.apply_l1(node, cls, self.env, self.history, error)
                except (NoRuleMatches, BudgetExhausted) as e:
                    logger.debug(f"L1 unavailable at {node.id}: {e}")
                    level = self._next_level(node, level)
                    continue
                self._record(node, outcome, error, pre_facts, held, EdgeKind.CORR, regime, cls, level)
                sub_pre = outcome.observed
                for script, sub in zip(corr.scripts, corr.outcomes):
                    self._record_substep(node, script, sub, sorted(sub_pre.facts()),
                                         self.env.preconditions_hold(script, sub_pre))
                    sub_pre = sub.observed
                self.substeps += len(corr.outcomes)
                self.recovery += len(corr.outcomes)
                self._emit(EventTypes.CORRECTION_APPLIED, corr.to_dict())
                if corr.succeeded:
                    self.history.resolve_node(node.id, Resolution.RETRIED)
                    self.history.reset_streak(node.id)
                    self.completed.append(node.action.render())
                    self.current = self._advance(node, corr.error_value).chosen.dst
                return None

            if level is CorrectionLevel.L2:
                try:
                    corr = self.pipeline.apply_l2(
                        self.graph, node, self._belief(node), self.env.state, self.history,
                        self._decision_seed(node.id), self._retrieve()
                    )
                except OptionsExhausted as e:
                    logger.debug(f"L2 unavailable at {node.id}: {e}")
                    level = self._next_level(node, level)
                    continue
                self._record(node, outcome, error, pre_facts, held, EdgeKind.OPT, regime, cls, level)
                self.history.resolve_node(node.id, Resolution.OPTION)
                self.recovery += 1
                self._emit(EventTypes.OPTION_SWITCHED, corr.to_dict())
                self.current = corr.edge.dst
                return None

            if level is CorrectionLevel.L3:
                request = replan_request(self.goals, self.env.state, self.history)
                try:
                    graph = self.pipeline.apply_l3(request, self.history)
                except (PlannerRejected, BannedActionEmitted, BudgetExhausted) as e:
                    logger.warning(f"Replan failed at {node.id}: {e}")
                    level = CorrectionLevel.L4
                    continue
                self._record(node, outcome, error, pre_facts, held, EdgeKind.FB, regime, cls, level)
                self.recovery += 1
                self.graph = graph
                self.current = graph.root
                self._emit(EventTypes.GRAPH_REPLANNED, {
                    'node': node.id,
                    'revision': graph.revision,
                    'plan': [a.render() for a in graph.main_actions()],
                    'banned': [b.to_list() for b in request.banned]
                })
                return None

            termination = self.pipeline.escalate_l4(self.history.failures, node.id, cls.name.value)
            self._record(node, outcome, error, pre_facts, held, EdgeKind.FB, regime, cls, level)
            if termination.terminal:
                self._append(StepRecord(
                    step=self.history.next_step(),
                    node=node.id,
                    action=node.action.render(),
                    edge_kind=EdgeKind.FB.value,
                    error_value=error,
                    error_type=cls.name.value,
                    level=CorrectionLevel.L4.value,
                    outcome={'dossier': termination.dossier, 'mode': termination.mode},
                    record_type=RecordType.DOSSIER,
                    revision=self.graph.revision
                ))
                self._emit(EventTypes.EPISODE_ESCALATED, termination.to_dict())
                return EpisodeStatus.ESCALATED
            if termination.action == TerminationAction.SKIP:
                self.history.resolve_node(node.id, Resolution.SKIPPED)
                self.current = self.graph.next_node(node.id) or TERMINAL_ID
            return None

    # -- loop -----------------------------------------------------------------

    def tick(self) -> Optional[str]:
        """Run one node; returns a final status or None to continue."""
        report = check_goal(self.env.state, self.goals)
        if report.complete:
            return EpisodeStatus.SUCCESS
        node = self.graph.node(self.current)
        if not node.is_action:
            return EpisodeStatus.FAILED
        if self.steps >= self.settings.budgets.step_limit:
            return EpisodeStatus.STEP_LIMIT

        before = self.env.state
        pre_facts = sorted(before.facts())
        held = self.env.preconditions_hold(node.action, before)
        room = before.agent.room
        outcome = self.env.execute(node.action)
        self.steps += 1

        error = compute_error(outcome.observed, node.expected_outcome)
        kind = route_by_threshold(error, node)
        regime = regime_of(error, node)

        if kind is EdgeKind.MAIN:
            self.history.resolve_node(node.id, Resolution.RETRIED)
            self.history.reset_streak(node.id)
            selection = self._advance(node, error)
            self._record(node, outcome, error, pre_facts, held, selection.chosen.kind, regime)
            self.completed.append(node.action.render())
            self.current = selection.chosen.dst
            return None
        return self._correct(node, outcome, error, kind, regime, pre_facts, held, room)

    def run(self) -> EpisodeResult:
        logger.info(f"Episode {self.episode_id} started: {len(self.graph.main_path())} planned steps, seed {self.seed}")
        self._emit(EventTypes.EPISODE_STARTED, {
            'scenario': self.scenario.name,
            'seed': self.seed,
            'goals': list(self.goals),
            'plan': [a.render() for a in self.graph.main_actions()]
        })

        status = None
        while status is None:
            status = self.tick()

        result = EpisodeResult(
            scenario=self.scenario.name,
            status=status,
            steps=self.steps,
            goal_ratio=self._goal_ratio(),
            history=self.history,
            seed=self.seed,
            substeps=self.substeps,
            recovery=self.recovery,
            executed_actions=list(self.completed),
            goals=self.scenario.goal_weights(),
            initial_state=self.scenario.initial_state(),
            final_state=self.env.state.copy(),
            optimal_length=self.scenario.optimal(),
            reference=self.scenario.reference,
            episode_id=self.episode_id,
            log_path=self.log.path if self.log else None
        )
        self._emit(EventTypes.EPISODE_FINISHED, {
            'status': status,
            'steps': self.steps,
            'substeps': self.substeps,
            'goal_ratio': result.goal_ratio,
            'replans': result.replans
        })
        logger.info(
            f"Episode {self.episode_id} finished: {status}, {self.steps} steps, "
            f"{self.substeps} sub-steps, goal ratio {result.goal_ratio:.2f}"
        )

        if self.memory is not None and self.settings.ingest_memory:
            self.memory.ingest(self.history, self.goals, self.episode_id)
        return result


def run_episode(
    graph: Optional[TaskGraph],
    scenario: Scenario,
    coeffs: PolicyCoefficients,
    planner: Planner,
    scorer: SemanticScorer,
    memory: Optional[TrajectoryGraph] = None,
    settings: Optional[TraversalSettings] = None,
    event_bus: Optional[EventBus] = None
) -> EpisodeResult:
    """
    Execute one episode.

    Args:
        graph: Graph to traverse; None compiles the scenario's own plan
        scenario: World, goals and fault schedule
        coeffs: Transition policy coefficients
        planner: Planner used by L3 replanning
        scorer: Semantic scorer used by the policy
        memory: Trajectory memory consulted at every decision and fed afterwards
        settings: Budgets, thresholds, L4 mode, seed override and log path
        event_bus: Bus for step events (a private one when omitted)

    Raises:
        InvalidGraph: the graph fails validation
    """
    settings = settings or TraversalSettings()
    if graph is None:
        graph = graph_for_scenario(scenario, settings.thresholds, settings.rulebook, planner)
    return TraversalEngine(graph, scenario, coeffs, planner, scorer, memory, settings, event_bus).run()


def run_batch(
    scenarios: Sequence[Scenario],
    coeffs: PolicyCoefficients,
    planner: Planner,
    scorer: SemanticScorer,
    repetitions: int = 1,
    seeds: Optional[Sequence[int]] = None,
    settings: Optional[TraversalSettings] = None,
    memory: Optional[TrajectoryGraph] = None,
    jobs: int = 1,
    log_dir: Optional[str] = None
) -> List[EpisodeResult]:
    """
    Run every scenario ``repetitions`` times, one seed per repetition.

    Results are ordered by (scenario, repetition). Episodes run on a thread
    pool when ``jobs > 1``, the planner and scorer are share-safe and no
    memory is attached; otherwise sequentially.

    Raises:
        ConfigError: seed count differs from the repetition count
    """
    seeds = list(seeds) if seeds is not None else list(range(repetitions))
    if len(seeds) != repetitions:
        raise ConfigError(f"{repetitions} repetitions need {repetitions} seeds, got {len(seeds)}")
    base = settings or TraversalSettings()

    jobs_list = []
    for scenario in scenarios:
        for rep, seed in enumerate(seeds):
            episode_id = f"{scenario.name}__r{rep}"
            log_path = os.path.join(log_dir, f"{episode_id}.jsonl") if log_dir else None
            episode_settings = replace(base, seed=seed, episode_id=episode_id, log_path=log_path)
            jobs_list.append((scenario, rep, episode_settings))

    def run_one(item) -> EpisodeResult:
        scenario, rep, episode_settings = item
        result = run_episode(None, scenario, coeffs, planner, scorer, memory, episode_settings)
        result.repetition = rep
        return result

    parallel = jobs > 1 and memory is None and planner.share_safe and scorer.share_safe
    if jobs > 1 and not parallel:
        logger.info("Running episodes sequentially (memory attached or backends not share-safe)")
    logger.info(f"Batch: {len(scenarios)} scenarios x {repetitions} repetitions, jobs={jobs if parallel else 1}")

    if parallel:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run_one, jobs_list))
    return [run_one(item) for item in jobs_list]
