"""
Experiment harness: batch runs, coefficient ablations, threshold sweeps,
report regeneration and scenario validation.

Every command loads its scenarios before touching the output directory, so
a bad scenario path leaves no artifacts behind.
"""

import csv
import json
import os
import platform
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import metadata
from typing import Dict, List, Optional, Sequence, Tuple

from src.core.config import ExperimentConfig, effective_scale
from src.core.exceptions import ConfigError, GraphError, PlannerError, ScenarioError, ScriptError
from src.core.graph import ThresholdConfig, validate
from src.core.traversal import EpisodeResult, TraversalSettings, graph_for_scenario, run_batch
from src.modules.env_mod.scenario import Scenario
from src.modules.memory_mod.ccgr import TrajectoryGraph
from src.modules.metrics_mod.formulas import EDGE_KINDS, REGIMES, main_routing_share, mean, task_success_ratio
from src.modules.metrics_mod.report import MetricReport, build_report, render_table, write_all
from src.modules.planner_mod.base import Planner, PlannerRegistry, SemanticScorer
from src.modules.planner_mod.llm import DEFAULT_TEMPLATE_DIR
from src.modules.policy_mod.coefficients import PolicyCoefficients
from src.utils.llm_client import create_llm_client
from src.utils.logger import logger, set_level
from universe.base_world import HouseholdWorld, WorldRegistry

EPISODES_FILE = "episodes.jsonl"
MANIFEST_FILE = "manifest.json"
PACKAGES = ("numpy", "networkx", "PyYAML", "jinja2", "openai", "python-dotenv")

# LLM section keys that configure the prompt templates rather than the provider
_TEMPLATE_KEYS = ("template_dir",)


@dataclass
class RunOutcome:
    """Results and report of one batch, plus where its artifacts went."""
    results: List[EpisodeResult]
    report: MetricReport
    out_dir: str
    artifacts: Dict[str, str] = field(default_factory=dict)

    @property
    def all_succeeded(self) -> bool:
        return all(r.succeeded for r in self.results)


# -- setup ---------------------------------------------------------------------

def load_world(config: ExperimentConfig) -> HouseholdWorld:
    return WorldRegistry.load(config.world_config)


def load_scenarios(config: ExperimentConfig, world: Optional[HouseholdWorld] = None) -> List[Scenario]:
    """
    Raises:
        ScenarioError: a scenario is missing or malformed
    """
    world = world or load_world(config)
    return world.load_scenarios(config.scenarios)


def build_backends(config: ExperimentConfig, world: HouseholdWorld) -> Tuple[Planner, SemanticScorer]:
    """
    Planner and scorer named by the config.

    The LLM backends share one client; with ``fallback_stub`` they degrade to
    the world's stubs on LLM failures.
    """
    for kind, name, known in (
        ("planner", config.planner, PlannerRegistry.list_planners()),
        ("scorer", config.scorer, PlannerRegistry.list_scorers())
    ):
        if name not in known:
            raise ConfigError(f"unknown {kind} '{name}' (expected one of {sorted(known)})")

    stub_planner = world.stub_planner()
    stub_scorer = world.stub_scorer(config.retrieval.bonus)
    client = None
    if "llm" in (config.planner, config.scorer):
        options = {k: v for k, v in config.llm.items() if k not in _TEMPLATE_KEYS}
        client = create_llm_client(options.pop('provider', 'openai'), **options)
    template_dir = config.llm.get('template_dir', DEFAULT_TEMPLATE_DIR)

    if config.planner == "llm":
        planner = PlannerRegistry.get_planner("llm")(
            client, template_dir, fallback=stub_planner if config.fallback_stub else None
        )
    else:
        planner = stub_planner
    if config.scorer == "llm":
        scorer = PlannerRegistry.get_scorer("llm")(
            client, template_dir, fallback=stub_scorer if config.fallback_stub else None
        )
    else:
        scorer = stub_scorer
    return planner, scorer


def traversal_settings(config: ExperimentConfig, world: HouseholdWorld,
                       thresholds: Optional[ThresholdConfig] = None) -> TraversalSettings:
    return TraversalSettings(
        budgets=config.budgets,
        thresholds=thresholds or scaled_thresholds(config, 1.0),
        base_risk=dict(world.config.base_risk),
        l4_mode=config.l4_mode,
        failure_probability=config.failure_probability,
        retrieval_k=config.retrieval.top_k
    )


def scaled_thresholds(config: ExperimentConfig, scale: float) -> ThresholdConfig:
    """Config thresholds with the coefficient file's epsilon scale and a sweep scale applied."""
    base = config.thresholds
    return base.scaled(base.scale * config.coefficients.epsilon_scale * scale)


def open_memory(config: ExperimentConfig) -> Optional[TrajectoryGraph]:
    """Memory loaded from ``memory_load``, a fresh one when only ``memory_save`` is set, else None."""
    if config.memory_load:
        return TrajectoryGraph.load(config.memory_load)
    if config.memory_save:
        r = config.retrieval
        return TrajectoryGraph(r.window, r.semantic_weight, r.structural_weight)
    return None


def package_versions() -> Dict[str, str]:
    versions = {'python': platform.python_version()}
    for name in PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "not installed"
    return versions


# -- artifacts -----------------------------------------------------------------

def write_episodes(results: Sequence[EpisodeResult], path: str) -> str:
    with open(path, 'w', encoding='utf-8') as f:
        for result in results:
            f.write(json.dumps(result.to_dict(), sort_keys=True) + "\n")
    return path


def read_episodes(path: str) -> List[EpisodeResult]:
    """
    Raises:
        ConfigError: the file is missing or not JSON Lines
    """
    if not os.path.exists(path):
        raise ConfigError(f"episode file not found: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return [EpisodeResult.from_dict(json.loads(line)) for line in f if line.strip()]
    except (json.JSONDecodeError, KeyError) as e:
        raise ConfigError(f"malformed episode file {path}: {e}")


def write_manifest(config: ExperimentConfig, scenarios: Sequence[Scenario], seeds: Sequence[int],
                   path: str, command: str, extra: Optional[dict] = None) -> str:
    manifest = {
        'command': command,
        'config_hash': config.config_hash(),
        'config': config.to_dict(),
        'seeds': list(seeds),
        'scenarios': {s.name: s.path for s in scenarios},
        'versions': package_versions(),
        'timestamp': datetime.now(timezone.utc).isoformat()
    }
    manifest.update(extra or {})
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return path


def execute(
    config: ExperimentConfig,
    world: HouseholdWorld,
    scenarios: Sequence[Scenario],
    out_dir: str,
    coeffs: PolicyCoefficients,
    thresholds: Optional[ThresholdConfig] = None,
    command: str = "run",
    extra: Optional[dict] = None,
    save_memory: bool = True
) -> RunOutcome:
    """
    Run one batch and write its episodes, logs, metrics and manifest into ``out_dir``.

    The memory is saved to ``memory_save`` only when ``save_memory`` is set.
    """
    planner, scorer = build_backends(config, world)
    memory = open_memory(config)
    seeds = config.seed_list()

    os.makedirs(out_dir, exist_ok=True)
    settings = traversal_settings(config, world, thresholds)
    results = run_batch(
        scenarios, coeffs, planner, scorer,
        repetitions=config.repetitions,
        seeds=seeds,
        settings=settings,
        memory=memory,
        jobs=config.jobs,
        log_dir=os.path.join(out_dir, "logs")
    )

    report = build_report(results, {s.name: s for s in scenarios}, world.config.base_risk)
    artifacts = write_all(report, out_dir)
    artifacts['episodes'] = write_episodes(results, os.path.join(out_dir, EPISODES_FILE))
    artifacts['manifest'] = write_manifest(
        config, scenarios, seeds, os.path.join(out_dir, MANIFEST_FILE), command,
        dict(extra or {}, coefficients=coeffs.to_dict(), thresholds=settings.thresholds.to_dict())
    )
    if memory is not None and config.memory_save and save_memory:
        artifacts['memory'] = memory.save(config.memory_save)

    failed = [r.episode_id for r in results if not r.succeeded]
    logger.info(f"Batch finished: {len(results) - len(failed)}/{len(results)} succeeded, artifacts in {out_dir}")
    if failed:
        logger.info(f"Unsuccessful episodes: {', '.join(failed)}")
    return RunOutcome(results, report, out_dir, artifacts)


# -- commands ------------------------------------------------------------------

def cmd_run(config: ExperimentConfig) -> int:
    """
    Run the configured scenarios once per seed.

    Returns:
        0 when every episode succeeded, 1 otherwise
    """
    set_level(config.log_level)
    world = load_world(config)
    scenarios = load_scenarios(config, world)
    outcome = execute(config, world, scenarios, config.output_dir, config.policy(),
                      extra={'variant': config.ablation})
    print(render_table(outcome.report), end="")
    return 0 if outcome.all_succeeded else 1


def _ablation_row(outcome: RunOutcome) -> dict:
    results = outcome.results
    return {
        'tsr': task_success_ratio(results),
        'mean_recovery': mean(r.recovery for r in results),
        'mean_substeps': mean(r.substeps for r in results),
        'sr_final': outcome.report.aggregate.get('sr_final'),
        'regimes': outcome.report.regimes,
        'regime_counts': outcome.report.regime_counts
    }


def render_ablation(rows: Dict[str, dict]) -> str:
    """Per-variant TSR and recovery table followed by the regime x edge-kind grid per variant."""
    out = [f"{'variant':<10} {'tsr':>7} {'recovery':>9} {'substeps':>9}"]
    for variant, row in rows.items():
        tsr = "-" if row['tsr'] is None else f"{row['tsr']:.3f}"
        rec = "-" if row['mean_recovery'] is None else f"{row['mean_recovery']:.3f}"
        sub = "-" if row['mean_substeps'] is None else f"{row['mean_substeps']:.3f}"
        out.append(f"{variant:<10} {tsr:>7} {rec:>9} {sub:>9}")
    out.append("")
    out.append(f"{'regime':<10} {'variant':<10} " + " ".join(f"{k:>6}" for k in EDGE_KINDS))
    for regime in REGIMES:
        for variant, row in rows.items():
            shares = row['regimes'].get(regime, {})
            out.append(f"{regime:<10} {variant:<10} " + " ".join(f"{shares.get(k, 0.0):>6.3f}" for k in EDGE_KINDS))
    return "\n".join(out) + "\n"


def cmd_ablate(config: ExperimentConfig) -> int:
    """
    Run every requested variant on the same scenarios and seeds.

    Memory, when configured, is reloaded per variant so no variant sees
    another's trajectories.

    Raises:
        ConfigError: fewer than two variants
    """
    if len(config.variants) < 2:
        raise ConfigError(f"ablation needs at least two variants, got {config.variants}")
    set_level(config.log_level)
    world = load_world(config)
    scenarios = load_scenarios(config, world)

    rows: Dict[str, dict] = {}
    all_ok = True
    for variant in config.variants:
        logger.info(f"Ablation variant: {variant}")
        variant_config = config.with_overrides(ablation=variant)
        outcome = execute(
            variant_config, world, scenarios, os.path.join(config.output_dir, variant),
            variant_config.policy(), command="ablate", extra={'variant': variant}, save_memory=False
        )
        rows[variant] = _ablation_row(outcome)
        all_ok = all_ok and outcome.all_succeeded

    summary = {
        'config_hash': config.config_hash(),
        'seeds': config.seed_list(),
        'scenarios': [s.name for s in scenarios],
        'variants': rows
    }
    with open(os.path.join(config.output_dir, "ablation.json"), 'w', encoding='utf-8') as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    table = render_ablation(rows)
    with open(os.path.join(config.output_dir, "ablation.txt"), 'w', encoding='utf-8') as f:
        f.write(table)
    print(table, end="")
    return 0 if all_ok else 1


def cmd_sweep(config: ExperimentConfig) -> int:
    """
    Run the batch once per threshold scale and tabulate TSR against scale.

    Raises:
        ConfigError: fewer than two scales, or a negative scale
    """
    if len(config.epsilon_scales) < 2:
        raise ConfigError(f"sweep needs at least two epsilon scales, got {config.epsilon_scales}")
    set_level(config.log_level)
    world = load_world(config)
    scenarios = load_scenarios(config, world)
    coeffs = config.policy()

    rows = []
    all_ok = True
    for scale in config.epsilon_scales:
        applied = effective_scale(scale)
        if applied != scale:
            logger.warning(f"Epsilon scale {scale} clamped to {applied}")
        thresholds = scaled_thresholds(config, applied)
        outcome = execute(
            config, world, scenarios,
            os.path.join(config.output_dir, f"scale_{scale:g}"), coeffs, thresholds,
            command="sweep", extra={'epsilon_scale': scale, 'applied_scale': applied}, save_memory=False
        )
        rows.append({
            'scale': scale,
            'applied_scale': applied,
            'tsr': task_success_ratio(outcome.results),
            'sr_final': outcome.report.aggregate.get('sr_final'),
            'mean_recovery': mean(r.recovery for r in outcome.results),
            'main_share': main_routing_share(outcome.results)
        })
        all_ok = all_ok and outcome.all_succeeded

    with open(os.path.join(config.output_dir, "sweep.json"), 'w', encoding='utf-8') as f:
        json.dump({'config_hash': config.config_hash(), 'seeds': config.seed_list(), 'rows': rows},
                  f, indent=2, sort_keys=True)
    columns = ['scale', 'applied_scale', 'tsr', 'sr_final', 'mean_recovery', 'main_share']
    with open(os.path.join(config.output_dir, "sweep.csv"), 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow(["" if row[c] is None else row[c] for c in columns])
    for row in rows:
        tsr = "-" if row['tsr'] is None else f"{row['tsr']:.3f}"
        print(f"scale {row['scale']:<6g} tsr {tsr}  main {row['main_share'] or 0.0:.3f}")
    return 0 if all_ok else 1


def cmd_report(run_dir: str, out_dir: Optional[str] = None, config: Optional[ExperimentConfig] = None) -> int:
    """Recompute the metric report of a finished run from its episode file."""
    results = read_episodes(os.path.join(run_dir, EPISODES_FILE))
    scenarios = {}
    base_risk = None
    if config is not None:
        world = load_world(config)
        base_risk = world.config.base_risk
        try:
            scenarios = {s.name: s for s in load_scenarios(config, world)}
        except ScenarioError as e:
            logger.warning(f"Complexity scores skipped: {e}")
    report = build_report(results, scenarios, base_risk)
    write_all(report, out_dir or run_dir)
    print(render_table(report), end="")
    return 0 if all(r.succeeded for r in results) else 1


def cmd_validate(config: ExperimentConfig) -> int:
    """
    Parse every scenario and validate the graph compiled from it.

    Returns:
        0 when all graphs are valid

    Raises:
        ScenarioError: a scenario file fails to load
    """
    set_level(config.log_level)
    world = load_world(config)
    scenarios = load_scenarios(config, world)
    planner, _ = build_backends(config.with_overrides(planner="stub", scorer="stub"), world)
    thresholds = scaled_thresholds(config, 1.0)
    problems = 0
    for scenario in scenarios:
        try:
            report = validate(graph_for_scenario(scenario, thresholds, planner=planner))
        except (GraphError, PlannerError, ScriptError) as e:
            print(f"{scenario.name}: {e}")
            problems += 1
            continue
        if report.ok:
            print(f"{scenario.name}: ok")
        else:
            problems += 1
            for violation in report.violations:
                print(f"{scenario.name}: {violation}")
    if problems:
        raise ScenarioError(f"{problems} scenario(s) failed validation")
    return 0
