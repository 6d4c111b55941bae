"""
Experiment configuration.

Loaded from YAML (``universe/config.yaml`` by default); CLI flags are applied
on top with ``with_overrides``. Every invalid value raises ConfigError.
"""

import hashlib
import json
import os
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional

import yaml

from src.core.exceptions import ConfigError
from src.core.graph import ThresholdConfig
from src.core.history import CorrectionBudgets
from src.modules.correction_mod.pipeline import L4Mode
from src.modules.policy_mod.coefficients import VARIANTS, PolicyCoefficients

DEFAULT_CONFIG_PATH = "universe/config.yaml"
DEFAULT_WORLD_CONFIG = "universe/household/config.yaml"
MIN_EPSILON_SCALE = 1e-3


@dataclass
class RetrievalConfig:
    window: int = 5
    semantic_weight: float = 0.5
    structural_weight: float = 0.5
    top_k: int = 3
    bonus: float = 0.2

    def to_dict(self) -> dict:
        return {
            'window': self.window,
            'semantic_weight': self.semantic_weight,
            'structural_weight': self.structural_weight,
            'top_k': self.top_k,
            'bonus': self.bonus
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'RetrievalConfig':
        return cls(
            window=int(data.get('window', 5)),
            semantic_weight=float(data.get('semantic_weight', 0.5)),
            structural_weight=float(data.get('structural_weight', 0.5)),
            top_k=int(data.get('top_k', 3)),
            bonus=float(data.get('bonus', 0.2))
        )


@dataclass
class ExperimentConfig:
    """Everything one harness command needs: scenarios, seeds, policy, budgets and backends."""
    name: str = "hecg"
    scenarios: List[str] = field(default_factory=list)
    repetitions: int = 1
    seeds: Optional[List[int]] = None
    base_seed: int = 0
    ablation: str = "full"
    variants: List[str] = field(default_factory=lambda: ["full"])
    epsilon_scales: List[float] = field(default_factory=lambda: [1.0])
    jobs: int = 1
    output_dir: str = "data/runs"
    coefficients: PolicyCoefficients = field(default_factory=PolicyCoefficients)
    thresholds: ThresholdConfig = field(default_factory=ThresholdConfig)
    budgets: CorrectionBudgets = field(default_factory=CorrectionBudgets)
    l4_mode: str = L4Mode.AUTO_ABORT
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    planner: str = "stub"
    scorer: str = "stub"
    fallback_stub: bool = False
    memory_load: Optional[str] = None
    memory_save: Optional[str] = None
    llm: Dict[str, Any] = field(default_factory=dict)
    world_config: str = DEFAULT_WORLD_CONFIG
    failure_probability: float = 0.0
    log_level: str = "INFO"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be at least 1, got {self.repetitions}")
        if self.seeds is not None and len(self.seeds) != self.repetitions:
            raise ConfigError(f"{self.repetitions} repetitions need {self.repetitions} seeds, got {len(self.seeds)}")
        for variant in [self.ablation] + list(self.variants):
            if variant not in VARIANTS:
                raise ConfigError(f"unknown ablation variant '{variant}' (expected one of {sorted(VARIANTS)})")
        for scale in self.epsilon_scales:
            if scale < 0:
                raise ConfigError(f"epsilon scale must be nonnegative, got {scale}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be at least 1, got {self.jobs}")
        if not 0.0 <= self.thresholds.epsilon <= self.thresholds.epsilon_max <= 1.0:
            raise ConfigError(
                f"thresholds need 0 <= epsilon <= epsilon_max <= 1, "
                f"got {self.thresholds.epsilon} and {self.thresholds.epsilon_max}"
            )
        if min(self.budgets.l1_per_node, self.budgets.replans) < 0 or self.budgets.step_limit < 1:
            raise ConfigError(f"invalid budgets: {self.budgets.to_dict()}")
        if self.l4_mode not in L4Mode.ALL:
            raise ConfigError(f"unknown l4_mode '{self.l4_mode}' (expected one of {list(L4Mode.ALL)})")
        if not 0.0 <= self.failure_probability <= 1.0:
            raise ConfigError(f"failure_probability must be in [0, 1], got {self.failure_probability}")
        ws, wt = self.retrieval.semantic_weight, self.retrieval.structural_weight
        if ws < 0 or wt < 0 or abs(ws + wt - 1.0) > 1e-9:
            raise ConfigError(f"retrieval weights must be nonnegative and sum to 1, got {ws} and {wt}")
        if self.retrieval.top_k < 1 or self.retrieval.window < 1:
            raise ConfigError("retrieval top_k and window must be at least 1")

    def seed_list(self) -> List[int]:
        if self.seeds is not None:
            return list(self.seeds)
        return [self.base_seed + i for i in range(self.repetitions)]

    def policy(self) -> PolicyCoefficients:
        """Coefficients with the configured ablation variant applied."""
        return self.coefficients.for_variant(self.ablation)

    def with_overrides(self, **overrides) -> 'ExperimentConfig':
        """Copy with the given non-None fields replaced; the copy is validated."""
        changes = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **changes)

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()

    def to_dict(self) -> dict:
        policy = self.coefficients.to_dict()
        return {
            'experiment': {
                'name': self.name,
                'scenarios': list(self.scenarios),
                'repetitions': self.repetitions,
                'seeds': self.seeds,
                'base_seed': self.base_seed,
                'ablation': self.ablation,
                'variants': list(self.variants),
                'epsilon_scales': list(self.epsilon_scales),
                'jobs': self.jobs,
                'output_dir': self.output_dir
            },
            'policy': policy,
            'thresholds': self.thresholds.to_dict(),
            'budgets': self.budgets.to_dict(),
            'correction': {'l4_mode': self.l4_mode},
            'retrieval': self.retrieval.to_dict(),
            'planner': {'planner': self.planner, 'scorer': self.scorer, 'fallback_stub': self.fallback_stub},
            'memory': {'load': self.memory_load, 'save': self.memory_save},
            'llm': dict(self.llm),
            'environment': {'world': self.world_config, 'failure_probability': self.failure_probability},
            'logging': {'level': self.log_level}
        }

    @classmethod
    def from_dict(cls, data: Optional[dict]) -> 'ExperimentConfig':
        data = data or {}
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a mapping")
        experiment = data.get('experiment') or {}
        policy = data.get('policy') or {}
        thresholds = data.get('thresholds') or {}
        planner = data.get('planner') or {}
        memory = data.get('memory') or {}
        environment = data.get('environment') or {}
        try:
            seeds = experiment.get('seeds')
            return cls(
                name=experiment.get('name', 'hecg'),
                scenarios=list(experiment.get('scenarios') or []),
                repetitions=int(experiment.get('repetitions', len(seeds) if seeds else 1)),
                seeds=[int(s) for s in seeds] if seeds is not None else None,
                base_seed=int(experiment.get('base_seed', 0)),
                ablation=experiment.get('ablation', 'full'),
                variants=list(experiment.get('variants') or ['full']),
                epsilon_scales=[float(s) for s in experiment.get('epsilon_scales') or [1.0]],
                jobs=int(experiment.get('jobs', 1)),
                output_dir=experiment.get('output_dir', 'data/runs'),
                coefficients=PolicyCoefficients.from_dict(policy.get('coefficients', policy)),
                thresholds=ThresholdConfig.from_dict(thresholds),
                budgets=CorrectionBudgets.from_dict(data.get('budgets') or {}),
                l4_mode=(data.get('correction') or {}).get('l4_mode', L4Mode.AUTO_ABORT),
                retrieval=RetrievalConfig.from_dict(data.get('retrieval') or {}),
                planner=planner.get('planner', 'stub'),
                scorer=planner.get('scorer', 'stub'),
                fallback_stub=bool(planner.get('fallback_stub', False)),
                memory_load=memory.get('load'),
                memory_save=memory.get('save'),
                llm=dict(data.get('llm') or {}),
                world_config=environment.get('world', DEFAULT_WORLD_CONFIG),
                failure_probability=float(environment.get('failure_probability', 0.0)),
                log_level=(data.get('logging') or {}).get('level', 'INFO')
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid configuration value: {e}")

    @classmethod
    def from_yaml(cls, filepath: str) -> 'ExperimentConfig':
        """Load configuration from a YAML file."""
        if not os.path.exists(filepath):
            raise ConfigError(f"config file not found: {filepath}")
        try:
            with open(filepath, 'r', encoding='utf-8') as f:
                data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(f"invalid YAML in {filepath}: {e}")
        return cls.from_dict(data)


def effective_scale(scale: float) -> float:
    """Sweep scale with 0 clamped to the smallest positive value."""
    if scale < 0:
        raise ConfigError(f"epsilon scale must be nonnegative, got {scale}")
    return max(scale, MIN_EPSILON_SCALE)
