import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import yaml

from src.core.exceptions import ConfigError, ScenarioError
from src.modules.env_mod.scenario import Scenario
from src.modules.planner_mod.stub import StubPlanner, StubScorer
from src.modules.policy_mod.scoring import DEFAULT_BASE_RISK
from src.utils.logger import logger


@dataclass
class WorldConfig:
    """Static description of a household world shared by its scenarios."""
    name: str = "household"
    description: str = ""
    rooms: List[str] = field(default_factory=list)
    base_risk: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_BASE_RISK))
    verb_alternatives: Dict[str, List[str]] = field(default_factory=dict)
    option_verbs: Dict[str, List[str]] = field(default_factory=dict)
    verb_tags: Dict[str, List[str]] = field(default_factory=dict)
    scenario_dir: str = "scenarios"
    scenarios: List[str] = field(default_factory=list)
    # Directory the config was loaded from; relative scenario paths resolve against it
    root: str = "."

    @classmethod
    def from_yaml(cls, filepath: str) -> 'WorldConfig':
        """Load configuration from a YAML file."""
        if not os.path.exists(filepath):
            raise ConfigError(f"world config not found: {filepath}")
        try:
            with open(filepath, 'r', encoding='utf-8') as f:
                data = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"invalid YAML in {filepath}: {e}")
        return cls.from_dict(data, root=os.path.dirname(os.path.abspath(filepath)))

    @classmethod
    def from_dict(cls, data: dict, root: str = ".") -> 'WorldConfig':
        """Create configuration from a dictionary."""
        risk = data.get('base_risk') or {}
        for verb, value in risk.items():
            if not 0.0 <= float(value) <= 1.0:
                raise ConfigError(f"base risk of '{verb}' must be in [0, 1], got {value}")
        return cls(
            name=data.get('name', 'household'),
            description=data.get('description', ''),
            rooms=list(data.get('rooms', [])),
            base_risk={k: float(v) for k, v in risk.items()} or dict(DEFAULT_BASE_RISK),
            verb_alternatives={k: list(v) for k, v in (data.get('verb_alternatives') or {}).items()},
            option_verbs={k: list(v) for k, v in (data.get('option_verbs') or {}).items()},
            verb_tags={k: list(v) for k, v in (data.get('verb_tags') or {}).items()},
            scenario_dir=data.get('scenario_dir', 'scenarios'),
            scenarios=list(data.get('scenarios', [])),
            root=root
        )

    def to_dict(self) -> dict:
        return {
            'name': self.name,
            'description': self.description,
            'rooms': list(self.rooms),
            'base_risk': dict(self.base_risk),
            'verb_alternatives': dict(self.verb_alternatives),
            'option_verbs': dict(self.option_verbs),
            'verb_tags': dict(self.verb_tags),
            'scenario_dir': self.scenario_dir,
            'scenarios': list(self.scenarios)
        }


class HouseholdWorld:
    """
    A loaded world: its configuration, the stub backends it implies and
    scenario lookup by name or path.
    """

    def __init__(self, world_id: str, config: Optional[WorldConfig] = None):
        self.world_id = world_id
        self.config = config or WorldConfig()
        self._cache: Dict[str, Scenario] = {}
        logger.info(f"World initialized: {self.world_id}")

    @classmethod
    def from_yaml(cls, filepath: str) -> 'HouseholdWorld':
        config = WorldConfig.from_yaml(filepath)
        return cls(config.name, config)

    @property
    def scenario_dir(self) -> str:
        return os.path.join(self.config.root, self.config.scenario_dir)

    def scenario_path(self, ref: str) -> str:
        """Resolve a scenario name (``readbook``) or a JSON path."""
        if ref.endswith(".json") or os.sep in ref or "/" in ref:
            return ref
        return os.path.join(self.scenario_dir, f"{ref}.json")

    def load_scenario(self, ref: str) -> Scenario:
        path = self.scenario_path(ref)
        if path not in self._cache:
            scenario = Scenario.from_json(path)
            unknown = sorted(scenario.initial.rooms - set(self.config.rooms)) if self.config.rooms else []
            if unknown:
                raise ScenarioError(f"{path} uses rooms outside world '{self.world_id}': {unknown}")
            self._cache[path] = scenario
        return self._cache[path]

    def load_scenarios(self, refs: Optional[Sequence[str]] = None) -> List[Scenario]:
        """Load the given scenarios, or the world's default suite when none are named."""
        refs = list(refs) if refs else list(self.config.scenarios)
        if not refs:
            raise ScenarioError(f"no scenarios requested and world '{self.world_id}' lists none")
        scenarios = [self.load_scenario(ref) for ref in refs]
        logger.info(f"Loaded {len(scenarios)} scenarios from world {self.world_id}")
        return scenarios

    def stub_planner(self) -> StubPlanner:
        return StubPlanner(self.config.verb_alternatives or None, self.config.option_verbs or None)

    def stub_scorer(self, retrieval_bonus: float = 0.2) -> StubScorer:
        return StubScorer(self.config.verb_tags or None, retrieval_bonus=retrieval_bonus)


class WorldRegistry:
    """Registry of loaded worlds keyed by config path."""

    _worlds: Dict[str, HouseholdWorld] = {}

    @classmethod
    def load(cls, filepath: str) -> HouseholdWorld:
        key = os.path.abspath(filepath)
        if key not in cls._worlds:
            cls._worlds[key] = HouseholdWorld.from_yaml(filepath)
            logger.debug(f"World registered: {key}")
        return cls._worlds[key]

    @classmethod
    def get(cls, filepath: str) -> Optional[HouseholdWorld]:
        return cls._worlds.get(os.path.abspath(filepath))

    @classmethod
    def list_worlds(cls) -> List[str]:
        return list(cls._worlds.keys())

    @classmethod
    def clear(cls):
        cls._worlds.clear()
