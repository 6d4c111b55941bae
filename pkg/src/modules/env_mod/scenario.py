import json
import os
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, List, Optional

from src.core.exceptions import ScenarioError, ScriptError
from src.core.world_state import WorldState, parse_fact
from src.modules.env_mod.faults import FaultSchedule
from src.modules.env_mod.script import ActionScript, parse_script
from src.utils.logger import logger


@dataclass(frozen=True)
class WeightedGoal:
    predicate: str
    weight: float = 1.0

    def to_dict(self) -> Any:
        return self.predicate if self.weight == 1.0 else {'predicate': self.predicate, 'weight': self.weight}

    @classmethod
    def from_raw(cls, raw: Any) -> 'WeightedGoal':
        if isinstance(raw, str):
            goal = cls(raw)
        elif isinstance(raw, dict) and 'predicate' in raw:
            goal = cls(raw['predicate'], float(raw.get('weight', 1.0)))
        else:
            raise ScenarioError(f"goal must be a predicate string or {{'predicate', 'weight'}}: {raw!r}")
        try:
            parse_fact(goal.predicate)
        except ValueError as e:
            raise ScenarioError(str(e))
        if goal.weight <= 0:
            raise ScenarioError(f"goal weight must be positive: {raw!r}")
        return goal


@dataclass
class Scenario:
    """
    One benchmark episode definition: world, goals, authored plan with
    per-step options, and the fault schedule.
    """
    name: str
    scene: str
    initial: WorldState
    goals: List[WeightedGoal]
    plan: List[str] = field(default_factory=list)
    options: Dict[int, List[str]] = field(default_factory=dict)
    faults: FaultSchedule = field(default_factory=FaultSchedule)
    seed: int = 0
    optimal_length: Optional[int] = None
    reference: Optional[List[str]] = None
    description: str = ""
    path: Optional[str] = None

    def goal_set(self) -> FrozenSet[str]:
        return frozenset(g.predicate for g in self.goals)

    def goal_weights(self) -> Dict[str, float]:
        return {g.predicate: g.weight for g in self.goals}

    def initial_state(self) -> WorldState:
        return self.initial.copy()

    def parsed_plan(self) -> List[ActionScript]:
        return [parse_script(line) for line in self.plan]

    def parsed_options(self) -> Dict[int, List[ActionScript]]:
        return {k: [parse_script(line) for line in v] for k, v in self.options.items()}

    def optimal(self) -> int:
        return self.optimal_length or max(1, len(self.plan))

    def to_dict(self) -> dict:
        world = self.initial.to_dict()
        return {
            'name': self.name,
            'scene': self.scene,
            'description': self.description,
            'rooms': world['rooms'],
            'objects': world['objects'],
            'agent': world['agent'],
            'goals': [g.to_dict() for g in self.goals],
            'plan': list(self.plan),
            'options': {str(k): list(v) for k, v in sorted(self.options.items())},
            'faults': self.faults.to_list(),
            'seed': self.seed,
            'optimal_length': self.optimal_length,
            'reference': self.reference
        }

    @classmethod
    def from_dict(cls, data: dict, path: Optional[str] = None) -> 'Scenario':
        """
        Build and validate a scenario.

        Raises:
            ScenarioError: missing keys, inconsistent world, bad goals, unparsable
                plan lines or options attached to steps outside the plan
        """
        for key in ('objects', 'agent', 'goals'):
            if key not in data:
                raise ScenarioError(f"scenario is missing '{key}'")

        rooms = data.get('rooms') or sorted({o['room'] for o in data['objects']} | {data['agent']['room']})
        try:
            initial = WorldState.from_dict({'rooms': rooms, 'objects': data['objects'], 'agent': data['agent']})
        except (KeyError, TypeError) as e:
            raise ScenarioError(f"malformed world description: {e}")
        problems = initial.violations()
        if problems:
            raise ScenarioError("; ".join(problems))

        plan = list(data.get('plan', []))
        try:
            options = {int(k): list(v) for k, v in (data.get('options') or {}).items()}
        except ValueError as e:
            raise ScenarioError(f"option keys must be step numbers: {e}")
        for k in options:
            if not 1 <= k <= len(plan):
                raise ScenarioError(f"option attached to step {k} outside plan of length {len(plan)}")
        try:
            for line in plan + [o for alts in options.values() for o in alts]:
                parse_script(line)
        except ScriptError as e:
            raise ScenarioError(f"unparsable script line: {e}")

        name = data.get('name') or (os.path.splitext(os.path.basename(path))[0] if path else 'scenario')
        return cls(
            name=name,
            scene=data.get('scene', ''),
            initial=initial,
            goals=[WeightedGoal.from_raw(g) for g in data['goals']],
            plan=plan,
            options=options,
            faults=FaultSchedule.from_list(data.get('faults')),
            seed=int(data.get('seed', 0)),
            optimal_length=data.get('optimal_length'),
            reference=data.get('reference'),
            description=data.get('description', ''),
            path=path
        )

    @classmethod
    def from_json(cls, path: str) -> 'Scenario':
        if not os.path.exists(path):
            raise ScenarioError(f"scenario file not found: {path}")
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ScenarioError(f"invalid JSON in {path}: {e}")
        scenario = cls.from_dict(data, path=path)
        logger.debug(f"Scenario loaded: {scenario.name} from {path}")
        return scenario
