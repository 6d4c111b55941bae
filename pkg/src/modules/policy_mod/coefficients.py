import json
import os
from dataclasses import dataclass, replace
from typing import Dict, Optional

from src.core.exceptions import ConfigError

# Ablation variant -> coefficient it zeroes
VARIANTS: Dict[str, Optional[str]] = {
    "full": None,
    "no_value": "alpha",
    "no_cost": "beta",
    "no_risk": "gamma",
    "no_llm": "lam",
}


@dataclass(frozen=True)
class PolicyCoefficients:
    """Weights of the transition logit ``alpha*q - beta*c - gamma*r + lambda*phi``."""
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    lam: float = 1.0
    temperature: float = 1.0
    epsilon_scale: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "lam"):
            if getattr(self, name) < 0:
                raise ConfigError(f"coefficient {name} must be nonnegative, got {getattr(self, name)}")
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if self.epsilon_scale < 0:
            raise ConfigError(f"epsilon_scale must be nonnegative, got {self.epsilon_scale}")

    def for_variant(self, variant: str) -> 'PolicyCoefficients':
        if variant not in VARIANTS:
            raise ConfigError(f"unknown ablation variant '{variant}' (expected one of {sorted(VARIANTS)})")
        field_name = VARIANTS[variant]
        return self if field_name is None else replace(self, **{field_name: 0.0})

    def to_dict(self) -> dict:
        return {
            'alpha': self.alpha,
            'beta': self.beta,
            'gamma': self.gamma,
            'lambda': self.lam,
            'temperature': self.temperature,
            'epsilon_scale': self.epsilon_scale
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'PolicyCoefficients':
        try:
            return cls(
                alpha=float(data.get('alpha', 1.0)),
                beta=float(data.get('beta', 1.0)),
                gamma=float(data.get('gamma', 1.0)),
                lam=float(data.get('lambda', data.get('lam', 1.0))),
                temperature=float(data.get('temperature', 1.0)),
                epsilon_scale=float(data.get('epsilon_scale', 1.0))
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid coefficient value: {e}")

    @classmethod
    def from_json(cls, path: str) -> 'PolicyCoefficients':
        if not os.path.exists(path):
            raise ConfigError(f"coefficient file not found: {path}")
        try:
            with open(path, 'r', encoding='utf-8') as f:
                return cls.from_dict(json.load(f))
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON in {path}: {e}")
