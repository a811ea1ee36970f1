"""Engine configuration: one audited home for every constant.

Defaults follow the reference reward profile: total = render + 0.5*format
- 0.2*collision_ratio - 0.2*constraint_ratio, discount 0.9, clip 0.2,
KL weight 0.01, coordinate-penalty weight 0.2.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .judge import JudgeConfig
from .scene import SchemaError

CONFIG_SCHEMA = "engine_config.v1"


@dataclass(frozen=True)
class RewardWeights:
    lambda_format: float = 0.5
    lambda_physics: float = 1.0
    lambda_render: float = 1.0
    alpha: float = 0.2
    beta: float = 0.2

    def __post_init__(self):
        if min(self.lambda_format, self.lambda_physics, self.lambda_render) < 0:
            raise ValueError("reward weights must be non-negative")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")


@dataclass(frozen=True)
class PhysicsTolerances:
    tau_bound: float = 1e-3
    tau_support: float = 0.05


@dataclass(frozen=True)
class AdvantageConfig:
    w_phys: float = 0.2
    epsilon: float = 0.2
    kl_beta: float = 0.01
    eps_sigma: float = 1e-8
    multiplicative: bool = False
    penalty_source: str = "per_turn"  # "per_turn" | "final"

    def __post_init__(self):
        if self.w_phys < 0:
            raise ValueError("w_phys must be non-negative")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.kl_beta < 0:
            raise ValueError("kl_beta must be non-negative")
        if self.penalty_source not in ("per_turn", "final"):
            raise ValueError("penalty_source must be 'per_turn' or 'final'")


@dataclass(frozen=True)
class TrajectoryConfig:
    group_size: int = 4
    turns: int = 3
    gamma: float = 0.9

    def __post_init__(self):
        if self.group_size < 2:
            raise ValueError("group size must be at least 2")
        if self.turns < 1:
            raise ValueError("turns must be at least 1")
        if not (0.0 < self.gamma <= 1.0):
            raise ValueError("gamma must lie in (0, 1]")


@dataclass(frozen=True)
class StageSchedule:
    """Reward staging over training progress.

    "all" keeps every component active from step one. "staged" starts
    format-only, adds physics once rolling format accuracy clears the
    gate, and adds the render term render_delay scored turns later.
    """

    mode: str = "all"  # "all" | "staged"
    window: int = 64
    format_gate: float = 0.9
    render_delay: int = 128

    def __post_init__(self):
        if self.mode not in ("all", "staged"):
            raise ValueError("stage mode must be 'all' or 'staged'")
        if self.window < 1:
            raise ValueError("stage window must be positive")


@dataclass(frozen=True)
class PolicyConfig:
    bins: int = 24
    learning_rate: float = 60.0
    steps: int = 300
    explore_eps: float = 0.02

    def __post_init__(self):
        if self.bins < 2:
            raise ValueError("bins must be at least 2")
        if not (0.0 <= self.explore_eps < 1.0):
            raise ValueError("explore_eps must lie in [0, 1)")


@dataclass
class EngineConfig:
    reward: RewardWeights = field(default_factory=RewardWeights)
    physics: PhysicsTolerances = field(default_factory=PhysicsTolerances)
    advantage: AdvantageConfig = field(default_factory=AdvantageConfig)
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    stage: StageSchedule = field(default_factory=StageSchedule)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    judge: JudgeConfig = field(default_factory=JudgeConfig)
    seed: int = 0

    def to_dict(self) -> dict:
        doc = {"schema": CONFIG_SCHEMA}
        doc.update(asdict(self))
        return doc


_SECTIONS = {
    "reward": RewardWeights,
    "physics": PhysicsTolerances,
    "advantage": AdvantageConfig,
    "trajectory": TrajectoryConfig,
    "stage": StageSchedule,
    "policy": PolicyConfig,
    "judge": JudgeConfig,
}


def _build_section(cls, doc: dict, path: str):
    known = {f.name for f in fields(cls)}
    unknown = set(doc) - known
    if unknown:
        raise SchemaError(f"{path}.{sorted(unknown)[0]}", "unknown config field")
    try:
        return cls(**doc)
    except (TypeError, ValueError) as exc:
        raise SchemaError(path, str(exc)) from exc


def config_from_dict(doc: dict) -> EngineConfig:
    if not isinstance(doc, dict):
        raise SchemaError("", "config must be a JSON object")
    doc = dict(doc)
    doc.pop("schema", None)
    seed = doc.pop("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise SchemaError("seed", "must be an integer")
    sections = {}
    for name, cls in _SECTIONS.items():
        section_doc = doc.pop(name, {})
        if not isinstance(section_doc, dict):
            raise SchemaError(name, "must be an object")
        sections[name] = _build_section(cls, section_doc, name)
    if doc:
        raise SchemaError(sorted(doc)[0], "unknown config section")
    return EngineConfig(seed=seed, **sections)


def load_config(path: str | Path | None) -> EngineConfig:
    if path is None:
        return EngineConfig()
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(str(path), f"not valid JSON ({exc})") from exc
    return config_from_dict(doc)
