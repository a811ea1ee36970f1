"""Multi-turn refinement rollouts: scoring, trajectories, groups, dumps.

Per sample, a policy produces G trajectories of T turns each. Every turn
is scored with the composite reward; the trajectory reward is the
discounted sum over turns with exponent starting at t = 1, so earlier
turns weigh more whenever gamma < 1.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from .config import RewardWeights, StageSchedule, PhysicsTolerances
from .format_check import FailedCheck, format_reward
from .judge import JudgeConfig, JudgeGrades, RenderReward, query_judge, render_reward
from .physics import (
    PhysicsReport,
    SceneGraph,
    build_scene_graph,
    physics_report,
    worst_case_report,
)
from .rollout import ParsedRollOut, TokenRecord, parse_rollout
from .scene import SceneTask, SchemaError

DUMP_SCHEMA = "trajectory_group.v1"


class PolicyError(RuntimeError):
    pass


class PolicyPort(Protocol):
    """Contract a rollout source must satisfy.

    sample() returns the raw roll-out text for one turn plus its token
    records with spans into that text; the engine shifts spans into the
    trajectory-wide concatenation.
    """

    concurrent_safe: bool

    def sample(
        self,
        task: SceneTask,
        turn: int,
        previous: ParsedRollOut | None,
        feedback: "FeedbackRecord | None",
        seed: int,
    ) -> tuple[str, list[TokenRecord]]: ...


def derive_seed(*parts: int) -> int:
    """Stable child seed from integer parts (platform independent)."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


@dataclass(frozen=True)
class RewardBreakdown:
    format: float
    physics: PhysicsReport
    render: RenderReward
    total: float

    def to_dict(self) -> dict:
        return {
            "format": float(self.format),
            "physics": self.physics.to_dict(),
            "render": self.render.to_dict(),
            "total": float(self.total),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RewardBreakdown":
        return cls(
            format=float(doc["format"]),
            physics=PhysicsReport.from_dict(doc["physics"]),
            render=RenderReward.from_dict(doc["render"]),
            total=float(doc["total"]),
        )


@dataclass(frozen=True)
class FeedbackRecord:
    format_failure: FailedCheck
    colliding_pairs: tuple[tuple[str, str], ...]
    violations: dict[str, tuple[str, ...]]
    judge_grades: JudgeGrades | None

    def to_dict(self) -> dict:
        return {
            "format_failure": self.format_failure.value,
            "colliding_pairs": [list(pair) for pair in self.colliding_pairs],
            "violations": {k: list(v) for k, v in sorted(self.violations.items())},
            "judge_grades": self.judge_grades.to_dict() if self.judge_grades else None,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FeedbackRecord":
        grades = doc.get("judge_grades")
        return cls(
            format_failure=FailedCheck(doc["format_failure"]),
            colliding_pairs=tuple(tuple(pair) for pair in doc["colliding_pairs"]),
            violations={k: tuple(v) for k, v in doc["violations"].items()},
            judge_grades=JudgeGrades.from_dict(grades) if grades else None,
        )


@dataclass(frozen=True)
class Turn:
    index: int
    rollout: ParsedRollOut
    reward: RewardBreakdown
    feedback: FeedbackRecord
    tokens: tuple[TokenRecord, ...] = ()


@dataclass(frozen=True)
class Trajectory:
    index: int
    turns: tuple[Turn, ...]
    discounted_reward: float
    seed: int = 0

    def full_text(self) -> str:
        return "".join(turn.rollout.raw_text for turn in self.turns)

    def token_records(self) -> list[TokenRecord]:
        return [tok for turn in self.turns for tok in turn.tokens]

    def final_physics(self) -> PhysicsReport:
        return self.turns[-1].reward.physics


@dataclass(frozen=True)
class TrajectoryGroup:
    task_id: str
    trajectories: tuple[Trajectory, ...]
    gamma: float = 0.9
    seed: int = 0
    judge_mode: str = "stub"

    def discounted_rewards(self) -> list[float]:
        return [traj.discounted_reward for traj in self.trajectories]


@dataclass
class StagedWeights:
    """Reward weights under the currently active training stage."""

    base: RewardWeights = field(default_factory=RewardWeights)
    phase: int = 3  # 1: format only, 2: +physics, 3: all components

    def active(self) -> RewardWeights:
        if self.phase <= 1:
            return replace(self.base, lambda_physics=0.0, lambda_render=0.0)
        if self.phase == 2:
            return replace(self.base, lambda_render=0.0)
        return self.base


class StageController:
    """Advances the reward stage from rolling format accuracy.

    Stage 2 opens once the rolling window is full and its accuracy clears
    the gate; stage 3 opens render_delay scored turns after that.
    """

    def __init__(self, schedule: StageSchedule, base: RewardWeights):
        self.schedule = schedule
        self.base = base
        self.phase = 3 if schedule.mode == "all" else 1
        self._window: deque[bool] = deque(maxlen=schedule.window)
        self._since_gate = 0

    def staged(self) -> StagedWeights:
        return StagedWeights(base=self.base, phase=self.phase)

    def observe(self, format_scores: Iterable[float]) -> None:
        if self.schedule.mode == "all":
            return
        for score in format_scores:
            self._window.append(score == 1.0)
            if self.phase == 1:
                if (
                    len(self._window) == self.schedule.window
                    and sum(self._window) / len(self._window) > self.schedule.format_gate
                ):
                    self.phase = 2
            elif self.phase == 2:
                self._since_gate += 1
                if self._since_gate >= self.schedule.render_delay:
                    self.phase = 3


def total_reward(
    format: float,
    physics: PhysicsReport,
    render: RenderReward,
    weights: RewardWeights = RewardWeights(),
) -> float:
    """Weighted composite of the three reward components.

    physics_reward already carries alpha/beta, so with the default weights
    this expands to render + 0.5*format - 0.2*collision - 0.2*constraint.
    """
    return (
        weights.lambda_render * render.value
        + weights.lambda_format * format
        + weights.lambda_physics * physics.physics_reward
    )


def discounted_total(per_turn_totals: Sequence[float], gamma: float) -> float:
    """Sum of gamma^t * R_t with t counted from 1."""
    return sum(gamma**t * r for t, r in enumerate(per_turn_totals, start=1))


def score_rollout(
    parsed: ParsedRollOut,
    task: SceneTask,
    *,
    weights: RewardWeights = RewardWeights(),
    judge_cfg: JudgeConfig | None = None,
    tolerances: PhysicsTolerances = PhysicsTolerances(),
) -> tuple[RewardBreakdown, FeedbackRecord]:
    """Score one roll-out against its task.

    When no scene graph can be built (missing layout, unknown or duplicate
    ids) the physics term falls back to the worst case; feedback then
    carries no collision or violation detail.
    """
    judge_cfg = judge_cfg or JudgeConfig()
    fmt = format_reward(parsed, task)

    graph: SceneGraph | None = None
    if parsed.layout is not None:
        try:
            graph = build_scene_graph(
                parsed.layout,
                task,
                tau_bound=tolerances.tau_bound,
                tau_support=tolerances.tau_support,
            )
        except ValueError:
            graph = None

    if graph is not None and graph.nodes:
        report = physics_report(graph, weights.alpha, weights.beta)
        colliding = tuple(sorted(graph.collision_edges))
        violations = {
            oid: tuple(sorted(k.value for k in kinds))
            for oid, kinds in graph.violations.items()
        }
    else:
        report = worst_case_report(task, weights.alpha, weights.beta)
        colliding = ()
        violations = {}

    grades = query_judge(None, task.user_preference, judge_cfg, physics=report, task=task)
    source = "stub" if judge_cfg.mode == "stub" else "remote_judge"
    render = render_reward(grades, source=source)
    total = total_reward(fmt.score, report, render, weights)
    breakdown = RewardBreakdown(fmt.score, report, render, total)
    feedback = FeedbackRecord(fmt.failed_check, colliding, violations, grades)
    return breakdown, feedback


def run_trajectory(
    policy: PolicyPort,
    task: SceneTask,
    turns: int,
    gamma: float,
    staged: StagedWeights | None = None,
    *,
    seed: int = 0,
    judge_cfg: JudgeConfig | None = None,
    tolerances: PhysicsTolerances = PhysicsTolerances(),
    index: int = 0,
) -> Trajectory:
    if turns < 1:
        raise ValueError("a trajectory needs at least one turn")
    if not (0.0 < gamma <= 1.0):
        raise ValueError("gamma must lie in (0, 1]")
    staged = staged or StagedWeights()
    weights = staged.active()

    built: list[Turn] = []
    previous: ParsedRollOut | None = None
    feedback: FeedbackRecord | None = None
    offset = 0
    for t in range(1, turns + 1):
        try:
            raw_text, tokens = policy.sample(
                task, t, previous, feedback, derive_seed(seed, t)
            )
        except Exception as exc:
            raise PolicyError(f"policy failed at turn {t}: {exc}") from exc
        parsed = parse_rollout(raw_text)
        reward, feedback = score_rollout(
            parsed, task, weights=weights, judge_cfg=judge_cfg, tolerances=tolerances
        )
        shifted = tuple(
            replace(tok, span=(tok.span[0] + offset, tok.span[1] + offset))
            for tok in tokens
        )
        built.append(Turn(t, parsed, reward, feedback, shifted))
        offset += len(raw_text)
        previous = parsed

    discounted = discounted_total([turn.reward.total for turn in built], gamma)
    return Trajectory(index=index, turns=tuple(built), discounted_reward=discounted, seed=seed)


def run_group(
    policy: PolicyPort,
    task: SceneTask,
    group_size: int,
    turns: int,
    gamma: float,
    seed: int,
    *,
    staged: StagedWeights | None = None,
    judge_cfg: JudgeConfig | None = None,
    tolerances: PhysicsTolerances = PhysicsTolerances(),
) -> TrajectoryGroup:
    """G independent trajectories for one task, deterministically seeded."""
    if group_size < 2:
        raise ValueError("group size must be at least 2 (normalization needs a group)")
    judge_cfg = judge_cfg or JudgeConfig()
    trajectories = []
    for g in range(group_size):
        try:
            trajectories.append(
                run_trajectory(
                    policy,
                    task,
                    turns,
                    gamma,
                    staged,
                    seed=derive_seed(seed, g),
                    judge_cfg=judge_cfg,
                    tolerances=tolerances,
                    index=g,
                )
            )
        except PolicyError as exc:
            raise PolicyError(f"trajectory {g}: {exc}") from exc
    return TrajectoryGroup(
        task_id=task.task_id,
        trajectories=tuple(trajectories),
        gamma=gamma,
        seed=seed,
        judge_mode=judge_cfg.mode,
    )


class ReplayPolicy:
    """Re-emits the recorded turns of a dumped group, in order.

    Lets the engine re-score and re-pack externally produced roll-outs
    through the exact same pipeline.
    """

    concurrent_safe = False

    def __init__(self, group: TrajectoryGroup):
        self._group = group
        self._traj = 0
        self._turn = 0

    def sample(self, task, turn, previous, feedback, seed):
        if self._traj >= len(self._group.trajectories):
            raise ValueError("replay source exhausted")
        trajectory = self._group.trajectories[self._traj]
        if turn == 1:
            self._turn = 0
        recorded = trajectory.turns[self._turn]
        base = sum(len(t.rollout.raw_text) for t in trajectory.turns[: self._turn])
        tokens = [
            replace(tok, span=(tok.span[0] - base, tok.span[1] - base))
            for tok in recorded.tokens
        ]
        self._turn += 1
        if self._turn == len(trajectory.turns):
            self._traj += 1
        return recorded.rollout.raw_text, tokens


# --- dump serialization -------------------------------------------------------


def _token_to_dict(tok: TokenRecord) -> dict:
    doc = {
        "index": int(tok.index),
        "span": [int(tok.span[0]), int(tok.span[1])],
        "logprob_new": tok.logprob_new,
        "logprob_old": tok.logprob_old,
        "logprob_ref": tok.logprob_ref,
    }
    if tok.meta is not None:
        doc["meta"] = tok.meta
    return doc


def _token_from_dict(doc: dict) -> TokenRecord:
    def _lp(value):
        return float(value) if value is not None else None

    return TokenRecord(
        index=int(doc["index"]),
        span=(int(doc["span"][0]), int(doc["span"][1])),
        logprob_new=_lp(doc.get("logprob_new")),
        logprob_old=_lp(doc.get("logprob_old")),
        logprob_ref=_lp(doc.get("logprob_ref")),
        meta=doc.get("meta"),
    )


def group_to_record(group: TrajectoryGroup) -> dict:
    return {
        "schema": DUMP_SCHEMA,
        "task_id": group.task_id,
        "seed": int(group.seed),
        "gamma": float(group.gamma),
        "judge_mode": group.judge_mode,
        "deterministic": group.judge_mode == "stub",
        "group_size": len(group.trajectories),
        "turns": len(group.trajectories[0].turns) if group.trajectories else 0,
        "trajectories": [
            {
                "index": int(traj.index),
                "seed": int(traj.seed),
                "discounted_reward": float(traj.discounted_reward),
                "turns": [
                    {
                        "index": int(turn.index),
                        "raw_text": turn.rollout.raw_text,
                        "parse_stage": turn.rollout.parse_stage_reached.value,
                        "reward": turn.reward.to_dict(),
                        "feedback": turn.feedback.to_dict(),
                        "tokens": [_token_to_dict(tok) for tok in turn.tokens],
                    }
                    for turn in traj.turns
                ],
            }
            for traj in group.trajectories
        ],
    }


def group_from_record(doc: dict) -> TrajectoryGroup:
    schema = doc.get("schema")
    if schema != DUMP_SCHEMA:
        raise SchemaError("schema", f"expected {DUMP_SCHEMA!r}, got {schema!r}")
    trajectories = []
    for traj_doc in doc["trajectories"]:
        turns = []
        for turn_doc in traj_doc["turns"]:
            parsed = parse_rollout(turn_doc["raw_text"])
            turns.append(
                Turn(
                    index=int(turn_doc["index"]),
                    rollout=parsed,
                    reward=RewardBreakdown.from_dict(turn_doc["reward"]),
                    feedback=FeedbackRecord.from_dict(turn_doc["feedback"]),
                    tokens=tuple(_token_from_dict(t) for t in turn_doc["tokens"]),
                )
            )
        trajectories.append(
            Trajectory(
                index=int(traj_doc["index"]),
                turns=tuple(turns),
                discounted_reward=float(traj_doc["discounted_reward"]),
                seed=int(traj_doc.get("seed", 0)),
            )
        )
    return TrajectoryGroup(
        task_id=str(doc["task_id"]),
        trajectories=tuple(trajectories),
        gamma=float(doc["gamma"]),
        seed=int(doc["seed"]),
        judge_mode=str(doc.get("judge_mode", "stub")),
    )


def write_dump(path: str | Path, groups: Iterable[TrajectoryGroup]) -> None:
    with open(path, "w") as fh:
        for group in groups:
            fh.write(json.dumps(group_to_record(group)) + "\n")


def read_dump(path: str | Path) -> list[TrajectoryGroup]:
    groups = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"line {line_no}", f"not valid JSON ({exc})") from exc
            groups.append(group_from_record(doc))
    return groups
