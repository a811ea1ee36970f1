"""Toy stochastic layout policy over discretized room coordinates.

Each object/axis/turn has its own categorical over B bin centers spanning
the feasible centroid band (half extents inset from the walls), so the
log-probabilities and their gradients are exact. Emitted roll-outs are
always structurally valid; the only thing the policy explores is where
the boxes go.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import RewardWeights, StageSchedule, PhysicsTolerances
from .advantage import AdvantageSet, compute_group_advantages, token_term
from .judge import JudgeConfig
from .rollout import ParsedRollOut, TokenRecord
from .scene import SceneTask
from .trajectory import (
    FeedbackRecord,
    StageController,
    TrajectoryGroup,
    derive_seed,
    run_group,
)

CHECKPOINT_SCHEMA = "grid_policy.v1"
AXES = ("x", "y", "z")

THINK_SENTENCE = (
    "Spreading the pieces across the floor grid so every box stays supported "
    "and clear of its neighbours."
)


def feasible_bin_centers(task: SceneTask, bins: int) -> np.ndarray:
    """(objects, 3, bins) grid of candidate centroids inside the room."""
    room = (task.room.length_m, task.room.width_m, task.room.height_m)
    centers = np.zeros((len(task.objects), 3, bins))
    for i, obj in enumerate(task.objects):
        for a in range(3):
            half = obj.size_m[a] / 2.0
            lo, hi = half, room[a] - half
            if hi <= lo:
                centers[i, a, :] = room[a] / 2.0
            else:
                centers[i, a, :] = np.linspace(lo, hi, bins)
    return centers


@dataclass
class GridPolicyParams:
    logits: np.ndarray       # (objects, 3, turns, bins)
    bin_centers: np.ndarray  # (objects, 3, bins)
    object_ids: tuple[str, ...]
    turns: int
    bins: int
    explore_eps: float = 0.02

    @classmethod
    def for_task(
        cls, task: SceneTask, turns: int, bins: int = 24, explore_eps: float = 0.02
    ) -> "GridPolicyParams":
        if bins < 2:
            raise ValueError("bins must be at least 2")
        if not (0.0 <= explore_eps < 1.0):
            raise ValueError("explore_eps must lie in [0, 1)")
        return cls(
            logits=np.zeros((len(task.objects), 3, turns, bins)),
            bin_centers=feasible_bin_centers(task, bins),
            object_ids=tuple(obj.id for obj in task.objects),
            turns=turns,
            bins=bins,
            explore_eps=explore_eps,
        )

    def copy(self) -> "GridPolicyParams":
        return GridPolicyParams(
            logits=self.logits.copy(),
            bin_centers=self.bin_centers,
            object_ids=self.object_ids,
            turns=self.turns,
            bins=self.bins,
            explore_eps=self.explore_eps,
        )

    def to_dict(self) -> dict:
        return {
            "schema": CHECKPOINT_SCHEMA,
            "object_ids": list(self.object_ids),
            "turns": self.turns,
            "bins": self.bins,
            "explore_eps": self.explore_eps,
            "bin_centers": self.bin_centers.tolist(),
            "logits": self.logits.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GridPolicyParams":
        if doc.get("schema") != CHECKPOINT_SCHEMA:
            raise ValueError(f"expected checkpoint schema {CHECKPOINT_SCHEMA!r}")
        return cls(
            logits=np.asarray(doc["logits"], dtype=float),
            bin_centers=np.asarray(doc["bin_centers"], dtype=float),
            object_ids=tuple(doc["object_ids"]),
            turns=int(doc["turns"]),
            bins=int(doc["bins"]),
            explore_eps=float(doc.get("explore_eps", 0.0)),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "GridPolicyParams":
        return cls.from_dict(json.loads(Path(path).read_text()))


def masked_log_softmax(row: np.ndarray, masked_bins: Sequence[int]) -> np.ndarray:
    """Log-probabilities of a categorical with some bins excluded."""
    z = np.array(row, dtype=float)
    for b in masked_bins:
        z[b] = -np.inf
    m = z.max()
    if not np.isfinite(m):
        raise ValueError("every bin is masked")
    return z - (m + math.log(np.exp(z - m).sum()))


def mixture_probs(
    row: np.ndarray, masked_bins: Sequence[int], explore_eps: float
) -> tuple[np.ndarray, np.ndarray]:
    """(softmax probs, epsilon-soft mixture probs) over the unmasked bins.

    The policy samples from (1 - eps) * softmax + eps * uniform so that
    exploration never dies out; both factors share the mask.
    """
    p_soft = np.exp(masked_log_softmax(row, masked_bins))
    if explore_eps <= 0.0:
        return p_soft, p_soft
    unmasked = np.ones(len(p_soft), dtype=bool)
    for b in masked_bins:
        unmasked[b] = False
    floor = explore_eps / unmasked.sum()
    p_mix = (1.0 - explore_eps) * p_soft
    p_mix[unmasked] += floor
    return p_soft, p_mix


def _masked_bin(
    feedback: FeedbackRecord | None,
    previous: ParsedRollOut | None,
    object_id: str,
    centers: np.ndarray,
    axis: int,
) -> int | None:
    """Bin to exclude for an object that collided last turn: its previous one."""
    if feedback is None or previous is None or previous.layout is None:
        return None
    collided = {oid for pair in feedback.colliding_pairs for oid in pair}
    if object_id not in collided:
        return None
    for placement in previous.layout.placements:
        if placement.object_id == object_id:
            value = (placement.x, placement.y, placement.z)[axis]
            return int(np.argmin(np.abs(centers - value)))
    return None


class GridPolicy:
    """PolicyPort over GridPolicyParams with behavior/reference snapshots."""

    concurrent_safe = True

    def __init__(
        self,
        params: GridPolicyParams,
        behavior: GridPolicyParams | None = None,
        reference: GridPolicyParams | None = None,
    ):
        self.params = params
        self.behavior = behavior or params.copy()
        self.reference = reference or params.copy()

    def refresh_behavior(self) -> None:
        self.behavior = self.params.copy()

    def sample(
        self,
        task: SceneTask,
        turn: int,
        previous: ParsedRollOut | None,
        feedback: FeedbackRecord | None,
        seed: int,
    ) -> tuple[str, list[TokenRecord]]:
        params = self.params
        if turn > params.turns:
            raise ValueError(f"turn {turn} exceeds the configured {params.turns}")
        ids = tuple(obj.id for obj in task.objects)
        if ids != params.object_ids:
            raise ValueError("task objects do not match the policy parameters")
        rng = np.random.default_rng(int(seed))

        pieces: list[tuple[str, dict | None]] = [
            (f"<think>{THINK_SENTENCE}</think>\n<answer>[", None)
        ]
        for i, obj in enumerate(task.objects):
            prefix = "{" if i == 0 else ", {"
            pieces.append((f'{prefix}"new_object_id": {json.dumps(obj.id)}', None))
            for a, axis in enumerate(AXES):
                centers = params.bin_centers[i, a]
                mask_bin = _masked_bin(feedback, previous, obj.id, centers, a)
                masked = [mask_bin] if mask_bin is not None else []
                eta = params.explore_eps
                _, p_mix = mixture_probs(params.logits[i, a, turn - 1], masked, eta)
                cum = np.cumsum(p_mix)
                b = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
                b = min(b, params.bins - 1)
                if p_mix[b] == 0.0:
                    b = int(np.argmax(p_mix))
                lp_new = float(math.log(p_mix[b]))
                lp_old = float(
                    math.log(
                        mixture_probs(self.behavior.logits[i, a, turn - 1], masked, eta)[1][b]
                    )
                )
                lp_ref = float(
                    math.log(
                        mixture_probs(self.reference.logits[i, a, turn - 1], masked, eta)[1][b]
                    )
                )
                pieces.append((f', "{axis}": ', None))
                meta = {
                    "object_index": i,
                    "axis": axis,
                    "turn": turn,
                    "bin": b,
                    "masked_bins": [int(m) for m in masked],
                    "logprobs": (lp_new, lp_old, lp_ref),
                }
                pieces.append((json.dumps(float(centers[b])), meta))
            pieces.append(("}", None))
        pieces.append(("]</answer>", None))

        # Assemble text and tokens: one token per coordinate literal, one per
        # structural fragment between them, tiling the whole string.
        text_parts: list[str] = []
        tokens: list[TokenRecord] = []
        pos = 0
        pending_start = 0
        pending = False
        index = 0

        def flush_structural(end: int):
            nonlocal index, pending
            if pending and end > pending_start:
                tokens.append(
                    TokenRecord(index, (pending_start, end), 0.0, 0.0, 0.0, None)
                )
                index += 1
            pending = False

        for text, meta in pieces:
            if meta is None:
                if not pending:
                    pending_start = pos
                    pending = True
                text_parts.append(text)
                pos += len(text)
                continue
            flush_structural(pos)
            start = pos
            text_parts.append(text)
            pos += len(text)
            lp_new, lp_old, lp_ref = meta.pop("logprobs")
            tokens.append(
                TokenRecord(index, (start, pos), lp_new, lp_old, lp_ref, meta)
            )
            index += 1
            pending_start = pos
            pending = True
        flush_structural(pos)

        return "".join(text_parts), tokens


def _coord_token_location(params: GridPolicyParams, tok: TokenRecord):
    meta = tok.meta
    if meta is None or "bin" not in meta:
        return None
    i = int(meta["object_index"])
    a = AXES.index(meta["axis"])
    t = int(meta["turn"]) - 1
    b = int(meta["bin"])
    if not (0 <= i < len(params.object_ids) and 0 <= t < params.turns and 0 <= b < params.bins):
        raise ValueError("token metadata does not fit the policy parameter shape")
    return i, a, t, b, [int(m) for m in meta.get("masked_bins", [])]


def policy_objective(
    params: GridPolicyParams,
    group: TrajectoryGroup,
    advantages: AdvantageSet,
    epsilon: float,
    kl_beta: float,
) -> float:
    """The surrogate objective with the current-policy log-probabilities
    recomputed from `params` (behavior and reference stay frozen in the
    token records). This is the function the analytic gradient differentiates.
    """
    n_traj = len(group.trajectories)
    objective = 0.0
    for i, traj in enumerate(group.trajectories):
        tokens = traj.token_records()
        if not tokens:
            continue
        acc = 0.0
        for k, tok in enumerate(tokens):
            loc = _coord_token_location(params, tok)
            if loc is None:
                lp_new = tok.logprob_new
            else:
                oi, a, t, b, masked = loc
                _, p_mix = mixture_probs(
                    params.logits[oi, a, t], masked, params.explore_eps
                )
                lp_new = float(math.log(p_mix[b]))
            acc += token_term(
                lp_new,
                tok.logprob_old,
                tok.logprob_ref,
                advantages.advantages[i][k],
                epsilon,
                kl_beta,
            ).term
        objective += acc / len(tokens)
    return objective / n_traj


def logprob_grad(
    params: GridPolicyParams,
    group: TrajectoryGroup,
    advantages: AdvantageSet,
    epsilon: float,
    kl_beta: float,
) -> np.ndarray:
    """Analytic gradient of policy_objective with respect to the logits.

    The clipped branch contributes zero gradient; the KL estimate
    contributes -kl_beta * (1 - exp(logprob_ref - logprob_new)) through
    the chosen bin's log-probability. The exploration floor only rescales
    the softmax jacobian (the uniform branch is parameter-free).
    """
    grad = np.zeros_like(params.logits)
    n_traj = len(group.trajectories)
    for i, traj in enumerate(group.trajectories):
        tokens = traj.token_records()
        if not tokens:
            continue
        scale = 1.0 / (n_traj * len(tokens))
        for k, tok in enumerate(tokens):
            loc = _coord_token_location(params, tok)
            if loc is None:
                continue
            oi, a, t, b, masked = loc
            eta = params.explore_eps
            p_soft, p_mix = mixture_probs(params.logits[oi, a, t], masked, eta)
            lp_new = float(math.log(p_mix[b]))
            adv = advantages.advantages[i][k]
            rto = math.exp(lp_new - tok.logprob_old)
            clipped = min(max(rto, 1.0 - epsilon), 1.0 + epsilon)
            unclipped_active = rto * adv <= clipped * adv
            dpolicy_dlp = adv * rto if unclipped_active else 0.0
            delta = tok.logprob_ref - lp_new
            dterm_dlp = dpolicy_dlp - kl_beta * (1.0 - math.exp(delta))
            # d log p_mix(b) / d logits: the softmax jacobian row scaled by
            # the softmax branch's share of the mixture mass at b.
            coeff = (1.0 - eta) * p_soft[b] / p_mix[b]
            dlp_dlogits = -coeff * p_soft
            dlp_dlogits[b] += coeff
            grad[oi, a, t] += scale * dterm_dlp * dlp_dlogits
    return grad


@dataclass(frozen=True)
class StepMetrics:
    step: int
    mean_total: float
    collision_ratio: float
    constraint_ratio: float
    format_acc: float

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "mean_total": self.mean_total,
            "collision_ratio": self.collision_ratio,
            "constraint_ratio": self.constraint_ratio,
            "format_acc": self.format_acc,
        }


def group_metrics(step: int, group: TrajectoryGroup) -> StepMetrics:
    turns = [turn for traj in group.trajectories for turn in traj.turns]
    n = len(turns)
    return StepMetrics(
        step=step,
        mean_total=sum(t.reward.total for t in turns) / n,
        collision_ratio=sum(t.reward.physics.collision_ratio for t in turns) / n,
        constraint_ratio=sum(t.reward.physics.constraint_ratio for t in turns) / n,
        format_acc=sum(t.reward.format == 1.0 for t in turns) / n,
    )


def train(
    task_set: Sequence[SceneTask],
    steps: int,
    group_size: int = 4,
    turns: int = 3,
    gamma: float = 0.9,
    learning_rate: float = 60.0,
    seed: int = 0,
    *,
    bins: int = 24,
    explore_eps: float = 0.02,
    w_phys: float = 0.2,
    epsilon: float = 0.2,
    kl_beta: float = 0.01,
    eps_sigma: float = 1e-8,
    multiplicative: bool = False,
    penalty_source: str = "per_turn",
    weights: RewardWeights | None = None,
    judge_cfg: JudgeConfig | None = None,
    tolerances: PhysicsTolerances = PhysicsTolerances(),
    schedule: StageSchedule | None = None,
    baseline_groups: int = 50,
) -> tuple[GridPolicyParams, list[StepMetrics]]:
    """Ascend the surrogate objective on the toy policy.

    One gradient step per training step; the behavior snapshot refreshes
    each step and the reference snapshot is the initial parameters. With
    steps=0 the untrained policy is evaluated on `baseline_groups` groups
    and only metrics are produced.
    """
    if steps < 0:
        raise ValueError("steps must be non-negative")
    if not task_set:
        raise ValueError("task_set must not be empty")
    first = task_set[0]
    for task in task_set[1:]:
        if tuple(o.id for o in task.objects) != tuple(o.id for o in first.objects):
            raise ValueError("all tasks must share the same object inventory")

    weights = weights or RewardWeights()
    judge_cfg = judge_cfg or JudgeConfig()
    policy = GridPolicy(GridPolicyParams.for_task(first, turns, bins, explore_eps))
    controller = StageController(schedule or StageSchedule(), weights)
    task_rng = np.random.default_rng(derive_seed(seed, 1))
    metrics: list[StepMetrics] = []

    def one_group(step_seed: int) -> TrajectoryGroup:
        task = task_set[int(task_rng.integers(len(task_set)))]
        return run_group(
            policy,
            task,
            group_size,
            turns,
            gamma,
            step_seed,
            staged=controller.staged(),
            judge_cfg=judge_cfg,
            tolerances=tolerances,
        )

    if steps == 0:
        for b in range(baseline_groups):
            group = one_group(derive_seed(seed, 3, b))
            metrics.append(group_metrics(b + 1, group))
        return policy.params, metrics

    for step in range(1, steps + 1):
        policy.refresh_behavior()
        try:
            group = one_group(derive_seed(seed, 2, step))
            _, adv = compute_group_advantages(
                group,
                w_phys=w_phys,
                eps_sigma=eps_sigma,
                multiplicative=multiplicative,
                penalty_source=penalty_source,
            )
            grad = logprob_grad(policy.params, group, adv, epsilon, kl_beta)
        except Exception as exc:
            raise RuntimeError(f"training step {step} failed: {exc}") from exc
        policy.params.logits += learning_rate * grad
        controller.observe(
            turn.reward.format for traj in group.trajectories for turn in traj.turns
        )
        metrics.append(group_metrics(step, group))
    return policy.params, metrics


def write_metrics(path: str | Path, metrics: Sequence[StepMetrics]) -> None:
    with open(path, "w") as fh:
        for m in metrics:
            fh.write(json.dumps(m.to_dict()) + "\n")
