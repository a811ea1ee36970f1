"""Builders shared by the advantage and acceptance tests."""

from __future__ import annotations

import dataclasses

import numpy as np

from spatialrl.policy import GridPolicy, GridPolicyParams
from spatialrl.scene import SceneTask, task_from_dict
from spatialrl.trajectory import TrajectoryGroup, run_group


def tiny_task(n_objects: int = 3, task_id: str = "tiny") -> SceneTask:
    return task_from_dict(
        {
            "task_id": task_id,
            "room": {"x": 6, "y": 5, "z": 3},
            "objects": [
                {"id": f"box_{i}", "category": "box", "size_m": [1, 1, 1]}
                for i in range(1, n_objects + 1)
            ],
        }
    )


def sampled_policy_and_group(
    task: SceneTask,
    *,
    group_size: int = 4,
    turns: int = 2,
    bins: int = 6,
    seed: int = 0,
    logit_scale: float = 0.8,
    behavior_shift: float = 0.0,
    explore_eps: float = 0.0,
    gamma: float = 0.9,
) -> tuple[GridPolicy, TrajectoryGroup]:
    """A real policy-sampled group with optionally perturbed snapshots."""
    rng = np.random.default_rng(seed)
    params = GridPolicyParams.for_task(task, turns, bins, explore_eps)
    params.logits += rng.normal(0.0, logit_scale, size=params.logits.shape)
    behavior = params.copy()
    if behavior_shift:
        behavior.logits += rng.normal(0.0, behavior_shift, size=params.logits.shape)
    reference = params.copy()
    reference.logits[:] = 0.0
    policy = GridPolicy(params, behavior, reference)
    return policy, run_group(policy, task, group_size, turns, gamma, seed=seed + 1)


def sampled_group(task: SceneTask, **kwargs) -> TrajectoryGroup:
    return sampled_policy_and_group(task, **kwargs)[1]


def with_rewards(group: TrajectoryGroup, rewards) -> TrajectoryGroup:
    """Copy of the group with the discounted rewards replaced."""
    trajectories = tuple(
        dataclasses.replace(traj, discounted_reward=float(r))
        for traj, r in zip(group.trajectories, rewards)
    )
    return dataclasses.replace(group, trajectories=trajectories)
