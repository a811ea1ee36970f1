"""Coordinate-masked group-relative advantages and the clipped objective.

Tokens that spell out an object's x/y/z literals are identified by span
intersection, their trajectory reward is lowered by that object's physics
penalty, and everything is normalized by the mean and population std of
the unmodulated group rewards. The objective is the clipped likelihood
ratio surrogate with a nonnegative per-token KL penalty.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple, Sequence

from .rollout import TokenRecord, coordinate_value_spans, find_answer_span
from .scene import Layout
from .trajectory import Trajectory, TrajectoryGroup

ADVANTAGE_SCHEMA = "advantage_set.v1"


class CoordLabel(NamedTuple):
    object_id: str
    axis: str


@dataclass(frozen=True)
class CoordMask:
    """Per-token labels aligned with a token list; None marks non-coordinate."""

    labels: tuple[CoordLabel | None, ...]


@dataclass(frozen=True)
class AdvantageSet:
    advantages: tuple[tuple[float, ...], ...]
    group_mean: float
    group_std: float


class TokenTerm(NamedTuple):
    policy_term: float
    kl_term: float
    term: float


def coord_mask(
    raw_text: str, tokens: Sequence[TokenRecord], layout: Layout | None
) -> CoordMask:
    """Label each token that intersects a coordinate literal of the answer.

    Token spans are offsets into raw_text. Without an extracted layout
    every token is non-coordinate. A token overlapping several literals
    takes the first in document order.
    """
    if layout is None or not layout.placements:
        return CoordMask(tuple(None for _ in tokens))
    answer_span = find_answer_span(raw_text)
    if answer_span is None:
        return CoordMask(tuple(None for _ in tokens))
    base = answer_span[0]
    answer_text = raw_text[answer_span[0]:answer_span[1]]

    placed_ids = {p.object_id for p in layout.placements}
    literals: list[tuple[int, int, CoordLabel]] = []
    for record in coordinate_value_spans(answer_text):
        if record.object_id is None or record.object_id not in placed_ids:
            continue
        for axis, (start, end) in record.spans.items():
            literals.append((base + start, base + end, CoordLabel(record.object_id, axis)))
    literals.sort(key=lambda item: item[0])

    labels: list[CoordLabel | None] = []
    for tok in tokens:
        label = None
        for start, end, lit in literals:
            if tok.span[0] < end and start < tok.span[1]:
                label = lit
                break
            if start >= tok.span[1]:
                break
        labels.append(label)
    return CoordMask(tuple(labels))


def trajectory_mask(traj: Trajectory) -> CoordMask:
    """Mask over a trajectory's concatenated token stream, turn by turn."""
    labels: list[CoordLabel | None] = []
    offset = 0
    for turn in traj.turns:
        local_tokens = [
            replace(tok, span=(tok.span[0] - offset, tok.span[1] - offset))
            for tok in turn.tokens
        ]
        turn_mask = coord_mask(turn.rollout.raw_text, local_tokens, turn.rollout.layout)
        labels.extend(turn_mask.labels)
        offset += len(turn.rollout.raw_text)
    return CoordMask(tuple(labels))


def group_masks(group: TrajectoryGroup) -> list[CoordMask]:
    return [trajectory_mask(traj) for traj in group.trajectories]


def group_penalties(group: TrajectoryGroup) -> list[dict[str, float]]:
    """Per-trajectory object penalties, taken from the final turn's report."""
    return [dict(traj.final_physics().per_object_penalty) for traj in group.trajectories]


def turn_modulated_rewards(
    group: TrajectoryGroup,
    masks: Sequence[CoordMask],
    w_phys: float,
    *,
    multiplicative: bool = False,
) -> list[list[float]]:
    """Adjusted rewards with each turn's coordinate tokens carrying that
    turn's own object penalties.

    Credit lands on the tokens that produced the penalized layout, which
    assigns blame far more sharply across turns than a single
    trajectory-wide penalty map.
    """
    if w_phys < 0:
        raise ValueError("w_phys must be non-negative")
    adjusted: list[list[float]] = []
    for traj, mask in zip(group.trajectories, masks):
        reward = traj.discounted_reward
        per_token: list[float] = []
        k = 0
        for turn in traj.turns:
            penalty_map = turn.reward.physics.per_object_penalty
            for _ in turn.tokens:
                label = mask.labels[k]
                k += 1
                if label is None:
                    per_token.append(reward)
                    continue
                p = penalty_map.get(label.object_id, 0.0)
                if multiplicative:
                    per_token.append(reward * (1.0 - w_phys * p))
                else:
                    per_token.append(reward - w_phys * p)
        adjusted.append(per_token)
    return adjusted


def modulate_rewards(
    group: TrajectoryGroup,
    masks: Sequence[CoordMask],
    penalties: Sequence[dict[str, float]],
    w_phys: float,
    *,
    multiplicative: bool = False,
) -> list[list[float]]:
    """Per-token adjusted rewards.

    Coordinate tokens of object o get R_i - w_phys * p_o (subtractive, so
    a penalty lowers the token's reward for any sign of R_i); other tokens
    keep the trajectory reward. The multiplicative variant
    R_i * (1 - w_phys * p_o) is available for comparison.
    """
    if w_phys < 0:
        raise ValueError("w_phys must be non-negative")
    adjusted: list[list[float]] = []
    for traj, mask, penalty_map in zip(group.trajectories, masks, penalties):
        reward = traj.discounted_reward
        per_token = []
        for label in mask.labels:
            if label is None:
                per_token.append(reward)
                continue
            p = penalty_map.get(label.object_id, 0.0)
            if multiplicative:
                per_token.append(reward * (1.0 - w_phys * p))
            else:
                per_token.append(reward - w_phys * p)
        adjusted.append(per_token)
    return adjusted


def normalize_group(
    group: TrajectoryGroup,
    adjusted: Sequence[Sequence[float]],
    *,
    eps_sigma: float = 1e-8,
) -> AdvantageSet:
    """Advantages = (adjusted - mu) / sigma with mu and sigma taken from the
    unmodulated trajectory rewards (population std). Degenerate groups
    (sigma below eps_sigma) yield all-zero advantages.
    """
    if len(group.trajectories) < 2:
        raise ValueError("group size must be at least 2")
    rewards = group.discounted_rewards()
    mu = sum(rewards) / len(rewards)
    sigma = math.sqrt(sum((r - mu) ** 2 for r in rewards) / len(rewards))
    if sigma < eps_sigma:
        return AdvantageSet(
            advantages=tuple(tuple(0.0 for _ in row) for row in adjusted),
            group_mean=mu,
            group_std=sigma,
        )
    return AdvantageSet(
        advantages=tuple(tuple((r - mu) / sigma for r in row) for row in adjusted),
        group_mean=mu,
        group_std=sigma,
    )


def compute_group_advantages(
    group: TrajectoryGroup,
    *,
    w_phys: float,
    eps_sigma: float = 1e-8,
    multiplicative: bool = False,
    penalty_source: str = "per_turn",
) -> tuple[list[CoordMask], AdvantageSet]:
    """Masks plus normalized advantages for a group.

    penalty_source selects where the object penalties come from:
    "per_turn" modulates each turn's coordinate tokens with that turn's
    report; "final" applies the last turn's penalties trajectory-wide.
    """
    masks = group_masks(group)
    if penalty_source == "per_turn":
        adjusted = turn_modulated_rewards(
            group, masks, w_phys, multiplicative=multiplicative
        )
    elif penalty_source == "final":
        adjusted = modulate_rewards(
            group, masks, group_penalties(group), w_phys, multiplicative=multiplicative
        )
    else:
        raise ValueError(f"unknown penalty source {penalty_source!r}")
    return masks, normalize_group(group, adjusted, eps_sigma=eps_sigma)


def token_term(
    logprob_new: float,
    logprob_old: float,
    logprob_ref: float,
    advantage: float,
    epsilon: float,
    kl_beta: float,
) -> TokenTerm:
    """Clipped-ratio policy term minus the weighted nonnegative KL estimate."""
    rto = math.exp(logprob_new - logprob_old)
    clipped = min(max(rto, 1.0 - epsilon), 1.0 + epsilon)
    policy = min(rto * advantage, clipped * advantage)
    delta = logprob_ref - logprob_new
    kl = math.exp(delta) - delta - 1.0
    return TokenTerm(policy, kl, policy - kl_beta * kl)


def surrogate_objective(
    group: TrajectoryGroup,
    advantages: AdvantageSet,
    epsilon: float,
    kl_beta: float,
) -> tuple[float, list[list[TokenTerm]]]:
    """Scalar objective plus the per-token terms it averages.

    Trajectories are weighted 1/G, tokens within a trajectory 1/|T_i|
    counted across all turns.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if kl_beta < 0:
        raise ValueError("kl_beta must be non-negative")
    n_traj = len(group.trajectories)
    objective = 0.0
    all_terms: list[list[TokenTerm]] = []
    for i, traj in enumerate(group.trajectories):
        tokens = traj.token_records()
        terms: list[TokenTerm] = []
        for k, tok in enumerate(tokens):
            if tok.logprob_new is None or tok.logprob_old is None or tok.logprob_ref is None:
                raise ValueError(
                    f"trajectory {i} token {k}: missing log-probabilities"
                )
            terms.append(
                token_term(
                    tok.logprob_new,
                    tok.logprob_old,
                    tok.logprob_ref,
                    advantages.advantages[i][k],
                    epsilon,
                    kl_beta,
                )
            )
        all_terms.append(terms)
        if terms:
            objective += sum(t.term for t in terms) / len(terms)
    return objective / n_traj, all_terms


def advantage_record(
    group: TrajectoryGroup,
    masks: Sequence[CoordMask],
    advantages: AdvantageSet,
    terms: Sequence[Sequence[TokenTerm]],
    objective: float,
    *,
    w_phys: float,
    epsilon: float,
    kl_beta: float,
) -> dict:
    """The published advantage document for one group."""
    trajectories = []
    for traj, mask, adv_row, term_row in zip(
        group.trajectories, masks, advantages.advantages, terms
    ):
        entries = []
        for k, (label, adv, term) in enumerate(zip(mask.labels, adv_row, term_row)):
            entries.append(
                {
                    "token_index": k,
                    "label": (
                        {"object_id": label.object_id, "axis": label.axis}
                        if label is not None
                        else None
                    ),
                    "advantage": float(adv),
                    "policy_term": float(term.policy_term),
                    "kl_term": float(term.kl_term),
                }
            )
        trajectories.append(entries)
    return {
        "schema": ADVANTAGE_SCHEMA,
        "group_id": group.task_id,
        "mu": float(advantages.group_mean),
        "sigma": float(advantages.group_std),
        "w_phys": float(w_phys),
        "epsilon": float(epsilon),
        "kl_beta": float(kl_beta),
        "objective": float(objective),
        "trajectories": trajectories,
    }


def write_advantages(path: str | Path, records: Sequence[dict]) -> None:
    with open(path, "w") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")
