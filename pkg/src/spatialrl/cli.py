"""Command-line surface: score, rollout, advantage, train-toy, judge-stub.

Exit codes: 0 success, 1 engine error, 2 input or schema error. Every
command is deterministic given its flags and seed, except when a remote
judge is configured (the dump and score records then mark the source).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import __version__
from .advantage import (
    ADVANTAGE_SCHEMA,
    advantage_record,
    compute_group_advantages,
    surrogate_objective,
    write_advantages,
)
from .config import CONFIG_SCHEMA, EngineConfig, load_config
from .judge import JudgeError, RenderReward
from .physics import PhysicsReport
from .policy import CHECKPOINT_SCHEMA, GridPolicy, GridPolicyParams, train, write_metrics
from .rollout import parse_rollout
from .scene import SchemaError, load_task
from .trajectory import (
    DUMP_SCHEMA,
    PolicyError,
    StageController,
    derive_seed,
    read_dump,
    run_group,
    score_rollout,
    total_reward,
    write_dump,
)


def _apply_overrides(config: EngineConfig, args: argparse.Namespace) -> EngineConfig:
    """Flag overrides beat the config file which beats the defaults."""

    def patch(section, **changes):
        changes = {k: v for k, v in changes.items() if v is not None}
        return dataclasses.replace(section, **changes) if changes else section

    try:
        config.trajectory = patch(
            config.trajectory,
            group_size=getattr(args, "group", None),
            turns=getattr(args, "turns", None),
            gamma=getattr(args, "gamma", None),
        )
        config.advantage = patch(
            config.advantage,
            w_phys=getattr(args, "w_phys", None),
            epsilon=getattr(args, "epsilon", None),
            kl_beta=getattr(args, "kl_beta", None),
        )
        config.judge = patch(
            config.judge,
            mode=getattr(args, "judge_mode", None),
            endpoint=getattr(args, "judge_endpoint", None),
        )
        config.policy = patch(
            config.policy,
            steps=getattr(args, "steps", None),
            learning_rate=getattr(args, "lr", None),
            bins=getattr(args, "bins", None),
        )
        config.stage = patch(config.stage, mode=getattr(args, "stage_schedule", None))
    except ValueError as exc:
        raise SchemaError("flags", str(exc)) from exc
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    return config


def _load_engine_config(args: argparse.Namespace) -> EngineConfig:
    return _apply_overrides(load_config(getattr(args, "config", None)), args)


def _print_json(doc: dict) -> None:
    sys.stdout.write(json.dumps(doc) + "\n")


def _components_breakdown(doc: dict, config: EngineConfig) -> dict:
    for key in ("render", "format", "collision_ratio", "constraint_ratio"):
        if key not in doc:
            raise SchemaError(f"components.{key}", "missing required field")
        v = doc[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise SchemaError(f"components.{key}", "must be a number")
    weights = config.reward
    physics = PhysicsReport.from_ratios(
        doc["collision_ratio"], doc["constraint_ratio"], weights.alpha, weights.beta
    )
    render = RenderReward(value=float(doc["render"]), grades=None, source="external")
    total = total_reward(float(doc["format"]), physics, render, weights)
    return {
        "format": float(doc["format"]),
        "physics": physics.to_dict(),
        "render": render.to_dict(),
        "total": total,
    }


def cmd_score(args: argparse.Namespace) -> int:
    config = _load_engine_config(args)
    if args.components is not None:
        text = args.components
        if not text.lstrip().startswith("{"):
            text = Path(text).read_text()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError("components", f"not valid JSON ({exc})") from exc
        _print_json(_components_breakdown(doc, config))
        return 0
    if args.task is None or args.rollout is None:
        raise SchemaError("flags", "score needs --task and --rollout (or --components)")
    task = load_task(args.task)
    raw_text = Path(args.rollout).read_text()
    parsed = parse_rollout(raw_text)
    breakdown, _ = score_rollout(
        parsed,
        task,
        weights=config.reward,
        judge_cfg=config.judge,
        tolerances=config.physics,
    )
    _print_json(breakdown.to_dict())
    return 0


def cmd_rollout(args: argparse.Namespace) -> int:
    config = _load_engine_config(args)
    task = load_task(args.task)
    traj_cfg = config.trajectory
    policy = GridPolicy(
        GridPolicyParams.for_task(
            task, traj_cfg.turns, config.policy.bins, config.policy.explore_eps
        )
    )
    controller = StageController(config.stage, config.reward)
    groups = []
    for g in range(args.num_groups):
        groups.append(
            run_group(
                policy,
                task,
                traj_cfg.group_size,
                traj_cfg.turns,
                traj_cfg.gamma,
                derive_seed(config.seed, g),
                staged=controller.staged(),
                judge_cfg=config.judge,
                tolerances=config.physics,
            )
        )
    write_dump(args.out, groups)
    _print_json(
        {
            "schema": DUMP_SCHEMA,
            "out": str(args.out),
            "groups": len(groups),
            "group_size": traj_cfg.group_size,
            "turns": traj_cfg.turns,
            "seed": config.seed,
            "deterministic": config.judge.mode == "stub",
        }
    )
    return 0


def cmd_advantage(args: argparse.Namespace) -> int:
    config = _load_engine_config(args)
    adv_cfg = config.advantage
    groups = read_dump(args.dump)
    if not groups:
        raise SchemaError(str(args.dump), "dump contains no trajectory groups")
    records = []
    for group in groups:
        for i, traj in enumerate(group.trajectories):
            for k, tok in enumerate(traj.token_records()):
                if tok.logprob_new is None or tok.logprob_old is None or tok.logprob_ref is None:
                    raise SchemaError(
                        f"trajectory {i} turn-token {k}",
                        "missing token log-probabilities",
                    )
        masks, adv = compute_group_advantages(
            group,
            w_phys=adv_cfg.w_phys,
            eps_sigma=adv_cfg.eps_sigma,
            multiplicative=adv_cfg.multiplicative,
            penalty_source=adv_cfg.penalty_source,
        )
        objective, terms = surrogate_objective(group, adv, adv_cfg.epsilon, adv_cfg.kl_beta)
        records.append(
            advantage_record(
                group,
                masks,
                adv,
                terms,
                objective,
                w_phys=adv_cfg.w_phys,
                epsilon=adv_cfg.epsilon,
                kl_beta=adv_cfg.kl_beta,
            )
        )
    write_advantages(args.out, records)
    _print_json({"schema": ADVANTAGE_SCHEMA, "out": str(args.out), "groups": len(records)})
    return 0


def cmd_train_toy(args: argparse.Namespace) -> int:
    config = _load_engine_config(args)
    task = load_task(args.task)
    params, metrics = train(
        [task],
        steps=config.policy.steps,
        group_size=config.trajectory.group_size,
        turns=config.trajectory.turns,
        gamma=config.trajectory.gamma,
        learning_rate=config.policy.learning_rate,
        seed=config.seed,
        bins=config.policy.bins,
        w_phys=config.advantage.w_phys,
        epsilon=config.advantage.epsilon,
        kl_beta=config.advantage.kl_beta,
        eps_sigma=config.advantage.eps_sigma,
        multiplicative=config.advantage.multiplicative,
        penalty_source=config.advantage.penalty_source,
        weights=config.reward,
        judge_cfg=config.judge,
        tolerances=config.physics,
        schedule=config.stage,
        explore_eps=config.policy.explore_eps,
    )
    if args.out:
        write_metrics(args.out, metrics)
    if args.checkpoint:
        params.save(args.checkpoint)
    tail = metrics[-50:] if metrics else []
    summary = {
        "schema": "train_summary.v1",
        "steps": config.policy.steps,
        "seed": config.seed,
        "final_mean_total": (
            sum(m.mean_total for m in tail) / len(tail) if tail else None
        ),
        "final_collision_ratio": (
            sum(m.collision_ratio for m in tail) / len(tail) if tail else None
        ),
        "final_constraint_ratio": (
            sum(m.constraint_ratio for m in tail) / len(tail) if tail else None
        ),
        "final_format_acc": (
            sum(m.format_acc for m in tail) / len(tail) if tail else None
        ),
    }
    _print_json(summary)
    return 0


def cmd_judge_stub(args: argparse.Namespace) -> int:
    from . import judge_server

    try:
        judge_server.serve(args.port)
    except OSError as exc:
        print(f"error: cannot bind port {args.port}: {exc}", file=sys.stderr)
        return 1
    return 0


def cmd_version(args: argparse.Namespace) -> int:
    _print_json(
        {
            "version": __version__,
            "schemas": {
                "trajectory_dump": DUMP_SCHEMA,
                "advantages": ADVANTAGE_SCHEMA,
                "config": CONFIG_SCHEMA,
                "checkpoint": CHECKPOINT_SCHEMA,
            },
        }
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spatialrl",
        description="Layout reward stack, refinement rollouts, and advantage computation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser):
        p.add_argument("--config", type=str, default=None, help="engine config JSON")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--judge-mode", choices=("stub", "remote"), default=None)
        p.add_argument("--judge-endpoint", type=str, default=None)

    p = sub.add_parser("score", help="score one roll-out (or compose raw components)")
    common(p)
    p.add_argument("--task", type=str, default=None)
    p.add_argument("--rollout", type=str, default=None)
    p.add_argument(
        "--components",
        type=str,
        default=None,
        help="JSON (inline or file) with render/format/collision_ratio/constraint_ratio",
    )
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("rollout", help="generate a trajectory dump with the toy policy")
    common(p)
    p.add_argument("--task", type=str, required=True)
    p.add_argument("--out", type=str, required=True)
    p.add_argument("--group", type=int, default=None)
    p.add_argument("--turns", type=int, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--bins", type=int, default=None)
    p.add_argument("--num-groups", type=int, default=1, help="dump lines to produce")
    p.add_argument("--stage-schedule", choices=("all", "staged"), default=None)
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("advantage", help="compute per-token advantages from a dump")
    common(p)
    p.add_argument("--dump", type=str, required=True)
    p.add_argument("--out", type=str, required=True)
    p.add_argument("--w-phys", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--kl-beta", type=float, default=None)
    p.set_defaults(func=cmd_advantage)

    p = sub.add_parser("train-toy", help="desk-scale training run on the toy policy")
    common(p)
    p.add_argument("--task", type=str, required=True)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--group", type=int, default=None)
    p.add_argument("--turns", type=int, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--bins", type=int, default=None)
    p.add_argument("--w-phys", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--kl-beta", type=float, default=None)
    p.add_argument("--stage-schedule", choices=("all", "staged"), default=None)
    p.add_argument("--out", type=str, default=None, help="metric log JSONL")
    p.add_argument("--checkpoint", type=str, default=None, help="policy checkpoint JSON")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("judge-stub", help="serve the offline judge over HTTP")
    p.add_argument("--port", type=int, default=8787)
    p.set_defaults(func=cmd_judge_stub)

    p = sub.add_parser("version", help="print version and schema identifiers")
    p.set_defaults(func=cmd_version)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (PolicyError, JudgeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
