#!/usr/bin/env python3
"""Desk-scale training run on the crate fixture.

Trains the grid policy for 300 steps, prints the rolling metrics, and
writes the metric log plus a checkpoint next to the task file. Compare
against --steps 0 for the random-init baseline.
"""

import argparse
import time
from pathlib import Path

from spatialrl.policy import train, write_metrics
from spatialrl.scene import load_task

HERE = Path(__file__).resolve().parent


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--task", default=str(HERE.parent / "tests" / "data" / "task_crates.json"))
    parser.add_argument("--steps", type=int, default=300)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--lr", type=float, default=60.0)
    parser.add_argument("--w-phys", type=float, default=0.2)
    parser.add_argument("--out", default="desk_metrics.jsonl")
    parser.add_argument("--checkpoint", default=None)
    args = parser.parse_args()

    task = load_task(args.task)
    start = time.monotonic()
    params, metrics = train(
        [task],
        steps=args.steps,
        learning_rate=args.lr,
        seed=args.seed,
        w_phys=args.w_phys,
    )
    elapsed = time.monotonic() - start

    write_metrics(args.out, metrics)
    if args.checkpoint:
        params.save(args.checkpoint)

    for m in metrics[:: max(len(metrics) // 10, 1)]:
        print(
            f"step {m.step:4d}  total {m.mean_total:6.3f}  "
            f"collision {m.collision_ratio:.3f}  constraint {m.constraint_ratio:.3f}"
        )
    tail = metrics[-50:]
    print(
        f"\n{args.steps} steps in {elapsed:.1f}s; final-50 means: "
        f"collision {sum(m.collision_ratio for m in tail) / len(tail):.3f}, "
        f"constraint {sum(m.constraint_ratio for m in tail) / len(tail):.3f}, "
        f"total {sum(m.mean_total for m in tail) / len(tail):.3f}"
    )
    print(f"metrics -> {args.out}" + (f", checkpoint -> {args.checkpoint}" if args.checkpoint else ""))


if __name__ == "__main__":
    main()
