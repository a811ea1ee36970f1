#!/usr/bin/env python3
"""Paired comparison: coordinate-penalty modulation on vs off.

Runs the desk-scale training twice per seed (w_phys 0.2 and 0.0) and
reports the final-50-step collision and constraint means side by side.
"""

import argparse
from pathlib import Path

from spatialrl.policy import train
from spatialrl.scene import load_task

HERE = Path(__file__).resolve().parent


def tail_mean(metrics, field, n=50):
    tail = metrics[-n:]
    return sum(getattr(m, field) for m in tail) / len(tail)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--task", default=str(HERE.parent / "tests" / "data" / "task_crates.json"))
    parser.add_argument("--steps", type=int, default=300)
    parser.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    parser.add_argument("--w-phys", type=float, default=0.2)
    args = parser.parse_args()

    task = load_task(args.task)
    ordered = 0
    for seed in args.seeds:
        results = {}
        for w in (args.w_phys, 0.0):
            _, metrics = train([task], steps=args.steps, seed=seed, w_phys=w)
            results[w] = (
                tail_mean(metrics, "collision_ratio"),
                tail_mean(metrics, "constraint_ratio"),
            )
        on, off = results[args.w_phys], results[0.0]
        ordered += on[0] <= off[0]
        print(
            f"seed {seed}: w={args.w_phys}: collision {on[0]:.3f} constraint {on[1]:.3f}"
            f"  |  w=0: collision {off[0]:.3f} constraint {off[1]:.3f}"
        )
    print(f"\npenalty run at or below the plain run in {ordered}/{len(args.seeds)} pairs")


if __name__ == "__main__":
    main()
