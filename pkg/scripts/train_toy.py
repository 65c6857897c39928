"""Train the full model on synthetic rectangle maps at several ranks and compare final accuracy."""

import argparse
from dataclasses import replace

from reconet.train import ToyConfig, toy_train


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--ranks", type=int, nargs="+", default=[1, 2, 4, 8])
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    print("rank,final_loss,initial_accuracy,final_accuracy")
    for r in args.ranks:
        report = toy_train(replace(ToyConfig(), rank=r, steps=args.steps, seed=args.seed))
        print(f"{r},{report.losses_total[-1]:.6f},{report.initial_accuracy:.4f},{report.final_accuracy:.4f}")


if __name__ == "__main__":
    main()
