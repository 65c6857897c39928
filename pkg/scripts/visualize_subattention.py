"""Render per-rank context heat maps of a trained toy model as PGM images.

Each image is the channel mean of ``A_i * X`` for one rank-1 term, taken on
the first training image after training.
"""

import argparse
from dataclasses import replace
from pathlib import Path

import numpy as np

from reconet.io import write_pgm
from reconet.train import ToyConfig, make_dataset, toy_train
from reconet.trm import apply_context, sub_attention, tgm_trm_forward


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--rank", type=int, default=4)
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--out", type=Path, default=Path("subattention_maps"))
    args = p.parse_args()
    config = replace(ToyConfig(), rank=args.rank, steps=args.steps)
    report = toy_train(config)
    images, labels = make_dataset(config)
    _, _, frags = tgm_trm_forward(images[0], report.params.tgm)
    args.out.mkdir(parents=True, exist_ok=True)
    write_pgm(args.out / "labels.pgm", np.asarray(labels[0], dtype=np.float64))
    for i, (lam, t) in enumerate(zip(frags.lambdas, frags.triplets), start=1):
        heat = apply_context(sub_attention(t, i).tensor, images[0]).mean(axis=0)
        write_pgm(args.out / f"term_{i:03d}.pgm", heat)
        print(f"term {i}: lambda={lam:.4f}")
    print(f"accuracy={report.final_accuracy:.4f}, maps in {args.out}")


if __name__ == "__main__":
    main()
