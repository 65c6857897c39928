"""Least-squares fit of a fixed target tensor at increasing CP rank.

Writes ``r,final_mse`` rows. With ``--out`` the rows also go to a CSV file.
"""

import argparse
from pathlib import Path

from reconet.sweep import rank1_target, random_target, rank_sweep


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--shape", type=int, nargs=3, default=(4, 4, 4), metavar=("C", "H", "W"))
    p.add_argument("--ranks", type=int, nargs="+", default=[1, 2, 4, 8, 16])
    p.add_argument("--target", choices=("random", "rank1"), default="random")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path)
    args = p.parse_args()
    make = random_target if args.target == "random" else rank1_target
    rows = rank_sweep(make(args.shape, args.seed), args.ranks, seed=args.seed)
    text = "r,final_mse\n" + "".join(f"{row.rank},{row.mse:.6e}\n" for row in rows)
    print(text, end="")
    if args.out:
        args.out.write_text(text)


if __name__ == "__main__":
    main()
