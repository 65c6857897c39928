"""Print the analytic cost comparison at a feature-map size, plus reported rows for context."""

import argparse

from reconet.costs import compare


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--C", type=int, default=512)
    p.add_argument("--H", type=int, default=64)
    p.add_argument("--W", type=int, default=64)
    p.add_argument("--r", type=int, default=64)
    args = p.parse_args()
    result = compare(args.C, args.H, args.W, args.r)
    print(result.table())
    print()
    print("\n".join(result.machine_lines()))


if __name__ == "__main__":
    main()
