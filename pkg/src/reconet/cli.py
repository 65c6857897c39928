"""``reconet`` command line: gradcheck, costs, demo, verify, rank-sweep, train-toy.

Exit codes: 0 pass, 1 verification failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _dims(p: argparse.ArgumentParser, C: int, H: int, W: int, r: int) -> None:
    p.add_argument("--C", type=int, default=C)
    p.add_argument("--H", type=int, default=H)
    p.add_argument("--W", type=int, default=W)
    p.add_argument("--r", type=int, default=r)


def _seed(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)


def _ranks(text: str) -> list[int]:
    try:
        ranks = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not ranks or min(ranks) < 1:
        raise argparse.ArgumentTypeError("ranks must be positive")
    return ranks


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reconet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gradcheck", help="reverse-mode gradients vs central differences")
    _dims(p, 6, 5, 4, 3)
    p.add_argument("--K", type=int, default=3)
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.add_argument("--eps", type=float, default=1e-5)
    _seed(p)

    p = sub.add_parser("costs", help="analytic FLOPs/memory table")
    _dims(p, 512, 64, 64, 64)

    p = sub.add_parser("demo", help="forward pass with attention dump and sub-attention heat maps")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", type=Path, help="RCN1 tensor file")
    src.add_argument("--random", action="store_true", help="random N(0,1) input of the given dims")
    _dims(p, 8, 16, 16, 4)
    p.add_argument("--zero-params", action="store_true", help="use all-zero generator parameters")
    p.add_argument("--out", type=Path, required=True)
    _seed(p)

    p = sub.add_parser("verify", help="structural checks: degenerations, rank-1 maps, linearity")
    _dims(p, 4, 3, 3, 3)
    p.add_argument("--trials", type=int, default=20)
    _seed(p)

    p = sub.add_parser("rank-sweep", help="least-squares capacity of each rank on a fixed target")
    _dims(p, 4, 4, 4, 1)
    p.add_argument("--ranks", type=_ranks, default=[1, 2, 4, 8, 16])
    p.add_argument("--target", choices=("random", "rank1"), default="random")
    p.add_argument("--steps", type=int, default=5000, help="optimizer iteration cap per fit")
    _seed(p)

    p = sub.add_parser("train-toy", help="gradient descent on synthetic rectangle maps")
    p.add_argument("--config", type=Path, help="key=value config file")
    p.add_argument("--r", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, help="write the loss CSV here instead of stdout")
    return parser


def run_gradcheck(args) -> int:
    from reconet.model import check_gradients

    if args.tolerance <= 0 or args.eps <= 0:
        raise UsageError("--tolerance and --eps must be positive")
    report = check_gradients(args.C, args.H, args.W, args.r, args.K, args.seed, args.tolerance, args.eps)
    print("\n".join(report.lines()))
    return EXIT_OK if report.passed else EXIT_FAIL


def run_costs(args) -> int:
    from reconet.costs import compare

    comparison = compare(args.C, args.H, args.W, args.r)
    print(comparison.table())
    print()
    print("method,mac,bytes")
    print("\n".join(comparison.machine_lines()))
    return EXIT_OK


def run_demo(args) -> int:
    from reconet.io import FormatError, read_tensor, write_pgm, write_tensor
    from reconet.tgm import TgmParams, init_tgm
    from reconet.trm import apply_context, sub_attention, tgm_trm_forward

    if args.input is not None:
        try:
            x = read_tensor(args.input)
        except (OSError, FormatError) as exc:
            raise UsageError(f"cannot read {args.input}: {exc}")
    else:
        x = np.random.default_rng(args.seed).normal(size=(args.C, args.H, args.W))
    C = x.shape[0]
    params = TgmParams.zeros(C, args.r) if args.zero_params else init_tgm(C, args.r, args.seed)
    _, a, frags = tgm_trm_forward(x, params)
    args.out.mkdir(parents=True, exist_ok=True)
    write_tensor(args.out / "attention.rcn1", a)
    for i, triplet in enumerate(frags.triplets, start=1):
        heat = apply_context(sub_attention(triplet, i).tensor, x).mean(axis=0)
        write_pgm(args.out / f"subattention_{i:03d}.pgm", heat)
    print(f"wrote attention.rcn1 and {frags.rank} heat maps to {args.out}")
    return EXIT_OK


def verification_checks(C=4, H=3, W=3, r=3, trials=20, seed=0):
    from reconet.relations import Check, cbam_attention, verify_senet_degeneration
    from reconet.tensor import rank1_deviation, sigmoid_map
    from reconet.tgm import FragmentSet, FragmentTriplet, init_tgm
    from reconet.trm import apply_context, reconstruct, sub_attention

    rng = np.random.default_rng(seed)
    senet = {}
    for _ in range(trials):
        x = rng.normal(size=(C, H, W))
        for check in verify_senet_degeneration(init_tgm(C, 1, int(rng.integers(2**31))), x):
            prev = senet.get(check.name)
            if prev is None or check.deviation > prev.deviation or not check.passed:
                senet[check.name] = check
    checks = list(senet.values())

    cbam_dev = rank1_dev = linear_dev = 0.0
    cbam_ok = True
    for _ in range(trials):
        vc, vh, vw = (sigmoid_map(rng.normal(size=n)) for n in (C, H, W))
        sub = sub_attention(FragmentTriplet(vc, vh, vw), 1).tensor
        cbam = cbam_attention(vc, np.multiply.outer(vh, vw))
        cbam_ok &= bool(np.array_equal(cbam, sub))
        cbam_dev = max(cbam_dev, float(np.abs(cbam - sub).max()))
        rank1_dev = max(rank1_dev, rank1_deviation(sub))

        triplets = [FragmentTriplet(*(sigmoid_map(rng.normal(size=n)) for n in (C, H, W))) for _ in range(r)]
        frags = FragmentSet(triplets, sigmoid_map(rng.normal(size=r)))
        x = rng.normal(size=(C, H, W))
        lhs = apply_context(reconstruct(frags, (C, H, W)), x)
        rhs = sum(
            lam * apply_context(sub_attention(t, i).tensor, x)
            for i, (lam, t) in enumerate(zip(frags.lambdas, triplets), start=1)
        )
        linear_dev = max(linear_dev, float(np.abs(lhs - rhs).max() / max(1e-300, np.abs(lhs).max())))
    checks.append(Check("cbam_separable_equals_sub_attention", cbam_ok, cbam_dev))
    checks.append(Check("sub_attention_rank1_minors", rank1_dev <= 1e-12, rank1_dev))
    checks.append(Check("context_linearity", linear_dev <= 1e-12, linear_dev))
    return checks


def run_verify(args) -> int:
    checks = verification_checks(args.C, args.H, args.W, args.r, args.trials, args.seed)
    for check in checks:
        print(check.line())
    ok = all(c.passed for c in checks)
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_FAIL


def run_rank_sweep(args) -> int:
    from reconet.sweep import rank1_target, random_target, rank_sweep

    shape = (args.C, args.H, args.W)
    target = random_target(shape, args.seed) if args.target == "random" else rank1_target(shape, args.seed)
    rows = rank_sweep(target, args.ranks, args.seed, args.steps)
    print("r,final_mse")
    for row in rows:
        print(f"{row.rank},{row.mse:.6e}")
    monotone = all(b.mse <= a.mse for a, b in zip(rows, rows[1:]))
    return EXIT_OK if monotone else EXIT_FAIL


def run_train_toy(args) -> int:
    from dataclasses import asdict

    from reconet.train import ToyConfig, TrainingDiverged, parse_config, toy_train

    try:
        config = parse_config(args.config.read_text()) if args.config else ToyConfig()
    except (OSError, ValueError) as exc:
        raise UsageError(f"bad config: {exc}")
    overrides = {"rank": args.r, "steps": args.steps, "lr": args.lr, "seed": args.seed}
    config = ToyConfig(**{**asdict(config), **{k: v for k, v in overrides.items() if v is not None}})
    try:
        report = toy_train(config)
    except TrainingDiverged as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return EXIT_FAIL
    csv = report.to_csv()
    if args.out:
        args.out.write_text(csv)
    else:
        sys.stdout.write(csv)
    print(f"final_pixel_accuracy={report.final_accuracy:.6f}", file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


COMMANDS = {
    "gradcheck": run_gradcheck,
    "costs": run_costs,
    "demo": run_demo,
    "verify": run_verify,
    "rank-sweep": run_rank_sweep,
    "train-toy": run_train_toy,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"reconet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
