"""pvctrain: train the occupancy network on PVS dumps, export PVW weights."""

from __future__ import annotations

import argparse
import sys

from . import formats
from .fixtures import emit_parity_fixtures
from .training import SampleBank, TrainConfig, export_pvw, train


def _make_parser():
    parser = argparse.ArgumentParser(prog="pvctrain")
    sub = parser.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="train on a PVS dump and export PVW weights")
    tr.add_argument("samples")
    tr.add_argument("output", help="PVW path to write")
    tr.add_argument("--steps", type=int, default=200)
    tr.add_argument("--batch-size", type=int, default=128)
    tr.add_argument("--learning-rate", type=float, default=1e-4)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--mode", default="hybrid",
                    choices=["hybrid", "voxel-only", "point-only"])
    tr.add_argument("--level-sampling", default="uniform", choices=["uniform", "per-level"])
    tr.add_argument("--pos-weight", type=float, default=None)

    em = sub.add_parser("emit-fixtures", help="write parity reference fixtures (PVF)")
    em.add_argument("--weights", required=True)
    em.add_argument("--samples", required=True)
    em.add_argument("--out", required=True)
    em.add_argument("--count", type=int, default=24)
    em.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = _make_parser().parse_args(argv)
    if args.command == "train":
        meta, samples = formats.read_pvs(args.samples)
        bank = SampleBank(samples, meta["k"])
        config = TrainConfig(
            batch_size=args.batch_size, learning_rate=args.learning_rate,
            steps=args.steps, k=meta["k"], seed=args.seed, mode=args.mode,
            level_sampling=args.level_sampling, pos_weight=args.pos_weight,
        )
        result = train(bank, config)
        file_hash = export_pvw(result.net, args.output, k=meta["k"])
        print(f"initial_bce={result.initial_bce:.6f}")
        print(f"final_bce={result.final_bce:.6f}")
        print(f"weights={args.output}")
        print(f"weights_hash={file_hash:#018x}")
        return 0
    if args.command == "emit-fixtures":
        n = emit_parity_fixtures(args.weights, args.samples, args.out,
                                 count=args.count, seed=args.seed)
        print(f"fixtures={n}")
        print(f"out={args.out}")
        return 0
    return 2  # pragma: no cover


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
