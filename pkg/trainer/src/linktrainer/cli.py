"""Command-line entry points for training and inference."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .gridio import read_tensor, write_tensor
from .model import load_receiver
from .train import TrainConfig, export_artifacts, infer_llrs, train


def cmd_train(args) -> int:
    overrides = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            overrides = json.load(fh)
    overrides.setdefault("variant", args.variant)
    for key in ("speed_range", "delay_spread_range", "pdp_names", "pdp_files",
                "receiver_blocks"):
        if key in overrides:
            overrides[key] = tuple(overrides[key])
    if args.steps is not None:
        overrides["steps"] = args.steps
    if args.seed is not None:
        overrides["seed"] = args.seed
    config = TrainConfig(**overrides)
    result = train(config)
    paths = export_artifacts(result, args.out_dir)
    print(f"loss: {result.initial_loss:.3f} -> {result.final_loss:.3f} "
          f"bits/frame over {len(result.losses)} steps")
    for kind, path in paths.items():
        print(f"{kind}: {path}")
    return 0


def cmd_infer(args) -> int:
    model = load_receiver(args.weights)
    y = read_tensor(args.received).astype(np.complex64)
    sip = read_tensor(args.sip_inputs).astype(np.float32) if args.sip_inputs else None
    llrs = infer_llrs(model, y, sip)
    write_tensor(args.output, llrs)
    print(f"wrote LLR tensor {llrs.shape} to {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="linktrainer")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a receiver (and transmitter) variant")
    p.add_argument("--variant", choices=("rx_only", "gs", "sip"), default="rx_only")
    p.add_argument("--config", help="JSON with TrainConfig overrides")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", default="artifacts")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="run a trained receiver on a received tensor")
    p.add_argument("--weights", required=True)
    p.add_argument("--received", required=True, help="complex (B, n_S, n_T) tensor")
    p.add_argument("--sip-inputs", help="real (2, n_S, n_T) pilot/allocation tensor")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_infer)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
