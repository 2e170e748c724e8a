"""Command-line entry points: simulate, estimate-corr, papr, rate, eval-llrs."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from .config import ScenarioConfig
from .fec import toy_tree_code, wifi_1944_r23
from .grid import (
    PilotPattern,
    disassemble,
    load_plan,
    make_pilot_pattern,
    plan_frame,
    save_plan,
)
from .harness import (
    equalized_symbols,
    estimate_correlation,
    limit_blas_threads,
    run_sweep,
)
from .metrics import BerAccumulator, goodput, papr_cdf, rate_from_llrs
from .modem import SipAllocation, gray_qam, load_constellation
from .tensorfile import read_tensor, write_tensor


def _load_config(path, seed=None, frames=None, min_errors=None) -> ScenarioConfig:
    config = ScenarioConfig.load(path)
    overrides = {}
    if seed is not None:
        overrides["master_seed"] = seed
    if frames is not None:
        overrides["frames_per_point"] = frames
    if min_errors is not None:
        overrides["min_errors"] = min_errors
    return dataclasses.replace(config, **overrides) if overrides else config


def cmd_simulate(args) -> int:
    config = _load_config(args.config, args.seed, args.frames, args.min_errors)
    result = run_sweep(config, workers=args.workers, dump_prefix=args.dump)
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write(result.ber_csv(force=args.force_report))
    if args.goodput_output:
        with open(args.goodput_output, "w", encoding="utf-8") as fh:
            fh.write(result.goodput_csv(force=args.force_report))
    for point in result.points:
        lo, hi = point.acc.confidence_interval()
        print(f"{point.snr_db:g} dB: BER {point.acc.ber:.4g} "
              f"[{lo:.3g}, {hi:.3g}] over {point.acc.total_bits} bits "
              f"({point.acc.frames} frames)")
    return 0


def cmd_estimate_corr(args) -> int:
    config = ScenarioConfig.load(args.config)
    spec = config.rx_covariance
    samples = args.samples or spec.samples
    seed = args.seed if args.seed is not None else spec.seed
    r_hat = estimate_correlation(config.dims, config.radio, samples,
                                 spec.speed_range, spec.delay_spread_range,
                                 spec.pdp_names, seed,
                                 realizations_per_draw=args.realizations_per_draw)
    write_tensor(args.output, r_hat)
    print(f"wrote {config.dims.n}x{config.dims.n} covariance from {samples} "
          f"samples to {args.output}")
    return 0


def cmd_papr(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.scheme == "qam":
        scheme = gray_qam(args.modulation_bits)
    elif args.scheme == "gs":
        if not args.constellation:
            raise SystemExit("--constellation is required for the gs scheme")
        scheme = load_constellation(args.constellation, m=args.modulation_bits)
    elif args.scheme == "sip":
        if not args.allocation:
            raise SystemExit("--allocation is required for the sip scheme")
        scheme = (gray_qam(args.modulation_bits), SipAllocation.load(args.allocation))
    else:  # pragma: no cover - argparse enforces choices
        raise SystemExit(f"unknown scheme {args.scheme}")
    cdf = papr_cdf(scheme, args.subcarriers, args.count, rng,
                   oversample=args.oversample)
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write("papr_db,cdf\n")
        for db, val in zip(cdf.papr_db, cdf.cdf):
            fh.write(f"{db:.10g},{val:.10g}\n")
    print(f"wrote PAPR CDF ({args.count} symbols, n_S={args.subcarriers}) "
          f"to {args.output}")
    return 0


def _data_values(tensor: np.ndarray, pattern) -> np.ndarray:
    """Gather (frames, n_D, m) from (frames, n_S, n_T, m) tensors."""
    if tensor.ndim == 3:
        tensor = tensor[None]
    if tensor.ndim != 4 or tensor.shape[1:3] != (pattern.dims.n_s, pattern.dims.n_t):
        raise ValueError(f"tensor shape {tensor.shape} does not match the "
                         f"{pattern.dims.n_s}x{pattern.dims.n_t} pattern")
    i_idx = pattern.data_indices % pattern.dims.n_s
    k_idx = pattern.data_indices // pattern.dims.n_s
    return tensor[:, i_idx, k_idx, :]


def cmd_rate(args) -> int:
    pattern = _load_pattern(args.pattern)
    llrs = _data_values(read_tensor(args.llrs).astype(float), pattern)
    bits = _data_values(read_tensor(args.bits).astype(float), pattern)
    est = rate_from_llrs(llrs, bits.round().astype(int))
    print(f"frames: {est.sample_count}")
    print(f"bce_total_bits_per_frame: {est.bce_total:.6f}")
    print(f"rate_bits_per_frame: {est.rate:.6f}")
    if est.clamped_terms:
        print(f"clamped_posteriors: {est.clamped_terms}")
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write("bce_total,rate,frames\n")
            fh.write(f"{est.bce_total:.10g},{est.rate:.10g},{est.sample_count}\n")
    return 0


def _load_pattern(path) -> PilotPattern:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if "pattern" in obj:  # a frame-plan file embeds its pattern
        obj = obj["pattern"]
    return PilotPattern.from_json(obj)


def cmd_eval_llrs(args) -> int:
    limit_blas_threads()
    llr_tensor = read_tensor(args.llrs).astype(float)
    bit_tensor = read_tensor(args.bits).astype(float)
    if llr_tensor.shape != bit_tensor.shape:
        raise SystemExit(f"LLR tensor {llr_tensor.shape} and bit tensor "
                         f"{bit_tensor.shape} disagree")
    if args.plan:
        plan, pattern = load_plan(args.plan)
        code = wifi_1944_r23() if plan.code_length == 1944 else toy_tree_code()
        if code.n_c != plan.code_length:
            raise SystemExit(f"no packaged code of length {plan.code_length}")
        acc = BerAccumulator()
        frames = llr_tensor.shape[0] if llr_tensor.ndim == 4 else 1
        llr_frames = llr_tensor if llr_tensor.ndim == 4 else llr_tensor[None]
        bit_frames = bit_tensor if bit_tensor.ndim == 4 else bit_tensor[None]
        for f in range(frames):
            cw_llrs = disassemble(plan, llr_frames[f])
            true_cw = disassemble(plan, bit_frames[f]).round().astype(np.uint8)
            hard, _, _, _ = code.decode_batch(cw_llrs, args.bp_iterations)
            errors = int((hard[:, code.info_positions]
                          != true_cw[:, code.info_positions]).sum())
            acc.add_counts(errors, plan.codewords_per_frame * code.k)
        gp = goodput(code.rate, pattern.rho, plan.m, pattern.dims.n, acc.ber)
        print(f"coded BER: {acc.ber:.6g} ({acc.bit_errors}/{acc.total_bits} bits, "
              f"{frames} frames)")
        print(f"goodput_bits_per_frame: {gp:.6f}")
        rows = ["ber,bit_errors,total_bits,goodput",
                f"{acc.ber:.10g},{acc.bit_errors},{acc.total_bits},{gp:.10g}"]
    else:
        pattern = _load_pattern(args.pattern)
        llrs = _data_values(llr_tensor, pattern)
        bits = _data_values(bit_tensor, pattern).round().astype(int)
        hard = (llrs > 0).astype(int)
        errors = int((hard != bits).sum())
        total = bits.size
        print(f"uncoded BER: {errors / total:.6g} ({errors}/{total} bits, "
              f"{llrs.shape[0]} frames)")
        rows = ["ber,bit_errors,total_bits",
                f"{errors / total:.10g},{errors},{total}"]
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write("\n".join(rows) + "\n")
    return 0


def cmd_export_plan(args) -> int:
    from .channel import OfdmDims

    pattern = make_pilot_pattern(args.pattern, OfdmDims(args.subcarriers, args.symbols),
                                 seed=args.pilot_seed)
    code_length = 1944 if args.code == "wifi1944" else 24
    plan = plan_frame(pattern, code_length, args.modulation_bits,
                      seed=args.interleaver_seed)
    save_plan(plan, pattern, args.output)
    print(f"wrote plan ({plan.codewords_per_frame} codewords, "
          f"{plan.padding_bits} padding bits) to {args.output}")
    return 0


def cmd_equalized(args) -> int:
    config = _load_config(args.config, args.seed)
    eq = equalized_symbols(config, frame_index=args.frame)
    write_tensor(args.output, eq.astype(np.complex64))
    print(f"wrote equalized grid to {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="linksim",
        description="Link-level OFDM simulator over correlated fading")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a configured BER/goodput sweep")
    p.add_argument("config")
    p.add_argument("-o", "--output", required=True, help="BER CSV path")
    p.add_argument("--goodput-output", help="goodput CSV path")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--frames", type=int, help="override frames per point")
    p.add_argument("--min-errors", type=int, help="stop a point once reached")
    p.add_argument("--force-report", action="store_true",
                   help="report points with fewer than 100 bit errors")
    p.add_argument("--dump", help="prefix for LLR/bit tensor dumps "
                                  "(single-point sweeps only)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate-corr", help="estimate the empirical covariance")
    p.add_argument("config")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--realizations-per-draw", type=int, default=10)
    p.set_defaults(func=cmd_estimate_corr)

    p = sub.add_parser("papr", help="empirical PAPR CDF of a modulation scheme")
    p.add_argument("--scheme", choices=("qam", "gs", "sip"), required=True)
    p.add_argument("--modulation-bits", type=int, default=6)
    p.add_argument("--constellation", help="constellation CSV for gs")
    p.add_argument("--allocation", help="allocation CSV for sip")
    p.add_argument("--subcarriers", type=int, default=72)
    p.add_argument("--count", type=int, default=7_000_000)
    p.add_argument("--oversample", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_papr)

    p = sub.add_parser("rate", help="achievable-rate estimate from LLR tensors")
    p.add_argument("--llrs", required=True)
    p.add_argument("--bits", required=True)
    p.add_argument("--pattern", required=True,
                   help="pilot pattern (or frame plan) JSON")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("eval-llrs", help="decode externally produced LLR grids")
    p.add_argument("--llrs", required=True)
    p.add_argument("--bits", required=True)
    p.add_argument("--pattern", help="pilot pattern JSON (uncoded evaluation)")
    p.add_argument("--plan", help="frame plan JSON (coded evaluation)")
    p.add_argument("--bp-iterations", type=int, default=40)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_eval_llrs)

    p = sub.add_parser("export-plan", help="write a frame plan JSON for the trainer")
    p.add_argument("--pattern", choices=("1P", "2P", "none"), required=True)
    p.add_argument("--subcarriers", type=int, default=72)
    p.add_argument("--symbols", type=int, default=14)
    p.add_argument("--modulation-bits", type=int, default=6)
    p.add_argument("--code", choices=("wifi1944", "toy"), default="wifi1944")
    p.add_argument("--pilot-seed", type=int, default=0x5EED)
    p.add_argument("--interleaver-seed", type=int, default=0x1EAF)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_export_plan)

    p = sub.add_parser("equalized", help="dump equalized symbols for one frame")
    p.add_argument("config")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--frame", type=int, default=0)
    p.set_defaults(func=cmd_equalized)

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
