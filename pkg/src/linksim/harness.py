"""Monte Carlo orchestration: frame pipeline, empirical covariance, sweeps.

Reproducibility contract: every random draw derives from
``SeedSequence(master_seed, spawn_key=(point_index, frame_index))``, so a
(config, seed) pair fully determines the output regardless of worker count.
Results are merged in fixed chunk order.
"""

from __future__ import annotations

import multiprocessing
from dataclasses import dataclass

import numpy as np

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None

from .channel import (
    CorrelationModel,
    MobilitySpec,
    OfdmDims,
    RadioParams,
    build_correlation,
    apply_channel,
    get_pdp,
    grid_to_vec,
)
from .config import ScenarioConfig
from .fec import toy_tree_code, wifi_1944_r23
from .grid import assemble, make_pilot_pattern, plan_frame
from .metrics import BerAccumulator, FrameMetrics, eb_over_sigma2, es_over_sigma2, goodput
from .modem import gray_qam, load_constellation, map_bits
from .rxchain import LmmseEstimator, run_receiver
from .tensorfile import read_tensor, write_tensor

CHUNK_FRAMES = 32


def limit_blas_threads():
    """Pin BLAS pools to one thread; frame-level parallelism owns the cores."""
    if threadpool_limits is not None:
        threadpool_limits(limits=1)


def frame_rng(master_seed: int, point_index: int, frame_index: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(master_seed, spawn_key=(point_index, frame_index)))


@dataclass
class FrameContext:
    """Per-process immutable state shared by all frames of a config."""

    config: ScenarioConfig
    pattern: object
    plan: object
    const: object
    code: object
    pdps: list

    @classmethod
    def build(cls, config: ScenarioConfig) -> "FrameContext":
        scheme, artifact = config.parse_scheme()
        pattern_name = scheme if scheme in ("1P", "2P", "none") else "none"
        pattern = make_pilot_pattern(pattern_name, config.dims, seed=config.pilot_seed)
        code = wifi_1944_r23() if config.code == "wifi1944" else toy_tree_code()
        plan = plan_frame(pattern, code.n_c, config.modulation_bits,
                          seed=config.interleaver_seed)
        if scheme == "gs":
            const = load_constellation(artifact, m=config.modulation_bits)
        else:
            const = gray_qam(config.modulation_bits)
        pdps = [get_pdp(name) for name in config.pdp_names]
        return cls(config, pattern, plan, const, code, pdps)


def transmit_frame(ctx: FrameContext, rng: np.random.Generator):
    """Draw info bits and build the frequency-domain frame X."""
    info = rng.integers(0, 2, size=(ctx.plan.codewords_per_frame, ctx.code.k))
    codewords = ctx.code.encode_batch(info)
    bit_grid = assemble(ctx.plan, ctx.pattern, codewords, rng)
    x = map_bits(ctx.const, bit_grid)
    if ctx.pattern.n_p:
        x[ctx.pattern.mask] = ctx.pattern.values[ctx.pattern.mask]
    return info, bit_grid, x


def draw_channel(ctx: FrameContext, rng: np.random.Generator) -> tuple[CorrelationModel, np.ndarray]:
    cfg = ctx.config
    v = rng.uniform(*cfg.speed_range)
    d_s = rng.uniform(*cfg.delay_spread_range)
    pdp = ctx.pdps[rng.integers(len(ctx.pdps))]
    model = build_correlation(cfg.dims, cfg.radio, pdp, MobilitySpec(v, d_s))
    return model, model.sample(rng)


def simulate_frame(ctx: FrameContext, sigma2: float, rng: np.random.Generator,
                   rx_cov: np.ndarray | None,
                   estimator: LmmseEstimator | None = None,
                   collect_artifacts: bool = False):
    """One TX -> channel -> RX -> decode pass; returns FrameMetrics."""
    cfg = ctx.config
    model, h = draw_channel(ctx, rng)
    info, bit_grid, x = transmit_frame(ctx, rng)
    y = apply_channel(h, x, sigma2, rng)
    r_rx = rx_cov
    if r_rx is None and cfg.receiver != "perfect_csi":
        r_rx = model.full_matrix()
    out = run_receiver(cfg.receiver, const=ctx.const, pattern=ctx.pattern,
                       plan=ctx.plan, code=ctx.code, y_grid=y, sigma2=sigma2,
                       r_rx=r_rx, h_true=h, estimator=estimator,
                       bp_iters=cfg.bp_iterations,
                       outer_iters=cfg.iedd_outer_iterations,
                       inner_bp_iters=cfg.iedd_bp_iterations)
    errors = int((out.info_bits != info).sum())
    metrics = FrameMetrics(
        errors, info.size,
        eb_over_sigma2(h, sigma2, ctx.pattern.rho, cfg.modulation_bits, ctx.code.rate),
        es_over_sigma2(h, sigma2),
        float(np.sum(np.abs(h) ** 2)))
    if not collect_artifacts:
        return metrics, None
    artifacts = {
        "llrs": out.llr_grid.values.astype(np.float32),
        "bits": bit_grid.astype(np.float32),
        "info_bit_errors": errors,
    }
    return metrics, artifacts


def estimate_correlation(dims: OfdmDims, radio: RadioParams, sample_count: int,
                         speed_range, delay_spread_range, pdp_names, seed: int,
                         realizations_per_draw: int = 1) -> np.ndarray:
    """Empirical covariance of vec(H) over random scenario draws.

    Averages ``sample_count`` outer products h h^H with speeds and delay
    spreads drawn uniformly and profiles drawn uniformly from ``pdp_names``.
    The result is exactly Hermitian (symmetrized once at the end).
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    pdps = [get_pdp(name) for name in pdp_names]
    acc = np.zeros((dims.n, dims.n), dtype=complex)
    remaining = sample_count
    while remaining > 0:
        take = min(realizations_per_draw, remaining)
        v = rng.uniform(*speed_range)
        d_s = rng.uniform(*delay_spread_range)
        pdp = pdps[rng.integers(len(pdps))]
        model = build_correlation(dims, radio, pdp, MobilitySpec(v, d_s))
        h = model.sample(rng, count=take).reshape(take, -1, order="F")
        acc += h.T @ h.conj()
        remaining -= take
    acc /= sample_count
    return (acc + acc.conj().T) / 2.0


def resolve_rx_covariance(config: ScenarioConfig) -> np.ndarray | None:
    """Materialize the receiver-side covariance, or None for per-frame truth."""
    spec = config.rx_covariance
    if spec.kind == "true":
        return None
    if spec.kind == "file":
        r = read_tensor(spec.path).astype(complex)
        if r.shape != (config.dims.n, config.dims.n):
            raise ValueError(f"covariance file shape {r.shape} does not match "
                             f"the {config.dims.n}-RE grid")
        return r
    return estimate_correlation(config.dims, config.radio, spec.samples,
                                spec.speed_range, spec.delay_spread_range,
                                spec.pdp_names, spec.seed,
                                realizations_per_draw=10)


@dataclass
class SweepPoint:
    snr_db: float
    sigma2: float
    acc: BerAccumulator
    goodput: float = 0.0

    def finalize(self, ctx: FrameContext) -> None:
        self.goodput = goodput(ctx.code.rate, ctx.pattern.rho,
                               ctx.config.modulation_bits, ctx.config.dims.n,
                               self.acc.ber)


@dataclass
class SweepResult:
    config: ScenarioConfig
    points: list

    def ber_csv(self, force: bool = False) -> str:
        lines = ["snr_db,ber,ci_low,ci_high"]
        for p in self.points:
            if not (p.acc.reportable or force):
                raise ValueError(
                    f"point {p.snr_db} dB has only {p.acc.bit_errors} bit errors "
                    "(< 100); add frames or force reporting")
            lo, hi = p.acc.confidence_interval()
            lines.append(f"{p.snr_db:.10g},{p.acc.ber:.10g},{lo:.10g},{hi:.10g}")
        return "\n".join(lines) + "\n"

    def goodput_csv(self, force: bool = False) -> str:
        lines = ["snr_db,goodput"]
        for p in self.points:
            if not (p.acc.reportable or force):
                raise ValueError(
                    f"point {p.snr_db} dB has only {p.acc.bit_errors} bit errors "
                    "(< 100); add frames or force reporting")
            lines.append(f"{p.snr_db:.10g},{p.goodput:.10g}")
        return "\n".join(lines) + "\n"


# -- worker pool plumbing ----------------------------------------------------

_WORKER_STATE: dict = {}


def _worker_init(config_json: dict, rx_cov: np.ndarray | None):
    limit_blas_threads()
    config = ScenarioConfig.from_json(config_json)
    _WORKER_STATE["config"] = config
    _WORKER_STATE["ctx"] = FrameContext.build(config)
    _WORKER_STATE["rx_cov"] = rx_cov
    _WORKER_STATE["estimators"] = {}


def _run_chunk(task):
    point_index, sigma2, start, count, collect = task
    ctx = _WORKER_STATE["ctx"]
    config = _WORKER_STATE["config"]
    rx_cov = _WORKER_STATE["rx_cov"]
    estimator = None
    if (rx_cov is not None and config.receiver == "non_iterative"):
        cache = _WORKER_STATE["estimators"]
        if point_index not in cache:
            cache[point_index] = LmmseEstimator(rx_cov, ctx.pattern, sigma2)
        estimator = cache[point_index]
    acc = BerAccumulator()
    artifacts = [] if collect else None
    for frame_index in range(start, start + count):
        rng = frame_rng(config.master_seed, point_index, frame_index)
        metrics, art = simulate_frame(ctx, sigma2, rng, rx_cov, estimator,
                                      collect_artifacts=collect)
        acc.add(metrics)
        if collect:
            artifacts.append(art)
    return acc, artifacts


def run_sweep(config: ScenarioConfig, workers: int = 1,
              dump_prefix: str | None = None) -> SweepResult:
    """Run the configured sweep; deterministic for fixed (config, seed).

    ``dump_prefix`` writes `<prefix>_llrs.tensor` and `<prefix>_bits.tensor`
    for trainer interchange and is restricted to single-point sweeps.
    """
    if dump_prefix is not None and len(config.sweep.values) != 1:
        raise ValueError("LLR dumping expects a single-point sweep")
    limit_blas_threads()
    ctx = FrameContext.build(config)
    rx_cov = None
    if config.receiver != "perfect_csi":
        rx_cov = resolve_rx_covariance(config)
    points = []
    collect = dump_prefix is not None
    dumped_llrs: list = []
    dumped_bits: list = []

    def tasks_for_point(point_index, sigma2):
        total = config.frames_per_point
        for start in range(0, total, CHUNK_FRAMES):
            yield (point_index, sigma2, start,
                   min(CHUNK_FRAMES, total - start), collect)

    pool = None
    try:
        if workers > 1:
            pool = multiprocessing.get_context("fork").Pool(
                workers, initializer=_worker_init,
                initargs=(config.to_json(), rx_cov))
        else:
            _worker_init(config.to_json(), rx_cov)
        for point_index, value in enumerate(config.sweep.values):
            sigma2 = config.sigma2_for_point(value, ctx.pattern.rho, ctx.code.rate)
            acc = BerAccumulator()
            task_iter = tasks_for_point(point_index, sigma2)
            results = (pool.imap(_run_chunk, task_iter) if pool
                       else map(_run_chunk, task_iter))
            for chunk_acc, artifacts in results:
                acc = acc.merge(chunk_acc)
                if collect:
                    dumped_llrs.extend(a["llrs"] for a in artifacts)
                    dumped_bits.extend(a["bits"] for a in artifacts)
                if config.min_errors is not None and acc.bit_errors >= config.min_errors:
                    break
            point = SweepPoint(value, sigma2, acc)
            point.finalize(ctx)
            points.append(point)
    finally:
        if pool is not None:
            pool.terminate()
            pool.join()
    if collect:
        write_tensor(f"{dump_prefix}_llrs.tensor", np.stack(dumped_llrs))
        write_tensor(f"{dump_prefix}_bits.tensor", np.stack(dumped_bits))
    return SweepResult(config, points)


def equalized_symbols(config: ScenarioConfig, point_index: int = 0,
                      frame_index: int = 0) -> np.ndarray:
    """Debug view y/h_hat on one frame (NaN at pilot REs)."""
    limit_blas_threads()
    ctx = FrameContext.build(config)
    sigma2 = config.sigma2_for_point(config.sweep.values[point_index],
                                     ctx.pattern.rho, ctx.code.rate)
    rng = frame_rng(config.master_seed, point_index, frame_index)
    model, h = draw_channel(ctx, rng)
    _, _, x = transmit_frame(ctx, rng)
    y = apply_channel(h, x, sigma2, rng)
    if config.receiver == "perfect_csi":
        h_hat = grid_to_vec(h)
    else:
        rx_cov = resolve_rx_covariance(config)
        r = rx_cov if rx_cov is not None else model.full_matrix()
        h_hat = LmmseEstimator(r, ctx.pattern, sigma2).estimate(y).h_hat
    eq = grid_to_vec(y) / h_hat
    eq[ctx.pattern.pilot_indices] = np.nan
    return eq.reshape((config.n_s, config.n_t), order="F")
