"""End-to-end training on the total binary cross-entropy (bits per frame)."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .channel import ChannelSampler, Pdp, Radio, awgn
from .gridio import (
    Pattern,
    balanced_bpsk_grid,
    write_allocation_csv,
    write_constellation_csv,
    write_loss_csv,
)
from .model import (
    NeuralReceiver,
    TrainableConstellation,
    TrainableSipAllocation,
    center_normalize,
    gray_qam_points,
    save_receiver,
)

VARIANTS = ("rx_only", "gs", "sip")
LN2 = math.log(2.0)


@dataclass
class TrainConfig:
    variant: str = "rx_only"
    n_s: int = 72
    n_t: int = 14
    bits_per_symbol: int = 6
    pattern: str = "1P"              # "1P" | "2P" | "none" | path to pattern JSON
    steps: int = 2000
    batch: int = 100
    learning_rate: float = 1e-3
    sigma2_db: float = -20.0
    speed_range: tuple = (0.0, 32.5)
    delay_spread_range: tuple = (10e-9, 1000e-9)
    pdp_names: tuple = ("TDL-B", "TDL-C")  # bundled profiles (or "synthetic-exp")
    pdp_files: tuple = ()            # extra `tau_normalized,power_db` tables
    seed: int = 0
    pilot_seed: int = 0x5EED
    sip_pilot_seed: int = 0xB1B0
    width_scale: float = 1.0         # toy runs shrink the receiver
    num_blocks: int | None = None
    receiver_blocks: tuple | None = None  # explicit (channels, kernel, dilation) triples
    receiver_norm: str = "layer"     # "none" trains markedly faster at toy scale
    stop_at_loss_fraction: float | None = None  # early stop once loss <= frac * initial

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant in ("gs", "sip") and self.pattern != "none":
            raise ValueError("learned-transmitter variants carry no orthogonal pilots")


class FrameSource:
    """Draws bits, symbols, channels, and noise for one training batch."""

    def __init__(self, config: TrainConfig):
        self.config = config
        if config.pattern in ("1P", "2P", "none"):
            self.pattern = Pattern.named(config.pattern, config.n_s, config.n_t,
                                         seed=config.pilot_seed)
        else:
            self.pattern = Pattern.load(config.pattern)
        pdps = ([Pdp.named(name) for name in config.pdp_names]
                + [Pdp.from_file(p) for p in config.pdp_files])
        self.sampler = ChannelSampler(config.n_s, config.n_t, Radio(),
                                      speed_range=config.speed_range,
                                      delay_spread_range=config.delay_spread_range,
                                      pdps=pdps or None)
        self.sigma2 = 10.0 ** (config.sigma2_db / 10.0)
        self.rng = np.random.default_rng(config.seed)
        m = config.bits_per_symbol
        self.data_mask = torch.from_numpy(self.pattern.data_mask.copy())
        self.pilot_values = torch.from_numpy(self.pattern.values.astype(np.complex64))
        self.bit_weights = torch.from_numpy(
            (1 << np.arange(m - 1, -1, -1)).astype(np.int64))

    def draw(self, batch: int):
        """Returns (bits (B,n_S,n_T,m) float32, labels int64, H, W complex64)."""
        cfg = self.config
        bits = self.rng.integers(
            0, 2, size=(batch, cfg.n_s, cfg.n_t, cfg.bits_per_symbol))
        h = self.sampler.sample(batch, self.rng)
        w = awgn(h.shape, self.sigma2, self.rng)
        bits_t = torch.from_numpy(bits.astype(np.float32))
        labels = (bits_t.long() * self.bit_weights).sum(dim=-1)
        return bits_t, labels, torch.from_numpy(h), torch.from_numpy(w)


def bce_loss_bits_per_frame(llrs: torch.Tensor, bits: torch.Tensor,
                            data_mask: torch.Tensor) -> torch.Tensor:
    """Total binary cross-entropy over data REs, in bits per frame."""
    per_bit = torch.nn.functional.binary_cross_entropy_with_logits(
        llrs, bits, reduction="none") / LN2
    per_bit = per_bit * data_mask[None, :, :, None]
    return per_bit.sum() / llrs.shape[0]


@dataclass
class TrainResult:
    model: NeuralReceiver
    losses: list
    transmitter: object | None
    source: FrameSource

    @property
    def initial_loss(self) -> float:
        return self.losses[0]

    @property
    def final_loss(self) -> float:
        return self.losses[-1]


def build_transmit(config: TrainConfig, source: FrameSource, transmitter):
    """Returns a function mapping labels -> complex frame batch X."""
    m = config.bits_per_symbol
    if config.variant == "rx_only":
        points = torch.from_numpy(gray_qam_points(m).astype(np.complex64))
        pilot_mask = torch.from_numpy(source.pattern.mask.copy())
        pilot_vals = source.pilot_values

        def transmit(labels):
            x = points[labels]
            return torch.where(pilot_mask[None], pilot_vals[None], x)
        return transmit
    if config.variant == "gs":
        def transmit(labels):
            return transmitter.map_labels(labels)
        return transmit
    # sip
    qam = torch.from_numpy(gray_qam_points(m).astype(np.complex64))
    p_grid = torch.from_numpy(
        balanced_bpsk_grid(config.n_s, config.n_t, config.sip_pilot_seed)
        .astype(np.float32))

    def transmit(labels):
        a = transmitter.fractions()
        data = qam[labels]
        return (torch.sqrt(1.0 - a)[None] * data
                + (torch.sqrt(a) * p_grid)[None]).to(torch.complex64)
    return transmit, p_grid


def train(config: TrainConfig) -> TrainResult:
    """Minimize the Monte Carlo total-BCE estimate by stochastic gradient descent."""
    torch.manual_seed(config.seed)
    source = FrameSource(config)
    transmitter = None
    p_grid = None
    if config.variant == "gs":
        transmitter = TrainableConstellation(config.bits_per_symbol,
                                             seed=config.seed)
    elif config.variant == "sip":
        transmitter = TrainableSipAllocation(config.n_s, config.n_t)
    built = build_transmit(config, source, transmitter)
    if config.variant == "sip":
        transmit, p_grid = built
    else:
        transmit = built
    model = NeuralReceiver(config.bits_per_symbol,
                           with_sip_inputs=config.variant == "sip",
                           width_scale=config.width_scale,
                           num_blocks=config.num_blocks,
                           blocks=config.receiver_blocks,
                           norm=config.receiver_norm)
    params = list(model.parameters())
    if transmitter is not None:
        params += list(transmitter.parameters())
    optimizer = torch.optim.Adam(params, lr=config.learning_rate)
    losses = []
    for step in range(config.steps):
        bits, labels, h, w = source.draw(config.batch)
        x = transmit(labels)
        y = h * x + w
        if config.variant == "sip":
            a = transmitter.fractions().detach()
            extra = torch.stack([p_grid, torch.sqrt(a)], dim=0)
            sip_inputs = extra[None].expand(config.batch, -1, -1, -1)
            llrs = model(y, sip_inputs)
        else:
            llrs = model(y)
        loss = bce_loss_bits_per_frame(llrs, bits, source.data_mask)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        value = float(loss.detach())
        if not math.isfinite(value):
            raise RuntimeError(f"training diverged at step {step}: loss {value}")
        losses.append(value)
        if (config.stop_at_loss_fraction is not None and step >= 10
                and value <= config.stop_at_loss_fraction * losses[0]):
            break
    model.eval()
    return TrainResult(model, losses, transmitter, source)


def export_artifacts(result: TrainResult, out_dir, prefix: str | None = None) -> dict:
    """Write weights, loss trace, and the transmitter artifact for the variant."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = result.source.config
    tag = prefix or config.variant
    paths = {}
    weights = out_dir / f"{tag}_receiver.pt"
    save_receiver(weights, result.model)
    paths["weights"] = weights
    loss_csv = out_dir / f"{tag}_loss.csv"
    write_loss_csv(loss_csv, result.losses)
    paths["loss"] = loss_csv
    if config.variant == "gs":
        # re-apply the transform in float64 so the exported points meet the
        # consumer's 1e-9 centering/normalization contract
        raw = torch.view_as_complex(result.transmitter.raw.detach().double())
        points = center_normalize(raw).numpy()
        path = out_dir / "gs_constellation.csv"
        write_constellation_csv(path, points)
        paths["constellation"] = path
    if config.variant == "sip":
        a = result.transmitter.fractions().detach().numpy()
        path = out_dir / "sip_allocation.csv"
        write_allocation_csv(path, a, config.sip_pilot_seed)
        paths["allocation"] = path
    with open(out_dir / f"{tag}_train_config.json", "w", encoding="utf-8") as fh:
        json.dump({k: (list(v) if isinstance(v, tuple) else v)
                   for k, v in vars(config).items()}, fh, indent=1)
    return paths


@torch.no_grad()
def infer_llrs(model: NeuralReceiver, y: np.ndarray,
               sip_inputs: np.ndarray | None = None) -> np.ndarray:
    """Deterministic forward pass; returns (B, n_S, n_T, m) float32 LLRs."""
    y_t = torch.from_numpy(np.asarray(y, dtype=np.complex64))
    if y_t.ndim == 2:
        y_t = y_t[None]
    extra = None
    if sip_inputs is not None:
        extra = torch.from_numpy(np.asarray(sip_inputs, dtype=np.float32))
        if extra.ndim == 3:
            extra = extra[None].expand(y_t.shape[0], -1, -1, -1)
    return model(y_t, extra).numpy().astype(np.float32)
