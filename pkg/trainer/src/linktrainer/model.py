"""Convolutional residual receiver and the trainable transmitter pieces."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn

#: (channels, kernel, dilation) for the five residual blocks.
RESNET_BLOCKS = (
    (128, (7, 7), (7, 2)),
    (128, (7, 5), (7, 1)),
    (128, (5, 3), (1, 2)),
    (128, (3, 3), (1, 1)),
    (128, (3, 3), (1, 1)),
)
INPUT_CHANNELS = 64
INPUT_KERNEL = (3, 3)


class ChannelLayerNorm(nn.Module):
    """Layer normalization over the channel axis at each grid position."""

    def __init__(self, channels: int):
        super().__init__()
        self.norm = nn.LayerNorm(channels)

    def forward(self, x):
        return self.norm(x.permute(0, 2, 3, 1)).permute(0, 3, 1, 2)


class SeparableConv2d(nn.Module):
    """Depthwise + pointwise convolution with same-size zero padding."""

    def __init__(self, in_ch: int, out_ch: int, kernel, dilation):
        super().__init__()
        pad = (dilation[0] * (kernel[0] - 1) // 2, dilation[1] * (kernel[1] - 1) // 2)
        self.depthwise = nn.Conv2d(in_ch, in_ch, kernel, padding=pad,
                                   dilation=dilation, groups=in_ch)
        self.pointwise = nn.Conv2d(in_ch, out_ch, 1)

    def forward(self, x):
        return self.pointwise(self.depthwise(x))


def _make_norm(kind: str, channels: int) -> nn.Module:
    if kind == "layer":
        return ChannelLayerNorm(channels)
    if kind == "none":
        return nn.Identity()
    raise ValueError(f"unknown normalization {kind!r}")


class ResidualBlock(nn.Module):
    """Pre-activation block of two separable convolutions sharing dimensions."""

    def __init__(self, in_ch: int, out_ch: int, kernel, dilation,
                 norm: str = "layer"):
        super().__init__()
        self.norm1 = _make_norm(norm, in_ch)
        self.conv1 = SeparableConv2d(in_ch, out_ch, kernel, dilation)
        self.norm2 = _make_norm(norm, out_ch)
        self.conv2 = SeparableConv2d(out_ch, out_ch, kernel, dilation)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()
        self.act = nn.ReLU()

    def forward(self, x):
        t = self.conv1(self.act(self.norm1(x)))
        t = self.conv2(self.act(self.norm2(t)))
        return self.skip(x) + t


class NeuralReceiver(nn.Module):
    """Fully convolutional receiver: complex grid in, per-bit LLR grid out.

    Input is the received grid stacked into real/imaginary channels, plus two
    extra channels (pilot values and sqrt-allocation) for the superimposed
    pilot variant. Output has ``bits_per_symbol`` channels, oriented as
    ln P(1)/P(0), for every resource element of any grid size.
    """

    def __init__(self, bits_per_symbol: int, with_sip_inputs: bool = False,
                 width_scale: float = 1.0, num_blocks: int | None = None,
                 blocks=None, norm: str = "layer"):
        super().__init__()
        self.bits_per_symbol = bits_per_symbol
        self.with_sip_inputs = with_sip_inputs
        in_ch = 4 if with_sip_inputs else 2
        if blocks is None:
            # dilation rates are sized for the full 72-subcarrier grid;
            # reduced grids should pass explicit blocks instead
            blocks = RESNET_BLOCKS if num_blocks is None else RESNET_BLOCKS[:num_blocks]
        blocks = tuple((int(c), tuple(k), tuple(d)) for c, k, d in blocks)
        width = max(8, int(round(INPUT_CHANNELS * width_scale)))
        self.input_conv = nn.Conv2d(in_ch, width, INPUT_KERNEL, padding=(1, 1))
        layers = []
        prev = width
        for channels, kernel, dilation in blocks:
            out_ch = max(8, int(round(channels * width_scale)))
            layers.append(ResidualBlock(prev, out_ch, kernel, dilation, norm=norm))
            prev = out_ch
        self.blocks = nn.Sequential(*layers)
        self.output_conv = nn.Conv2d(prev, bits_per_symbol, 1)
        self.arch = {"bits_per_symbol": bits_per_symbol,
                     "with_sip_inputs": with_sip_inputs,
                     "width_scale": width_scale,
                     "blocks": blocks,
                     "norm": norm}

    def forward(self, y: torch.Tensor, sip_inputs: torch.Tensor | None = None):
        """y: complex (B, n_S, n_T); sip_inputs: real (B, 2, n_S, n_T)."""
        x = torch.stack([y.real, y.imag], dim=1)
        if self.with_sip_inputs:
            if sip_inputs is None:
                raise ValueError("this receiver expects pilot/allocation inputs")
            x = torch.cat([x, sip_inputs], dim=1)
        x = self.input_conv(x)
        x = self.blocks(x)
        return self.output_conv(x).permute(0, 2, 3, 1)  # (B, n_S, n_T, m)


def save_receiver(path, model: NeuralReceiver) -> None:
    torch.save({"arch": model.arch, "state": model.state_dict()}, path)


def load_receiver(path) -> NeuralReceiver:
    blob = torch.load(path, map_location="cpu", weights_only=True)
    model = NeuralReceiver(**dict(blob["arch"]))
    model.load_state_dict(blob["state"])
    model.eval()
    return model


def center_normalize(raw: torch.Tensor) -> torch.Tensor:
    """Zero-mean, unit-power constellation transform (differentiable).

    raw is a complex tensor of 2^m points; the output is invariant to adding
    a constant or scaling by a positive real.
    """
    mean = raw.mean()
    power = (raw.abs() ** 2).mean()
    var = power - mean.abs() ** 2
    return (raw - mean) / torch.sqrt(var)


def gray_qam_points(m: int) -> np.ndarray:
    """Unit-power square QAM with reflected-Gray per-axis labeling."""
    if m % 2:
        raise ValueError("square QAM needs even m")
    labels = np.arange(1 << m)
    bits = (labels[:, None] >> np.arange(m - 1, -1, -1)) & 1

    def pam(b):
        if b.shape[1] == 1:
            return 1.0 - 2.0 * b[:, 0]
        return (1 - 2 * b[:, 0]) * ((1 << (b.shape[1] - 1)) - pam(b[:, 1:]))

    levels = 1 << (m // 2)
    scale = np.sqrt(2.0 * (levels * levels - 1) / 3.0)
    return (pam(bits[:, 0::2]) + 1j * pam(bits[:, 1::2])) / scale


class TrainableConstellation(nn.Module):
    """Free constellation points, centered and normalized in the forward pass."""

    def __init__(self, m: int, seed: int = 0):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        init = torch.view_as_complex(torch.randn(1 << m, 2, generator=gen))
        self.raw = nn.Parameter(torch.view_as_real(init))
        self.m = m

    def points(self) -> torch.Tensor:
        return center_normalize(torch.view_as_complex(self.raw))

    def map_labels(self, labels: torch.Tensor) -> torch.Tensor:
        return self.points()[labels]


class TrainableSipAllocation(nn.Module):
    """Per-RE pilot energy fractions via an elementwise sigmoid."""

    def __init__(self, n_s: int, n_t: int, init: float = -2.0):
        super().__init__()
        self.logits = nn.Parameter(torch.full((n_s, n_t), float(init)))

    def fractions(self) -> torch.Tensor:
        return torch.sigmoid(self.logits)
