"""Correlated OFDM fading generator for training batches.

Independent re-implementation of the separable (time x frequency) Rayleigh
model: Jakes time correlation across OFDM symbols, power-delay-profile
frequency correlation across subcarriers, per-realization parameter draws.
Grids are (n_S, n_T); vec order is subcarrier-fastest to match the core's
file conventions. Cross-checked statistically against the core in tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import j0 as bessel_j0

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class Radio:
    f_c: float = 2.6e9
    delta_f: float = 15e3
    cp_duration: float = 5.2e-6

    @property
    def delta_t(self) -> float:
        return 1.0 / self.delta_f + self.cp_duration


@dataclass(frozen=True)
class Pdp:
    name: str
    taus: np.ndarray
    powers: np.ndarray

    @classmethod
    def synthetic_exp(cls, num_taps: int = 8, spacing: float = 0.5,
                      decay: float = 1.0) -> "Pdp":
        taus = spacing * np.arange(num_taps, dtype=float)
        powers = np.exp(-taus / decay)
        return cls("synthetic-exp", taus, powers / powers.sum())

    @classmethod
    def named(cls, name: str) -> "Pdp":
        """Bundled profiles: TDL-A/B/C tables or the synthetic exponential."""
        key = name.lower().replace("_", "-")
        if key == "synthetic-exp":
            return cls.synthetic_exp()
        if key in ("tdl-a", "tdl-b", "tdl-c"):
            import importlib.resources

            ref = importlib.resources.files("linktrainer.data").joinpath(
                f"tdl_{key[-1]}.csv")
            with importlib.resources.as_file(ref) as path:
                return cls.from_file(path)
        raise ValueError(f"unknown power delay profile {name!r}")

    @classmethod
    def from_file(cls, path) -> "Pdp":
        """Load the simulator's `tau_normalized,power_db` table format."""
        name, taus, dbs = None, [], []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    _, _, value = line.partition(":")
                    if "profile" in line and value:
                        name = value.strip()
                    continue
                if line.lower().startswith("tau"):
                    continue
                tau, _, db = line.partition(",")
                taus.append(float(tau))
                dbs.append(float(db))
        powers = 10.0 ** (np.asarray(dbs) / 10.0)
        order = np.argsort(taus)
        return cls(name or "file", np.asarray(taus)[order],
                   (powers / powers.sum())[order])


class ChannelSampler:
    """Draws (n_S, n_T) channel grids with per-draw random scenario params."""

    def __init__(self, n_s: int, n_t: int, radio: Radio,
                 speed_range=(0.0, 32.5), delay_spread_range=(10e-9, 1000e-9),
                 pdps=None):
        self.n_s = n_s
        self.n_t = n_t
        self.radio = radio
        self.speed_range = speed_range
        self.delay_spread_range = delay_spread_range
        self.pdps = pdps if pdps else [Pdp.synthetic_exp()]

    def _factors(self, v: float, d_s: float, pdp: Pdp):
        lags_t = np.arange(self.n_t)
        r_t_col = bessel_j0(2 * np.pi * (v / SPEED_OF_LIGHT) * self.radio.f_c
                            * self.radio.delta_t * lags_t)
        lags_f = np.arange(self.n_s)
        phase = 2 * np.pi * d_s * self.radio.delta_f * np.outer(pdp.taus, lags_f)
        r_f_col = pdp.powers @ np.exp(1j * phase)
        r_t = _toeplitz(r_t_col.astype(complex))
        r_f = _toeplitz(r_f_col)
        return r_f, r_t

    def sample(self, batch: int, rng: np.random.Generator) -> np.ndarray:
        """(batch, n_S, n_T) complex64 channel realizations."""
        out = np.empty((batch, self.n_s, self.n_t), dtype=np.complex64)
        for b in range(batch):
            v = rng.uniform(*self.speed_range)
            d_s = rng.uniform(*self.delay_spread_range)
            pdp = self.pdps[rng.integers(len(self.pdps))]
            r_f, r_t = self._factors(v, d_s, pdp)
            lam_f, u_f = np.linalg.eigh(r_f)
            lam_t, u_t = np.linalg.eigh(r_t)
            scale = np.sqrt(np.maximum(np.outer(lam_f, lam_t.real), 0.0))
            noise = (rng.standard_normal((self.n_s, self.n_t))
                     + 1j * rng.standard_normal((self.n_s, self.n_t))) / np.sqrt(2)
            out[b] = u_f @ (scale * noise) @ u_t.T
        return out


def _toeplitz(col: np.ndarray) -> np.ndarray:
    n = col.size
    idx = np.subtract.outer(np.arange(n), np.arange(n))
    mat = np.empty((n, n), dtype=complex)
    mat[idx >= 0] = col[idx[idx >= 0]]
    mat[idx < 0] = col[-idx[idx < 0]].conj()
    return mat


def awgn(shape, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    return ((rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
            * np.sqrt(sigma2 / 2.0)).astype(np.complex64)
