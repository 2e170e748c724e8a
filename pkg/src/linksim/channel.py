"""Kronecker-correlated OFDM channel: statistics, sampling, and transfer function.

The channel acts per resource element (RE) of an ``n_S x n_T`` grid as
``Y = H o X + W`` (Hadamard product plus white complex Gaussian noise).
``H`` is zero-mean complex Gaussian with separable tempo-spectral
correlation: a Jakes time correlation over OFDM symbols and a
power-delay-profile frequency correlation over subcarriers.

Vectorization convention used throughout the package: ``vec(G)`` flattens an
``(n_S, n_T)`` grid with the subcarrier index varying fastest (Fortran
order), so the full covariance of ``vec(H)`` is ``kron(R_T, R_F)``.
"""

from __future__ import annotations

import importlib.resources
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

SPEED_OF_LIGHT = 299_792_458.0

# Total clamped negative eigenvalue mass allowed, relative to trace(R) = n.
_EIG_CLAMP_BUDGET = 1e-6


class NumericalError(RuntimeError):
    """Numerical failure (eigensolver breakdown, indefinite covariance)."""


def grid_to_vec(grid: np.ndarray) -> np.ndarray:
    """Flatten an (n_S, n_T) grid, subcarrier index fastest."""
    return np.reshape(grid, -1, order="F")


def vec_to_grid(vec: np.ndarray, n_s: int, n_t: int) -> np.ndarray:
    """Inverse of :func:`grid_to_vec`."""
    return np.reshape(vec, (n_s, n_t), order="F")


@dataclass(frozen=True)
class OfdmDims:
    """Grid dimensions: ``n_s`` subcarriers by ``n_t`` OFDM symbols."""

    n_s: int
    n_t: int

    def __post_init__(self):
        if self.n_s < 1 or self.n_t < 1:
            raise ValueError(f"grid dims must be >= 1, got {self.n_s}x{self.n_t}")

    @property
    def n(self) -> int:
        """Total number of resource elements."""
        return self.n_s * self.n_t


@dataclass(frozen=True)
class RadioParams:
    """Carrier frequency, OFDM symbol duration (incl. cyclic prefix), subcarrier spacing."""

    f_c: float
    delta_t: float
    delta_f: float
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        for name in ("f_c", "delta_t", "delta_f", "c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")

    @classmethod
    def from_numerology(cls, f_c: float, delta_f: float, cp_duration: float) -> "RadioParams":
        """Derive the symbol duration as 1/delta_f plus the cyclic prefix."""
        return cls(f_c=f_c, delta_t=1.0 / delta_f + cp_duration, delta_f=delta_f)


#: 2.6 GHz carrier, 15 kHz spacing, 5.2 us cyclic prefix.
DEFAULT_RADIO = RadioParams.from_numerology(f_c=2.6e9, delta_f=15e3, cp_duration=5.2e-6)


class PowerDelayProfile:
    """Normalized power delay profile: taps (tau_l, S_l) with sum(S_l) = 1.

    Taps are stored sorted by delay; linear powers are normalized to unit sum
    by the constructor.
    """

    def __init__(self, name: str, taus, powers_linear):
        taus = np.asarray(taus, dtype=float)
        powers = np.asarray(powers_linear, dtype=float)
        if taus.ndim != 1 or taus.shape != powers.shape or taus.size < 1:
            raise ValueError("taps must be two equal-length 1-D sequences with L >= 1")
        if np.any(taus < 0) or np.any(powers < 0):
            raise ValueError("delays and powers must be non-negative")
        total = powers.sum()
        if total <= 0:
            raise ValueError("total tap power must be positive")
        order = np.argsort(taus, kind="stable")
        self.name = name
        self.taus = taus[order]
        self.powers = powers[order] / total

    @classmethod
    def from_db(cls, name: str, taus, powers_db) -> "PowerDelayProfile":
        return cls(name, taus, 10.0 ** (np.asarray(powers_db, dtype=float) / 10.0))

    @classmethod
    def synthetic_exp(cls, num_taps: int = 8, spacing: float = 0.5,
                      decay: float = 1.0) -> "PowerDelayProfile":
        """Self-contained exponential profile for tests: S_l ~ exp(-tau_l/decay)."""
        if num_taps < 1:
            raise ValueError("num_taps must be >= 1")
        taus = spacing * np.arange(num_taps, dtype=float)
        return cls("synthetic-exp", taus, np.exp(-taus / decay))

    @classmethod
    def from_file(cls, path) -> "PowerDelayProfile":
        """Load a `tau_normalized,power_db` table with a `# profile:` header."""
        name = None
        taus, powers_db = [], []
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
                powers_db.append(float(db))
        if name is None:
            raise ValueError(f"missing '# profile:' header in {path}")
        return cls.from_db(name, taus, powers_db)

    def __repr__(self):
        return f"PowerDelayProfile({self.name!r}, L={self.taus.size})"


def get_pdp(name: str) -> PowerDelayProfile:
    """Look up a named profile (TDL-A/B/C from packaged data, or synthetic-exp)."""
    key = name.lower().replace("_", "-")
    if key == "synthetic-exp":
        return PowerDelayProfile.synthetic_exp()
    if key in ("tdl-a", "tdl-b", "tdl-c"):
        fname = f"tdl_{key[-1]}.csv"
        ref = importlib.resources.files("linksim.data").joinpath(fname)
        with importlib.resources.as_file(ref) as path:
            return PowerDelayProfile.from_file(path)
    raise ValueError(f"unknown power delay profile {name!r}")


@dataclass(frozen=True)
class MobilitySpec:
    """Receiver speed [m/s] and delay spread [s]."""

    v: float
    d_s: float

    def __post_init__(self):
        if self.v < 0 or self.d_s < 0:
            raise ValueError("speed and delay spread must be non-negative")


@dataclass(frozen=True)
class NoiseSpec:
    """Per-RE complex noise variance (linear scale).

    Production paths require ``sigma2 > 0``; ``sigma2 = 0`` is tolerated here
    only as a test hook for noiseless runs.
    """

    sigma2: float

    def __post_init__(self):
        if not (math.isfinite(self.sigma2) and self.sigma2 >= 0):
            raise ValueError("sigma2 must be finite and >= 0")


_J0_SERIES_CUTOFF = 12.0
# Hadamard-product asymptotic coefficients a_k = prod_{j<=k} -(2j-1)^2 / (8j).
_J0_ASYMPT_TERMS = 11


def _j0_series(x: np.ndarray) -> np.ndarray:
    q = -0.25 * x * x
    term = np.ones_like(x)
    acc = np.ones_like(x)
    # 40 terms bound the truncation error below 1e-18 for |x| <= 12.
    for k in range(1, 40):
        term = term * q / (k * k)
        acc = acc + term
    return acc

def _j0_asymptotic(x: np.ndarray) -> np.ndarray:
    # P = 1 - b2/x^2 + b4/x^4 - ...,  Q = -b1/x + b3/x^3 - ...,
    # with positive b_k = prod_{j<=k} (2j-1)^2 / (8j).
    ax = np.abs(x)
    inv = 1.0 / ax
    inv2 = inv * inv
    b = 1.0
    p = np.ones_like(ax)
    q = np.zeros_like(ax)
    powp = inv2.copy()
    powq = inv.copy()
    sign_p = -1.0
    sign_q = -1.0
    for k in range(1, 2 * _J0_ASYMPT_TERMS):
        b *= (2 * k - 1) ** 2 / (8.0 * k)
        if k % 2 == 1:
            q = q + sign_q * b * powq
            powq = powq * inv2
            sign_q = -sign_q
        else:
            p = p + sign_p * b * powp
            powp = powp * inv2
            sign_p = -sign_p
    chi = ax - 0.25 * np.pi
    return np.sqrt(2.0 / (np.pi * ax)) * (p * np.cos(chi) - q * np.sin(chi))


def bessel_j0(x):
    """Zero-order Bessel function of the first kind.

    Power series below |x| = 12, Hankel asymptotic expansion beyond; absolute
    error <= 1e-8 for |x| <= 1e4. Accepts scalars or arrays.
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("bessel_j0 requires finite input")
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    out = np.empty_like(arr)
    small = np.abs(arr) < _J0_SERIES_CUTOFF
    if np.any(small):
        out[small] = _j0_series(arr[small])
    if np.any(~small):
        out[~small] = _j0_asymptotic(arr[~small])
    return float(out[0]) if scalar else out


def time_correlation(dims: OfdmDims, radio: RadioParams, v: float) -> np.ndarray:
    """Jakes time correlation across OFDM symbols: J0(2*pi*(v/c)*f_c*dT*(i-k))."""
    if v < 0:
        raise ValueError("speed must be non-negative")
    lags = np.arange(dims.n_t, dtype=float)
    col = bessel_j0(2.0 * np.pi * (v / radio.c) * radio.f_c * radio.delta_t * lags)
    return scipy.linalg.toeplitz(col)


def freq_correlation(dims: OfdmDims, radio: RadioParams, pdp: PowerDelayProfile,
                     d_s: float) -> np.ndarray:
    """Frequency correlation across subcarriers from the power delay profile."""
    if d_s < 0:
        raise ValueError("delay spread must be non-negative")
    lags = np.arange(dims.n_s, dtype=float)
    phase = 2.0 * np.pi * d_s * radio.delta_f * np.outer(pdp.taus, lags)
    col = pdp.powers @ np.exp(1j * phase)
    return scipy.linalg.toeplitz(col, col.conj())


class CorrelationModel:
    """Separable covariance of the channel grid, with its eigendecomposition.

    Stores the time/frequency factors and their eigensystems; eigenvalues of
    the full covariance are the pairwise products, clamped at zero (PSD
    repair). Immutable after construction and shareable across workers.
    """

    def __init__(self, dims: OfdmDims, r_t: np.ndarray, r_f: np.ndarray):
        if r_t.shape != (dims.n_t, dims.n_t) or r_f.shape != (dims.n_s, dims.n_s):
            raise ValueError("factor matrices do not match the grid dims")
        self.dims = dims
        self.r_t = r_t
        self.r_f = r_f
        try:
            lam_t, u_t = np.linalg.eigh(r_t)
            lam_f, u_f = np.linalg.eigh(r_f)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                f"eigendecomposition failed for {dims.n_s}x{dims.n_t} factors: {exc}"
            ) from exc
        self.u_t = u_t
        self.u_f = u_f
        # Eigenvalues of kron(R_T, R_F) are all products lam_f[i] * lam_t[k].
        prod = np.outer(lam_f, lam_t)
        neg = prod < 0
        self.clamped_mass = float(-prod[neg].sum())
        if self.clamped_mass > _EIG_CLAMP_BUDGET * dims.n:
            raise NumericalError(
                f"clamped eigenvalue mass {self.clamped_mass:.3e} exceeds "
                f"{_EIG_CLAMP_BUDGET:.0e} * trace; factors are far from PSD "
                f"(min factor eigs {lam_t.min():.3e}, {lam_f.min():.3e})"
            )
        self.eig_grid = np.where(neg, 0.0, prod)
        self._sqrt_eig = np.sqrt(self.eig_grid)

    def full_matrix(self) -> np.ndarray:
        """Dense n x n covariance of vec(H) (subcarrier index fastest)."""
        return np.kron(self.r_t, self.r_f)

    def eigenvalues(self) -> np.ndarray:
        """Clamped eigenvalues of the full covariance, in vec order."""
        return grid_to_vec(self.eig_grid)

    def sample(self, rng: np.random.Generator, count: int | None = None) -> np.ndarray:
        """Draw channel grids by filtering white complex Gaussian noise.

        Returns an (n_S, n_T) grid, or (count, n_S, n_T) when ``count`` is
        given. Deterministic for a fixed generator state.
        """
        batch = 1 if count is None else count
        shape = (batch, self.dims.n_s, self.dims.n_t)
        noise = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
        shaped = self.u_f @ (self._sqrt_eig * noise) @ self.u_t.T
        return shaped[0] if count is None else shaped


def build_correlation(dims: OfdmDims, radio: RadioParams, pdp: PowerDelayProfile,
                      mobility: MobilitySpec) -> CorrelationModel:
    """Assemble the correlation model for one (speed, delay spread, profile) point."""
    r_t = time_correlation(dims, radio, mobility.v)
    r_f = freq_correlation(dims, radio, pdp, mobility.d_s)
    return CorrelationModel(dims, r_t, r_f)


def sample_channel(model: CorrelationModel, rng: np.random.Generator,
                   count: int | None = None) -> np.ndarray:
    """Functional alias for :meth:`CorrelationModel.sample`."""
    return model.sample(rng, count)


def apply_channel(h: np.ndarray, x: np.ndarray, noise: NoiseSpec | float,
                  rng: np.random.Generator) -> np.ndarray:
    """Per-RE transfer function Y = H o X + W with W ~ CN(0, sigma2) i.i.d."""
    sigma2 = noise.sigma2 if isinstance(noise, NoiseSpec) else float(noise)
    if sigma2 < 0:
        raise ValueError("sigma2 must be >= 0")
    if h.shape != x.shape:
        raise ValueError(f"shape mismatch: H {h.shape} vs X {x.shape}")
    w = (rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape)) * np.sqrt(sigma2 / 2.0)
    return h * x + w
