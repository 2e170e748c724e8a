"""Link metrics: BER accumulation, SNR definitions, goodput, PAPR, and the
Monte Carlo achievable-rate estimator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: Minimum bit-error count before a BER point is considered reportable.
MIN_ERRORS_TO_REPORT = 100

_Q_FLOOR = 1e-12


def eb_over_sigma2(h_grid: np.ndarray, sigma2: float, rho: float, m: int,
                   r: float) -> float:
    """Per-frame energy per information bit over noise variance (linear)."""
    if sigma2 <= 0 or rho <= 0 or m <= 0 or r <= 0:
        raise ValueError("sigma2, rho, m, r must all be positive")
    energy = float(np.sum(np.abs(h_grid) ** 2))
    return energy / (rho * h_grid.size * m * r * sigma2)


def es_over_sigma2(h_grid: np.ndarray, sigma2: float) -> float:
    """Per-frame energy per symbol over noise variance (linear)."""
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    return float(np.sum(np.abs(h_grid) ** 2)) / (h_grid.size * sigma2)


def goodput(r: float, rho: float, m: int, n: int, ber: float) -> float:
    """Information bits per frame delivered error-free: r*rho*m*n*(1-BER)."""
    if not 0.0 <= ber <= 1.0:
        raise ValueError(f"BER must lie in [0, 1], got {ber}")
    return r * rho * m * n * (1.0 - ber)


@dataclass
class FrameMetrics:
    """Outcome of one simulated frame."""

    bit_errors: int
    info_bits: int
    eb_lin: float
    es_lin: float
    channel_energy: float

    def __post_init__(self):
        if not 0 <= self.bit_errors <= self.info_bits:
            raise ValueError("bit_errors must lie in [0, info_bits]")


@dataclass
class BerAccumulator:
    """Mergeable error-count accumulator (associative combine for workers)."""

    bit_errors: int = 0
    total_bits: int = 0
    frames: int = 0
    channel_energy: float = 0.0

    def add(self, fm: FrameMetrics) -> None:
        self.bit_errors += fm.bit_errors
        self.total_bits += fm.info_bits
        self.frames += 1
        self.channel_energy += fm.channel_energy

    def add_counts(self, bit_errors: int, total_bits: int) -> None:
        self.bit_errors += bit_errors
        self.total_bits += total_bits
        self.frames += 1

    def merge(self, other: "BerAccumulator") -> "BerAccumulator":
        return BerAccumulator(self.bit_errors + other.bit_errors,
                              self.total_bits + other.total_bits,
                              self.frames + other.frames,
                              self.channel_energy + other.channel_energy)

    @property
    def ber(self) -> float:
        return self.bit_errors / self.total_bits if self.total_bits else 0.0

    def confidence_interval(self, z: float = 1.96) -> tuple[float, float]:
        """Normal-approximation CI on the BER."""
        if self.total_bits == 0:
            return (0.0, 0.0)
        p = self.ber
        half = z * np.sqrt(max(p * (1.0 - p), 0.0) / self.total_bits)
        return (max(p - half, 0.0), min(p + half, 1.0))

    @property
    def reportable(self) -> bool:
        return self.bit_errors >= MIN_ERRORS_TO_REPORT


@dataclass
class RateEstimate:
    """Monte Carlo total-BCE and the induced achievable rate, bits/frame."""

    bce_total: float
    rate: float
    sample_count: int
    clamped_terms: int = 0


def estimate_rate(q_true: np.ndarray, bits_per_frame: int | None = None) -> RateEstimate:
    """Achievable-rate estimate from posterior probabilities of the true bits.

    ``q_true`` holds Q(b_true | y) for each (frame, data RE, bit); shape
    (frames, ...). The total binary cross-entropy per frame uses the binary
    logarithm; the rate is ``n_D*m - L``. Zero posteriors are clamped at
    1e-12 and counted.
    """
    q = np.asarray(q_true, dtype=float)
    if q.ndim < 2:
        raise ValueError("expected a (frames, ...) array of posteriors")
    if np.any(q < 0) or np.any(q > 1):
        raise ValueError("posterior probabilities must lie in [0, 1]")
    frames = q.shape[0]
    per_frame = q.reshape(frames, -1)
    if bits_per_frame is None:
        bits_per_frame = per_frame.shape[1]
    clamped = int(np.count_nonzero(per_frame < _Q_FLOOR))
    bce = float(-np.log2(np.maximum(per_frame, _Q_FLOOR)).sum(axis=1).mean())
    return RateEstimate(bce, bits_per_frame - bce, frames, clamped)


def rate_from_llrs(llrs: np.ndarray, bits: np.ndarray) -> RateEstimate:
    """Rate estimate from LLR tensors (ln P(1)/P(0)) and the true bits.

    Shapes are (frames, ..., m); entries are paired elementwise.
    """
    llrs = np.asarray(llrs, dtype=float)
    bits = np.asarray(bits)
    if llrs.shape != bits.shape:
        raise ValueError(f"LLR shape {llrs.shape} does not match bits {bits.shape}")
    signed = np.where(bits.astype(bool), llrs, -llrs)
    # Q(true) = sigmoid(signed); -log2 Q = log2(1 + exp(-signed))
    q_true = 1.0 / (1.0 + np.exp(-np.clip(signed, -700, 700)))
    return estimate_rate(q_true.reshape(llrs.shape[0], -1))


def ofdm_time_symbols(freq_symbols: np.ndarray, oversample: int = 1) -> np.ndarray:
    """Inverse DFT per OFDM symbol (rows); optional zero-padded oversampling."""
    freq_symbols = np.asarray(freq_symbols)
    n_s = freq_symbols.shape[-1]
    if oversample == 1:
        return np.fft.ifft(freq_symbols, axis=-1)
    padded = np.zeros(freq_symbols.shape[:-1] + (n_s * oversample,), dtype=complex)
    half = n_s // 2
    padded[..., :half] = freq_symbols[..., :half]
    padded[..., -(n_s - half):] = freq_symbols[..., half:]
    return np.fft.ifft(padded, axis=-1)


def papr_values(freq_symbols: np.ndarray, oversample: int = 1,
                normalization: str = "symbol") -> np.ndarray:
    """Per-OFDM-symbol peak-to-average power ratio (linear).

    ``normalization`` selects the averaging in the denominator: "symbol"
    divides each peak by that symbol's own mean power; "ensemble" divides by
    the mean power over the whole batch (the convention under which the
    classical i.i.d.-Gaussian CCDF expression is exact).
    """
    x = ofdm_time_symbols(freq_symbols, oversample)
    power = np.abs(x) ** 2
    if normalization == "symbol":
        return power.max(axis=-1) / power.mean(axis=-1)
    if normalization == "ensemble":
        return power.max(axis=-1) / power.mean()
    raise ValueError(f"unknown normalization {normalization!r}")


@dataclass
class PaprCdf:
    """Empirical CDF of the PAPR evaluated on a fixed dB grid."""

    papr_db: np.ndarray
    cdf: np.ndarray

    def ccdf_at(self, gamma_linear: float) -> float:
        db = 10.0 * np.log10(gamma_linear)
        return 1.0 - float(np.interp(db, self.papr_db, self.cdf))

    def sup_distance(self, other: "PaprCdf") -> float:
        if not np.array_equal(self.papr_db, other.papr_db):
            raise ValueError("CDFs must share the evaluation grid")
        return float(np.max(np.abs(self.cdf - other.cdf)))


def _symbol_stream(scheme, n_s: int, count: int, rng: np.random.Generator):
    """Yield (batch, n_s) frequency-domain OFDM symbols for a scheme.

    ``scheme`` is a Constellation for plain modulation, or a (Constellation,
    SipAllocation) pair; SIP cycles repeatedly through the allocation's OFDM
    symbols (columns).
    """
    from .modem import Constellation

    batch = 8192
    produced = 0
    col = 0
    while produced < count:
        take = min(batch, count - produced)
        if isinstance(scheme, Constellation):
            labels = rng.integers(0, scheme.size, size=(take, n_s))
            yield scheme.points[labels]
        else:
            const, alloc = scheme
            if alloc.shape[0] != n_s:
                raise ValueError("allocation grid height must equal the subcarrier count")
            labels = rng.integers(0, const.size, size=(take, n_s))
            data = const.points[labels]
            cols = (col + np.arange(take)) % alloc.shape[1]
            col = int((col + take) % alloc.shape[1])
            a = alloc.a[:, cols].T
            p = alloc.p[:, cols].T
            yield np.sqrt(1.0 - a) * data + np.sqrt(a) * p
        produced += take


def papr_cdf(scheme, n_s: int, symbol_count: int, rng: np.random.Generator,
             oversample: int = 1, grid_db=None,
             normalization: str = "symbol") -> PaprCdf:
    """Empirical PAPR CDF over randomly generated OFDM symbols.

    No oversampling by default; the plain per-symbol inverse DFT is used.
    For "ensemble" normalization the unit average symbol energy of the
    supported schemes fixes the mean time-domain power at 1/n_S analytically.
    """
    if grid_db is None:
        grid_db = np.arange(0.0, 13.0 + 1e-9, 0.05)
    grid_db = np.asarray(grid_db, dtype=float)
    counts = np.zeros(grid_db.size, dtype=np.int64)
    total = 0
    for block in _symbol_stream(scheme, n_s, symbol_count, rng):
        if normalization == "ensemble":
            # unit-energy schemes: E|x_t|^2 = n_s / N_os^2 under numpy's ifft
            x = ofdm_time_symbols(block, oversample)
            n_os = x.shape[-1]
            vals = np.abs(x).max(axis=-1) ** 2 * (n_os * n_os / n_s)
        else:
            vals = papr_values(block, oversample, normalization)
        vals_db = 10.0 * np.log10(vals)
        counts += (vals_db[None, :] <= grid_db[:, None]).sum(axis=1)
        total += block.shape[0]
    return PaprCdf(grid_db, counts / total)


def gaussian_papr_ccdf(gamma_linear: float, n_s: int) -> float:
    """Classical i.i.d.-Gaussian OFDM approximation: 1 - (1 - e^-gamma)^n_S."""
    return 1.0 - (1.0 - np.exp(-gamma_linear)) ** n_s
