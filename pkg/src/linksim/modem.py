"""Constellations, bit/symbol mapping, and superimposed-pilot combining.

Bit labeling convention, fixed repo-wide: a point's integer label ``u`` reads
its bit vector MSB-first, so bit ``i`` of label ``u`` is ``(u >> (m-1-i)) & 1``
for ``i`` in ``0..m-1``.
"""

from __future__ import annotations

import numpy as np

_CENTER_TOL = 1e-9


class Constellation:
    """2^m labeled complex points.

    ``points[u]`` is the symbol for label ``u``. ``mean`` and ``energy``
    (mean power) are cached at construction; immutable afterwards.
    """

    def __init__(self, points):
        points = np.array(points, dtype=complex)
        if points.ndim != 1 or points.size < 2 or points.size & (points.size - 1):
            raise ValueError("constellation size must be a power of two >= 2")
        self.points = points
        self.points.setflags(write=False)
        self.m = int(points.size).bit_length() - 1
        self.mean = complex(points.mean())
        self.energy = float(np.mean(np.abs(points) ** 2))

    @property
    def size(self) -> int:
        return self.points.size

    def bit_of_label(self, i: int) -> np.ndarray:
        """Bit i (MSB-first) of every label, as a 0/1 array of length 2^m."""
        labels = np.arange(self.size)
        return (labels >> (self.m - 1 - i)) & 1

    def labels_to_bits(self, labels: np.ndarray) -> np.ndarray:
        """Expand integer labels to an extra trailing axis of m bits, MSB first."""
        labels = np.asarray(labels)
        shifts = np.arange(self.m - 1, -1, -1)
        return (labels[..., None] >> shifts) & 1

    def bits_to_labels(self, bits: np.ndarray) -> np.ndarray:
        """Collapse a trailing axis of m bits (MSB first) to integer labels."""
        bits = np.asarray(bits)
        if bits.shape[-1] != self.m:
            raise ValueError(f"expected trailing axis of {self.m} bits, got {bits.shape}")
        weights = 1 << np.arange(self.m - 1, -1, -1)
        return (bits * weights).sum(axis=-1)


def gray_qam(m: int) -> Constellation:
    """Square QAM with per-axis Gray labeling and unit average power.

    Even-indexed label bits map to the in-phase axis, odd-indexed to the
    quadrature axis (MSB first on each axis).
    """
    if m not in (2, 4, 6):
        raise ValueError(f"square Gray QAM needs m in {{2, 4, 6}}, got {m}")
    half = m // 2
    labels = np.arange(1 << m)
    bits = (labels[:, None] >> np.arange(m - 1, -1, -1)) & 1
    re_amp = _pam_from_bits(bits[:, 0::2])
    im_amp = _pam_from_bits(bits[:, 1::2])
    levels = 1 << half
    scale = np.sqrt(2.0 * (levels * levels - 1) / 3.0)
    return Constellation((re_amp + 1j * im_amp) / scale)


def _pam_from_bits(bits: np.ndarray) -> np.ndarray:
    """Reflected-Gray PAM over bit rows (MSB first): values +-1, +-3, ..."""
    if bits.shape[1] == 1:
        return 1.0 - 2.0 * bits[:, 0]
    inner = _pam_from_bits(bits[:, 1:])
    return (1 - 2 * bits[:, 0]) * ((1 << (bits.shape[1] - 1)) - inner)


def normalize_center(raw_points) -> Constellation:
    """Center to zero mean and scale to unit power.

    The transform is idempotent and invariant to affine input maps
    ``z -> a z + b`` with real ``a > 0``.
    """
    raw = np.asarray(raw_points, dtype=complex)
    mean = raw.mean()
    var = np.mean(np.abs(raw) ** 2) - abs(mean) ** 2
    if var <= _CENTER_TOL * max(1.0, np.mean(np.abs(raw) ** 2)):
        raise ValueError("degenerate constellation: points are (nearly) identical")
    return Constellation((raw - mean) / np.sqrt(var))


def map_bits(const: Constellation, bits: np.ndarray) -> np.ndarray:
    """Map bit groups (..., m) to symbols (...)."""
    return const.points[const.bits_to_labels(bits)]


def map_labels(const: Constellation, labels: np.ndarray) -> np.ndarray:
    return const.points[np.asarray(labels)]


def hard_demap(const: Constellation, symbols: np.ndarray) -> np.ndarray:
    """Nearest-point labels for received symbols."""
    symbols = np.asarray(symbols, dtype=complex)
    dist = np.abs(symbols[..., None] - const.points) ** 2
    return np.argmin(dist, axis=-1)


def save_constellation(const: Constellation, path) -> None:
    """Write `label,re,im` CSV with full float64 round-trip precision."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("label,re,im\n")
        for u, c in enumerate(const.points):
            fh.write(f"{u},{float(c.real)!r},{float(c.imag)!r}\n")


def load_constellation(path, m: int | None = None) -> Constellation:
    """Load a constellation CSV, enforcing the centered/normalized invariants.

    The loader verifies rather than re-applies the centering transform, so a
    file with mean or power off by more than 1e-9 is rejected.
    """
    rows = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "label,re,im":
            raise ValueError(f"bad constellation header {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            u, re, im = line.split(",")
            rows[int(u)] = float(re) + 1j * float(im)
    count = len(rows)
    if sorted(rows) != list(range(count)):
        raise ValueError("constellation labels must cover 0..2^m-1 exactly once")
    if count < 2 or count & (count - 1):
        raise ValueError(f"constellation size {count} is not a power of two")
    if m is not None and count != 1 << m:
        raise ValueError(f"expected {1 << m} points for m={m}, found {count}")
    points = np.array([rows[u] for u in range(count)])
    mean = points.mean()
    energy = np.mean(np.abs(points) ** 2)
    if abs(mean) > _CENTER_TOL:
        raise ValueError(f"constellation mean {abs(mean):.2e} exceeds {_CENTER_TOL}")
    if abs(energy - 1.0) > _CENTER_TOL:
        raise ValueError(f"constellation power {energy!r} is not 1 within {_CENTER_TOL}")
    return Constellation(points)


def bpsk_pilot_grid(n_s: int, n_t: int, seed: int) -> np.ndarray:
    """Balanced +-1 pilot grid from a seeded shuffle.

    Half the entries are +1 and half -1 (one extra +1 when n is odd), so the
    grid mean is 0 for every seed; the arrangement is pseudo-random.
    """
    n = n_s * n_t
    flat = np.ones(n)
    flat[: n // 2] = -1.0
    np.random.default_rng(seed).shuffle(flat)
    return flat.reshape((n_s, n_t), order="F")


class SipAllocation:
    """Per-RE pilot energy fractions A in [0, 1] plus the +-1 pilot grid P.

    P is regenerated from ``pilot_seed`` so transmitter and receiver agree
    bit-exactly without shipping the grid.
    """

    def __init__(self, a: np.ndarray, pilot_seed: int):
        a = np.asarray(a, dtype=float)
        if a.ndim != 2:
            raise ValueError("allocation must be an (n_S, n_T) grid")
        if np.any(a < 0) or np.any(a > 1):
            raise ValueError("allocation entries must lie in [0, 1]")
        self.a = a
        self.pilot_seed = int(pilot_seed)
        self.p = bpsk_pilot_grid(a.shape[0], a.shape[1], self.pilot_seed)
        n = a.size
        if abs(self.p.mean()) > 3.0 / np.sqrt(n):
            raise ValueError("pilot grid mean exceeds 3/sqrt(n)")

    @property
    def shape(self):
        return self.a.shape

    def save(self, path) -> None:
        """Write `i,k,A` CSV with a pilot-seed header line."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# pilot_seed: {self.pilot_seed}\n")
            fh.write("i,k,A\n")
            for k in range(self.a.shape[1]):
                for i in range(self.a.shape[0]):
                    fh.write(f"{i},{k},{float(self.a[i, k])!r}\n")

    @classmethod
    def load(cls, path) -> "SipAllocation":
        seed = None
        entries = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    key, _, value = line[1:].partition(":")
                    if key.strip() == "pilot_seed":
                        seed = int(value)
                    continue
                if line.lower().startswith("i,"):
                    continue
                i, k, val = line.split(",")
                entries[(int(i), int(k))] = float(val)
        if seed is None:
            raise ValueError(f"missing '# pilot_seed:' header in {path}")
        n_s = max(i for i, _ in entries) + 1
        n_t = max(k for _, k in entries) + 1
        if len(entries) != n_s * n_t:
            raise ValueError("allocation file does not cover the full grid")
        a = np.empty((n_s, n_t))
        for (i, k), val in entries.items():
            a[i, k] = val
        return cls(a, seed)


def sip_combine(x_data: np.ndarray, alloc: SipAllocation) -> np.ndarray:
    """X = sqrt(1-A) o X_data + sqrt(A) o P, elementwise."""
    if x_data.shape != alloc.shape:
        raise ValueError(f"shape mismatch: data {x_data.shape} vs allocation {alloc.shape}")
    return np.sqrt(1.0 - alloc.a) * x_data + np.sqrt(alloc.a) * alloc.p
