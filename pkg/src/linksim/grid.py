"""Resource-grid bookkeeping: pilot patterns, frame assembly and disassembly.

Flat RE indices follow the package-wide vec order (subcarrier fastest, see
``linksim.channel``). Data REs are visited in ascending flat-index order both
when scattering coded bits and when gathering LLRs, so the two paths are
exact inverses.
"""

from __future__ import annotations

import json

import numpy as np

from .channel import OfdmDims

DEFAULT_PILOT_SEED = 0x5EED
DEFAULT_INTERLEAVER_SEED = 0x1EAF

_PATTERN_SYMBOLS = {"1P": (2,), "2P": (2, 11)}


class PilotPattern:
    """Boolean pilot mask plus unit-modulus pilot values on an OFDM grid.

    ``values`` is zero at data REs and holds seeded QPSK symbols at pilot
    REs. ``rho`` is the data-RE fraction.
    """

    def __init__(self, dims: OfdmDims, mask: np.ndarray, name: str,
                 seed: int = DEFAULT_PILOT_SEED):
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (dims.n_s, dims.n_t):
            raise ValueError(f"mask shape {mask.shape} does not match dims")
        self.dims = dims
        self.mask = mask
        self.name = name
        self.seed = int(seed)
        flat = mask.reshape(-1, order="F")
        self.pilot_indices = np.flatnonzero(flat)
        self.data_indices = np.flatnonzero(~flat)
        self.values = np.zeros((dims.n_s, dims.n_t), dtype=complex)
        if self.n_p:
            labels = np.random.default_rng(self.seed).integers(0, 4, size=self.n_p)
            qpsk = np.exp(1j * (np.pi / 4 + np.pi / 2 * labels))
            i_idx = self.pilot_indices % dims.n_s
            k_idx = self.pilot_indices // dims.n_s
            self.values[i_idx, k_idx] = qpsk

    @property
    def n_p(self) -> int:
        return self.pilot_indices.size

    @property
    def n_d(self) -> int:
        return self.data_indices.size

    @property
    def rho(self) -> float:
        return self.n_d / self.dims.n

    def pilot_vec(self) -> np.ndarray:
        """Pilot values at pilot_indices, in flat-index order."""
        i_idx = self.pilot_indices % self.dims.n_s
        k_idx = self.pilot_indices // self.dims.n_s
        return self.values[i_idx, k_idx]

    def to_json(self) -> dict:
        flat = self.mask.reshape(-1, order="F")
        runs = []
        current, count = False, 0
        for bit in flat:
            if bit == current:
                count += 1
            else:
                runs.append(count)
                current, count = bit, 1
        runs.append(count)
        return {
            "version": 1,
            "name": self.name,
            "n_s": self.dims.n_s,
            "n_t": self.dims.n_t,
            "pilot_seed": self.seed,
            "mask_rle": runs,  # alternating False/True run lengths, False first
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PilotPattern":
        if obj.get("version") != 1:
            raise ValueError(f"unsupported pilot pattern version {obj.get('version')!r}")
        dims = OfdmDims(obj["n_s"], obj["n_t"])
        flat = np.zeros(dims.n, dtype=bool)
        pos, value = 0, False
        for run in obj["mask_rle"]:
            flat[pos:pos + run] = value
            pos += run
            value = not value
        if pos != dims.n:
            raise ValueError("mask run lengths do not cover the grid")
        mask = flat.reshape((dims.n_s, dims.n_t), order="F")
        return cls(dims, mask, obj["name"], obj["pilot_seed"])


def make_pilot_pattern(name: str, dims: OfdmDims,
                       seed: int = DEFAULT_PILOT_SEED) -> PilotPattern:
    """Build a named pattern: "none", "1P" (symbol 2), or "2P" (symbols 2 and 11).

    Pilots sit on every other subcarrier starting at 0. At 72x14 this yields
    rho = 162/168 for 1P and 156/168 for 2P. Other grid sizes are accepted as
    scaled-down analogs provided n_S is even and the pilot symbols fit.
    """
    if name == "none":
        return PilotPattern(dims, np.zeros((dims.n_s, dims.n_t), dtype=bool), name, seed)
    try:
        symbols = _PATTERN_SYMBOLS[name]
    except KeyError:
        raise ValueError(f"unknown pilot pattern {name!r}") from None
    if dims.n_s % 2 or dims.n_s < 2 or dims.n_t <= max(symbols):
        raise ValueError(
            f"pattern {name!r} needs an even subcarrier count and n_T > {max(symbols)}, "
            f"got {dims.n_s}x{dims.n_t}"
        )
    mask = np.zeros((dims.n_s, dims.n_t), dtype=bool)
    for sym in symbols:
        mask[0::2, sym] = True
    return PilotPattern(dims, mask, name, seed)


class FramePlan:
    """Codeword packing and per-frame bit interleaving for one pattern.

    ``codewords_per_frame * code_length + padding_bits == n_D * m``; the
    interleaver is a seeded uniform permutation of the coded-bit positions
    (identity when built with the test hook).
    """

    def __init__(self, data_indices: np.ndarray, n_s: int, m: int, code_length: int,
                 seed: int = DEFAULT_INTERLEAVER_SEED, identity_interleaver: bool = False):
        self.data_indices = np.asarray(data_indices, dtype=int)
        self.n_s = int(n_s)
        self.m = int(m)
        self.code_length = int(code_length)
        self.seed = int(seed)
        self.identity = bool(identity_interleaver)
        capacity = self.data_indices.size * self.m
        if code_length > capacity or capacity == 0:
            raise ValueError(
                f"frame capacity {capacity} bits cannot hold a {code_length}-bit codeword")
        self.codewords_per_frame = capacity // code_length
        self.padding_bits = capacity - self.codewords_per_frame * code_length
        if self.identity:
            self.interleaver = np.arange(capacity)
        else:
            self.interleaver = np.random.default_rng(self.seed).permutation(capacity)
        self._inverse = np.argsort(self.interleaver)

    @property
    def n_d(self) -> int:
        return self.data_indices.size

    @property
    def capacity(self) -> int:
        return self.n_d * self.m

    def _re_coords(self):
        return self.data_indices % self.n_s, self.data_indices // self.n_s


def plan_frame(pattern: PilotPattern, code_length: int, m: int,
               seed: int = DEFAULT_INTERLEAVER_SEED,
               identity_interleaver: bool = False) -> FramePlan:
    return FramePlan(pattern.data_indices, pattern.dims.n_s, m, code_length,
                     seed=seed, identity_interleaver=identity_interleaver)


def assemble(plan: FramePlan, pattern: PilotPattern, codewords: np.ndarray,
             padding_rng: np.random.Generator) -> np.ndarray:
    """Scatter coded bits plus random padding onto the data REs.

    Returns an (n_S, n_T, m) int8 grid; pilot REs are left zero and carry no
    information.
    """
    codewords = np.asarray(codewords)
    expected = (plan.codewords_per_frame, plan.code_length)
    if codewords.shape != expected:
        raise ValueError(f"expected codeword block {expected}, got {codewords.shape}")
    serial = np.empty(plan.capacity, dtype=np.int8)
    serial[: codewords.size] = codewords.reshape(-1)
    if plan.padding_bits:
        serial[codewords.size:] = padding_rng.integers(0, 2, size=plan.padding_bits)
    interleaved = serial[plan.interleaver]
    dims = pattern.dims
    grid = np.zeros((dims.n_s, dims.n_t, plan.m), dtype=np.int8)
    i_idx, k_idx = plan._re_coords()
    grid[i_idx, k_idx, :] = interleaved.reshape(plan.n_d, plan.m)
    return grid


def disassemble(plan: FramePlan, llr_grid: np.ndarray) -> np.ndarray:
    """Gather per-codeword LLR vectors from an (n_S, n_T, m) grid.

    Inverse of :func:`assemble` on the coded positions; padding LLRs are
    dropped. Returns shape (codewords_per_frame, code_length).
    """
    if llr_grid.ndim != 3 or llr_grid.shape[2] != plan.m:
        raise ValueError(f"LLR grid shape {llr_grid.shape} does not match plan (m={plan.m})")
    i_idx, k_idx = plan._re_coords()
    flat = np.asarray(llr_grid, dtype=float)[i_idx, k_idx, :].reshape(-1)
    serial = flat[plan._inverse]
    coded = serial[: plan.codewords_per_frame * plan.code_length]
    return coded.reshape(plan.codewords_per_frame, plan.code_length)


def deassembled_bits(plan: FramePlan, bit_grid: np.ndarray) -> np.ndarray:
    """Recover the per-codeword bits that :func:`assemble` scattered."""
    return disassemble(plan, bit_grid).astype(np.int8)


def scatter_coded_values(plan: FramePlan, pattern: PilotPattern, values: np.ndarray,
                         padding_value: float = 0.0,
                         background: float = np.nan) -> np.ndarray:
    """Place per-codeword values onto the grid positions used by :func:`assemble`.

    Float counterpart of :func:`assemble` (exact inverse of
    :func:`disassemble` on the coded positions): padding bit positions get
    ``padding_value`` and non-data REs get ``background``.
    """
    values = np.asarray(values, dtype=float)
    expected = (plan.codewords_per_frame, plan.code_length)
    if values.shape != expected:
        raise ValueError(f"expected value block {expected}, got {values.shape}")
    serial = np.full(plan.capacity, padding_value)
    serial[: values.size] = values.reshape(-1)
    interleaved = serial[plan.interleaver]
    dims = pattern.dims
    grid = np.full((dims.n_s, dims.n_t, plan.m), background)
    i_idx, k_idx = plan._re_coords()
    grid[i_idx, k_idx, :] = interleaved.reshape(plan.n_d, plan.m)
    return grid


def plan_to_json(plan: FramePlan, pattern: PilotPattern) -> dict:
    return {
        "version": 1,
        "pattern": pattern.to_json(),
        "m": plan.m,
        "code_length": plan.code_length,
        "interleaver_seed": plan.seed,
        "identity_interleaver": plan.identity,
    }


def plan_from_json(obj: dict) -> tuple[FramePlan, PilotPattern]:
    if obj.get("version") != 1:
        raise ValueError(f"unsupported frame plan version {obj.get('version')!r}")
    pattern = PilotPattern.from_json(obj["pattern"])
    plan = plan_frame(pattern, obj["code_length"], obj["m"],
                      seed=obj["interleaver_seed"],
                      identity_interleaver=obj["identity_interleaver"])
    return plan, pattern


def save_plan(plan: FramePlan, pattern: PilotPattern, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(plan_to_json(plan, pattern), fh, indent=1)


def load_plan(path) -> tuple[FramePlan, PilotPattern]:
    with open(path, "r", encoding="utf-8") as fh:
        return plan_from_json(json.load(fh))
