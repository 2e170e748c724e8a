"""File-format interop with the simulator core: tensors, patterns, CSVs.

The formats are re-implemented from their documented layouts; nothing here
imports the core package.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"LNKT"
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<c8")}


def write_tensor(path, array: np.ndarray) -> None:
    array = np.asarray(array)
    if np.iscomplexobj(array):
        code, data = 1, array.astype("<c8")
    else:
        code, data = 0, array.astype("<f4")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<BBB", 1, code, data.ndim))
        fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
        fh.write(np.ascontiguousarray(data).tobytes())


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic")
    version, code, rank = struct.unpack_from("<BBB", blob, 4)
    if version != 1:
        raise ValueError(f"{path}: unsupported version {version}")
    dims = struct.unpack_from(f"<{rank}I", blob, 7)
    dtype = _DTYPES[code]
    return np.frombuffer(blob[7 + 4 * rank:], dtype=dtype).reshape(dims).copy()


class Pattern:
    """Pilot mask plus seeded unit-modulus pilot values.

    Mirrors the core's JSON schema: mask run-length encoded in vec order
    (subcarrier fastest, False first); values are QPSK points drawn at the
    pilot positions in vec order from `pilot_seed`.
    """

    def __init__(self, n_s: int, n_t: int, mask: np.ndarray, name: str, seed: int):
        self.n_s, self.n_t = n_s, n_t
        self.mask = mask
        self.name = name
        self.seed = seed
        flat = mask.reshape(-1, order="F")
        self.pilot_indices = np.flatnonzero(flat)
        self.data_indices = np.flatnonzero(~flat)
        self.values = np.zeros((n_s, n_t), dtype=complex)
        if self.pilot_indices.size:
            labels = np.random.default_rng(seed).integers(0, 4,
                                                          size=self.pilot_indices.size)
            qpsk = np.exp(1j * (np.pi / 4 + np.pi / 2 * labels))
            self.values[self.pilot_indices % n_s, self.pilot_indices // n_s] = qpsk

    @property
    def n_d(self) -> int:
        return self.data_indices.size

    @property
    def data_mask(self) -> np.ndarray:
        return ~self.mask

    @classmethod
    def named(cls, name: str, n_s: int, n_t: int, seed: int = 0x5EED) -> "Pattern":
        mask = np.zeros((n_s, n_t), dtype=bool)
        if name == "1P":
            mask[0::2, 2] = True
        elif name == "2P":
            mask[0::2, 2] = True
            mask[0::2, 11] = True
        elif name != "none":
            raise ValueError(f"unknown pattern {name!r}")
        return cls(n_s, n_t, mask, name, seed)

    def to_json(self) -> dict:
        flat = self.mask.reshape(-1, order="F")
        runs, current, count = [], False, 0
        for bit in flat:
            if bit == current:
                count += 1
            else:
                runs.append(count)
                current, count = bit, 1
        runs.append(count)
        return {"version": 1, "name": self.name, "n_s": self.n_s, "n_t": self.n_t,
                "pilot_seed": self.seed, "mask_rle": runs}

    @classmethod
    def from_json(cls, obj: dict) -> "Pattern":
        flat = np.zeros(obj["n_s"] * obj["n_t"], dtype=bool)
        pos, value = 0, False
        for run in obj["mask_rle"]:
            flat[pos:pos + run] = value
            pos += run
            value = not value
        mask = flat.reshape((obj["n_s"], obj["n_t"]), order="F")
        return cls(obj["n_s"], obj["n_t"], mask, obj["name"], obj["pilot_seed"])

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "Pattern":
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
        return cls.from_json(obj.get("pattern", obj))


def write_constellation_csv(path, points: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("label,re,im\n")
        for u, c in enumerate(points):
            fh.write(f"{u},{float(c.real)!r},{float(c.imag)!r}\n")


def write_allocation_csv(path, a: np.ndarray, pilot_seed: int) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# pilot_seed: {pilot_seed}\n")
        fh.write("i,k,A\n")
        for k in range(a.shape[1]):
            for i in range(a.shape[0]):
                fh.write(f"{i},{k},{float(a[i, k])!r}\n")


def write_loss_csv(path, losses) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,loss_bits_per_frame\n")
        for step, value in enumerate(losses):
            fh.write(f"{step},{value:.10g}\n")


def balanced_bpsk_grid(n_s: int, n_t: int, seed: int) -> np.ndarray:
    """The core's superimposed-pilot grid: seeded shuffle of a balanced +-1."""
    n = n_s * n_t
    flat = np.ones(n)
    flat[: n // 2] = -1.0
    np.random.default_rng(seed).shuffle(flat)
    return flat.reshape((n_s, n_t), order="F")
