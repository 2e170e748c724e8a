"""Binary tensor interchange format shared with the training sidecar.

Layout (little-endian throughout):

    magic   4 bytes  b"LNKT"
    version u8       currently 1
    dtype   u8       0 = float32, 1 = complex64 (interleaved float32 pairs)
    rank    u8
    dims    rank * u32
    payload prod(dims) * itemsize bytes, C order

Arrays are converted to float32/complex64 on write.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"LNKT"
VERSION = 1
_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<c8")}


def write_tensor(path, array: np.ndarray) -> None:
    array = np.asarray(array)
    if np.iscomplexobj(array):
        code, data = 1, array.astype("<c8")
    else:
        code, data = 0, array.astype("<f4")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<BBB", VERSION, code, data.ndim))
        fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
        fh.write(np.ascontiguousarray(data).tobytes())


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ValueError(f"{path}: not a tensor file (bad magic {blob[:4]!r})")
    version, code, rank = struct.unpack_from("<BBB", blob, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported tensor version {version}")
    if code not in _DTYPE_CODES:
        raise ValueError(f"{path}: unknown dtype code {code}")
    dims = struct.unpack_from(f"<{rank}I", blob, 7)
    dtype = _DTYPE_CODES[code]
    offset = 7 + 4 * rank
    expected = int(np.prod(dims)) * dtype.itemsize
    payload = blob[offset:]
    if len(payload) != expected:
        raise ValueError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    return np.frombuffer(payload, dtype=dtype).reshape(dims).copy()
