"""IEEE 802.11n LDPC (1944, rate 2/3) encoding and belief-propagation decoding.

LLR convention, fixed repo-wide: ``LLR = ln P(b=1) / P(b=0)``, so a confident
zero bit has a large negative LLR. The decoder is a flooding sum-product
(tanh-rule) with messages clamped at +-30; it returns total posterior LLRs so
callers can form extrinsic information by subtracting their input.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass

import numpy as np
import scipy.sparse

LLR_CLAMP = 30.0
_ATANH_GUARD = 1.0 - 1e-15


def _gf2_row_reduce(mat: np.ndarray):
    """In-place GF(2) elimination; returns pivot column list."""
    mat = mat.astype(np.uint8)
    rows, cols = mat.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r >= rows:
            break
        hits = np.flatnonzero(mat[r:, c]) + r
        if hits.size == 0:
            continue
        if hits[0] != r:
            mat[[r, hits[0]]] = mat[[hits[0], r]]
        elim = np.flatnonzero(mat[:, c])
        elim = elim[elim != r]
        mat[elim] ^= mat[r]
        pivots.append(c)
        r += 1
    return mat, pivots


def _gf2_inverse(mat: np.ndarray) -> np.ndarray:
    """Inverse of a square GF(2) matrix; raises if singular."""
    size = mat.shape[0]
    aug = np.concatenate([mat.astype(np.uint8), np.eye(size, dtype=np.uint8)], axis=1)
    reduced, pivots = _gf2_row_reduce(aug)
    if pivots != list(range(size)):
        raise ValueError("parity sub-matrix is singular over GF(2)")
    return reduced[:, size:]


def expand_base_matrix(base: np.ndarray, z: int) -> scipy.sparse.csr_matrix:
    """Lift a prototype of cyclic shifts (-1 = zero block) to a sparse matrix.

    A shift ``s`` expands to the z x z matrix with ones at (r, (r+s) mod z).
    """
    rows, cols = base.shape
    row_idx, col_idx = [], []
    offsets = np.arange(z)
    for i in range(rows):
        for j in range(cols):
            s = base[i, j]
            if s < 0:
                continue
            row_idx.append(i * z + offsets)
            col_idx.append(j * z + (offsets + s) % z)
    row_idx = np.concatenate(row_idx)
    col_idx = np.concatenate(col_idx)
    data = np.ones(row_idx.size, dtype=np.uint8)
    return scipy.sparse.csr_matrix((data, (row_idx, col_idx)), shape=(rows * z, cols * z))


def load_base_matrix(path):
    """Read a prototype file with `# z:` header and -1 markers for zero blocks."""
    z = None
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                if key.strip() == "z":
                    z = int(value)
                continue
            rows.append([int(tok) for tok in line.split()])
    if z is None:
        raise ValueError(f"missing '# z:' header in {path}")
    return np.array(rows, dtype=int), z


def write_alist(h: scipy.sparse.spmatrix, path) -> None:
    h = scipy.sparse.csr_matrix(h)
    m, n = h.shape
    csc = h.tocsc()
    col_w = np.diff(csc.indptr)
    row_w = np.diff(h.indptr)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{n} {m}\n{col_w.max()} {row_w.max()}\n")
        fh.write(" ".join(map(str, col_w.tolist())) + "\n")
        fh.write(" ".join(map(str, row_w.tolist())) + "\n")
        for c in range(n):
            entries = (csc.indices[csc.indptr[c]:csc.indptr[c + 1]] + 1).tolist()
            entries += [0] * (col_w.max() - len(entries))
            fh.write(" ".join(map(str, entries)) + "\n")
        for r in range(m):
            entries = (h.indices[h.indptr[r]:h.indptr[r + 1]] + 1).tolist()
            entries += [0] * (row_w.max() - len(entries))
            fh.write(" ".join(map(str, entries)) + "\n")


def read_alist(path) -> scipy.sparse.csr_matrix:
    with open(path, "r", encoding="utf-8") as fh:
        tokens = fh.read().split("\n")
    n, m = map(int, tokens[0].split())
    col_w = list(map(int, tokens[2].split()))
    rows, cols = [], []
    for c in range(n):
        for entry in tokens[4 + c].split():
            r = int(entry)
            if r:
                rows.append(r - 1)
                cols.append(c)
    if len(rows) != sum(col_w):
        raise ValueError(f"alist column lists disagree with declared weights in {path}")
    data = np.ones(len(rows), dtype=np.uint8)
    return scipy.sparse.csr_matrix((data, (rows, cols)), shape=(m, n))


@dataclass
class DecodeResult:
    hard_bits: np.ndarray
    output_llrs: np.ndarray
    iterations_used: int
    converged: bool


class LdpcCode:
    """Binary LDPC code defined by a sparse parity-check matrix.

    Encoding is systematic: information bits appear unchanged at
    ``info_positions`` and the remaining (parity) positions are solved from
    the parity checks via a precomputed GF(2) inverse.
    """

    def __init__(self, h: scipy.sparse.spmatrix, name: str = "ldpc",
                 parity_positions=None):
        h = scipy.sparse.csr_matrix(h.astype(np.uint8))
        self.h = h
        self.name = name
        m, n = h.shape
        self.n_c = n
        dense = h.toarray()
        if parity_positions is None:
            # choose pivots scanning from the last column so that the leading
            # columns stay information positions
            _, pivots = _gf2_row_reduce(dense[:, ::-1].copy())
            parity_positions = sorted(n - 1 - p for p in pivots)
        parity_positions = np.asarray(parity_positions, dtype=int)
        if parity_positions.size != m:
            raise ValueError("number of parity positions must equal the check count")
        self.parity_positions = parity_positions
        mask = np.ones(n, dtype=bool)
        mask[parity_positions] = False
        self.info_positions = np.flatnonzero(mask)
        self.k = self.info_positions.size
        self.rate = self.k / n
        self._p_inv = _gf2_inverse(dense[:, parity_positions])
        self._h_info = scipy.sparse.csr_matrix(dense[:, self.info_positions])
        self._build_graph()

    def _build_graph(self):
        coo = self.h.tocoo()
        order = np.lexsort((coo.col, coo.row))
        self._ci = coo.row[order]
        self._vi = coo.col[order]
        edges = self._ci.size
        self._check_starts = np.searchsorted(self._ci, np.arange(self.h.shape[0]))
        deg = np.diff(np.append(self._check_starts, edges))
        if np.any(deg < 1):
            raise ValueError("every check must involve at least one bit")
        self._check_sign = np.where((deg - 1) % 2, -1.0, 1.0)
        self._var_order = np.argsort(self._vi, kind="stable")
        sorted_vars = self._vi[self._var_order]
        present = np.unique(sorted_vars)
        if present.size != self.n_c:
            raise ValueError("every bit must participate in at least one check")
        self._var_starts = np.searchsorted(sorted_vars, np.arange(self.n_c))

    # -- encoding ---------------------------------------------------------

    def encode(self, info_bits) -> np.ndarray:
        return self.encode_batch(np.asarray(info_bits)[None, :])[0]

    def encode_batch(self, info_bits: np.ndarray) -> np.ndarray:
        info_bits = np.asarray(info_bits, dtype=np.uint8)
        if info_bits.ndim != 2 or info_bits.shape[1] != self.k:
            raise ValueError(f"expected (batch, {self.k}) information bits, "
                             f"got {info_bits.shape}")
        syndrome = (self._h_info @ info_bits.T) & 1
        parity = (self._p_inv @ syndrome) & 1
        out = np.empty((info_bits.shape[0], self.n_c), dtype=np.uint8)
        out[:, self.info_positions] = info_bits
        out[:, self.parity_positions] = parity.T
        return out

    def check(self, codewords: np.ndarray) -> np.ndarray:
        """True per row when all parity checks are satisfied."""
        codewords = np.atleast_2d(codewords)
        return ~np.any((self.h @ codewords.T) & 1, axis=0)

    # -- decoding ---------------------------------------------------------

    def decode(self, channel_llrs, max_iters: int, prior_llrs=None,
               early_exit: bool = True) -> DecodeResult:
        prior = None if prior_llrs is None else np.asarray(prior_llrs, dtype=float)[None, :]
        hard, llrs, iters, conv = self.decode_batch(
            np.asarray(channel_llrs, dtype=float)[None, :], max_iters,
            prior_llrs=prior, early_exit=early_exit)
        return DecodeResult(hard[0], llrs[0], int(iters[0]), bool(conv[0]))

    def decode_batch(self, channel_llrs: np.ndarray, max_iters: int,
                     prior_llrs=None, early_exit: bool = True):
        """Flooding sum-product over a batch of codewords.

        Returns (hard_bits (B,n), output_llrs (B,n), iterations (B,),
        converged (B,)). Each codeword's output is frozen at its first
        iteration with all checks satisfied when ``early_exit`` is set.
        """
        llr_in = np.asarray(channel_llrs, dtype=float)
        if llr_in.ndim != 2 or llr_in.shape[1] != self.n_c:
            raise ValueError(f"expected (batch, {self.n_c}) LLRs, got {llr_in.shape}")
        base = np.clip(llr_in, -LLR_CLAMP, LLR_CLAMP)
        if prior_llrs is not None:
            base = base + np.clip(np.asarray(prior_llrs, dtype=float), -LLR_CLAMP, LLR_CLAMP)
        batch = base.shape[0]
        base_t = base.T  # (n, B)
        c2v = np.zeros((self._ci.size, batch))
        out_llrs = base.copy()
        hard = out_llrs > 0
        iterations = np.zeros(batch, dtype=int)
        frozen = self._parity_ok(hard) if early_exit else np.zeros(batch, dtype=bool)
        converged = frozen.copy()
        ok = converged.copy()
        for it in range(1, max_iters + 1):
            if early_exit and np.all(frozen):
                break
            v2c = (base_t + self._var_sums(c2v))[self._vi] - c2v
            t = np.tanh(np.clip(v2c, -LLR_CLAMP, LLR_CLAMP) / 2.0)
            zero = t == 0.0
            t_safe = np.where(zero, 1.0, t)
            prod = np.multiply.reduceat(t_safe, self._check_starts, axis=0)
            zcnt = np.add.reduceat(zero, self._check_starts, axis=0)
            prod_e = prod[self._ci]
            zcnt_e = zcnt[self._ci]
            loo = np.where(zcnt_e == 0, prod_e / t_safe,
                           np.where((zcnt_e == 1) & zero, prod_e, 0.0))
            s_out = self._check_sign[self._ci, None] * loo
            c2v = np.clip(-2.0 * np.arctanh(np.clip(s_out, -_ATANH_GUARD, _ATANH_GUARD)),
                          -LLR_CLAMP, LLR_CLAMP)
            posterior = (base_t + self._var_sums(c2v)).T
            hard_now = posterior > 0
            ok = self._parity_ok(hard_now)
            update = ~frozen
            out_llrs[update] = posterior[update]
            hard[update] = hard_now[update]
            iterations[update] = it
            if early_exit:
                converged |= ok & update
                frozen |= ok
        if not early_exit:
            converged = ok
        return hard.astype(np.uint8), out_llrs, iterations, converged

    def _var_sums(self, c2v: np.ndarray) -> np.ndarray:
        return np.add.reduceat(c2v[self._var_order], self._var_starts, axis=0)

    def _parity_ok(self, hard: np.ndarray) -> np.ndarray:
        syndromes = (self.h @ hard.T.astype(np.uint8)) & 1
        return ~np.any(syndromes, axis=0)

    def __repr__(self):
        return f"LdpcCode({self.name!r}, n={self.n_c}, k={self.k})"


def _packaged(fname: str):
    return importlib.resources.files("linksim.data").joinpath(fname)


def wifi_1944_r23() -> LdpcCode:
    """The length-1944, rate-2/3 802.11n code (lifting size 81)."""
    with importlib.resources.as_file(_packaged("wifi_1944_r23.txt")) as path:
        base, z = load_base_matrix(path)
    h = expand_base_matrix(base, z)
    parity = np.arange(16 * z, 24 * z)
    return LdpcCode(h, name="ieee80211n-1944-r23", parity_positions=parity)


def toy_tree_code() -> LdpcCode:
    """Cycle-free 12x24 code whose BP marginals are exactly computable."""
    with importlib.resources.as_file(_packaged("toy_tree_24_12.alist")) as path:
        h = read_alist(path)
    return LdpcCode(h, name="toy-tree-24-12")
