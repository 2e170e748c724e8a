"""Receiver chains: perfect-CSI, LMMSE + Gaussian demapping, and IEDD.

All estimators consume the full-frame covariance of ``vec(H)`` (either the
true per-scenario matrix or an empirical estimate shared across scenarios)
and use Hermitian factor-and-solve, never explicit inversion. LLR grids carry
NaN outside data REs; no receiver emits LLRs at pilot positions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from .channel import NumericalError, grid_to_vec
from .fec import LLR_CLAMP, LdpcCode
from .grid import FramePlan, PilotPattern, disassemble, scatter_coded_values
from .modem import Constellation

RECEIVER_KINDS = ("perfect_csi", "non_iterative", "iedd")


@dataclass
class ChannelEstimate:
    """Per-RE channel estimate and the diagonal of its error covariance."""

    h_hat: np.ndarray              # (n,) complex, vec order
    err_var: np.ndarray            # (n,) real, clamped at 0
    err_cov: np.ndarray | None = None  # full matrix, kept only on request

    def __post_init__(self):
        if np.any(self.err_var < -1e-9):
            raise NumericalError("error covariance diagonal is significantly negative")
        self.err_var = np.maximum(self.err_var, 0.0)


@dataclass
class SymbolPrior:
    """Per-RE symbol distributions and their first two moments.

    ``probs`` covers data REs (rows follow ``pattern.data_indices`` order);
    pilot REs are deterministic and enter only through the moment vectors.
    """

    probs: np.ndarray     # (n_D, 2^m)
    x_mean: np.ndarray    # (n,) complex
    x_power: np.ndarray   # (n,) real


@dataclass
class LlrGrid:
    """Dense (n_S, n_T, m) LLR tensor; entries outside data REs are NaN."""

    values: np.ndarray
    role: str = "demapper_total"

    def data_values(self, pattern: PilotPattern) -> np.ndarray:
        i_idx = pattern.data_indices % pattern.dims.n_s
        k_idx = pattern.data_indices // pattern.dims.n_s
        return self.values[i_idx, k_idx, :]

    @classmethod
    def from_data_values(cls, pattern: PilotPattern, data: np.ndarray,
                         role: str) -> "LlrGrid":
        m = data.shape[1]
        grid = np.full((pattern.dims.n_s, pattern.dims.n_t, m), np.nan)
        i_idx = pattern.data_indices % pattern.dims.n_s
        k_idx = pattern.data_indices // pattern.dims.n_s
        grid[i_idx, k_idx, :] = data
        return cls(grid, role)


def _cho_factor(mat: np.ndarray):
    try:
        return scipy.linalg.cho_factor(mat, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"Hermitian solve failed: {exc}") from exc


class LmmseEstimator:
    """Pilot-based LMMSE estimator with everything frame-independent precomputed.

    The estimation matrix and error-covariance diagonal depend only on
    (covariance, pattern, sigma2), so per-frame work is a single mat-vec.
    """

    def __init__(self, r: np.ndarray, pattern: PilotPattern, sigma2: float,
                 keep_full_cov: bool = False):
        if pattern.n_p < 1:
            raise ValueError("LMMSE estimation needs at least one pilot RE")
        if sigma2 <= 0:
            raise ValueError("sigma2 must be positive for estimation")
        self.pattern = pattern
        self.sigma2 = float(sigma2)
        idx = pattern.pilot_indices
        d = pattern.pilot_vec()
        r_pp = r[np.ix_(idx, idx)]
        a = r_pp * np.outer(d, d.conj())
        a[np.diag_indices_from(a)] += sigma2
        cho = _cho_factor(a)
        m_mat = r[:, idx] * d.conj()[None, :]
        x = scipy.linalg.cho_solve(cho, m_mat.conj().T, check_finite=False)
        self.weights = x.conj().T            # (n, n_P): h_hat = weights @ y_P
        removed = np.einsum("ij,ji->i", m_mat, x).real
        diag = np.real(np.diagonal(r)).copy()
        self.err_var = np.maximum(diag - removed, 0.0)
        if np.any(self.err_var > diag + 1e-6):
            raise NumericalError("error variance exceeds the channel variance")
        self.err_cov = r - m_mat @ x if keep_full_cov else None

    def estimate(self, y_grid: np.ndarray) -> ChannelEstimate:
        y_p = grid_to_vec(y_grid)[self.pattern.pilot_indices]
        return ChannelEstimate(self.weights @ y_p, self.err_var.copy(), self.err_cov)


def lmmse_estimate(r: np.ndarray, pattern: PilotPattern, y_grid: np.ndarray,
                   sigma2: float, keep_full_cov: bool = False) -> ChannelEstimate:
    """Pilot-only LMMSE channel estimate over the full frame."""
    return LmmseEstimator(r, pattern, sigma2, keep_full_cov).estimate(y_grid)


def perfect_estimate(h_grid: np.ndarray) -> ChannelEstimate:
    return ChannelEstimate(grid_to_vec(h_grid), np.zeros(h_grid.size))


def _bit_masks(const: Constellation) -> np.ndarray:
    return np.stack([const.bit_of_label(i).astype(bool) for i in range(const.m)])


def _exp_metrics(const: Constellation, y_grid: np.ndarray, est: ChannelEstimate,
                 sigma2: float, pattern: PilotPattern) -> np.ndarray:
    idx = pattern.data_indices
    y = grid_to_vec(y_grid)[idx]
    h = est.h_hat[idx]
    s2 = est.err_var[idx] + sigma2
    if np.any(s2 <= 0):
        raise ValueError("effective noise variance must be positive at data REs")
    resid = np.abs(y[:, None] - h[:, None] * const.points[None, :]) ** 2
    return -resid / s2[:, None]


def _llrs_from_exponents(const: Constellation, exponents: np.ndarray) -> np.ndarray:
    """Raw (unclamped) per-bit log-ratios from per-point exponents."""
    masks = _bit_masks(const)
    out = np.empty((exponents.shape[0], const.m))
    for i in range(const.m):
        out[:, i] = (logsumexp(exponents[:, masks[i]], axis=1)
                     - logsumexp(exponents[:, ~masks[i]], axis=1))
    return out


def gaussian_demap(const: Constellation, y_grid: np.ndarray, est: ChannelEstimate,
                   sigma2: float, pattern: PilotPattern) -> LlrGrid:
    """Exact per-RE soft demapping under a Gaussian residual assumption.

    The effective noise variance at RE k is ``err_var[k] + sigma2``. No LLRs
    are produced at pilot REs.
    """
    exps = _exp_metrics(const, y_grid, est, sigma2, pattern)
    llrs = np.clip(_llrs_from_exponents(const, exps), -LLR_CLAMP, LLR_CLAMP)
    return LlrGrid.from_data_values(pattern, llrs, "demapper_total")


def prior_from_llrs(const: Constellation, prior_grid: LlrGrid | np.ndarray,
                    pattern: PilotPattern) -> SymbolPrior:
    """Symbol distributions from per-bit prior LLRs (softmax of bit-label sums).

    Pilot REs get the deterministic point mass on their pilot value.
    """
    if isinstance(prior_grid, LlrGrid):
        llrs = prior_grid.data_values(pattern)
    else:
        llrs = LlrGrid(np.asarray(prior_grid, dtype=float)).data_values(pattern)
    llrs = np.clip(llrs, -LLR_CLAMP, LLR_CLAMP)
    bits = _bit_masks(const).astype(float)         # (m, 2^m)
    logits = llrs @ bits                           # (n_D, 2^m)
    logits -= logits.max(axis=1, keepdims=True)
    probs = np.exp(logits)
    probs /= probs.sum(axis=1, keepdims=True)
    n = pattern.dims.n
    x_mean = np.empty(n, dtype=complex)
    x_power = np.empty(n)
    x_mean[pattern.data_indices] = probs @ const.points
    x_power[pattern.data_indices] = probs @ (np.abs(const.points) ** 2)
    pilot_vals = pattern.pilot_vec()
    x_mean[pattern.pilot_indices] = pilot_vals
    x_power[pattern.pilot_indices] = np.abs(pilot_vals) ** 2
    return SymbolPrior(probs, x_mean, x_power)


def data_aided_estimate(r: np.ndarray, y_grid: np.ndarray, prior: SymbolPrior,
                        sigma2: float, keep_full_cov: bool = False) -> ChannelEstimate:
    """Soft data-aided LMMSE estimate using prior symbol moments on every RE.

    Uses the uncorrelated-symbol second-moment model: the symbol covariance
    has diagonal E|x_k|^2 and off-diagonal x_mean_i * conj(x_mean_k).
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive for estimation")
    xbar = prior.x_mean.astype(r.dtype, copy=False)
    diag_r = np.real(np.diagonal(r))
    m_mat = r * np.outer(xbar, xbar.conj())
    m_mat[np.diag_indices_from(m_mat)] = (
        diag_r * prior.x_power + sigma2).astype(m_mat.dtype)
    b_mat = r * xbar.conj()[None, :]
    cho = _cho_factor(m_mat)
    y = grid_to_vec(y_grid).astype(r.dtype, copy=False)
    h_hat = b_mat @ scipy.linalg.cho_solve(cho, y, check_finite=False)
    # err diag via one triangular solve: diag(B M^-1 B^H) = column norms of L^-1 B^H
    g = scipy.linalg.solve_triangular(cho[0], b_mat.conj().T, lower=True,
                                      check_finite=False)
    removed = np.einsum("ji,ji->i", g.conj(), g).real
    err_var = np.maximum(diag_r - removed, 0.0)
    err_cov = None
    if keep_full_cov:
        err_cov = r - b_mat @ scipy.linalg.cho_solve(cho, b_mat.conj().T,
                                                     check_finite=False)
    return ChannelEstimate(np.asarray(h_hat, dtype=complex),
                           np.asarray(err_var, dtype=float), err_cov)


def iedd_demap(const: Constellation, y_grid: np.ndarray, est: ChannelEstimate,
               sigma2: float, prior_grid: LlrGrid | np.ndarray,
               pattern: PilotPattern) -> tuple[LlrGrid, LlrGrid]:
    """Soft demapping with decoder-extrinsic bit priors inside the metric.

    Returns (total, extrinsic) grids; the extrinsic subtracts the prior LLRs
    from the total, and only the extrinsic is meant for the decoder.
    """
    if isinstance(prior_grid, LlrGrid):
        prior = prior_grid.data_values(pattern)
    else:
        prior = LlrGrid(np.asarray(prior_grid, dtype=float)).data_values(pattern)
    prior = np.clip(prior, -LLR_CLAMP, LLR_CLAMP)
    exps = _exp_metrics(const, y_grid, est, sigma2, pattern)
    exps = exps + prior @ _bit_masks(const).astype(float)
    raw = _llrs_from_exponents(const, exps)
    # subtract the prior before clamping: clamping first would cancel the
    # channel contribution whenever both totals and priors saturate
    total = np.clip(raw, -LLR_CLAMP, LLR_CLAMP)
    extrinsic = np.clip(raw - prior, -LLR_CLAMP, LLR_CLAMP)
    return (LlrGrid.from_data_values(pattern, total, "demapper_total"),
            LlrGrid.from_data_values(pattern, extrinsic, "demapper_extrinsic"))


@dataclass
class ReceiverOutput:
    info_bits: np.ndarray        # (codewords, k)
    hard_codewords: np.ndarray   # (codewords, n_c)
    converged: np.ndarray        # (codewords,)
    llr_grid: LlrGrid            # final demapper output fed to the decoder
    estimate: ChannelEstimate | None = None


def _decode_grid(code: LdpcCode, plan: FramePlan, grid: LlrGrid, bp_iters: int):
    cw_llrs = disassemble(plan, grid.values)
    return code.decode_batch(cw_llrs, bp_iters), cw_llrs


def run_receiver(kind: str, *, const: Constellation, pattern: PilotPattern,
                 plan: FramePlan, code: LdpcCode, y_grid: np.ndarray,
                 sigma2: float, r_rx: np.ndarray | None = None,
                 h_true: np.ndarray | None = None,
                 estimator: LmmseEstimator | None = None,
                 bp_iters: int = 40, outer_iters: int = 4,
                 inner_bp_iters: int = 10) -> ReceiverOutput:
    """Run one frame through the selected receiver and decode its codewords.

    ``perfect_csi`` needs ``h_true``; the others need the receive-side
    covariance ``r_rx`` (or a prebuilt ``estimator`` for the non-iterative
    chain). IEDD runs ``outer_iters`` rounds of estimation, demapping, and
    ``inner_bp_iters`` decoder iterations, starting from zero priors.
    """
    if kind not in RECEIVER_KINDS:
        raise ValueError(f"unknown receiver kind {kind!r}; expected {RECEIVER_KINDS}")
    if kind == "perfect_csi":
        if h_true is None:
            raise ValueError("perfect_csi receiver needs the true channel grid")
        est = perfect_estimate(h_true)
        grid = gaussian_demap(const, y_grid, est, sigma2, pattern)
        (hard, _, _, conv), _ = _decode_grid(code, plan, grid, bp_iters)
        return ReceiverOutput(hard[:, code.info_positions], hard, conv, grid, est)

    if kind == "non_iterative":
        if estimator is None:
            if r_rx is None:
                raise ValueError("non_iterative receiver needs r_rx or an estimator")
            estimator = LmmseEstimator(r_rx, pattern, sigma2)
        est = estimator.estimate(y_grid)
        grid = gaussian_demap(const, y_grid, est, sigma2, pattern)
        (hard, _, _, conv), _ = _decode_grid(code, plan, grid, bp_iters)
        return ReceiverOutput(hard[:, code.info_positions], hard, conv, grid, est)

    # IEDD
    if r_rx is None:
        raise ValueError("iedd receiver needs the covariance matrix r_rx")
    dims = pattern.dims
    prior_grid = LlrGrid.from_data_values(
        pattern, np.zeros((pattern.n_d, plan.m)), "decoder_extrinsic")
    hard = conv = extr = est = None
    for _ in range(outer_iters):
        prior = prior_from_llrs(const, prior_grid, pattern)
        est = data_aided_estimate(r_rx, y_grid, prior, sigma2)
        _, extr = iedd_demap(const, y_grid, est, sigma2, prior_grid, pattern)
        cw_llrs = disassemble(plan, extr.values)
        hard, post, _, conv = code.decode_batch(cw_llrs, inner_bp_iters)
        dec_ext = np.clip(post - np.clip(cw_llrs, -LLR_CLAMP, LLR_CLAMP),
                          -LLR_CLAMP, LLR_CLAMP)
        prior_grid = LlrGrid(
            scatter_coded_values(plan, pattern, dec_ext), "decoder_extrinsic")
    return ReceiverOutput(hard[:, code.info_positions], hard, conv, extr, est)
