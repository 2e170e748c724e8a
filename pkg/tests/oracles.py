"""Independent oracles shared by unit and acceptance tests.

These deliberately re-derive results with plain Python / direct enumeration,
separate from the library's vectorized code paths.
"""

import math

import numpy as np
from scipy.special import logsumexp


def oracle_j0(x, terms=60):
    """Power-series Bessel J0, accurate well below 1e-10 for |x| <= 20."""
    q = -0.25 * x * x
    contributions = []
    term = 1.0
    for k in range(terms):
        contributions.append(term)
        term = term * q / ((k + 1) * (k + 1))
    return math.fsum(contributions)


def oracle_llrs(points, y, h, s2, prior_bits=None):
    """Raw soft-demapping log-ratios by direct per-point enumeration."""
    m = int(math.log2(len(points)))
    exps = []
    for u, c in enumerate(points):
        e = -abs(y - h * c) ** 2 / s2
        if prior_bits is not None:
            for i in range(m):
                if (u >> (m - 1 - i)) & 1:
                    e += prior_bits[i]
        exps.append(e)
    out = []
    for i in range(m):
        ones = [exps[u] for u in range(len(points)) if (u >> (m - 1 - i)) & 1]
        zeros = [exps[u] for u in range(len(points)) if not (u >> (m - 1 - i)) & 1]
        top, bot = max(ones), max(zeros)
        num = top + math.log(sum(math.exp(e - top) for e in ones))
        den = bot + math.log(sum(math.exp(e - bot) for e in zeros))
        out.append(num - den)
    return np.array(out)


def oracle_symbol_prior(points, bit_llrs):
    """Direct softmax of per-label bit-LLR sums for one resource element."""
    m = int(math.log2(len(points)))
    logits = []
    for u in range(len(points)):
        acc = 0.0
        for i in range(m):
            if (u >> (m - 1 - i)) & 1:
                acc += bit_llrs[i]
        logits.append(acc)
    top = max(logits)
    weights = [math.exp(l - top) for l in logits]
    total = sum(weights)
    return np.array([w / total for w in weights])


def brute_force_posterior(code, llrs):
    """Exact posterior bit LLRs by enumerating the full codebook."""
    words = code.encode_batch(
        ((np.arange(1 << code.k)[:, None] >> np.arange(code.k)) & 1).astype(np.uint8))
    weights = words @ llrs
    post = np.empty(code.n_c)
    for v in range(code.n_c):
        on = words[:, v] == 1
        post[v] = logsumexp(weights[on]) - logsumexp(weights[~on])
    return post


def mc_regression_weights(h_samples, obs_samples):
    """Empirical LMMSE weights C_h,obs @ C_obs,obs^-1 from paired draws."""
    s = h_samples.shape[1]
    c_hy = h_samples @ obs_samples.conj().T / s
    c_yy = obs_samples @ obs_samples.conj().T / s
    return np.linalg.solve(c_yy.conj().T, c_hy.conj().T).conj().T


def weights_close(w_emp, w_impl, rel=0.02, floor_frac=0.1):
    """Per-coefficient relative comparison with a floor for near-zero entries.

    Strict relative error is statistically meaningless for coefficients near
    zero at finite sample counts, so entries below a tenth of the largest
    magnitude are compared against that floor instead.
    """
    scale = np.abs(w_impl).max()
    denom = np.maximum(np.abs(w_impl), floor_frac * scale)
    return np.all(np.abs(w_emp - w_impl) / denom <= rel)
