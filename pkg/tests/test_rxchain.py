"""Tests for the receiver chains, against independent oracles."""

import numpy as np
import pytest
from oracles import mc_regression_weights, oracle_llrs, weights_close

from linksim.channel import (
    DEFAULT_RADIO,
    MobilitySpec,
    OfdmDims,
    PowerDelayProfile,
    apply_channel,
    build_correlation,
    grid_to_vec,
    vec_to_grid,
)
from linksim.fec import toy_tree_code, wifi_1944_r23
from linksim.grid import assemble, make_pilot_pattern, plan_frame, PilotPattern
from linksim.modem import Constellation, gray_qam, map_bits
from linksim.rxchain import (
    ChannelEstimate,
    LlrGrid,
    LmmseEstimator,
    data_aided_estimate,
    gaussian_demap,
    iedd_demap,
    lmmse_estimate,
    perfect_estimate,
    prior_from_llrs,
    run_receiver,
)

DIMS43 = OfdmDims(4, 3)


def small_model(v=15.0, d_s=400e-9, dims=DIMS43):
    pdp = PowerDelayProfile.synthetic_exp(6)
    return build_correlation(dims, DEFAULT_RADIO, pdp, MobilitySpec(v, d_s))


def all_pilot_pattern(dims, seed=3):
    return PilotPattern(dims, np.ones((dims.n_s, dims.n_t), dtype=bool), "all", seed)


def four_pilot_pattern(dims=DIMS43, seed=5):
    mask = np.zeros((dims.n_s, dims.n_t), dtype=bool)
    mask[0, 0] = mask[2, 0] = mask[1, 1] = mask[3, 2] = True
    return PilotPattern(dims, mask, "custom4", seed)


def draw_channels(model, rng, count):
    h = model.sample(rng, count=count)
    return h.reshape(count, -1, order="F").T  # (n, count)


# ---------------------------------------------------------------------------
# LMMSE estimation
# ---------------------------------------------------------------------------

class TestLmmse:
    def test_noiseless_full_observation_recovers_h(self):
        model = small_model(v=32.5, d_s=1000e-9)
        pattern = all_pilot_pattern(DIMS43)
        rng = np.random.default_rng(0)
        h = model.sample(rng)
        y = apply_channel(h, pattern.values, 1e-12, rng)
        est = lmmse_estimate(model.full_matrix(), pattern, y, 1e-12)
        rel = np.linalg.norm(est.h_hat - grid_to_vec(h)) / np.linalg.norm(h)
        assert rel <= 1e-4

    def test_infinite_noise_kills_the_estimate(self):
        model = small_model()
        pattern = four_pilot_pattern()
        rng = np.random.default_rng(1)
        h = model.sample(rng)
        y = apply_channel(h, pattern.values, 1e9, rng)
        est = lmmse_estimate(model.full_matrix(), pattern, y, 1e9, keep_full_cov=True)
        assert np.max(np.abs(est.h_hat)) <= 1e-3
        np.testing.assert_allclose(est.err_cov, model.full_matrix(), atol=1e-6)

    def test_weights_match_mc_regression(self):
        model = small_model()
        pattern = four_pilot_pattern()
        sigma2 = 0.05
        estimator = LmmseEstimator(model.full_matrix(), pattern, sigma2)
        rng = np.random.default_rng(2)
        count = 300_000
        h = draw_channels(model, rng, count)
        d = pattern.pilot_vec()
        noise = (rng.standard_normal((pattern.n_p, count))
                 + 1j * rng.standard_normal((pattern.n_p, count))) * np.sqrt(sigma2 / 2)
        y_p = d[:, None] * h[pattern.pilot_indices] + noise
        w_emp = mc_regression_weights(h, y_p)
        assert weights_close(w_emp, estimator.weights)

    def test_error_covariance_matches_empirical(self):
        model = small_model()
        pattern = four_pilot_pattern()
        sigma2 = 0.1
        estimator = LmmseEstimator(model.full_matrix(), pattern, sigma2,
                                   keep_full_cov=True)
        rng = np.random.default_rng(3)
        count = 100_000
        h = draw_channels(model, rng, count)
        d = pattern.pilot_vec()
        noise = (rng.standard_normal((pattern.n_p, count))
                 + 1j * rng.standard_normal((pattern.n_p, count))) * np.sqrt(sigma2 / 2)
        y_p = d[:, None] * h[pattern.pilot_indices] + noise
        err = h - estimator.weights @ y_p
        emp = err @ err.conj().T / count
        rel = np.linalg.norm(emp - estimator.err_cov) / np.linalg.norm(estimator.err_cov)
        assert rel <= 0.05
        np.testing.assert_allclose(np.diag(estimator.err_cov).real,
                                   estimator.err_var, atol=1e-9)

    def test_needs_pilots_and_noise(self):
        model = small_model()
        with pytest.raises(ValueError):
            LmmseEstimator(model.full_matrix(), make_pilot_pattern("none", DIMS43), 0.1)
        with pytest.raises(ValueError):
            LmmseEstimator(model.full_matrix(), four_pilot_pattern(), 0.0)


# ---------------------------------------------------------------------------
# Gaussian demapping
# ---------------------------------------------------------------------------

class TestGaussianDemap:
    def test_bpsk_closed_form(self):
        bpsk = Constellation([-1.0, 1.0])
        dims = OfdmDims(2, 2)
        pattern = make_pilot_pattern("none", dims)
        rng = np.random.default_rng(4)
        y = (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))) * 0.5
        sigma2 = 0.8
        est = ChannelEstimate(np.ones(4, dtype=complex), np.zeros(4))
        grid = gaussian_demap(bpsk, y, est, sigma2, pattern)
        expected = 4.0 * np.real(grid_to_vec(y)) / sigma2
        np.testing.assert_allclose(grid.data_values(pattern)[:, 0], expected, atol=1e-12)

    def test_on_point_sign_pattern(self):
        const = gray_qam(6)
        dims = OfdmDims(8, 8)
        pattern = make_pilot_pattern("none", dims)
        labels = np.random.default_rng(5).integers(0, 64, size=(8, 8))
        y = const.points[labels]
        est = ChannelEstimate(np.ones(64, dtype=complex), np.zeros(64))
        grid = gaussian_demap(const, y, est, 1e-4, pattern)
        flat_labels = grid_to_vec(labels)
        bits = const.labels_to_bits(flat_labels)
        signs = grid.data_values(pattern) > 0
        np.testing.assert_array_equal(signs.astype(int), bits)

    @pytest.mark.parametrize("m", [1, 2, 6])
    def test_matches_enumeration_oracle(self, m):
        const = Constellation([-1.0, 1.0]) if m == 1 else gray_qam(m)
        dims = OfdmDims(5, 4)
        pattern = make_pilot_pattern("none", dims)
        rng = np.random.default_rng(10 + m)
        h = rng.standard_normal(20) + 1j * rng.standard_normal(20)
        y_vec = rng.standard_normal(20) + 1j * rng.standard_normal(20)
        err = rng.uniform(0.0, 0.3, size=20)
        sigma2 = 0.6
        est = ChannelEstimate(h, err)
        grid = gaussian_demap(const, vec_to_grid(y_vec, 5, 4), est, sigma2, pattern)
        got = grid.data_values(pattern)
        for k in range(20):
            want = np.clip(oracle_llrs(const.points, y_vec[k], h[k], err[k] + sigma2),
                           -30, 30)
            np.testing.assert_allclose(got[k], want, atol=1e-9)

    def test_no_llrs_at_pilot_res(self):
        const = gray_qam(2)
        dims = OfdmDims(8, 14)
        pattern = make_pilot_pattern("1P", dims)
        rng = np.random.default_rng(6)
        y = rng.standard_normal((8, 14)) + 1j * rng.standard_normal((8, 14))
        est = ChannelEstimate(np.ones(112, dtype=complex), np.zeros(112))
        grid = gaussian_demap(const, y, est, 0.5, pattern)
        assert np.isnan(grid.values[pattern.mask]).all()
        assert np.isfinite(grid.values[~pattern.mask]).all()

    def test_zero_effective_variance_guard(self):
        const = gray_qam(2)
        dims = OfdmDims(2, 2)
        pattern = make_pilot_pattern("none", dims)
        est = ChannelEstimate(np.ones(4, dtype=complex), np.zeros(4))
        with pytest.raises(ValueError):
            gaussian_demap(const, np.ones((2, 2), dtype=complex), est, 0.0, pattern)


# ---------------------------------------------------------------------------
# priors
# ---------------------------------------------------------------------------

class TestPriors:
    def test_zero_llrs_give_uniform(self):
        const = gray_qam(4)
        pattern = make_pilot_pattern("none", DIMS43)
        prior = prior_from_llrs(const, np.zeros((4, 3, 4)), pattern)
        np.testing.assert_allclose(prior.probs, 1 / 16, atol=1e-12)
        np.testing.assert_allclose(prior.x_mean, 0.0, atol=1e-12)
        np.testing.assert_allclose(prior.x_power, 1.0, atol=1e-9)

    def test_saturated_llrs_pick_all_ones_label(self):
        const = gray_qam(2)
        pattern = make_pilot_pattern("none", DIMS43)
        prior = prior_from_llrs(const, np.full((4, 3, 2), 30.0), pattern)
        assert np.all(prior.probs[:, 3] > 0.999)

    def test_matches_per_bit_product_rule(self):
        const = gray_qam(2)
        pattern = make_pilot_pattern("none", DIMS43)
        rng = np.random.default_rng(7)
        llrs = rng.normal(0, 3, size=(4, 3, 2))
        prior = prior_from_llrs(const, llrs, pattern)
        flat = LlrGrid(llrs).data_values(pattern)
        p1 = 1 / (1 + np.exp(-flat))  # per-bit P(b=1)
        for u in range(4):
            b0, b1 = (u >> 1) & 1, u & 1
            expected = (p1[:, 0] if b0 else 1 - p1[:, 0]) * (p1[:, 1] if b1 else 1 - p1[:, 1])
            np.testing.assert_allclose(prior.probs[:, u], expected, atol=1e-9)

    def test_pilot_res_are_deterministic(self):
        const = gray_qam(2)
        pattern = four_pilot_pattern()
        prior = prior_from_llrs(const, np.zeros((4, 3, 2)), pattern)
        np.testing.assert_allclose(prior.x_mean[pattern.pilot_indices],
                                   pattern.pilot_vec(), atol=0)
        np.testing.assert_allclose(prior.x_power[pattern.pilot_indices], 1.0, atol=1e-12)


# ---------------------------------------------------------------------------
# data-aided estimation
# ---------------------------------------------------------------------------

class TestDataAided:
    def test_all_pilot_limit_equals_lmmse(self):
        model = small_model()
        pattern = all_pilot_pattern(DIMS43)
        const = gray_qam(2)
        rng = np.random.default_rng(8)
        h = model.sample(rng)
        sigma2 = 0.05
        y = apply_channel(h, pattern.values, sigma2, rng)
        prior = prior_from_llrs(const, np.full((4, 3, 2), np.nan), pattern)
        da = data_aided_estimate(model.full_matrix(), y, prior, sigma2)
        direct = lmmse_estimate(model.full_matrix(), pattern, y, sigma2)
        np.testing.assert_allclose(da.h_hat, direct.h_hat, atol=1e-9)
        np.testing.assert_allclose(da.err_var, direct.err_var, atol=1e-9)

    def test_uniform_priors_reduce_to_pilot_only(self):
        model = small_model()
        pattern = four_pilot_pattern()
        const = gray_qam(6)
        rng = np.random.default_rng(9)
        h = model.sample(rng)
        sigma2 = 0.05
        labels = rng.integers(0, 64, size=(4, 3))
        x = const.points[labels]
        x[pattern.mask] = pattern.values[pattern.mask]
        y = apply_channel(h, x, sigma2, rng)
        prior = prior_from_llrs(const, np.zeros((4, 3, 6)), pattern)
        da = data_aided_estimate(model.full_matrix(), y, prior, sigma2)
        direct = lmmse_estimate(model.full_matrix(), pattern, y, sigma2)
        np.testing.assert_allclose(da.h_hat, direct.h_hat, atol=1e-7)
        np.testing.assert_allclose(da.err_var, direct.err_var, atol=1e-7)

    def test_mixed_priors_match_mc_regression(self):
        model = small_model()
        pattern = four_pilot_pattern()
        const = gray_qam(2)
        sigma2 = 0.1
        rng = np.random.default_rng(10)
        llrs = rng.normal(0, 1.5, size=(4, 3, 2))
        prior = prior_from_llrs(const, llrs, pattern)

        # implementation weights B M^-1
        r = model.full_matrix()
        xbar = prior.x_mean
        m_mat = r * np.outer(xbar, xbar.conj())
        np.fill_diagonal(m_mat, np.diag(r).real * prior.x_power + sigma2)
        w_impl = (r * xbar.conj()[None, :]) @ np.linalg.inv(m_mat)

        # Monte Carlo: sample symbols from the prior at data REs
        count = 400_000
        h = draw_channels(model, rng, count)
        x = np.empty((12, count), dtype=complex)
        x[pattern.pilot_indices] = pattern.pilot_vec()[:, None]
        cum = prior.probs.cumsum(axis=1)
        for row, k in enumerate(pattern.data_indices):
            picks = np.searchsorted(cum[row], rng.uniform(size=count))
            x[k] = const.points[picks]
        noise = (rng.standard_normal((12, count))
                 + 1j * rng.standard_normal((12, count))) * np.sqrt(sigma2 / 2)
        y = x * h + noise
        w_emp = mc_regression_weights(h, y)
        # 2% belongs to the 1e6-sample acceptance run; scaled ~1/sqrt(S) here
        assert weights_close(w_emp, w_impl, rel=0.02 * np.sqrt(1e6 / count))

    def test_error_variance_within_channel_power(self):
        model = small_model()
        pattern = four_pilot_pattern()
        const = gray_qam(2)
        rng = np.random.default_rng(11)
        y = apply_channel(model.sample(rng), pattern.values, 0.1, rng)
        prior = prior_from_llrs(const, rng.normal(size=(4, 3, 2)), pattern)
        est = data_aided_estimate(model.full_matrix(), y, prior, 0.1)
        assert np.all(est.err_var >= 0)
        assert np.all(est.err_var <= np.diag(model.full_matrix()).real + 1e-6)


# ---------------------------------------------------------------------------
# IEDD demapping
# ---------------------------------------------------------------------------

class TestIeddDemap:
    def _setup(self, m, seed):
        const = Constellation([-1.0, 1.0]) if m == 1 else gray_qam(m)
        dims = OfdmDims(5, 4)
        pattern = make_pilot_pattern("none", dims)
        rng = np.random.default_rng(seed)
        h = rng.standard_normal(20) + 1j * rng.standard_normal(20)
        y = rng.standard_normal(20) + 1j * rng.standard_normal(20)
        err = rng.uniform(0, 0.2, size=20)
        est = ChannelEstimate(h, err)
        return const, dims, pattern, rng, y, est

    def test_zero_priors_reduce_to_gaussian_demap(self):
        const, dims, pattern, rng, y, est = self._setup(2, 12)
        sigma2 = 0.7
        zero = np.zeros((5, 4, 2))
        total, extrinsic = iedd_demap(const, vec_to_grid(y, 5, 4), est, sigma2,
                                      zero, pattern)
        plain = gaussian_demap(const, vec_to_grid(y, 5, 4), est, sigma2, pattern)
        np.testing.assert_allclose(total.data_values(pattern),
                                   plain.data_values(pattern), atol=1e-9)
        np.testing.assert_allclose(extrinsic.data_values(pattern),
                                   plain.data_values(pattern), atol=1e-9)

    def test_saturated_prior_forces_sign(self):
        const, dims, pattern, rng, y, est = self._setup(2, 13)
        sigma2 = 1.0
        y = y / np.max(np.abs(y))  # keep channel metrics well inside the prior
        prior = np.zeros((5, 4, 2))
        prior[:, :, 0] = 30.0
        total, _ = iedd_demap(const, vec_to_grid(y, 5, 4), est, sigma2, prior, pattern)
        assert np.all(total.data_values(pattern)[:, 0] > 0)

    @pytest.mark.parametrize("m", [1, 2, 6])
    def test_matches_enumeration_oracle(self, m):
        const, dims, pattern, rng, y, est = self._setup(m, 14 + m)
        sigma2 = 0.6
        prior_grid = rng.normal(0, 2, size=(5, 4, m))
        total, extrinsic = iedd_demap(const, vec_to_grid(y, 5, 4), est, sigma2,
                                      prior_grid, pattern)
        got_total = total.data_values(pattern)
        got_ext = extrinsic.data_values(pattern)
        prior_flat = LlrGrid(prior_grid).data_values(pattern)
        for k in range(20):
            raw = oracle_llrs(const.points, y[k], est.h_hat[k],
                              est.err_var[k] + sigma2, prior_bits=prior_flat[k])
            np.testing.assert_allclose(got_total[k], np.clip(raw, -30, 30), atol=1e-9)
            want_ext = np.clip(raw - prior_flat[k], -30, 30)
            np.testing.assert_allclose(got_ext[k], want_ext, atol=1e-9)


# ---------------------------------------------------------------------------
# full receivers
# ---------------------------------------------------------------------------

def transmit(pattern, plan, const, code, rng):
    info = rng.integers(0, 2, size=(plan.codewords_per_frame, code.k))
    codewords = code.encode_batch(info)
    bit_grid = assemble(plan, pattern, codewords, rng)
    x = map_bits(const, bit_grid)
    x[pattern.mask] = pattern.values[pattern.mask]
    return info, bit_grid, x


@pytest.fixture(scope="module")
def setup():
    dims = OfdmDims(24, 14)
    pattern = make_pilot_pattern("1P", dims)
    code = wifi_1944_r23()
    plan = plan_frame(pattern, code.n_c, 6)
    const = gray_qam(6)
    model = small_model(v=3.0, d_s=100e-9, dims=dims)
    return dims, pattern, plan, code, const, model


class TestRunReceiver:

    def test_near_noiseless_all_receivers_error_free(self, setup):
        dims, pattern, plan, code, const, model = setup
        rng = np.random.default_rng(20)
        sigma2 = 1e-9
        r = model.full_matrix()
        for frame in range(3):
            info, _, x = transmit(pattern, plan, const, code, rng)
            h = model.sample(rng)
            y = apply_channel(h, x, sigma2, rng)
            for kind in ("perfect_csi", "non_iterative", "iedd"):
                out = run_receiver(kind, const=const, pattern=pattern, plan=plan,
                                   code=code, y_grid=y, sigma2=sigma2, r_rx=r,
                                   h_true=h)
                assert (out.info_bits == info).all(), kind

    def test_single_outer_iteration_equals_non_iterative(self, setup):
        dims, pattern, plan, code, const, model = setup
        rng = np.random.default_rng(21)
        sigma2 = 0.02
        r = model.full_matrix()
        info, _, x = transmit(pattern, plan, const, code, rng)
        h = model.sample(rng)
        y = apply_channel(h, x, sigma2, rng)
        one_shot = run_receiver("iedd", const=const, pattern=pattern, plan=plan,
                                code=code, y_grid=y, sigma2=sigma2, r_rx=r,
                                outer_iters=1, inner_bp_iters=40)
        plain = run_receiver("non_iterative", const=const, pattern=pattern,
                             plan=plan, code=code, y_grid=y, sigma2=sigma2, r_rx=r)
        np.testing.assert_allclose(one_shot.llr_grid.data_values(pattern),
                                   plain.llr_grid.data_values(pattern), atol=1e-6)
        np.testing.assert_array_equal(one_shot.info_bits, plain.info_bits)

    def test_no_receiver_emits_pilot_llrs(self, setup):
        dims, pattern, plan, code, const, model = setup
        rng = np.random.default_rng(22)
        sigma2 = 0.05
        r = model.full_matrix()
        info, _, x = transmit(pattern, plan, const, code, rng)
        h = model.sample(rng)
        y = apply_channel(h, x, sigma2, rng)
        for kind in ("perfect_csi", "non_iterative", "iedd"):
            out = run_receiver(kind, const=const, pattern=pattern, plan=plan,
                               code=code, y_grid=y, sigma2=sigma2, r_rx=r, h_true=h)
            assert np.isnan(out.llr_grid.values[pattern.mask]).all(), kind

    def test_unknown_kind_rejected(self, setup):
        dims, pattern, plan, code, const, model = setup
        with pytest.raises(ValueError):
            run_receiver("zero_forcing", const=const, pattern=pattern, plan=plan,
                         code=code, y_grid=np.zeros((24, 14)), sigma2=0.1)

    def test_demapper_decoder_convention_round_trip(self):
        # noiseless QPSK frame straight through the toy code
        dims = OfdmDims(6, 4)
        pattern = make_pilot_pattern("none", dims)
        code = toy_tree_code()
        plan = plan_frame(pattern, code.n_c, 2)
        const = gray_qam(2)
        rng = np.random.default_rng(23)
        info, bit_grid, x = transmit(pattern, plan, const, code, rng)
        est = perfect_estimate(np.ones((6, 4), dtype=complex))
        grid = gaussian_demap(const, x, est, 1e-6, pattern)
        signs = grid.data_values(pattern) > 0
        flat_bits = LlrGrid(bit_grid.astype(float)).data_values(pattern)
        np.testing.assert_array_equal(signs.astype(int), flat_bits)
        out = run_receiver("perfect_csi", const=const, pattern=pattern, plan=plan,
                           code=code, y_grid=x, sigma2=1e-6,
                           h_true=np.ones((6, 4), dtype=complex))
        np.testing.assert_array_equal(out.info_bits, info)
