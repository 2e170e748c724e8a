"""Tests for metrics: SNR definitions, goodput, rate estimate, PAPR."""

import numpy as np
import pytest

from linksim.metrics import (
    BerAccumulator,
    FrameMetrics,
    estimate_rate,
    eb_over_sigma2,
    es_over_sigma2,
    gaussian_papr_ccdf,
    goodput,
    papr_cdf,
    papr_values,
    rate_from_llrs,
)
from linksim.modem import SipAllocation, gray_qam


class TestSnrDefinitions:
    def test_eb_flat_channel_closed_form(self):
        h = np.ones((72, 14))
        assert eb_over_sigma2(h, 0.01, rho=1.0, m=6, r=2 / 3) == pytest.approx(25.0)

    def test_eb_scales_inversely_with_sigma2(self):
        h = np.random.default_rng(0).standard_normal((8, 4))
        a = eb_over_sigma2(h, 0.01, 1.0, 6, 2 / 3)
        b = eb_over_sigma2(h, 0.02, 1.0, 6, 2 / 3)
        assert a == pytest.approx(2 * b)

    def test_eb_rho_ratio(self):
        h = np.ones((72, 14))
        a = eb_over_sigma2(h, 0.01, 162 / 168, 6, 2 / 3)
        b = eb_over_sigma2(h, 0.01, 1.0, 6, 2 / 3)
        assert a / b == pytest.approx(168 / 162)

    def test_es_closed_forms(self):
        assert es_over_sigma2(np.ones((72, 14)), 0.01) == pytest.approx(100.0)
        assert es_over_sigma2(np.zeros((4, 4)), 0.5) == 0.0
        h = np.full((4, 4), 2.0)
        assert es_over_sigma2(h, 0.01) == pytest.approx(400.0)


class TestGoodput:
    def test_closed_form_full_grid(self):
        assert goodput(2 / 3, 1.0, 6, 1008, 0.0) == pytest.approx(4032.0)

    def test_total_loss(self):
        assert goodput(2 / 3, 1.0, 6, 1008, 1.0) == 0.0

    def test_pilot_overhead(self):
        # matches three 1296-bit payloads per frame
        assert goodput(2 / 3, 162 / 168, 6, 1008, 0.0) == pytest.approx(3888.0)

    def test_range_check(self):
        with pytest.raises(ValueError):
            goodput(2 / 3, 1.0, 6, 1008, 1.5)


class TestBerAccumulator:
    def test_merge_is_associative(self):
        frames = [FrameMetrics(i % 3, 10, 1.0, 1.0, 12.0) for i in range(9)]
        acc_all = BerAccumulator()
        for f in frames:
            acc_all.add(f)
        a, b, c = BerAccumulator(), BerAccumulator(), BerAccumulator()
        for f in frames[:3]:
            a.add(f)
        for f in frames[3:5]:
            b.add(f)
        for f in frames[5:]:
            c.add(f)
        merged = a.merge(b).merge(c)
        assert merged == acc_all

    def test_confidence_interval_brackets_ber(self):
        acc = BerAccumulator(bit_errors=120, total_bits=10_000, frames=10)
        lo, hi = acc.confidence_interval()
        assert lo < acc.ber < hi
        assert acc.reportable

    def test_not_reportable_below_min_errors(self):
        acc = BerAccumulator(bit_errors=99, total_bits=10_000, frames=10)
        assert not acc.reportable

    def test_validation(self):
        with pytest.raises(ValueError):
            FrameMetrics(11, 10, 1.0, 1.0, 1.0)


class TestRateEstimate:
    def test_perfect_posteriors(self):
        est = estimate_rate(np.ones((3, 972, 6)))
        assert est.bce_total == 0.0
        assert est.rate == 972 * 6

    def test_uninformative_posteriors(self):
        est = estimate_rate(np.full((2, 100, 2), 0.5))
        assert est.bce_total == pytest.approx(200.0, abs=1e-9)
        assert est.rate == pytest.approx(0.0, abs=1e-9)

    def test_three_quarters_closed_form(self):
        nd_m = 50 * 4
        est = estimate_rate(np.full((5, 50, 4), 0.75))
        assert est.rate == pytest.approx(nd_m * (1 - np.log2(4 / 3)), abs=1e-9)

    def test_rate_never_exceeds_capacity(self):
        rng = np.random.default_rng(1)
        est = estimate_rate(rng.uniform(0.0, 1.0, size=(10, 64, 2)))
        assert est.rate <= 64 * 2
        assert est.bce_total >= 0

    def test_zero_posterior_clamped_and_flagged(self):
        q = np.full((1, 10, 1), 0.9)
        q[0, 0, 0] = 0.0
        est = estimate_rate(q)
        assert est.clamped_terms == 1
        assert np.isfinite(est.bce_total)

    def test_additive_across_bits(self):
        q1 = np.full((4, 10, 1), 0.8)
        combined = np.concatenate([q1, q1], axis=2)
        assert estimate_rate(combined).rate == pytest.approx(2 * estimate_rate(q1).rate)

    def test_rate_from_llrs_matches_direct(self):
        rng = np.random.default_rng(2)
        llrs = rng.normal(0, 2, size=(6, 30, 2))
        bits = rng.integers(0, 2, size=(6, 30, 2))
        signed = np.where(bits.astype(bool), llrs, -llrs)
        q = 1 / (1 + np.exp(-signed))
        direct = estimate_rate(q)
        via = rate_from_llrs(llrs, bits)
        assert via.bce_total == pytest.approx(direct.bce_total, abs=1e-9)


class TestPapr:
    def test_single_active_subcarrier_is_flat(self):
        sym = np.zeros((1, 64), dtype=complex)
        sym[0, 7] = 1.0 + 1.0j
        assert papr_values(sym)[0] == pytest.approx(1.0, abs=1e-12)

    def test_identical_symbols_give_impulse(self):
        sym = np.full((1, 72), 0.7 - 0.2j)
        assert 10 * np.log10(papr_values(sym)[0]) == pytest.approx(10 * np.log10(72), abs=1e-9)

    def test_qam_ccdf_near_gaussian_approximation(self):
        rng = np.random.default_rng(3)
        cdf = papr_cdf(gray_qam(6), n_s=72, symbol_count=100_000, rng=rng)
        for gamma in (2.0, 3.0, 4.5, 6.0):
            approx = gaussian_papr_ccdf(gamma, 72)
            assert cdf.ccdf_at(gamma) == pytest.approx(approx, abs=0.03)

    def test_sip_stream_close_to_qam(self):
        rng = np.random.default_rng(4)
        const = gray_qam(6)
        alloc = SipAllocation(np.full((24, 14), 0.05), pilot_seed=1)
        base = papr_cdf(const, n_s=24, symbol_count=40_000, rng=np.random.default_rng(5))
        sip = papr_cdf((const, alloc), n_s=24, symbol_count=40_000, rng=rng)
        assert base.sup_distance(sip) < 0.05

    def test_oversampling_raises_measured_peaks(self):
        rng = np.random.default_rng(6)
        sym = gray_qam(6).points[rng.integers(0, 64, size=(2000, 72))]
        plain = papr_values(sym).mean()
        over = papr_values(sym, oversample=4).mean()
        assert over > plain
