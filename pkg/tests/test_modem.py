"""Tests for constellations, mapping, and SIP combining."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linksim.modem import (
    Constellation,
    SipAllocation,
    gray_qam,
    hard_demap,
    load_constellation,
    map_bits,
    map_labels,
    normalize_center,
    save_constellation,
    sip_combine,
)


def hamming(u, v):
    return bin(u ^ v).count("1")


class TestGrayQam:
    def test_qpsk_points(self):
        const = gray_qam(2)
        expected = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2)
        np.testing.assert_allclose(const.points, expected, atol=1e-15)

    def test_qpsk_adjacent_labels_differ_one_bit(self):
        const = gray_qam(2)
        pts = const.points
        for u in range(4):
            for v in range(u + 1, 4):
                dist = abs(pts[u] - pts[v])
                if dist == pytest.approx(np.sqrt(2), rel=1e-9):
                    assert hamming(u, v) == 1

    def test_qam64_moments(self):
        const = gray_qam(6)
        assert const.size == 64
        assert abs(const.mean) <= 1e-12
        assert const.energy == pytest.approx(1.0, abs=1e-12)

    def test_qam16_axis_neighbors_exhaustive(self):
        const = gray_qam(4)
        pts = const.points
        step = np.min(np.abs(np.diff(np.sort(np.unique(pts.real)))))
        for u in range(16):
            for v in range(16):
                same_row = abs(pts[u].imag - pts[v].imag) < 1e-12
                adjacent = abs(abs(pts[u].real - pts[v].real) - step) < 1e-12
                if same_row and adjacent:
                    assert hamming(u, v) == 1
                same_col = abs(pts[u].real - pts[v].real) < 1e-12
                adjacent_v = abs(abs(pts[u].imag - pts[v].imag) - step) < 1e-12
                if same_col and adjacent_v:
                    assert hamming(u, v) == 1

    def test_odd_m_rejected(self):
        with pytest.raises(ValueError):
            gray_qam(3)


class TestNormalizeCenter:
    def test_idempotent(self):
        const = gray_qam(2)
        again = normalize_center(const.points)
        np.testing.assert_allclose(again.points, const.points, atol=1e-12)

    def test_translation_recovers_qpsk(self):
        qpsk = gray_qam(2).points
        shifted = qpsk + (0.7 - 1.3j)
        np.testing.assert_allclose(normalize_center(shifted).points, qpsk, atol=1e-12)

    def test_scale_invariance(self):
        raw = np.array([0.1 + 1j, -2.0, 3j, 1 - 1j])
        a = normalize_center(raw).points
        b = normalize_center(7.0 * raw).points
        np.testing.assert_allclose(a, b, atol=1e-12)

    @given(
        a=st.floats(0.05, 20.0),
        b_re=st.floats(-5.0, 5.0),
        b_im=st.floats(-5.0, 5.0),
        seed=st.integers(0, 2**31),
    )
    @settings(max_examples=40, deadline=None)
    def test_affine_invariance(self, a, b_re, b_im, seed):
        raw = np.random.default_rng(seed).standard_normal(8) * (1 + 0.5j) + np.array(
            [0, 1, 2, 3, 0.5j, 1j, -1, -2j]
        )
        base = normalize_center(raw)
        mapped = normalize_center(a * raw + (b_re + 1j * b_im))
        np.testing.assert_allclose(mapped.points, base.points, atol=1e-9)
        assert abs(base.mean) <= 1e-9
        assert base.energy == pytest.approx(1.0, abs=1e-9)

    def test_degenerate_rejected(self):
        with pytest.raises(ValueError):
            normalize_center(np.full(4, 0.3 + 0.1j))


class TestMapping:
    def test_all_zero_bits(self):
        const = gray_qam(6)
        bits = np.zeros((5, 7, 6), dtype=int)
        np.testing.assert_array_equal(map_bits(const, bits), np.full((5, 7), const.points[0]))

    def test_round_trip_noiseless(self):
        const = gray_qam(6)
        labels = np.random.default_rng(0).integers(0, 64, size=10_000)
        symbols = map_labels(const, labels)
        np.testing.assert_array_equal(hard_demap(const, symbols), labels)

    def test_round_trip_tiny_noise(self):
        # min pairwise distance of unit-power 64-QAM is 2/sqrt(42) >> 6 sigma
        const = gray_qam(6)
        rng = np.random.default_rng(1)
        labels = rng.integers(0, 64, size=10_000)
        symbols = map_labels(const, labels)
        noisy = symbols + 1e-6 * (rng.standard_normal(10_000) + 1j * rng.standard_normal(10_000))
        np.testing.assert_array_equal(hard_demap(const, noisy), labels)

    def test_bits_labels_inverse(self):
        const = gray_qam(4)
        labels = np.arange(16)
        np.testing.assert_array_equal(const.bits_to_labels(const.labels_to_bits(labels)), labels)

    def test_wrong_bit_count(self):
        with pytest.raises(ValueError):
            map_bits(gray_qam(4), np.zeros((3, 3), dtype=int))


class TestConstellationFiles:
    def test_round_trip(self, tmp_path):
        const = gray_qam(2)
        path = tmp_path / "qpsk.csv"
        save_constellation(const, path)
        loaded = load_constellation(path, m=2)
        np.testing.assert_array_equal(loaded.points, const.points)

    def test_reject_offset_mean(self, tmp_path):
        pts = gray_qam(2).points + 0.1
        path = tmp_path / "bad.csv"
        save_constellation(Constellation(pts), path)
        with pytest.raises(ValueError, match="mean"):
            load_constellation(path)

    def test_reject_wrong_count(self, tmp_path):
        const = gray_qam(6)
        path = tmp_path / "short.csv"
        save_constellation(const, path)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n")  # drop one of the 64 points
        with pytest.raises(ValueError):
            load_constellation(path, m=6)

    def test_reject_wrong_power(self, tmp_path):
        pts = gray_qam(2).points * 1.01
        path = tmp_path / "hot.csv"
        save_constellation(Constellation(pts), path)
        with pytest.raises(ValueError, match="power"):
            load_constellation(path)


class TestSip:
    def test_zero_allocation_passthrough(self):
        alloc = SipAllocation(np.zeros((4, 3)), pilot_seed=9)
        x = np.exp(1j * np.arange(12).reshape(4, 3))
        np.testing.assert_allclose(sip_combine(x, alloc), x, atol=1e-15)

    def test_full_allocation_gives_pilots(self):
        alloc = SipAllocation(np.ones((4, 3)), pilot_seed=9)
        x = np.exp(1j * np.arange(12).reshape(4, 3))
        np.testing.assert_allclose(sip_combine(x, alloc), alloc.p, atol=1e-15)

    def test_quarter_allocation_arithmetic(self):
        alloc = SipAllocation(np.full((1, 2), 0.25), pilot_seed=3)
        x = np.ones((1, 2), dtype=complex)
        out = sip_combine(x, alloc)
        expected = np.sqrt(0.75) + alloc.p * np.sqrt(0.25)
        np.testing.assert_allclose(out, expected, atol=1e-15)

    def test_allocation_bounds(self):
        with pytest.raises(ValueError):
            SipAllocation(np.array([[1.2]]), pilot_seed=0)
        with pytest.raises(ValueError):
            SipAllocation(np.array([[-0.1]]), pilot_seed=0)

    def test_pilot_grid_balanced(self):
        alloc = SipAllocation(np.full((72, 14), 0.1), pilot_seed=42)
        assert set(np.unique(alloc.p)) == {-1.0, 1.0}
        assert abs(alloc.p.mean()) <= 3.0 / np.sqrt(alloc.p.size)

    def test_file_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        alloc = SipAllocation(rng.uniform(0, 0.3, size=(6, 4)), pilot_seed=77)
        path = tmp_path / "alloc.csv"
        alloc.save(path)
        loaded = SipAllocation.load(path)
        np.testing.assert_array_equal(loaded.a, alloc.a)
        np.testing.assert_array_equal(loaded.p, alloc.p)
        assert loaded.pilot_seed == 77

    def test_energy_conservation(self):
        rng = np.random.default_rng(2)
        const = gray_qam(6)
        alloc = SipAllocation(rng.uniform(0, 1, size=(4, 3)), pilot_seed=11)
        total = np.zeros((4, 3))
        trials = 100_000 // 12 + 1
        for _ in range(trials):
            labels = rng.integers(0, 64, size=(4, 3))
            x = sip_combine(map_labels(const, labels), alloc)
            total += np.abs(x) ** 2
        np.testing.assert_allclose(total / trials, np.ones((4, 3)), rtol=0.01, atol=0.01)
