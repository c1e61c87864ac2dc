"""
Unit tests for the histogram-shifting baseline
"""

import unittest

import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from rqim.errors import CapacityError, CorruptionError, DomainError, NoValleyError, RangeError
from rqim.hs_baseline import (
    HsParams,
    choose_peak_valley,
    decompose_weight,
    deprocess,
    hs_capacity,
    hs_embed,
    hs_extract,
    hs_extract_tensor,
    hs_mark_tensor,
    hs_recover,
    hs_restore_tensor,
    normalize_decimal_exponent,
    prepare_host,
    preprocess,
    region_masks,
    reprocess,
    select_pair_index,
)


class TestDigitDecomposition(unittest.TestCase):
    """Test weight decomposition and pair selection"""

    def test_decompose_weight(self):
        """Test sign, leading zeros and significant digits"""
        self.assertEqual(decompose_weight(0.00347, 4), (1, 2, "3470"))
        self.assertEqual(decompose_weight(0.0, 4), (1, 0, "0000"))
        self.assertEqual(decompose_weight(-0.5123, 4), (-1, 0, "5123"))

    def test_decompose_rounding_carry(self):
        """Test a carry into a new leading digit reduces the leading zeros"""
        self.assertEqual(decompose_weight(0.099999, 2), (1, 0, "10"))

    def test_decompose_rejects_out_of_range(self):
        """Test |w| >= 1 and tiny q are rejected"""
        with self.assertRaises(DomainError):
            decompose_weight(1.0, 4)
        with self.assertRaises(DomainError):
            decompose_weight(0.5, 1)
        with self.assertRaises(DomainError):
            decompose_weight(0.99999, 2)

    def test_select_pair_index_prefers_constant_pair(self):
        """Test zero-entropy positions win"""
        self.assertEqual(select_pair_index(["1234", "9834", "5634"]), 3)
        strings = [f"{i:02d}77" for i in range(100)]
        self.assertEqual(select_pair_index(strings), 3)

    def test_select_pair_index_ties_to_smallest(self):
        """Test equal entropies resolve to the first position"""
        self.assertEqual(select_pair_index(["1111", "1111"]), 1)
        with self.assertRaises(DomainError):
            select_pair_index(["1", "2"])


class TestPreprocess(unittest.TestCase):
    """Test host construction and its inverse"""

    def test_host_values(self):
        """Test h = sign*(10*n_c + n_(c+1)) + V"""
        self.assertEqual(preprocess([0.00347], 4, 0, pair_index=1).host_values.tolist(), [34])
        self.assertEqual(preprocess([-0.5123], 4, 0, pair_index=1).host_values.tolist(), [-51])
        self.assertEqual(preprocess([0.00347], 4, 2, pair_index=2).host_values.tolist(), [49])

    def test_range_error(self):
        """Test V pushing a value beyond 99"""
        with self.assertRaises(RangeError):
            preprocess([0.99], 4, 5, pair_index=1)

    def test_round_trip_is_bit_exact(self):
        """Test deprocess(preprocess(w)) returns the same floats"""
        rng = np.random.default_rng(3)
        weights = rng.normal(0.0, 0.05, size=2000)
        host = preprocess(weights, 8)
        np.testing.assert_array_equal(deprocess(host), weights)

    def test_float32_round_trip(self):
        """Test binary32 weights come back as identical binary32"""
        weights = np.random.default_rng(4).normal(0.0, 0.1, size=500).astype(np.float32)
        restored = deprocess(preprocess(weights, 6))
        self.assertEqual(restored.dtype, np.float32)
        np.testing.assert_array_equal(restored, weights)

    def test_modified_host_changes_only_the_pair(self):
        """Test +1 on the host rewrites digits (n_c, n_c+1)"""
        host = preprocess([0.00347], 4, 0, pair_index=1)
        changed = deprocess(host.with_values([35]))
        self.assertAlmostEqual(float(changed[0]), 0.00357, places=15)

    def test_corruption(self):
        """Test a host value that cannot be re-digitized"""
        host = preprocess([0.00347], 4, 0, pair_index=1)
        with self.assertRaises(CorruptionError):
            deprocess(host.with_values([100]))

    def test_reprocess_reads_host_back(self):
        """Test host values are re-read from the rebuilt weights"""
        weights = np.random.default_rng(5).normal(0.0, 0.05, size=300)
        host = preprocess(weights, 8, 0, pair_index=2)
        shifted = np.clip(host.host_values + 1, -99, 99)
        rebuilt = deprocess(host.with_values(shifted))
        np.testing.assert_array_equal(reprocess(rebuilt, host.side_info()), shifted)

    def test_normalize_decimal_exponent(self):
        """Test scaling by the smallest power of ten"""
        scaled, exponent = normalize_decimal_exponent([12.5, -3.0, 0.5])
        self.assertEqual(exponent, 2)
        np.testing.assert_allclose(scaled, [0.125, -0.03, 0.005])
        _, exponent = normalize_decimal_exponent([0.5])
        self.assertEqual(exponent, 0)
        _, exponent = normalize_decimal_exponent([1.0])
        self.assertEqual(exponent, 1)


class TestHistogramShifting(unittest.TestCase):
    """Test peak/valley selection, embedding, extraction and recovery"""

    def setUp(self):
        """Set up the worked host"""
        self.host = np.array([2, 2, 2, 3, 5])
        self.params = HsParams(peak=2, valley=4)

    def test_choose_peak_valley(self):
        """Test peak and first empty bin above it"""
        self.assertEqual(choose_peak_valley(self.host), self.params)
        self.assertEqual(choose_peak_valley([7]), HsParams(peak=7, valley=8))
        with self.assertRaises(NoValleyError):
            choose_peak_valley(np.arange(-99, 100))
        with self.assertRaises(NoValleyError):
            choose_peak_valley([99, 99, 0])

    def test_valley_respects_negative_shift(self):
        """Test a valley past 99 + V is rejected for V < 0"""
        self.assertEqual(choose_peak_valley([98, 98, 97]), HsParams(peak=98, valley=99))
        with self.assertRaises(NoValleyError):
            choose_peak_valley([98, 98, 97], shift_v=-1)
        self.assertEqual(choose_peak_valley([96, 96, 95], shift_v=-2), HsParams(peak=96, valley=97))

    def test_peak_ties_to_smallest_value(self):
        """Test equal counts choose the smaller bin"""
        self.assertEqual(choose_peak_valley([4, 4, 1, 1]).peak, 1)

    def test_embed_extract_recover(self):
        """Test the worked example end to end"""
        marked = hs_embed(self.host, [1, 0, 1], self.params)
        self.assertEqual(marked.tolist(), [3, 2, 3, 4, 5])
        self.assertEqual(hs_extract(marked, self.params).tolist(), [1, 0, 1])
        self.assertEqual(hs_recover(marked, self.params).tolist(), [2, 2, 2, 3, 5])

    def test_zero_message_only_shifts(self):
        """Test bits all zero leave the peak alone"""
        marked = hs_embed(self.host, [0, 0, 0], self.params)
        self.assertEqual(marked.tolist(), [2, 2, 2, 4, 5])
        self.assertEqual(hs_extract(marked, self.params).tolist(), [0, 0, 0])

    def test_capacity(self):
        """Test capacity equals the peak count"""
        self.assertEqual(hs_capacity(self.host), 3)
        self.assertEqual(hs_capacity([1, 2, 3, 4]), 1)
        with self.assertRaises(CapacityError):
            hs_embed(self.host, [1, 0, 1, 1], self.params)

    def test_extract_without_carriers(self):
        """Test a host with no peak values yields no bits"""
        self.assertEqual(len(hs_extract([10, 20], self.params)), 0)

    def test_region_masks(self):
        """Test region split around the peak"""
        masks = region_masks(self.host, 2)
        self.assertEqual(masks.region_i.sum(), 0)
        self.assertEqual(masks.region_ii.sum(), 3)
        self.assertEqual(masks.region_iii.sum(), 2)

    def test_capacity_matches_brute_force_recount(self):
        """Test capacity against an independent count on random hosts"""
        rng = np.random.default_rng(11)
        for _ in range(50):
            host = rng.integers(-99, 100, size=rng.integers(1, 5000))
            values, counts = np.unique(host, return_counts=True)
            self.assertEqual(hs_capacity(host), int(counts.max()))

    def test_uniform_host_capacity_ratio(self):
        """Test C_HS/N is near 1/199 on uniform integer hosts"""
        host = np.random.default_rng(12).integers(-99, 100, size=199_000)
        ratio = hs_capacity(host) / len(host)
        self.assertLess(abs(ratio - 1 / 199), 0.2 / 199)

    @settings(max_examples=100, deadline=None)
    @given(
        host=st.lists(st.integers(min_value=-99, max_value=90), min_size=1, max_size=200),
        seed=st.integers(0, 99),
    )
    def test_recover_inverts_embed(self, host, seed):
        """Test hs_recover(hs_embed(h)) == h on random hosts"""
        try:
            params = choose_peak_valley(host)
        except NoValleyError:
            assume(False)
        bits = np.random.default_rng(seed).integers(0, 2, size=hs_capacity(host))
        marked = hs_embed(host, bits, params)
        self.assertEqual(hs_recover(marked, params).tolist(), list(host))
        self.assertEqual(hs_extract(marked, params).tolist(), bits.tolist())


class TestHsTensorPipeline(unittest.TestCase):
    """Test the weight-level HS workflow"""

    def test_prepare_host_falls_back_when_needed(self):
        """Test the search returns a host with an empty valley"""
        weights = np.random.default_rng(21).normal(0.0, 0.05, size=400)
        host, params = prepare_host(weights, 8)
        self.assertFalse(np.any(host.host_values == params.valley))

    def test_randomized_pipeline_is_exact(self):
        """Test preprocess -> embed -> extract -> recover -> deprocess on random hosts"""
        rng = np.random.default_rng(22)
        for trial in range(1000):
            weights = rng.normal(0.0, 0.05, size=int(rng.integers(20, 120)))
            try:
                host, params = prepare_host(weights, 8)
            except (NoValleyError, RangeError):
                continue
            bits = rng.integers(0, 2, size=hs_capacity(host.host_values))
            marked, side, params = hs_mark_tensor(weights, bits, 8, host.pair_index)
            np.testing.assert_array_equal(hs_extract_tensor(marked, side, params, len(bits)), bits)
            np.testing.assert_array_equal(hs_restore_tensor(marked, side, params), weights)

    def test_crowded_top_pairs_are_refused(self):
        """Test pairs packed against 99 fail with NoValleyError, not at write-back"""
        weights = np.array([0.98] * 6 + [0.99] * 2)
        with self.assertRaises(NoValleyError):
            prepare_host(weights, 2, 1)
        with self.assertRaises(NoValleyError):
            hs_mark_tensor(weights, [1, 0, 1], 2, 1)

    def test_mixed_scale_pipeline_is_exact(self):
        """Test full-capacity marking on hosts of varied location and scale"""
        rng = np.random.default_rng(23)
        marked_count = 0
        for trial in range(300):
            loc = float(rng.uniform(-0.5, 0.5))
            scale = float(rng.choice([0.001, 0.01, 0.05, 0.2]))
            weights = np.clip(rng.normal(loc, scale, size=int(rng.integers(20, 200))), -0.999, 0.999)
            pair_index = [None, 1, 2, 5][trial % 4]
            try:
                host, _ = prepare_host(weights, 6, pair_index)
            except (NoValleyError, RangeError):
                continue
            bits = np.ones(hs_capacity(host.host_values), dtype=np.int64)
            marked, side, params = hs_mark_tensor(weights, bits, 6, pair_index)
            self.assertLessEqual(params.valley - side.shift_v, 99)
            np.testing.assert_array_equal(hs_extract_tensor(marked, side, params, len(bits)), bits)
            np.testing.assert_array_equal(hs_restore_tensor(marked, side, params), weights)
            marked_count += 1
        self.assertGreater(marked_count, 100)

    def test_float32_needs_fewer_digits(self):
        """Test binary32 weights are refused at q > 6"""
        weights = np.full(4, 0.125, dtype=np.float32)
        with self.assertRaises(DomainError):
            hs_mark_tensor(weights, [1], 8)


if __name__ == "__main__":
    unittest.main()
