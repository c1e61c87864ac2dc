"""
Unit tests for the tensor-level Mark / Extract / Restore workflows
"""

import unittest

import numpy as np

from rqim.errors import CapacityError, DomainError, FormatError, UnsupportedChannelError
from rqim.keying import SecretKey, WatermarkInfo, construct_locations
from rqim.rqim_core import QimParams, decision_margin, rqim_embed
from rqim.schemes import (
    Precision,
    WatermarkMessage,
    WeightTensor,
    default_tolerance,
    diff,
    extract,
    infringement_check,
    mark,
    restore,
    verify_integrity_noiseless,
    verify_integrity_noisy,
)

PARAMS = QimParams(delta=1.0, m_card=2, alpha=0.8675, k=0.0)
CLUE = 20240601


def gaussian_tensor(n, seed=0, precision=Precision.BINARY64):
    rng = np.random.default_rng(seed)
    return WeightTensor(rng.normal(0.0, 0.05, size=n), precision)


def random_message(length, m_card=2, seed=1):
    symbols = np.random.default_rng(seed).integers(0, m_card, size=length)
    return WatermarkMessage(symbols, m_card)


class TestWatermarkMessage(unittest.TestCase):
    """Test the bit / symbol views"""

    def test_from_bits(self):
        """Test MSB-first grouping"""
        bits = [0, 1, 0, 0, 0, 0, 0, 1]
        self.assertEqual(WatermarkMessage.from_bits(bits, 2).symbols.tolist(), bits)
        self.assertEqual(WatermarkMessage.from_bits(bits, 4).symbols.tolist(), [1, 0, 0, 1])

    def test_padding(self):
        """Test trailing filler bits for |M| = 8"""
        msg = WatermarkMessage.from_bits([0, 1, 0, 0, 0, 0, 0, 1], 8)
        self.assertEqual(msg.length, 3)
        self.assertEqual(msg.pad, 1)
        self.assertEqual(msg.bits.tolist(), [0, 1, 0, 0, 0, 0, 0, 1])

    def test_non_power_of_two(self):
        """Test alphabets that are not powers of two"""
        with self.assertRaises(DomainError):
            WatermarkMessage.from_bits([1, 0], 3)


class TestMarkExtractRestore(unittest.TestCase):
    """Test the three wrapped algorithms"""

    def test_empty_message_leaves_tensor(self):
        """Test L = 0"""
        weights = gaussian_tensor(50)
        result = mark(weights, WatermarkMessage(np.zeros(0, dtype=int)), PARAMS, CLUE)
        np.testing.assert_array_equal(result.watermarked.elements, weights.elements)
        self.assertEqual(result.info.length, 0)

    def test_single_symbol(self):
        """Test exactly one element is replaced by its R-QIM value"""
        weights = WeightTensor(np.array([0.6, -0.1]))
        params = QimParams(delta=1.0, alpha=0.8)
        result = mark(weights, [1], params, CLUE)
        c0 = int(construct_locations(CLUE, 1, 2).indices[0])
        expected = weights.elements.copy()
        expected[c0] = rqim_embed(expected[c0], 1, params).watermarked
        np.testing.assert_array_equal(result.watermarked.elements, expected)
        self.assertEqual(result.key, SecretKey(k=0.0, cl=CLUE, delta=1.0))
        self.assertEqual(result.info, WatermarkInfo(length=1, m_card=2))

    def test_rejects_invalid_alpha_and_capacity(self):
        """Test reversibility constraint and capacity"""
        weights = gaussian_tensor(10)
        with self.assertRaises(DomainError):
            mark(weights, [1], QimParams(delta=1.0, alpha=0.4), CLUE)
        with self.assertRaises(CapacityError):
            mark(weights, random_message(11), PARAMS, CLUE)

    def test_rejects_non_power_of_two_alphabet(self):
        """Test |M| = 3 is refused before anything is embedded"""
        with self.assertRaises(DomainError):
            mark(gaussian_tensor(10), [0, 1, 2], QimParams(delta=1.0, m_card=3, alpha=0.9), CLUE)
        with self.assertRaises(DomainError):
            mark(gaussian_tensor(10), [], QimParams(delta=1.0, m_card=6, alpha=0.9), CLUE)

    def test_end_to_end(self):
        """Test extract and restore invert mark for several alphabets and both precisions"""
        for m_card, alpha in ((2, 0.8675), (4, 0.9), (8, 0.95)):
            for precision in Precision:
                params = QimParams(delta=1.0, m_card=m_card, alpha=alpha)
                weights = gaussian_tensor(5000, precision=precision)
                message = random_message(4264, m_card)
                result = mark(weights, message, params, CLUE)

                extracted = extract(result.watermarked, result.info, result.key)
                np.testing.assert_array_equal(extracted.symbols, message.symbols)

                restored = restore(result.watermarked, result.info, result.key, alpha)
                self.assertFalse(diff(weights, restored).tampered, (m_card, precision))

    def test_dithered_key_round_trip(self):
        """Test a nonzero dither travels in the key and extract/restore honour it"""
        params = QimParams(delta=0.5, m_card=4, alpha=0.9, k=0.37)
        weights = gaussian_tensor(3000, seed=8)
        message = random_message(1000, 4, seed=9)
        result = mark(weights, message, params, CLUE)
        self.assertAlmostEqual(result.key.k, 0.37)

        extracted = extract(result.watermarked, result.info, result.key)
        np.testing.assert_array_equal(extracted.symbols, message.symbols)
        restored = restore(result.watermarked, result.info, result.key, params.alpha)
        self.assertFalse(diff(weights, restored).tampered)

        undithered = SecretKey(k=0.0, cl=result.key.cl, delta=result.key.delta)
        wrong = extract(result.watermarked, result.info, undithered).symbols
        self.assertGreaterEqual(float(np.mean(wrong != message.symbols)), 0.25)

    def test_binary64_recovery_precision(self):
        """Test restored weights match to 1e-12 relative"""
        weights = gaussian_tensor(100_000, seed=5)
        result = mark(weights, random_message(4264), PARAMS, CLUE)
        restored = restore(result.watermarked, result.info, result.key, PARAMS.alpha)
        err = np.abs(restored.elements - weights.elements) / np.maximum(1.0, np.abs(weights.elements))
        self.assertLessEqual(float(err.max()), 1e-12)

    def test_workers_do_not_change_output(self):
        """Test byte-identical results for 1 and 4 workers"""
        weights = gaussian_tensor(3000)
        message = random_message(2000)
        one = mark(weights, message, PARAMS, CLUE, workers=1).watermarked
        four = mark(weights, message, PARAMS, CLUE, workers=4).watermarked
        self.assertEqual(one.elements.tobytes(), four.elements.tobytes())

        info = WatermarkInfo(2000, 2)
        sk = SecretKey(0.0, CLUE, 1.0)
        r1 = restore(one, info, sk, PARAMS.alpha, workers=1)
        r4 = restore(one, info, sk, PARAMS.alpha, workers=4)
        self.assertEqual(r1.elements.tobytes(), r4.elements.tobytes())
        np.testing.assert_array_equal(
            extract(one, info, sk, workers=1).symbols, extract(one, info, sk, workers=3).symbols
        )

    def test_extract_needs_no_alpha_and_checks_length(self):
        """Test extraction from info and key alone"""
        weights = gaussian_tensor(100)
        with self.assertRaises(FormatError):
            extract(weights, WatermarkInfo(101, 2), SecretKey(0.0, CLUE, 1.0))

    def test_restore_with_wrong_alpha(self):
        """Test a mismatched alpha leaves a residual at marked positions"""
        weights = gaussian_tensor(1000)
        result = mark(weights, random_message(500), PARAMS, CLUE)
        restored = restore(result.watermarked, result.info, result.key, 0.9)
        self.assertTrue(diff(weights, restored).tampered)
        with self.assertRaises(DomainError):
            restore(result.watermarked, result.info, result.key, 1.0)

    def test_noisy_restore_residual(self):
        """Test restore error equals n/(1-alpha) at marked positions"""
        weights = gaussian_tensor(1000)
        result = mark(weights, random_message(400), PARAMS, CLUE)
        n = 0.5 * decision_margin(PARAMS)
        noisy = result.watermarked.with_elements(result.watermarked.elements + n)
        restored = restore(noisy, result.info, result.key, PARAMS.alpha)
        idx = construct_locations(CLUE, 400, 1000).indices
        np.testing.assert_allclose(
            restored.elements[idx] - weights.elements[idx], n / (1 - PARAMS.alpha), atol=1e-12
        )

    def test_removal_after_restore(self):
        """Test extraction from the restored model is near chance"""
        weights = gaussian_tensor(20_000, seed=9)
        rates = []
        for seed in range(20):
            message = random_message(4264, seed=seed)
            result = mark(weights, message, PARAMS, CLUE + seed)
            restored = restore(result.watermarked, result.info, result.key, PARAMS.alpha)
            rates.append(infringement_check(restored, result.info, result.key, message).ber)
        self.assertTrue(all(0.40 <= r <= 0.60 for r in rates), rates)

    def test_wrong_clue(self):
        """Test a wrong key gives a high error rate"""
        weights = gaussian_tensor(10_000)
        message = random_message(2000)
        result = mark(weights, message, PARAMS, CLUE)
        wrong = SecretKey(0.0, CLUE + 1, 1.0)
        self.assertGreaterEqual(infringement_check(result.watermarked, result.info, wrong, message).ber, 0.25)


class TestIntegrity(unittest.TestCase):
    """Test difference reports and the two verification modes"""

    def setUp(self):
        """Set up a marked tensor"""
        self.weights = gaussian_tensor(2000, seed=3)
        self.result = mark(self.weights, random_message(1500), PARAMS, CLUE)

    def test_diff(self):
        """Test identical and perturbed tensors"""
        report = diff(self.weights, self.weights)
        self.assertEqual(report.b, 0.0)
        self.assertFalse(report.tampered)

        values = self.weights.elements.copy()
        values[17] += 1e-3
        report = diff(self.weights, self.weights.with_elements(values), 1e-9)
        self.assertEqual(report.mismatch_count, 1)
        self.assertAlmostEqual(report.b, 1 / 2000)
        self.assertTrue(report.tampered)

        with self.assertRaises(FormatError):
            diff(self.weights, gaussian_tensor(10))
        with self.assertRaises(FormatError):
            diff(self.weights, WeightTensor(self.weights.elements, Precision.BINARY32))

    def test_default_tolerances(self):
        """Test per-precision tolerances"""
        self.assertEqual(default_tolerance(Precision.BINARY64), 1e-9)
        self.assertEqual(default_tolerance(Precision.BINARY32), 1e-5)

    def test_noiseless_clean(self):
        """Test an untampered channel"""
        report = verify_integrity_noiseless(
            self.result.watermarked, self.result.info, self.result.key, PARAMS.alpha, self.weights
        )
        self.assertEqual(report.b, 0.0)
        self.assertFalse(report.tampered)

    def test_noiseless_bit_flips(self):
        """Test single mantissa bit flips of at least ten tolerances are caught"""
        rng = np.random.default_rng(13)
        marked = self.result.watermarked.elements
        for _ in range(1000):
            i = int(rng.integers(0, len(marked)))
            candidates = []
            for bit in range(52):
                raw = marked.copy().view(np.uint64)
                raw[i] ^= np.uint64(1) << np.uint64(bit)
                flipped = raw.view(np.float64)
                if abs(flipped[i] - marked[i]) >= 10 * 1e-9:
                    candidates.append(flipped)
            tampered = WeightTensor(candidates[int(rng.integers(0, len(candidates)))])
            report = verify_integrity_noiseless(
                tampered, self.result.info, self.result.key, PARAMS.alpha, self.weights
            )
            self.assertTrue(report.tampered)
            self.assertGreaterEqual(report.b, 1 / 2000)

    def test_noisy_channel(self):
        """Test allowance-based detection under bounded noise"""
        beta = decision_margin(PARAMS) / 2
        rng = np.random.default_rng(14)
        marked = self.result.watermarked
        args = (self.result.info, self.result.key, PARAMS.alpha, self.weights)
        for _ in range(1000):
            noise = rng.uniform(-beta, beta, size=2000)
            received = marked.with_elements(marked.elements + noise)
            report = verify_integrity_noisy(received, *args, beta)
            self.assertFalse(report.tampered)
            self.assertEqual(report.mismatch_count, 0)

        values = received.elements.copy()
        idx = int(construct_locations(CLUE, 1500, 2000).indices[0])
        values[idx] += 10 * beta / (1 - PARAMS.alpha)
        report = verify_integrity_noisy(received.with_elements(values), *args, beta)
        self.assertTrue(report.tampered)

        with self.assertRaises(UnsupportedChannelError):
            verify_integrity_noisy(received, *args, decision_margin(PARAMS))


class TestInfringement(unittest.TestCase):
    """Test detection against the owner's message"""

    def test_detection(self):
        """Test watermarked, restored and unrelated tensors"""
        weights = gaussian_tensor(10_000)
        message = random_message(4264)
        result = mark(weights, message, PARAMS, CLUE)

        report = infringement_check(result.watermarked, result.info, result.key, message)
        self.assertEqual(report.ber, 0.0)
        self.assertTrue(report.detected)

        restored = restore(result.watermarked, result.info, result.key, PARAMS.alpha)
        report = infringement_check(restored, result.info, result.key, message)
        self.assertFalse(report.detected)

        unrelated = gaussian_tensor(10_000, seed=77)
        report = infringement_check(unrelated, result.info, result.key, message, threshold=0.01)
        self.assertFalse(report.detected)
        self.assertAlmostEqual(report.ber, 0.5, delta=0.05)

    def test_unrelated_quaternary(self):
        """Test chance level 1 - 1/|M| for |M| = 4"""
        params = QimParams(delta=1.0, m_card=4, alpha=0.9)
        message = random_message(3000, m_card=4)
        result = mark(gaussian_tensor(5000), message, params, CLUE)
        unrelated = WeightTensor(np.random.default_rng(8).uniform(-10, 10, size=5000))
        report = infringement_check(unrelated, result.info, result.key, message)
        self.assertAlmostEqual(report.ber, 0.75, delta=0.04)

    def test_length_mismatch(self):
        """Test the original message must match the info"""
        with self.assertRaises(FormatError):
            infringement_check(gaussian_tensor(100), WatermarkInfo(10, 2), SecretKey(0.0, 1, 1.0), [1, 0])


if __name__ == "__main__":
    unittest.main()
