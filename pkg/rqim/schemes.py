"""Mark / Extract / Restore over weight tensors, integrity and infringement checks"""
import logging
from dataclasses import dataclass
from enum import IntEnum
from multiprocessing.dummy import Pool as ThreadPool
from typing import Callable, NamedTuple, Optional, Union

import numpy as np
from numpy.typing import ArrayLike

from .config import DEFAULT_THRESHOLD, RQIM_WORKERS, TOLERANCE_BINARY32, TOLERANCE_BINARY64
from .errors import DomainError, FormatError, UnsupportedChannelError
from .keying import LocationSequence, SecretKey, WatermarkInfo, construct_locations
from .rqim_core import (
    QimParams,
    decision_margin,
    rqim_embed,
    rqim_extract,
    rqim_recover,
    validate_reversible,
)
from .stats import ber

logger = logging.getLogger(__name__)


class Precision(IntEnum):
    """Element precision; the value doubles as the tensor file dtype code"""

    BINARY32 = 1
    BINARY64 = 2

    @property
    def dtype(self) -> np.dtype:
        return np.dtype("<f4") if self is Precision.BINARY32 else np.dtype("<f8")

    @classmethod
    def from_dtype(cls, dtype) -> "Precision":
        dt = np.dtype(dtype)
        if dt == np.float32:
            return cls.BINARY32
        if dt == np.float64:
            return cls.BINARY64
        raise FormatError(f"unsupported element type {dt}")


def default_tolerance(precision: Precision) -> float:
    return TOLERANCE_BINARY32 if precision is Precision.BINARY32 else TOLERANCE_BINARY64


@dataclass(frozen=True)
class WeightTensor:
    elements: np.ndarray
    precision: Precision = Precision.BINARY64

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.elements).reshape(-1), dtype=self.precision.dtype)
        if not np.all(np.isfinite(arr)):
            raise DomainError("weight tensor contains non-finite values")
        object.__setattr__(self, "elements", arr)

    @classmethod
    def from_array(cls, values: ArrayLike) -> "WeightTensor":
        arr = np.asarray(values)
        precision = Precision.BINARY32 if arr.dtype == np.float32 else Precision.BINARY64
        return cls(arr, precision)

    @property
    def count(self) -> int:
        return len(self.elements)

    def as_float64(self) -> np.ndarray:
        return self.elements.astype(np.float64)

    def with_elements(self, values: ArrayLike) -> "WeightTensor":
        return WeightTensor(np.asarray(values), self.precision)


def _bits_per_symbol(m_card: int) -> int:
    b = int(m_card).bit_length() - 1
    if m_card < 2 or m_card > 256 or 1 << b != m_card:
        raise DomainError(f"alphabet size must be a power of two in [2, 256], got {m_card}")
    return b


@dataclass(frozen=True)
class WatermarkMessage:
    """|M|-ary symbols carrying a bit string.

    Bits are grouped MSB first, log2|M| per symbol; `pad` trailing bits of the
    last symbol are filler and not part of the message.
    """

    symbols: np.ndarray
    m_card: int = 2
    pad: int = 0

    def __post_init__(self):
        b = _bits_per_symbol(self.m_card)
        sym = np.asarray(self.symbols, dtype=np.int64).reshape(-1)
        if sym.size and (sym.min() < 0 or sym.max() >= self.m_card):
            raise DomainError(f"symbol out of range [0, {self.m_card})")
        if not 0 <= self.pad <= len(sym) * b:
            raise DomainError(f"pad of {self.pad} bits does not fit {len(sym)} symbols")
        object.__setattr__(self, "symbols", sym)

    @classmethod
    def from_bits(cls, bits: ArrayLike, m_card: int = 2) -> "WatermarkMessage":
        b = _bits_per_symbol(m_card)
        arr = np.asarray(bits).reshape(-1)
        if arr.size and not np.all((arr == 0) | (arr == 1)):
            raise DomainError("bits must be 0 or 1")
        pad = (-len(arr)) % b
        padded = np.concatenate([arr.astype(np.int64), np.zeros(pad, dtype=np.int64)])
        place = 1 << np.arange(b - 1, -1, -1, dtype=np.int64)
        symbols = padded.reshape(-1, b) @ place if padded.size else np.zeros(0, dtype=np.int64)
        return cls(symbols, m_card, pad)

    @classmethod
    def from_symbols(
        cls, symbols: ArrayLike, m_card: int = 2, pad: Optional[int] = None
    ) -> "WatermarkMessage":
        """Symbols read back from a tensor; pad defaults to the bits past the last full byte"""
        sym = np.asarray(symbols, dtype=np.int64).reshape(-1)
        if pad is None:
            pad = (len(sym) * _bits_per_symbol(m_card)) % 8
        return cls(sym, m_card, pad)

    @property
    def bits_per_symbol(self) -> int:
        return _bits_per_symbol(self.m_card)

    @property
    def length(self) -> int:
        return len(self.symbols)

    def _all_bits(self) -> np.ndarray:
        shifts = np.arange(self.bits_per_symbol - 1, -1, -1, dtype=np.int64)
        return ((self.symbols[:, None] >> shifts) & 1).reshape(-1).astype(np.uint8)

    @property
    def bits(self) -> np.ndarray:
        full = self._all_bits()
        return full[: len(full) - self.pad]

    @property
    def pad_bits(self) -> np.ndarray:
        full = self._all_bits()
        return full[len(full) - self.pad :]


@dataclass(frozen=True)
class VerificationReport:
    b: float
    tampered: bool
    mismatch_count: int
    tolerance: float


@dataclass(frozen=True)
class InfringementReport:
    ber: float
    detected: bool
    threshold: float


class MarkResult(NamedTuple):
    watermarked: WeightTensor
    info: WatermarkInfo
    key: SecretKey


def _chunked(fn: Callable[[np.ndarray], np.ndarray], positions: np.ndarray, workers: int) -> np.ndarray:
    """Apply an elementwise fn over contiguous chunks; output is independent of workers"""
    if len(positions) == 0:
        return np.zeros(0, dtype=np.float64)
    workers = max(1, min(int(workers), len(positions)))
    if workers == 1:
        return fn(positions)
    chunks = np.array_split(positions, workers)
    with ThreadPool(workers) as pool:
        parts = pool.map(fn, chunks)
    return np.concatenate(parts)


def _message_symbols(message: Union[WatermarkMessage, ArrayLike], m_card: int) -> np.ndarray:
    if isinstance(message, WatermarkMessage):
        if message.m_card != m_card:
            raise DomainError(f"message alphabet {message.m_card} differs from |M|={m_card}")
        return message.symbols
    return np.asarray(message, dtype=np.int64).reshape(-1)


def mark(
    weights: WeightTensor,
    message: Union[WatermarkMessage, ArrayLike],
    params: QimParams,
    cl: int,
    workers: int = RQIM_WORKERS,
) -> MarkResult:
    """Embed message symbols at the keyed locations; alpha stays with the caller"""
    validate_reversible(params)
    _bits_per_symbol(params.m_card)
    symbols = _message_symbols(message, params.m_card)
    locations = construct_locations(cl, len(symbols), weights.count)
    values = weights.as_float64()
    idx = locations.indices

    def embed(part: np.ndarray) -> np.ndarray:
        return np.asarray(rqim_embed(values[idx[part]], symbols[part], params).watermarked)

    out = values.copy()
    out[idx] = _chunked(embed, np.arange(len(idx)), workers)

    info = WatermarkInfo(length=len(symbols), m_card=params.m_card)
    key = SecretKey(k=params.k, cl=cl, delta=params.delta)
    logger.info(f"Marked {info.length} symbols (|M|={info.m_card}) into {weights.count} weights")
    return MarkResult(weights.with_elements(out), info, key)


def _locations(weights: WeightTensor, info: WatermarkInfo, sk: SecretKey) -> LocationSequence:
    if info.length > weights.count:
        raise FormatError(f"watermark length {info.length} exceeds tensor size {weights.count}")
    return construct_locations(sk.cl, info.length, weights.count)


def extract(
    watermarked: WeightTensor, info: WatermarkInfo, sk: SecretKey, workers: int = RQIM_WORKERS
) -> WatermarkMessage:
    """Decode the symbols at the keyed locations; needs no alpha"""
    idx = _locations(watermarked, info, sk).indices
    params = QimParams(delta=sk.delta, m_card=info.m_card, k=sk.k)
    values = watermarked.as_float64()

    def decode(part: np.ndarray) -> np.ndarray:
        return np.asarray(rqim_extract(values[idx[part]], params), dtype=np.int64)

    symbols = _chunked(decode, np.arange(len(idx)), workers).astype(np.int64)
    logger.debug(f"Extracted {len(symbols)} symbols")
    return WatermarkMessage.from_symbols(symbols, info.m_card)


def restore(
    watermarked: WeightTensor,
    info: WatermarkInfo,
    sk: SecretKey,
    alpha: float,
    workers: int = RQIM_WORKERS,
) -> WeightTensor:
    """Recover the cover at the keyed locations"""
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1) for recovery, got {alpha}")
    idx = _locations(watermarked, info, sk).indices
    params = QimParams(delta=sk.delta, m_card=info.m_card, alpha=alpha, k=sk.k)
    values = watermarked.as_float64()

    def recover(part: np.ndarray) -> np.ndarray:
        return np.asarray(rqim_recover(values[idx[part]], params))

    out = values.copy()
    out[idx] = _chunked(recover, np.arange(len(idx)), workers)
    return watermarked.with_elements(out)


def _check_comparable(a: WeightTensor, b: WeightTensor) -> None:
    if a.count != b.count:
        raise FormatError(f"tensor sizes differ: {a.count} vs {b.count}")
    if a.precision is not b.precision:
        raise FormatError(f"tensor precisions differ: {a.precision.name} vs {b.precision.name}")


def _report(mismatch: np.ndarray, tolerance: float) -> VerificationReport:
    count = int(np.count_nonzero(mismatch))
    b = count / len(mismatch) if len(mismatch) else 0.0
    return VerificationReport(b=b, tampered=count > 0, mismatch_count=count, tolerance=tolerance)


def diff(a: WeightTensor, b: WeightTensor, tolerance: Optional[float] = None) -> VerificationReport:
    """Fraction of elements with |a - b| > tolerance * max(1, |a|)"""
    _check_comparable(a, b)
    tol = default_tolerance(a.precision) if tolerance is None else tolerance
    x, y = a.as_float64(), b.as_float64()
    return _report(np.abs(x - y) > tol * np.maximum(1.0, np.abs(x)), tol)


def verify_integrity_noiseless(
    watermarked: WeightTensor,
    info: WatermarkInfo,
    sk: SecretKey,
    alpha: float,
    original: WeightTensor,
    tolerance: Optional[float] = None,
    workers: int = RQIM_WORKERS,
) -> VerificationReport:
    restored = restore(watermarked, info, sk, alpha, workers)
    report = diff(original, restored, tolerance)
    logger.info(f"Noiseless verification: b={report.b:g}, tampered={report.tampered}")
    return report


def verify_integrity_noisy(
    received: WeightTensor,
    info: WatermarkInfo,
    sk: SecretKey,
    alpha: float,
    original: WeightTensor,
    noise_bound: float,
    tolerance: Optional[float] = None,
    workers: int = RQIM_WORKERS,
) -> VerificationReport:
    """Restore, then allow beta/(1 - alpha) at marked positions and beta elsewhere"""
    if noise_bound < 0:
        raise DomainError(f"noise bound must be non-negative, got {noise_bound}")
    params = QimParams(delta=sk.delta, m_card=info.m_card, alpha=alpha, k=sk.k)
    margin = decision_margin(params)
    if noise_bound >= margin:
        raise UnsupportedChannelError(
            f"noise bound {noise_bound} is not below the decision margin {margin}"
        )
    _check_comparable(original, received)

    restored = restore(received, info, sk, alpha, workers)
    tol = default_tolerance(original.precision) if tolerance is None else tolerance
    x = original.as_float64()
    allowance = np.full(original.count, float(noise_bound))
    allowance[_locations(received, info, sk).indices] = noise_bound / (1.0 - alpha)
    residual = np.abs(restored.as_float64() - x)
    report = _report(residual > allowance + tol * np.maximum(1.0, np.abs(x)), tol)
    logger.info(f"Noisy verification (beta={noise_bound:g}): b={report.b:g}, tampered={report.tampered}")
    return report


def infringement_check(
    suspect: WeightTensor,
    info: WatermarkInfo,
    sk: SecretKey,
    original_message: Union[WatermarkMessage, ArrayLike],
    threshold: float = DEFAULT_THRESHOLD,
    workers: int = RQIM_WORKERS,
) -> InfringementReport:
    """Symbol error rate of the extracted watermark against the owner's message"""
    expected = _message_symbols(original_message, info.m_card)
    if len(expected) != info.length:
        raise FormatError(f"original message has {len(expected)} symbols, info says {info.length}")
    extracted = extract(suspect, info, sk, workers)
    rate = ber(extracted.symbols, expected)
    report = InfringementReport(ber=rate, detected=rate <= threshold, threshold=threshold)
    logger.info(f"Infringement check: BER={rate:.4f}, detected={report.detected}")
    return report
