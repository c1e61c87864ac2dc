"""Histogram-shifting baseline on digit-pair preprocessed weights"""
import logging
import math
from dataclasses import dataclass, replace
from decimal import ROUND_HALF_EVEN, Context, Decimal
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike
from scipy.stats import entropy

from .config import DEFAULT_DIGITS
from .errors import (
    CapacityError,
    CorruptionError,
    DomainError,
    FormatError,
    NoValleyError,
    RangeError,
)

logger = logging.getLogger(__name__)

HOST_MIN = -99
HOST_MAX = 99
_BINS = HOST_MAX - HOST_MIN + 1

# wide enough for the exact decimal expansion of any binary64 value
_EXACT = Context(prec=800)


@dataclass(frozen=True)
class HsParams:
    """Histogram peak and zero-count valley bounding the shifted interval"""

    peak: int
    valley: int

    def __post_init__(self):
        if not HOST_MIN <= self.peak <= HOST_MAX or not HOST_MIN <= self.valley <= HOST_MAX:
            raise DomainError(f"peak/valley must lie in [{HOST_MIN}, {HOST_MAX}]")
        if self.valley <= self.peak:
            raise DomainError(f"valley {self.valley} must exceed peak {self.peak}")


@dataclass(frozen=True)
class RegionMasks:
    """Host indices below / at / above the peak"""

    region_i: np.ndarray
    region_ii: np.ndarray
    region_iii: np.ndarray


@dataclass(frozen=True)
class PreprocessedHost:
    """Integer host in [-99, 99] plus what is needed to rebuild the weights.

    digits holds the q significant digits of every weight (one row each);
    residuals hold w - x for the q-digit decimal x, which is exact in binary
    floating point, so untouched weights come back bit for bit.
    """

    host_values: np.ndarray
    pair_index: int
    shift_v: int
    digits_count: int
    signs: np.ndarray
    leading_zeros: np.ndarray
    digits: np.ndarray
    residuals: np.ndarray
    dtype: np.dtype = np.dtype(np.float64)

    def with_values(self, values: ArrayLike) -> "PreprocessedHost":
        return replace(self, host_values=np.asarray(values, dtype=np.int64))

    def side_info(self) -> "PreprocessedHost":
        """Copy without the digit pair and host values (the host carries those)"""
        digits = self.digits.copy()
        digits[:, self.pair_index - 1 : self.pair_index + 1] = 0
        return replace(self, host_values=np.zeros_like(self.host_values), digits=digits)

    def __len__(self) -> int:
        return len(self.signs)


def decompose_weight(w: float, q: int) -> Tuple[int, int, str]:
    """Split |w| < 1 into (sign, leading zeros p, q significant digits)"""
    if q < 2:
        raise DomainError(f"digit count must be >= 2, got {q}")
    if not math.isfinite(w) or abs(w) >= 1:
        raise DomainError(f"weight {w} is outside (-1, 1)")
    if w == 0:
        return 1, 0, "0" * q

    sign = -1 if w < 0 else 1
    d = Decimal(abs(w))
    p = -d.adjusted() - 1
    n = int(d.scaleb(p + q, context=_EXACT).to_integral_value(rounding=ROUND_HALF_EVEN, context=_EXACT))
    if n == 10 ** q:
        # rounding carried into a new leading digit
        if p == 0:
            raise DomainError(f"weight {w} rounds to 1 at {q} digits")
        p -= 1
        n = 10 ** (q - 1)
    return sign, p, str(n).zfill(q)


def _digit_matrix(digit_strings: Union[Sequence[str], np.ndarray]) -> np.ndarray:
    if isinstance(digit_strings, np.ndarray) and digit_strings.ndim == 2:
        return digit_strings.astype(np.int64)
    strings = list(digit_strings)
    if not strings:
        raise DomainError("at least one weight is required")
    q = len(strings[0])
    if any(len(s) != q for s in strings):
        raise DomainError("digit strings must share one length")
    raw = np.frombuffer("".join(strings).encode("ascii"), dtype=np.uint8)
    return (raw.astype(np.int64) - ord("0")).reshape(len(strings), q)


def _pair_values(digits: np.ndarray, c: int) -> np.ndarray:
    return 10 * digits[:, c - 1] + digits[:, c]


def rank_pair_indices(digit_strings: Union[Sequence[str], np.ndarray]) -> List[int]:
    """Pair positions 1..q-1 by increasing entropy, ties by position"""
    digits = _digit_matrix(digit_strings)
    if digits.shape[0] == 0:
        raise DomainError("at least one weight is required")
    q = digits.shape[1]
    if q < 2:
        raise DomainError(f"digit count must be >= 2, got {q}")

    entropies = []
    for c in range(1, q):
        counts = np.bincount(_pair_values(digits, c), minlength=100)
        # rounded so permuted but equal distributions tie exactly
        entropies.append((round(float(entropy(counts, base=2)), 10), c))
    return [c for _, c in sorted(entropies)]


def select_pair_index(digit_strings: Union[Sequence[str], np.ndarray]) -> int:
    """1-based position c whose digit pair has minimum Shannon entropy"""
    c = rank_pair_indices(digit_strings)[0]
    logger.debug(f"Selected digit pair c={c}")
    return c


def _mantissas(digits: np.ndarray) -> List[int]:
    q = digits.shape[1]
    raw = (digits + ord("0")).astype(np.uint8).tobytes()
    return [int(raw[i * q : (i + 1) * q]) for i in range(digits.shape[0])]


def _assemble(signs: np.ndarray, leading_zeros: np.ndarray, digits: np.ndarray) -> np.ndarray:
    q = digits.shape[1]
    values = [
        s * m / 10 ** (p + q)
        for s, m, p in zip(signs.tolist(), _mantissas(digits), leading_zeros.tolist())
    ]
    return np.asarray(values, dtype=np.float64)


def _as_weights(weights: ArrayLike) -> Tuple[np.ndarray, np.dtype]:
    arr = np.asarray(weights)
    dtype = arr.dtype if arr.dtype in (np.float32, np.float64) else np.dtype(np.float64)
    w = arr.astype(np.float64).reshape(-1)
    if not np.all(np.isfinite(w)):
        raise DomainError("weights contain non-finite values")
    if np.any(np.abs(w) >= 1):
        raise DomainError("every weight must satisfy |w| < 1")
    return w, dtype


def _digitize(weights: ArrayLike, q: int) -> PreprocessedHost:
    w, dtype = _as_weights(weights)
    n = len(w)
    signs = np.empty(n, dtype=np.int64)
    leading = np.empty(n, dtype=np.int64)
    strings = []
    for i, value in enumerate(w.tolist()):
        signs[i], leading[i], s = decompose_weight(value, q)
        strings.append(s)
    digits = _digit_matrix(strings) if n else np.zeros((0, q), dtype=np.int64)
    residuals = w - _assemble(signs, leading, digits)
    return PreprocessedHost(
        host_values=np.zeros(n, dtype=np.int64),
        pair_index=0,
        shift_v=0,
        digits_count=q,
        signs=signs,
        leading_zeros=leading,
        digits=digits,
        residuals=residuals,
        dtype=dtype,
    )


def _apply_pair(digitized: PreprocessedHost, shift_v: int, pair_index: Optional[int]) -> PreprocessedHost:
    q = digitized.digits_count
    c = pair_index if pair_index is not None else select_pair_index(digitized.digits)
    if not 1 <= c <= q - 1:
        raise DomainError(f"pair index must lie in [1, {q - 1}], got {c}")
    h = digitized.signs * _pair_values(digitized.digits, c) + shift_v
    if h.size and (h.min() < HOST_MIN or h.max() > HOST_MAX):
        raise RangeError(
            f"V={shift_v} pushes host values outside [{HOST_MIN}, {HOST_MAX}]; choose a different V"
        )
    return replace(digitized, host_values=h.astype(np.int64), pair_index=c, shift_v=shift_v)


def preprocess(
    weights: ArrayLike, q: int = DEFAULT_DIGITS, shift_v: int = 0, pair_index: Optional[int] = None
) -> PreprocessedHost:
    """Turn weights into integer host values sign*(10*n_c + n_{c+1}) + V"""
    if q < 2:
        raise DomainError(f"digit count must be >= 2, got {q}")
    return _apply_pair(_digitize(weights, q), shift_v, pair_index)


def deprocess(host: PreprocessedHost) -> np.ndarray:
    """Write host values back into their digit pairs and rebuild the weights"""
    raw = np.asarray(host.host_values, dtype=np.int64) - host.shift_v
    if raw.size and np.abs(raw).max() > HOST_MAX:
        raise CorruptionError("host value cannot be re-digitized (possible tampering)")
    pair = np.abs(raw)
    signs = np.where(raw > 0, 1, np.where(raw < 0, -1, host.signs))
    digits = host.digits.copy()
    c = host.pair_index
    digits[:, c - 1] = pair // 10
    digits[:, c] = pair % 10
    weights = _assemble(signs, host.leading_zeros, digits) + host.residuals
    return weights.astype(host.dtype)


def reprocess(weights: ArrayLike, side: PreprocessedHost) -> np.ndarray:
    """Read the host values back out of a (possibly watermarked) tensor"""
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if len(w) != len(side):
        raise FormatError(f"tensor has {len(w)} elements, side info describes {len(side)}")
    q = side.digits_count
    c = side.pair_index
    decimals = w - side.residuals
    values = np.empty(len(w), dtype=np.int64)
    for i, (x, p, s) in enumerate(zip(decimals.tolist(), side.leading_zeros.tolist(), side.signs.tolist())):
        if not math.isfinite(x):
            raise CorruptionError(f"element {i} is not finite")
        n = int(Decimal(abs(x)).scaleb(p + q, context=_EXACT).to_integral_value(
            rounding=ROUND_HALF_EVEN, context=_EXACT))
        digits = str(n).zfill(q)
        if len(digits) > q:
            raise CorruptionError(f"element {i} no longer fits its digit layout")
        sign = 1 if x > 0 else (-1 if x < 0 else s)
        values[i] = sign * int(digits[c - 1 : c + 1]) + side.shift_v
    return values


def normalize_decimal_exponent(weights: ArrayLike) -> Tuple[np.ndarray, int]:
    """Divide by the smallest power of ten bringing every |w| below 1"""
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(w)):
        raise DomainError("weights contain non-finite values")
    peak = float(np.abs(w).max()) if w.size else 0.0
    exponent = 0 if peak < 1 else int(math.floor(math.log10(peak))) + 1
    scaled = w / 10.0 ** exponent
    while scaled.size and np.abs(scaled).max() >= 1:
        exponent += 1
        scaled = w / 10.0 ** exponent
    return scaled, exponent


def _histogram(host_values: ArrayLike) -> np.ndarray:
    h = np.asarray(host_values, dtype=np.int64).reshape(-1)
    if h.size == 0:
        raise DomainError("host is empty")
    if h.min() < HOST_MIN or h.max() > HOST_MAX:
        raise DomainError(f"host values must lie in [{HOST_MIN}, {HOST_MAX}]")
    return np.bincount(h - HOST_MIN, minlength=_BINS)


def choose_peak_valley(host_values: ArrayLike, shift_v: int = 0) -> HsParams:
    """Most populated bin (smallest on ties) and the first empty bin above it.

    The valley is also capped at 99 + V when V < 0, since embedded values up
    to the valley must still write back as a two-digit pair.
    """
    counts = _histogram(host_values)
    peak_bin = int(np.argmax(counts))
    peak = peak_bin + HOST_MIN
    limit = HOST_MAX + min(0, int(shift_v))
    empty = np.flatnonzero(counts[peak_bin + 1 :] == 0)
    if empty.size == 0:
        raise NoValleyError(f"no empty histogram bin above peak {peak}")
    valley = peak + 1 + int(empty[0])
    if valley > limit:
        raise NoValleyError(
            f"first empty bin {valley} above peak {peak} exceeds {limit} for V={shift_v}"
        )
    return HsParams(peak=peak, valley=valley)


def _bits(bits: ArrayLike) -> np.ndarray:
    b = np.asarray(bits).reshape(-1)
    if b.size and not np.all((b == 0) | (b == 1)):
        raise DomainError("watermark bits must be 0 or 1")
    return b.astype(np.int64)


def hs_embed(host_values: ArrayLike, bits: ArrayLike, params: HsParams) -> np.ndarray:
    """Shift (peak, valley) right by one and carry bits on the peak bin"""
    h = np.asarray(host_values, dtype=np.int64).reshape(-1)
    b = _bits(bits)
    if np.any(h == params.valley):
        raise DomainError(f"valley bin {params.valley} is not empty")
    slots = np.flatnonzero(h == params.peak)
    if len(b) > len(slots):
        raise CapacityError(f"{len(b)} bits exceed HS capacity of {len(slots)}")
    out = h.copy()
    out[(h > params.peak) & (h < params.valley)] += 1
    out[slots[: len(b)]] += b
    return out


def hs_extract(watermarked: ArrayLike, params: HsParams) -> np.ndarray:
    """Bits read from peak / peak+1 values in index order"""
    h = np.asarray(watermarked, dtype=np.int64).reshape(-1)
    carriers = h[(h == params.peak) | (h == params.peak + 1)]
    return (carriers == params.peak + 1).astype(np.uint8)


def hs_recover(watermarked: ArrayLike, params: HsParams) -> np.ndarray:
    """Undo the shift: values in (peak, valley] move down by one"""
    h = np.asarray(watermarked, dtype=np.int64).reshape(-1)
    out = h.copy()
    out[(h > params.peak) & (h <= params.valley)] -= 1
    return out


def hs_capacity(host_values: ArrayLike) -> int:
    """Number of host values equal to the histogram peak"""
    return int(_histogram(host_values).max())


def region_masks(host_values: ArrayLike, peak: int) -> RegionMasks:
    h = np.asarray(host_values, dtype=np.int64).reshape(-1)
    return RegionMasks(region_i=h < peak, region_ii=h == peak, region_iii=h > peak)


def prepare_host(
    weights: ArrayLike, q: int = DEFAULT_DIGITS, pair_index: Optional[int] = None
) -> Tuple[PreprocessedHost, HsParams]:
    """Preprocess with V = 0, falling back to V in [-9, 9] on range/valley errors.

    Without an explicit pair_index the positions are tried in order of
    increasing entropy until one admits a valley.
    """
    if q < 2:
        raise DomainError(f"digit count must be >= 2, got {q}")
    digitized = _digitize(weights, q)
    if pair_index is not None:
        candidates = [pair_index]
    else:
        candidates = rank_pair_indices(digitized.digits)

    last_error: Exception = NoValleyError("no admissible V found")
    for n, c in enumerate(candidates):
        for shift_v in [0] + [v for i in range(1, 10) for v in (i, -i)]:
            try:
                host = _apply_pair(digitized, shift_v, c)
                params = choose_peak_valley(host.host_values, shift_v)
            except (RangeError, NoValleyError) as e:
                logger.debug(f"c={c} V={shift_v} rejected: {e}")
                last_error = e
                continue
            if shift_v != 0 or n > 0:
                logger.warning(f"Host search settled on c={c}, V={shift_v}")
            return host, params
    raise type(last_error)(f"no pair position and V in [-9, 9] yield a valid host: {last_error}")


def hs_mark_tensor(
    weights: ArrayLike, bits: ArrayLike, q: int = DEFAULT_DIGITS, pair_index: Optional[int] = None
) -> Tuple[np.ndarray, PreprocessedHost, HsParams]:
    """Preprocess, embed and rebuild weights; returns (W_wtm, side info, params)"""
    arr = np.asarray(weights)
    if arr.dtype == np.float32 and q > 6:
        raise DomainError("binary32 weights carry at most 6 reliable digits; use q <= 6")
    host, params = prepare_host(arr, q, pair_index)
    marked = hs_embed(host.host_values, bits, params)
    logger.info(
        f"HS embedded {len(_bits(bits))} bits (capacity {hs_capacity(host.host_values)}, "
        f"c={host.pair_index}, V={host.shift_v}, peak={params.peak}, valley={params.valley})"
    )
    return deprocess(host.with_values(marked)), host.side_info(), params


def hs_extract_tensor(
    watermarked: ArrayLike, side: PreprocessedHost, params: HsParams, length: int
) -> np.ndarray:
    bits = hs_extract(reprocess(watermarked, side), params)
    if len(bits) < length:
        raise FormatError(f"only {len(bits)} carrier values found, {length} bits expected")
    return bits[:length]


def hs_restore_tensor(watermarked: ArrayLike, side: PreprocessedHost, params: HsParams) -> np.ndarray:
    values = hs_recover(reprocess(watermarked, side), params)
    return deprocess(side.with_values(values))
