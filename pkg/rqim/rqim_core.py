"""Uniform quantizer, conventional QIM and reversible QIM on scalars or arrays.

All functions broadcast over numpy arrays; a scalar input gives a float back.
Arithmetic is done in float64 whatever the precision of the caller's data.
"""
import logging
import math
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from numpy.typing import ArrayLike

from .errors import CapacityError, DomainError

logger = logging.getLogger(__name__)

Real = Union[float, np.ndarray]
Symbol = Union[int, np.ndarray]


@dataclass(frozen=True)
class QimParams:
    """Quantizer geometry: step size, alphabet size, scaling factor, dither"""

    delta: float
    m_card: int = 2
    alpha: float = 1.0
    k: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.delta) or self.delta <= 0:
            raise DomainError(f"step size must be positive and finite, got {self.delta}")
        if int(self.m_card) != self.m_card or self.m_card < 2:
            raise DomainError(f"alphabet size must be an integer >= 2, got {self.m_card}")
        if not 0 < self.alpha <= 1:
            raise DomainError(f"scaling factor must lie in (0, 1], got {self.alpha}")
        if not math.isfinite(self.k):
            raise DomainError(f"dither must be finite, got {self.k}")

        # dither is periodic in the lattice
        k = float(self.k) % float(self.delta)
        if k >= self.delta:
            k = 0.0
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "m_card", int(self.m_card))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "k", k)

    @property
    def reversible(self) -> bool:
        """True when alpha lies in ((|M|-1)/|M|, 1)"""
        return (self.m_card - 1) / self.m_card < self.alpha < 1.0

    @property
    def step(self) -> float:
        """Spacing between neighbouring codewords of the union of cosets"""
        return self.delta / self.m_card


@dataclass(frozen=True)
class CodewordOffset:
    """Coset offset d_m of one symbol; its lattice is d_m + delta*Z"""

    symbol: int
    offset: float


@dataclass(frozen=True)
class EmbedRecord:
    """Result of reversible embedding.

    Fields are floats for a scalar embedding and equal-length arrays for a
    sequence embedding.
    """

    watermarked: Real
    quant_point: Real
    quant_error: Real


def validate_reversible(params: QimParams) -> None:
    """Raise DomainError unless params allow exact recovery"""
    if not params.reversible:
        lower = (params.m_card - 1) / params.m_card
        raise DomainError(
            f"alpha={params.alpha} violates the reversibility constraint "
            f"{lower:g} < alpha < 1 for |M|={params.m_card}"
        )


def _finite(x: ArrayLike) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DomainError("input contains non-finite values")
    return arr


def _symbols(m: ArrayLike, params: QimParams) -> np.ndarray:
    arr = np.asarray(m)
    if arr.dtype.kind not in "iu":
        if arr.size and not np.all(np.equal(np.mod(arr, 1), 0)):
            raise DomainError("symbols must be integers")
        arr = arr.astype(np.int64)
    if arr.size and (np.any(arr < 0) or np.any(arr >= params.m_card)):
        raise DomainError(f"symbol out of range [0, {params.m_card})")
    return arr.astype(np.int64)


def _out(arr: np.ndarray) -> Real:
    return float(arr) if np.ndim(arr) == 0 else arr


def _round_half_away(v: np.ndarray) -> np.ndarray:
    t = np.trunc(v)
    frac = v - t
    return t + np.where(np.abs(frac) >= 0.5, np.sign(v), 0.0)


def _offsets(symbols: np.ndarray, params: QimParams) -> np.ndarray:
    return (2 * symbols + 1) * params.delta / (2 * params.m_card) - params.delta / 2


def _coset_point(s: np.ndarray, d: np.ndarray, params: QimParams) -> np.ndarray:
    shifted = s - d - params.k
    return params.delta * _round_half_away(shifted / params.delta) + d + params.k


def uniform_quantize(x: ArrayLike, delta: float) -> Real:
    """Nearest multiple of delta, ties broken away from zero"""
    if not delta > 0:
        raise DomainError(f"step size must be positive, got {delta}")
    arr = _finite(x)
    return _out(delta * _round_half_away(arr / delta))


def codeword_offset(m: int, params: QimParams) -> CodewordOffset:
    """Offset d_m of symbol m"""
    sym = _symbols(m, params)
    return CodewordOffset(symbol=int(sym), offset=float(_offsets(sym, params)))


def qim_embed(s: ArrayLike, m: Symbol, params: QimParams) -> Real:
    """Move s to the nearest point of its symbol's dithered lattice (alpha ignored)"""
    cover = _finite(s)
    sym = _symbols(m, params)
    return _out(_coset_point(cover, _offsets(sym, params), params))


def qim_decode(y: ArrayLike, params: QimParams) -> Tuple[Symbol, Real]:
    """Minimum-distance decoder over all cosets.

    Returns the symbol of the globally nearest dithered codeword and the
    codeword itself. Equidistant inputs resolve to the smaller symbol.
    """
    received = _finite(y)
    d0 = params.delta / (2 * params.m_card) - params.delta / 2
    v = (received - d0 - params.k) / params.step
    lo = np.floor(v)
    frac = v - lo
    sym_lo = np.mod(lo, params.m_card).astype(np.int64)
    sym_hi = np.mod(lo + 1, params.m_card).astype(np.int64)
    choose_hi = (frac > 0.5) | ((frac == 0.5) & (sym_hi < sym_lo))
    symbol = np.where(choose_hi, sym_hi, sym_lo)

    # same arithmetic as embedding so noiseless recovery cancels exactly
    point = _coset_point(received, _offsets(symbol, params), params)
    if np.ndim(symbol) == 0:
        return int(symbol), float(point)
    return symbol, point


def rqim_embed(s: ArrayLike, m: Symbol, params: QimParams) -> EmbedRecord:
    """Reversible embedding: alpha * Q_(m,k)(s) + (1 - alpha) * s"""
    cover = _finite(s)
    sym = _symbols(m, params)
    q = _coset_point(cover, _offsets(sym, params), params)
    watermarked = params.alpha * q + (1.0 - params.alpha) * cover
    return EmbedRecord(
        watermarked=_out(watermarked),
        quant_point=_out(q),
        quant_error=_out(cover - q),
    )


def rqim_extract(y: ArrayLike, params: QimParams) -> Symbol:
    """Symbol carried by y"""
    symbol, _ = qim_decode(y, params)
    return symbol


def rqim_recover(y: ArrayLike, params: QimParams) -> Real:
    """Estimate the cover: (y - alpha * q) / (1 - alpha)"""
    if params.alpha >= 1.0:
        raise DomainError("alpha = 1 makes recovery division-degenerate")
    received = _finite(y)
    _, point = qim_decode(received, params)
    return _out((received - params.alpha * np.asarray(point)) / (1.0 - params.alpha))


def decision_margin(params: QimParams) -> float:
    """Largest |noise| under which extraction of an R-QIM sample stays correct"""
    margin = params.delta / (2 * params.m_card) - (1.0 - params.alpha) * params.delta / 2
    if margin < 0:
        raise DomainError(
            f"alpha={params.alpha} is below (|M|-1)/|M|; no decision margin exists"
        )
    return margin


def theoretical_mse(params: QimParams) -> Tuple[float, float]:
    """Embedding MSE as (alpha*delta^2/12, alpha^2*delta^2/12).

    The first value is the closed form quoted for R-QIM, the second the one
    obtained from s' - s = alpha * e with e uniform; Monte-Carlo decides.
    """
    base = params.delta ** 2 / 12.0
    return params.alpha * base, params.alpha ** 2 * base


def embed_sequence(
    cover: ArrayLike, message: ArrayLike, params: QimParams
) -> Tuple[np.ndarray, EmbedRecord]:
    """Embed message[i] into cover[i] for i < L, copy the rest"""
    host = _finite(cover).reshape(-1)
    symbols = _symbols(np.asarray(message).reshape(-1), params)
    if len(symbols) > len(host):
        raise CapacityError(
            f"message of {len(symbols)} symbols exceeds cover of {len(host)} elements"
        )
    if not params.reversible:
        logger.warning(f"Embedding with non-reversible alpha={params.alpha}")

    out = host.copy()
    record = rqim_embed(host[: len(symbols)], symbols, params)
    out[: len(symbols)] = record.watermarked
    return out, record
