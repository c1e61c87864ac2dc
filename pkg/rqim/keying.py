"""Location sequences from the clue, and the key / info / alpha files"""
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, Optional, Union

import numpy as np

from .errors import CapacityError, DomainError, ParseError

logger = logging.getLogger(__name__)

KEY_VERSION = 1

_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_U64 = 1 << 64

PathLike = Union[str, Path]


class SplitMix64:
    """SplitMix64 generator; numpy uint64 arithmetic wraps modulo 2**64"""

    def __init__(self, seed: int):
        if not 0 <= int(seed) < _U64:
            raise DomainError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.state = int(seed)

    def next_block(self, n: int) -> np.ndarray:
        """Next n outputs as a uint64 array"""
        if n <= 0:
            return np.zeros(0, dtype=np.uint64)
        steps = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(_GAMMA)
        z = steps + np.uint64(self.state)
        self.state = (self.state + n * _GAMMA) % _U64
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))

    def next(self) -> int:
        return int(self.next_block(1)[0])


@dataclass(frozen=True)
class SecretKey:
    """sk = [k, cl, delta]; alpha is kept in its own file"""

    k: float
    cl: int
    delta: float

    def __post_init__(self):
        if not 0 <= int(self.cl) < _U64:
            raise DomainError(f"clue must be an unsigned 64-bit integer, got {self.cl}")
        if not math.isfinite(self.delta) or self.delta <= 0:
            raise DomainError(f"step size must be positive and finite, got {self.delta}")
        if not math.isfinite(self.k):
            raise DomainError(f"dither must be finite, got {self.k}")


@dataclass(frozen=True)
class WatermarkInfo:
    length: int
    m_card: int

    def __post_init__(self):
        if self.length < 0:
            raise DomainError(f"watermark length must be >= 0, got {self.length}")
        if self.m_card < 2:
            raise DomainError(f"alphabet size must be >= 2, got {self.m_card}")


@dataclass(frozen=True)
class LocationSequence:
    """L distinct embedding indices in [0, N)"""

    indices: np.ndarray
    cover_size: int

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class HsKey:
    """Parameters the HS baseline needs for extraction and recovery"""

    q: int
    pair_index: int
    shift_v: int
    peak: int
    valley: int


def construct_locations(cl: int, length: int, cover_size: int) -> LocationSequence:
    """First L entries of a Fisher-Yates shuffle of [0, N) driven by SplitMix64(cl)"""
    if length < 0 or cover_size < 0:
        raise DomainError("length and cover size must be non-negative")
    if length > cover_size:
        raise CapacityError(f"{length} locations requested from a cover of {cover_size}")

    perm = np.arange(cover_size, dtype=np.int64)
    draws = SplitMix64(cl).next_block(length).tolist()
    for i, draw in enumerate(draws):
        j = draw % (cover_size - i) + i
        perm[i], perm[j] = perm[j], perm[i]

    indices = perm[:length].copy()
    indices.setflags(write=False)
    logger.debug(f"Constructed {length} locations over a cover of {cover_size}")
    return LocationSequence(indices=indices, cover_size=cover_size)


def _float(value: str) -> float:
    v = value.strip()
    return float.fromhex(v) if "0x" in v.lower() else float(v)


def _uint(value: str) -> int:
    return int(value.strip(), 0)


def _signed(value: str) -> int:
    return int(value.strip())


def _parse_fields(text: str, fields: Dict[str, Callable[[str], object]]) -> Dict[str, object]:
    parsed: Dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError("expected 'name = value'", line=lineno)
        name, _, value = (part.strip() for part in line.partition("="))
        if name not in fields:
            raise ParseError("unknown name", line=lineno, field=name)
        if name in parsed:
            raise ParseError("duplicate name", line=lineno, field=name)
        try:
            parsed[name] = fields[name](value)
        except ValueError as e:
            raise ParseError(f"bad value {value!r}: {e}", line=lineno, field=name) from e

    for name in fields:
        if name not in parsed:
            raise ParseError("missing required name", field=name)
    return parsed


def _check_version(parsed: Dict[str, object]) -> None:
    if parsed["version"] != KEY_VERSION:
        raise ParseError(f"unsupported version {parsed['version']}", field="version")


def _build(factory, **kwargs):
    try:
        return factory(**kwargs)
    except DomainError as e:
        raise ParseError(str(e)) from e


def serialize_key(sk: SecretKey) -> str:
    return (
        f"version = {KEY_VERSION}\n"
        f"k = {float(sk.k).hex()}\n"
        f"cl = {int(sk.cl)}\n"
        f"delta = {float(sk.delta).hex()}\n"
    )


def parse_key(text: str) -> SecretKey:
    parsed = _parse_fields(text, {"version": _signed, "k": _float, "cl": _uint, "delta": _float})
    _check_version(parsed)
    return _build(SecretKey, k=parsed["k"], cl=parsed["cl"], delta=parsed["delta"])


def serialize_info(info: WatermarkInfo) -> str:
    return f"length = {info.length}\nm_card = {info.m_card}\n"


def parse_info(text: str) -> WatermarkInfo:
    parsed = _parse_fields(text, {"length": _signed, "m_card": _signed})
    return _build(WatermarkInfo, length=parsed["length"], m_card=parsed["m_card"])


def serialize_alpha(alpha: float) -> str:
    return f"alpha = {float(alpha).hex()}\n"


def parse_alpha(text: str) -> float:
    alpha = _parse_fields(text, {"alpha": _float})["alpha"]
    if not 0 < alpha < 1:
        raise ParseError(f"alpha must lie in (0, 1), got {alpha}", field="alpha")
    return alpha


def serialize_hs_key(key: HsKey) -> str:
    return (
        f"version = {KEY_VERSION}\n"
        f"q = {key.q}\n"
        f"pair_index = {key.pair_index}\n"
        f"shift_v = {key.shift_v}\n"
        f"peak = {key.peak}\n"
        f"valley = {key.valley}\n"
    )


def parse_hs_key(text: str) -> HsKey:
    names = ("version", "q", "pair_index", "shift_v", "peak", "valley")
    parsed = _parse_fields(text, {name: _signed for name in names})
    _check_version(parsed)
    key = HsKey(**{name: parsed[name] for name in names[1:]})
    if not 1 <= key.pair_index < key.q:
        raise ParseError(f"pair_index must lie in [1, {key.q - 1}]", field="pair_index")
    if key.valley <= key.peak:
        raise ParseError("valley must exceed peak", field="valley")
    return key


def _read(path: PathLike) -> str:
    return Path(path).read_text(encoding="utf-8")


def _write(path: PathLike, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def write_key_files(
    sk: SecretKey,
    info: WatermarkInfo,
    key_path: PathLike,
    info_path: PathLike,
    alpha: Optional[float] = None,
    alpha_path: Optional[PathLike] = None,
) -> None:
    _write(key_path, serialize_key(sk))
    write_info(info, info_path)
    if alpha_path is not None and alpha is not None:
        _write(alpha_path, serialize_alpha(alpha))
    logger.info(f"Wrote key to {key_path} and watermark info to {info_path}")


def write_info(info: WatermarkInfo, path: PathLike) -> None:
    _write(path, serialize_info(info))
    logger.debug(f"Wrote watermark info (L={info.length}, |M|={info.m_card}) to {path}")


def read_key(path: PathLike) -> SecretKey:
    return parse_key(_read(path))


def read_info(path: PathLike) -> WatermarkInfo:
    return parse_info(_read(path))


def read_alpha(path: PathLike) -> float:
    return parse_alpha(_read(path))


def write_hs_key(key: HsKey, path: PathLike) -> None:
    _write(path, serialize_hs_key(key))


def read_hs_key(path: PathLike) -> HsKey:
    return parse_hs_key(_read(path))
