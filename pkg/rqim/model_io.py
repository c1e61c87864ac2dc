"""Tensor container, payload codec, CSV output and HS side-info archives"""
import csv
import io
import logging
import struct
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import FormatError
from .hs_baseline import PreprocessedHost
from .schemes import Precision, WatermarkMessage, WeightTensor

logger = logging.getLogger(__name__)

MAGIC = b"RQWT"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sBBQ")

PathLike = Union[str, Path]


def write_tensor(tensor: WeightTensor) -> bytes:
    header = HEADER.pack(MAGIC, FORMAT_VERSION, int(tensor.precision), tensor.count)
    return header + tensor.elements.astype(tensor.precision.dtype).tobytes()


def read_tensor(data: bytes) -> WeightTensor:
    if len(data) < HEADER.size:
        raise FormatError(f"file of {len(data)} bytes is shorter than the {HEADER.size}-byte header")
    magic, version, dtype_code, count = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported tensor file version {version}")
    if dtype_code not in (Precision.BINARY32, Precision.BINARY64):
        raise FormatError(f"unknown dtype code {dtype_code}")
    return _decode_payload(data[HEADER.size :], Precision(dtype_code), count)


def _decode_payload(payload: bytes, precision: Precision, count: int) -> WeightTensor:
    expected = count * precision.dtype.itemsize
    if len(payload) != expected:
        raise FormatError(f"payload has {len(payload)} bytes, {expected} expected for {count} elements")
    values = np.frombuffer(payload, dtype=precision.dtype).copy()
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise FormatError(f"non-finite value at element {int(bad[0])}")
    return WeightTensor(values, precision)


def import_raw(data: bytes, precision: Precision, count: Optional[int] = None) -> WeightTensor:
    """Headerless little-endian float dump"""
    size = precision.dtype.itemsize
    if count is None:
        if len(data) % size:
            raise FormatError(f"raw dump of {len(data)} bytes is not a whole number of elements")
        count = len(data) // size
    return _decode_payload(data, precision, count)


def load_tensor(
    path: PathLike, raw: bool = False, precision: Precision = Precision.BINARY64, count: Optional[int] = None
) -> WeightTensor:
    data = Path(path).read_bytes()
    tensor = import_raw(data, precision, count) if raw else read_tensor(data)
    logger.debug(f"Loaded {tensor.count} {tensor.precision.name} weights from {path}")
    return tensor


def save_tensor(tensor: WeightTensor, path: PathLike) -> None:
    Path(path).write_bytes(write_tensor(tensor))
    logger.debug(f"Saved {tensor.count} weights to {path}")


def encode_message(text: str, m_card: int = 2) -> WatermarkMessage:
    """UTF-8 bytes, most-significant bit first, grouped into log2|M|-bit symbols"""
    raw = np.frombuffer(text.encode("utf-8"), dtype=np.uint8)
    return WatermarkMessage.from_bits(np.unpackbits(raw), m_card)


def decode_message(message: WatermarkMessage) -> str:
    if np.any(message.pad_bits):
        logger.warning("Nonzero pad bits in decoded watermark (possible corruption)")
    bits = message.bits
    whole = len(bits) - len(bits) % 8
    return np.packbits(bits[:whole]).tobytes().decode("utf-8", errors="replace")


def bits_to_text(bits: Iterable[int]) -> str:
    return "".join("1" if b else "0" for b in bits) + "\n"


def text_to_bits(text: str) -> np.ndarray:
    digits = text.strip()
    if any(ch not in "01" for ch in digits):
        raise FormatError("bit dump may only contain '0' and '1'")
    return np.frombuffer(digits.encode("ascii"), dtype=np.uint8) - ord("0")


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        text = repr(float(value))
        return text[:-2] if text.endswith(".0") else text
    return str(value)


def write_csv(rows: Sequence[Sequence], header: Optional[Sequence[str]] = None) -> bytes:
    """Deterministic CSV: '\\n' line ends, shortest round-trip floats"""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    width = len(header) if header is not None else None
    if header is not None:
        writer.writerow(header)
    for row in rows:
        if width is None:
            width = len(row)
        if len(row) != width:
            raise FormatError(f"ragged CSV row of {len(row)} fields, expected {width}")
        writer.writerow([format_value(v) for v in row])
    return buffer.getvalue().encode("utf-8")


def save_csv(path: PathLike, rows: Sequence[Sequence], header: Optional[Sequence[str]] = None) -> None:
    Path(path).write_bytes(write_csv(rows, header))


def save_hs_side_info(side: PreprocessedHost, path: PathLike) -> None:
    """numpy archive of the HS side info; the host values are not stored"""
    meta = np.array(
        [side.digits_count, side.pair_index, side.shift_v, int(Precision.from_dtype(side.dtype))],
        dtype=np.int64,
    )
    with open(path, "wb") as fh:
        np.savez(
            fh,
            meta=meta,
            signs=side.signs.astype(np.int8),
            leading_zeros=side.leading_zeros.astype(np.int64),
            digits=side.digits.astype(np.uint8),
            residuals=side.residuals.astype(np.float64),
        )


def load_hs_side_info(path: PathLike) -> PreprocessedHost:
    try:
        with np.load(path, allow_pickle=False) as archive:
            q, pair_index, shift_v, dtype_code = (int(v) for v in archive["meta"])
            signs = archive["signs"].astype(np.int64)
            leading = archive["leading_zeros"].astype(np.int64)
            digits = archive["digits"].astype(np.int64)
            residuals = archive["residuals"].astype(np.float64)
    except (KeyError, ValueError) as e:
        raise FormatError(f"malformed HS side info {path}: {e}") from e
    sizes = {len(signs), len(leading), len(residuals)}
    if digits.ndim != 2 or digits.shape != (len(signs), q) or len(sizes) != 1:
        raise FormatError(f"inconsistent HS side info arrays in {path}")
    try:
        precision = Precision(dtype_code)
    except ValueError as e:
        raise FormatError(f"unknown dtype code {dtype_code} in {path}") from e
    if not 1 <= pair_index < q:
        raise FormatError(f"pair index {pair_index} out of range in {path}")
    return PreprocessedHost(
        host_values=np.zeros(len(signs), dtype=np.int64),
        pair_index=pair_index,
        shift_v=shift_v,
        digits_count=q,
        signs=signs,
        leading_zeros=leading,
        digits=digits,
        residuals=residuals,
        dtype=precision.dtype,
    )
