"""Binary tensor files.

Layout:

    magic     4 bytes  b"S2DT"
    version   u8       FORMAT_VERSION
    endian    u8       0 = little, 1 = big (applies to dims and payload)
    dtype     u8       1 = float32, 2 = float64
    rank      u8
    dims      rank x u64
    payload   C-order values

Writers always emit little-endian files; readers accept either flag and
return native little-endian arrays.
"""
from __future__ import annotations

import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np

from core.exceptions import DataFormatError

logger = logging.getLogger(__name__)

MAGIC = b"S2DT"
FORMAT_VERSION = 1
_DTYPE_CODES = {1: np.dtype(np.float32), 2: np.dtype(np.float64)}
_CODE_FOR = {dtype.type: code for code, dtype in _DTYPE_CODES.items()}
_HEADER = struct.Struct("<4sBBBB")

PathLike = Union[str, Path]


def encode_tensor(array: np.ndarray) -> bytes:
    array = np.asarray(array)
    if array.dtype.type not in _CODE_FOR:
        raise DataFormatError(f"unsupported tensor dtype {array.dtype}; expected float32 or float64")
    if array.ndim > 255:
        raise DataFormatError(f"tensor rank {array.ndim} exceeds 255")
    code = _CODE_FOR[array.dtype.type]
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, 0, code, array.ndim)
    dims = struct.pack(f"<{array.ndim}Q", *array.shape)
    payload = np.ascontiguousarray(array, dtype=_DTYPE_CODES[code].newbyteorder("<")).tobytes()
    return header + dims + payload


def decode_tensor(blob: bytes, source: str = "<bytes>") -> np.ndarray:
    if len(blob) < _HEADER.size:
        raise DataFormatError(f"{source}: truncated header ({len(blob)} bytes)")
    magic, version, endian, code, rank = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise DataFormatError(f"{source}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise DataFormatError(f"{source}: unsupported format version {version}")
    if endian not in (0, 1):
        raise DataFormatError(f"{source}: unknown endianness flag {endian}")
    if code not in _DTYPE_CODES:
        raise DataFormatError(f"{source}: unknown dtype code {code}")
    order = "<" if endian == 0 else ">"
    offset = _HEADER.size
    dims_size = 8 * rank
    if len(blob) < offset + dims_size:
        raise DataFormatError(f"{source}: truncated dimension table")
    shape = struct.unpack_from(f"{order}{rank}Q", blob, offset)
    offset += dims_size
    dtype = _DTYPE_CODES[code].newbyteorder(order)
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    expected = count * dtype.itemsize
    if len(blob) - offset != expected:
        raise DataFormatError(f"{source}: payload holds {len(blob) - offset} bytes, header implies {expected}")
    array = np.frombuffer(blob, dtype=dtype, count=count, offset=offset).reshape(shape)
    return array.astype(_DTYPE_CODES[code].newbyteorder("<"))


def write_tensor_file(path: PathLike, array: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_tensor(array))
    logger.debug("Wrote tensor %s %s to %s", np.shape(array), np.asarray(array).dtype, path)
    return path


def read_tensor_file(path: PathLike) -> np.ndarray:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise DataFormatError(f"cannot read tensor file {path}: {exc}") from exc
    return decode_tensor(blob, source=str(path))


__all__ = [
    "FORMAT_VERSION",
    "MAGIC",
    "decode_tensor",
    "encode_tensor",
    "read_tensor_file",
    "write_tensor_file",
]
