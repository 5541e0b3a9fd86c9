"""Binary tensor container (``.bt``).

Layout, all little-endian::

    magic   4 bytes  b"BTEN"
    version u16
    dtype   u8       1=f32 2=f64 3=i32 4=u8
    rank    u8
    dims    u64 * rank
    payload row-major, element size * prod(dims) bytes
"""

from __future__ import annotations

import logging
import struct
from pathlib import Path
from typing import Final

import numpy as np
from numpy.typing import NDArray

from corrtrack.core.exceptions import StorageError, TensorFormatError

LOG = logging.getLogger(__name__)

MAGIC: Final[bytes] = b"BTEN"
VERSION: Final[int] = 1
HEADER: Final[struct.Struct] = struct.Struct("<4sHBB")

DTYPE_CODES: Final[dict[int, np.dtype]] = {
    1: np.dtype("<f4"),
    2: np.dtype("<f8"),
    3: np.dtype("<i4"),
    4: np.dtype("u1"),
}
CODE_FOR_KIND: Final[dict[str, int]] = {"float32": 1, "float64": 2, "int32": 3, "uint8": 4}


def encode_tensor(array: NDArray) -> bytes:
    """Serialize an array into container bytes.

    Booleans are stored as u8. Other dtypes must be one of f32, f64, i32, u8.

    Raises:
        TensorFormatError: If the dtype is not supported
    """
    array = np.asarray(array)
    if array.dtype == np.bool_:
        array = array.astype(np.uint8)
    code = CODE_FOR_KIND.get(array.dtype.name)
    if code is None:
        raise TensorFormatError(f"Unsupported dtype for .bt container: {array.dtype}")
    if array.ndim > 255:
        raise TensorFormatError(f"Rank {array.ndim} exceeds container limit")

    header = HEADER.pack(MAGIC, VERSION, code, array.ndim)
    dims = struct.pack(f"<{array.ndim}Q", *array.shape)
    payload = np.ascontiguousarray(array, dtype=DTYPE_CODES[code]).tobytes()
    return header + dims + payload


def decode_tensor(buffer: bytes, offset: int = 0) -> tuple[NDArray, int]:
    """Parse one container record starting at ``offset``.

    Returns:
        Tuple of (array, offset just past the record)

    Raises:
        TensorFormatError: On bad magic, unknown version/dtype or truncation
    """
    if len(buffer) - offset < HEADER.size:
        raise TensorFormatError("Truncated tensor header")
    magic, version, code, rank = HEADER.unpack_from(buffer, offset)
    if magic != MAGIC:
        raise TensorFormatError(f"Bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise TensorFormatError(f"Unsupported container version {version}")
    dtype = DTYPE_CODES.get(code)
    if dtype is None:
        raise TensorFormatError(f"Unknown dtype code {code}")
    offset += HEADER.size

    dims_size = 8 * rank
    if len(buffer) - offset < dims_size:
        raise TensorFormatError("Truncated tensor dims")
    shape = struct.unpack_from(f"<{rank}Q", buffer, offset)
    offset += dims_size

    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    nbytes = count * dtype.itemsize
    if len(buffer) - offset < nbytes:
        raise TensorFormatError(
            f"Payload length {len(buffer) - offset} shorter than expected {nbytes}"
        )
    array = np.frombuffer(buffer, dtype=dtype, count=count, offset=offset).reshape(shape)
    # Reason: frombuffer views are read-only and keep the whole file alive
    return array.astype(dtype.newbyteorder("="), copy=True), offset + nbytes


def write_tensor(path: Path, array: NDArray) -> None:
    """Write a single-record ``.bt`` file."""
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_tensor(array))
    except OSError as exc:
        raise StorageError(f"Failed to write {path}: {exc}") from exc


def read_tensor(path: Path) -> NDArray:
    """Read a single-record ``.bt`` file.

    Raises:
        StorageError: If the file cannot be read
        TensorFormatError: If the content is malformed or has trailing bytes
    """
    try:
        buffer = path.read_bytes()
    except OSError as exc:
        raise StorageError(f"Failed to read {path}: {exc}") from exc

    array, end = decode_tensor(buffer)
    if end != len(buffer):
        raise TensorFormatError(f"{path}: {len(buffer) - end} trailing bytes")
    return array
