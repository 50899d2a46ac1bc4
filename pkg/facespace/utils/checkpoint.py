"""
Binary record codec used by checkpoint files.

Layout (little-endian)::

    magic      4 bytes  b"SDSP"
    version    u32
    digest     32 bytes (SHA-256 of the resolved config)
    records    until end of file, each:
                   name length u32, name (UTF-8),
                   rank u32, extents u32[rank],
                   payload f64[product(extents)] row-major

Records are written in the order given, so a decode followed by an encode of
the same mapping reproduces the file byte for byte.
"""

from __future__ import annotations

# Typing
from typing import Dict, Mapping, Tuple, Union
from os import PathLike

# Internal
from facespace.constants import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from facespace.errors import CheckpointError, PathError

# External
import logging
import struct
import numpy as np

logger = logging.getLogger(__name__)

DIGEST_SIZE = 32
_U32 = struct.Struct("<I")


def encode_records(digest: bytes, records: Mapping[str, np.ndarray]) -> bytes:
    if len(digest) != DIGEST_SIZE:
        raise CheckpointError(f"config digest must be {DIGEST_SIZE} bytes")
    chunks = [CHECKPOINT_MAGIC, _U32.pack(CHECKPOINT_VERSION), digest]
    for name, value in records.items():
        array = np.ascontiguousarray(value, dtype="<f8")
        encoded = name.encode("utf-8")
        chunks.append(_U32.pack(len(encoded)))
        chunks.append(encoded)
        chunks.append(_U32.pack(array.ndim))
        chunks.extend(_U32.pack(extent) for extent in array.shape)
        chunks.append(array.tobytes(order="C"))
    return b"".join(chunks)


def decode_records(blob: bytes) -> Tuple[bytes, Dict[str, np.ndarray]]:
    header = len(CHECKPOINT_MAGIC) + _U32.size + DIGEST_SIZE
    if len(blob) < header or blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError("not a facespace checkpoint (bad magic)")
    (version,) = _U32.unpack_from(blob, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
        )
    digest = bytes(blob[8:header])

    records: Dict[str, np.ndarray] = {}
    offset = header
    try:
        while offset < len(blob):
            (length,) = _U32.unpack_from(blob, offset)
            offset += _U32.size
            name = blob[offset : offset + length].decode("utf-8")
            offset += length
            (rank,) = _U32.unpack_from(blob, offset)
            offset += _U32.size
            shape = struct.unpack_from(f"<{rank}I", blob, offset)
            offset += rank * _U32.size
            count = int(np.prod(shape, dtype=np.int64))
            end = offset + 8 * count
            if end > len(blob):
                raise CheckpointError(f"record {name!r} is truncated")
            values = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
            records[name] = values.astype(np.float64).reshape(shape)
            offset = end
    except (struct.error, UnicodeDecodeError) as e:
        raise CheckpointError(f"corrupt record at byte {offset}: {e}") from e
    return digest, records


def write_records(
    path: Union[str, PathLike], digest: bytes, records: Mapping[str, np.ndarray]
) -> None:
    blob = encode_records(digest, records)
    try:
        with open(path, "wb") as f:
            f.write(blob)
    except OSError as e:
        raise PathError(str(path), e.strerror or str(e)) from e
    logger.debug("wrote %d records (%d bytes) to %s", len(records), len(blob), path)


def read_records(path: Union[str, PathLike]) -> Tuple[bytes, Dict[str, np.ndarray]]:
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise PathError(str(path), e.strerror or str(e)) from e
    return decode_records(blob)
