"""FCMT binary tensor container

Layout (little-endian throughout):
    magic      4 bytes  b"FCMT"
    version    1 byte   0x01 -> float32 payload (feature files)
                        0x02 -> float64 payload (checkpoint blobs)
    ndim       1 byte
    dims       ndim x uint32
    payload    row-major values
"""

import struct
from pathlib import Path

import numpy as np

MAGIC = b"FCMT"
VERSION_F32 = 0x01
VERSION_F64 = 0x02
_DTYPES = {VERSION_F32: np.dtype("<f4"), VERSION_F64: np.dtype("<f8")}


class FCMTFormatError(ValueError):
    """Bytes are not a valid FCMT container"""


def encode(array: np.ndarray, version: int = VERSION_F32) -> bytes:
    if version not in _DTYPES:
        raise FCMTFormatError(f"unsupported FCMT version {version}")
    arr = np.ascontiguousarray(array, dtype=_DTYPES[version])
    if arr.ndim > 255:
        raise FCMTFormatError("too many dimensions")
    header = MAGIC + struct.pack("<BB", version, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + arr.tobytes(order="C")


def _parse_header(blob: bytes) -> tuple[int, tuple[int, ...], int]:
    if len(blob) < 6 or blob[:4] != MAGIC:
        raise FCMTFormatError("missing FCMT magic bytes")
    version, ndim = blob[4], blob[5]
    if version not in _DTYPES:
        raise FCMTFormatError(f"unsupported FCMT version {version}")
    end = 6 + 4 * ndim
    if len(blob) < end:
        raise FCMTFormatError("truncated FCMT header")
    dims = struct.unpack(f"<{ndim}I", blob[6:end])
    return version, tuple(dims), end


def decode(blob: bytes) -> np.ndarray:
    """Decode to a float64 array (feature payloads are widened from float32)"""
    version, dims, offset = _parse_header(blob)
    dtype = _DTYPES[version]
    expected = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(blob) - offset != expected:
        raise FCMTFormatError(f"payload has {len(blob) - offset} bytes, expected {expected} for shape {dims}")
    return np.frombuffer(blob, dtype=dtype, offset=offset).reshape(dims).astype(np.float64)


def read_shape(path: Path) -> tuple[int, ...]:
    """Shape from the header without reading the payload"""
    with open(path, "rb") as fh:
        head = fh.read(6)
        if len(head) == 6 and head[:4] == MAGIC:
            head += fh.read(4 * head[5])
    return _parse_header(head)[1]


def save(path: Path, array: np.ndarray, version: int = VERSION_F32) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode(array, version))


def load(path: Path) -> np.ndarray:
    return decode(Path(path).read_bytes())
