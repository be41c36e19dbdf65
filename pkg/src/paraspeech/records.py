"""Binary record container: named float32 arrays plus a JSON metadata blob.

Layout (all integers little-endian uint32):

    magic  b"PSPC"
    version
    meta_len, meta (UTF-8 JSON)
    n_arrays
    per array: name_len, name (UTF-8), ndim, dims..., payload (float32 LE)

One file holds every feature array of an utterance, a PBE cache entry, or a
model checkpoint; writers go through a temp file and rename so readers never
see a partial record.
"""

import json
import os
import struct

import numpy as np

from .errors import InvalidInput

MAGIC = b"PSPC"
VERSION = 1

_U32 = struct.Struct("<I")


def write_record(path, arrays, meta=None):
    """Write named arrays (dict name -> ndarray) and optional metadata dict."""
    payload = bytearray()
    payload += MAGIC
    payload += _U32.pack(VERSION)
    meta_bytes = json.dumps(meta or {}, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload += _U32.pack(len(meta_bytes))
    payload += meta_bytes
    payload += _U32.pack(len(arrays))
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        name_bytes = name.encode("utf-8")
        payload += _U32.pack(len(name_bytes))
        payload += name_bytes
        payload += _U32.pack(arr.ndim)
        for dim in arr.shape:
            payload += _U32.pack(dim)
        payload += arr.astype("<f4").tobytes()
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(bytes(payload))
    os.replace(tmp, path)


def read_record(path):
    """Read a record file; returns (arrays dict, meta dict)."""
    with open(path, "rb") as fh:
        data = fh.read()
    view = memoryview(data)
    if bytes(view[:4]) != MAGIC:
        raise InvalidInput(f"{path}: not a record file")
    offset = 4
    version, offset = _read_u32(view, offset, path)
    if version != VERSION:
        raise InvalidInput(f"{path}: unsupported record version {version}")
    meta_len, offset = _read_u32(view, offset, path)
    blob, offset = _read_bytes(view, offset, meta_len, path)
    try:
        meta = json.loads(blob.decode("utf-8"))
    except ValueError:
        raise InvalidInput(f"{path}: corrupt metadata") from None
    n_arrays, offset = _read_u32(view, offset, path)
    arrays = {}
    for _ in range(n_arrays):
        name_len, offset = _read_u32(view, offset, path)
        raw_name, offset = _read_bytes(view, offset, name_len, path)
        name = raw_name.decode("utf-8")
        ndim, offset = _read_u32(view, offset, path)
        shape = []
        for _ in range(ndim):
            dim, offset = _read_u32(view, offset, path)
            shape.append(dim)
        count = int(np.prod(shape)) if shape else 1
        raw, offset = _read_bytes(view, offset, count * 4, path)
        arrays[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    if offset != len(view):
        raise InvalidInput(f"{path}: {len(view) - offset} trailing bytes")
    return arrays, meta


def _read_u32(view, offset, path):
    if offset + 4 > len(view):
        raise InvalidInput(f"{path}: truncated record")
    return _U32.unpack_from(view, offset)[0], offset + 4


def _read_bytes(view, offset, length, path):
    if offset + length > len(view):
        raise InvalidInput(f"{path}: truncated record")
    return bytes(view[offset : offset + length]), offset + length
