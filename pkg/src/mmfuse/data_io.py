"""Binary tensor files and the model container.

Tensor file (``.mmt``), all integers little-endian::

    offset 0   4 bytes  magic "MMT1"
    offset 4   1 byte   version (1)
    offset 5   1 byte   rank r (0..4)
    offset 6   4*r      dims, uint32 each
    then       4*prod   float32 values, row-major

Model container (``.bin``)::

    offset 0   4 bytes  magic "MMDL"
    offset 4   1 byte   version (1)
    offset 5   4 bytes  header length n, uint32
    offset 9   n bytes  UTF-8 JSON header {"config", "meta", "params": [{"name", "shape"}]}
    then                one tensor record (format above) per header entry, in order
"""

import json
import struct

import numpy as np

from .errors import FormatError, VersionError

TENSOR_MAGIC = b"MMT1"
TENSOR_VERSION = 1
MODEL_MAGIC = b"MMDL"
MODEL_VERSION = 1
MAX_RANK = 4


def encode_tensor(array):
    arr = np.asarray(array, dtype="<f4", order="C")
    if arr.ndim > MAX_RANK:
        raise FormatError(f"rank {arr.ndim} exceeds maximum {MAX_RANK}")
    header = TENSOR_MAGIC + bytes([TENSOR_VERSION, arr.ndim])
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + arr.tobytes()


def decode_tensor(buf, offset=0):
    """Decode one tensor record at ``offset``; return ``(array, end_offset)``."""
    end = len(buf)
    if end - offset < 6:
        raise FormatError("truncated tensor header", offset=offset)
    if buf[offset : offset + 4] != TENSOR_MAGIC:
        raise FormatError(f"bad tensor magic {bytes(buf[offset:offset + 4])!r}", offset=offset)
    version = buf[offset + 4]
    if version != TENSOR_VERSION:
        raise VersionError(f"unsupported tensor version {version}", offset=offset + 4)
    rank = buf[offset + 5]
    if rank > MAX_RANK:
        raise FormatError(f"rank {rank} exceeds maximum {MAX_RANK}", offset=offset + 5)
    pos = offset + 6
    if end - pos < 4 * rank:
        raise FormatError("truncated tensor dims", offset=pos)
    shape = struct.unpack_from(f"<{rank}I", buf, pos)
    pos += 4 * rank
    nbytes = 4 * int(np.prod(shape, dtype=np.int64))
    if end - pos < nbytes:
        raise FormatError(f"tensor data needs {nbytes} bytes, {end - pos} available", offset=pos)
    arr = np.frombuffer(bytes(buf[pos : pos + nbytes]), dtype="<f4").reshape(shape)
    return arr.astype(np.float32), pos + nbytes


def write_tensor(path, t):
    data = t.data if hasattr(t, "data") and not isinstance(t, np.ndarray) else t
    with open(path, "wb") as fh:
        fh.write(encode_tensor(data))


def read_tensor(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    arr, end = decode_tensor(buf)
    if end != len(buf):
        raise FormatError(f"{len(buf) - end} trailing bytes after tensor", offset=end)
    return arr


def encode_model(named_arrays, config, meta=None):
    header = {
        "config": config,
        "meta": meta or {},
        "params": [{"name": n, "shape": list(np.shape(a))} for n, a in named_arrays],
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MODEL_MAGIC, bytes([MODEL_VERSION]), struct.pack("<I", len(hbytes)), hbytes]
    parts += [encode_tensor(a) for _, a in named_arrays]
    return b"".join(parts)


def decode_model(buf):
    """Return ``(header, {name: array})``; nothing is returned on any error."""
    if len(buf) < 9:
        raise FormatError("truncated model header", offset=0)
    if buf[:4] != MODEL_MAGIC:
        raise FormatError(f"bad model magic {bytes(buf[:4])!r}", offset=0)
    if buf[4] != MODEL_VERSION:
        raise VersionError(f"unsupported model version {buf[4]} (expected {MODEL_VERSION})", offset=4)
    (hlen,) = struct.unpack_from("<I", buf, 5)
    if len(buf) < 9 + hlen:
        raise FormatError("truncated model JSON header", offset=9)
    try:
        header = json.loads(buf[9 : 9 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt model JSON header: {exc}", offset=9) from exc
    pos = 9 + hlen
    arrays = {}
    for entry in header.get("params", []):
        start = pos
        arr, pos = decode_tensor(buf, pos)
        if list(arr.shape) != list(entry["shape"]):
            raise FormatError(
                f"parameter {entry['name']} has shape {list(arr.shape)}, header says {entry['shape']}",
                offset=start,
            )
        arrays[entry["name"]] = arr
    if pos != len(buf):
        raise FormatError(f"{len(buf) - pos} trailing bytes after parameters", offset=pos)
    return header, arrays
