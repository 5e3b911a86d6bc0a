"""Length-checked binary wire format for streaming training pairs.

Record layout, all little-endian:

    magic         4 bytes  b"SVP1"
    sample_index  u64
    dims          3 x u32
    image         float32 payload, x-fastest, nx*ny*nz*4 bytes
    target        uint16 payload, same order, nx*ny*nz*2 bytes
    param_len     u32
    params        UTF-8 JSON text, param_len bytes

Decoding validates the magic and every length before allocating, so a
corrupt or truncated stream fails cleanly instead of over-reading.
"""

from __future__ import annotations

import io
import json
import struct
from typing import Iterable, Iterator

import numpy as np

from .generator import ParameterRecord, TrainingPair
from .volume import LabelMap, Volume

MAGIC = b"SVP1"
_HEAD = struct.Struct("<4sQ3I")
_PARAM_LEN = struct.Struct("<I")

# Sanity caps checked before any allocation.
MAX_VOXELS = 1 << 31
MAX_PARAM_BYTES = 1 << 26


class StreamError(ValueError):
    """Corrupt, truncated or oversized stream record."""


def encode_record(pair: TrainingPair) -> bytes:
    """Serialize one training pair to the wire format."""
    dims = pair.image.dims
    if pair.target.labels.max() > np.iinfo(np.uint16).max:
        raise StreamError("target labels do not fit in uint16")
    params = json.dumps(pair.record.to_json_dict()).encode("utf-8")
    if len(params) > MAX_PARAM_BYTES:
        raise StreamError("parameter record too large")
    out = io.BytesIO()
    out.write(_HEAD.pack(MAGIC, pair.record.sample_index, *dims))
    out.write(pair.image.data.astype("<f4").tobytes(order="F"))
    out.write(pair.target.labels.astype("<u2").tobytes(order="F"))
    out.write(_PARAM_LEN.pack(len(params)))
    out.write(params)
    return out.getvalue()


def _read_exact(fp, n: int, what: str) -> bytes:
    buf = fp.read(n)
    if len(buf) != n:
        raise StreamError(f"truncated stream: expected {n} bytes of {what}, got {len(buf)}")
    return buf


def read_record(fp) -> TrainingPair | None:
    """Decode the next record from a binary stream; None at a clean EOF."""
    head = fp.read(_HEAD.size)
    if len(head) == 0:
        return None
    if len(head) < _HEAD.size:
        raise StreamError(f"truncated stream: short record header ({len(head)} bytes)")
    magic, sample_index, nx, ny, nz = _HEAD.unpack(head)
    if magic != MAGIC:
        raise StreamError(f"bad magic {magic!r}")
    if min(nx, ny, nz) < 1:
        raise StreamError(f"invalid dims {(nx, ny, nz)}")
    voxels = nx * ny * nz
    if voxels > MAX_VOXELS:
        raise StreamError(f"length overflow: {voxels} voxels")

    img = np.frombuffer(_read_exact(fp, voxels * 4, "image"), dtype="<f4")
    lab = np.frombuffer(_read_exact(fp, voxels * 2, "target"), dtype="<u2")
    (param_len,) = _PARAM_LEN.unpack(_read_exact(fp, _PARAM_LEN.size, "param length"))
    if param_len > MAX_PARAM_BYTES:
        raise StreamError(f"length overflow: {param_len} parameter bytes")
    raw_params = _read_exact(fp, param_len, "parameters")
    try:
        record = ParameterRecord.from_json_dict(json.loads(raw_params.decode("utf-8")))
    except (ValueError, KeyError) as e:
        raise StreamError(f"bad parameter record: {e}") from e

    dims = (nx, ny, nz)
    image = Volume(img.reshape(dims, order="F"))
    target = LabelMap(lab.reshape(dims, order="F").astype(np.int32))
    return TrainingPair(image=image, target=target, record=record)


def decode_record(buf: bytes) -> TrainingPair:
    """Decode a single record held fully in memory."""
    fp = io.BytesIO(buf)
    pair = read_record(fp)
    if pair is None:
        raise StreamError("empty buffer")
    trailing = fp.read(1)
    if trailing:
        raise StreamError("trailing bytes after record")
    return pair


def read_records(fp) -> Iterator[TrainingPair]:
    """Iterate records until EOF."""
    while True:
        pair = read_record(fp)
        if pair is None:
            return
        yield pair


def write_records(pairs: Iterable[TrainingPair], fp) -> int:
    """Encode pairs onto a byte stream; returns the number written."""
    n = 0
    for pair in pairs:
        fp.write(encode_record(pair))
        n += 1
    return n
