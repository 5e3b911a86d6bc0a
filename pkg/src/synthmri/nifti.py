"""Minimal NIfTI-1 reader/writer: 3-D volumes and label maps, 4-D atlases.

Supports little-endian files with datatypes uint8, int16, uint16 and float32,
optionally gzip-compressed. Scalar volumes honor scl_slope/scl_inter; integer
files with a trivial scaling load as label maps. Orientation metadata is
written as identity (scaled by voxel size) and ignored on read.

Atlases are stored as 4-D files (dim[0] = 4, K channels in dim[4]) with the
channel label ids in a JSON sidecar next to the file.
"""

from __future__ import annotations

import gzip
import json
import os
import struct

import numpy as np

from .bayes import Atlas
from .volume import LabelMap, Volume


class NiftiError(ValueError):
    """Malformed or unsupported NIfTI file."""


_DT_UINT8 = 2
_DT_INT16 = 4
_DT_FLOAT32 = 16
_DT_UINT16 = 512

_DTYPES = {
    _DT_UINT8: np.dtype("<u1"),
    _DT_INT16: np.dtype("<i2"),
    _DT_FLOAT32: np.dtype("<f4"),
    _DT_UINT16: np.dtype("<u2"),
}

_HEADER_SIZE = 348
_VOX_OFFSET = 352
_MAGIC = b"n+1\x00"

# (name, offset, struct format) for the fields this subset reads/writes.
_FMT_HEAD = "<i10s18sihcc8hfffhhhh8ffffhccffffii80s24shh6f4f4f4f16s4s"


def _is_gzip(path) -> bool:
    if str(path).endswith(".gz"):
        return True
    with open(path, "rb") as fp:
        return fp.read(2) == b"\x1f\x8b"


def _open_read(path):
    return gzip.open(path, "rb") if _is_gzip(path) else open(path, "rb")


def _open_write(path):
    return gzip.open(path, "wb") if str(path).endswith(".gz") else open(path, "wb")


def _pack_header(
    dims: tuple[int, ...],
    datatype: int,
    voxel_size: tuple[float, ...],
    ndim: int,
) -> bytes:
    dim = [1] * 8
    dim[0] = ndim
    for i, n in enumerate(dims):
        dim[i + 1] = n
    pixdim = [1.0] * 8
    for i, s in enumerate(voxel_size):
        pixdim[i + 1] = float(s)
    bitpix = _DTYPES[datatype].itemsize * 8
    srow_x = (pixdim[1], 0.0, 0.0, 0.0)
    srow_y = (0.0, pixdim[2], 0.0, 0.0)
    srow_z = (0.0, 0.0, pixdim[3], 0.0)
    return struct.pack(
        _FMT_HEAD,
        _HEADER_SIZE,      # sizeof_hdr
        b"", b"",          # data_type, db_name (unused)
        0, 0, b"r", b"\x00",   # extents, session_error, regular, dim_info
        *dim,
        0.0, 0.0, 0.0,     # intent_p1..p3
        0,                 # intent_code
        datatype,
        bitpix,
        0,                 # slice_start
        *pixdim,
        float(_VOX_OFFSET),
        1.0, 0.0,          # scl_slope, scl_inter
        0, b"\x00", b"\x00",   # slice_end, slice_code, xyzt_units
        0.0, 0.0, 0.0, 0.0,    # cal_max, cal_min, slice_duration, toffset
        0, 0,              # glmax, glmin
        b"synthmri", b"",  # descrip, aux_file
        0, 1,              # qform_code, sform_code
        0.0, 0.0, 0.0, 0.0, 0.0, 0.0,  # quatern_b..d, qoffset_x..z
        *srow_x, *srow_y, *srow_z,
        b"",               # intent_name
        _MAGIC,
    )


class _Header:
    __slots__ = ("dim", "datatype", "pixdim", "vox_offset", "scl_slope", "scl_inter")


def _parse_header(raw: bytes, path) -> _Header:
    if len(raw) < _HEADER_SIZE:
        raise NiftiError(f"{path}: truncated header ({len(raw)} bytes)")
    fields = struct.unpack(_FMT_HEAD, raw[:_HEADER_SIZE])
    h = _Header()
    sizeof_hdr = fields[0]
    if sizeof_hdr != _HEADER_SIZE:
        raise NiftiError(f"{path}: bad header size {sizeof_hdr} (expected 348)")
    magic = fields[-1]
    if magic != _MAGIC:
        raise NiftiError(f"{path}: bad magic {magic!r}")
    h.dim = fields[7:15]
    h.datatype = fields[19]
    h.pixdim = fields[22:30]
    h.vox_offset = fields[30]
    h.scl_slope = fields[31]
    h.scl_inter = fields[32]
    if h.datatype not in _DTYPES:
        raise NiftiError(f"{path}: unsupported datatype code {h.datatype}")
    return h


def _read_payload(fp, h: _Header, count: int, path) -> np.ndarray:
    offset = int(h.vox_offset)
    skip = offset - _HEADER_SIZE
    if skip < 0:
        raise NiftiError(f"{path}: vox_offset {offset} inside the header")
    fp.read(skip)
    dtype = _DTYPES[h.datatype]
    raw = fp.read(count * dtype.itemsize)
    if len(raw) < count * dtype.itemsize:
        raise NiftiError(
            f"{path}: truncated payload ({len(raw)} of {count * dtype.itemsize} bytes)"
        )
    return np.frombuffer(raw, dtype=dtype)


def read_volume(path) -> Volume | LabelMap:
    """Load a 3-D NIfTI file as a Volume, or a LabelMap when it holds labels.

    Integer files with slope/inter (1, 0) and non-negative values load as
    LabelMap; everything else becomes a scalar Volume with the scaling
    applied.
    """
    with _open_read(path) as fp:
        h = _parse_header(fp.read(_HEADER_SIZE), path)
        if h.dim[0] != 3:
            raise NiftiError(f"{path}: expected a 3-D volume, got dim[0] = {h.dim[0]}")
        nx, ny, nz = (int(n) for n in h.dim[1:4])
        if min(nx, ny, nz) < 1:
            raise NiftiError(f"{path}: non-positive dims {(nx, ny, nz)}")
        flat = _read_payload(fp, h, nx * ny * nz, path)

    data = flat.reshape((nx, ny, nz), order="F")
    voxel_size = tuple(float(abs(p)) or 1.0 for p in h.pixdim[1:4])
    slope = float(h.scl_slope)
    inter = float(h.scl_inter)
    trivial = (slope == 0.0 or slope == 1.0) and inter == 0.0
    if np.issubdtype(data.dtype, np.integer) and trivial and data.min() >= 0:
        return LabelMap(data.astype(np.int32), voxel_size)
    scaled = data.astype(np.float32)
    if not trivial:
        scaled = scaled * np.float32(slope) + np.float32(inter)
    return Volume(scaled, voxel_size)


def write_volume(v: Volume | LabelMap, path) -> None:
    """Write float32 for volumes, uint16 for label maps; slope 1, inter 0."""
    if isinstance(v, LabelMap):
        if v.labels.max() > np.iinfo(np.uint16).max:
            raise NiftiError(f"label {int(v.labels.max())} does not fit in uint16")
        payload = v.labels.astype("<u2")
        datatype = _DT_UINT16
    else:
        payload = v.data.astype("<f4")
        datatype = _DT_FLOAT32
    header = _pack_header(payload.shape, datatype, v.voxel_size, ndim=3)
    with _open_write(path) as fp:
        fp.write(header)
        fp.write(b"\x00" * (_VOX_OFFSET - _HEADER_SIZE))
        fp.write(np.asfortranarray(payload).tobytes(order="F"))


def _sidecar_path(path) -> str:
    return str(path) + ".labels.json"


def write_atlas(atlas: Atlas, path) -> None:
    """Persist an atlas as a 4-D float32 NIfTI plus a label-ordering sidecar."""
    payload = np.moveaxis(atlas.probs.astype("<f4"), 0, -1)  # (nx, ny, nz, K)
    header = _pack_header(payload.shape, _DT_FLOAT32, (1.0, 1.0, 1.0), ndim=4)
    with _open_write(path) as fp:
        fp.write(header)
        fp.write(b"\x00" * (_VOX_OFFSET - _HEADER_SIZE))
        fp.write(payload.tobytes(order="F"))
    with open(_sidecar_path(path), "w") as fp:
        json.dump({"labels": list(atlas.labels)}, fp)


def read_atlas(path) -> Atlas:
    """Load a 4-D atlas; channel label ids come from the sidecar if present."""
    with _open_read(path) as fp:
        h = _parse_header(fp.read(_HEADER_SIZE), path)
        if h.dim[0] != 4:
            raise NiftiError(f"{path}: expected a 4-D atlas, got dim[0] = {h.dim[0]}")
        nx, ny, nz, k = (int(n) for n in h.dim[1:5])
        if min(nx, ny, nz, k) < 1:
            raise NiftiError(f"{path}: non-positive dims {(nx, ny, nz, k)}")
        if h.datatype != _DT_FLOAT32:
            raise NiftiError(f"{path}: atlas must be float32, got code {h.datatype}")
        flat = _read_payload(fp, h, nx * ny * nz * k, path)
    probs = np.moveaxis(flat.reshape((nx, ny, nz, k), order="F"), -1, 0)

    labels = tuple(range(k))
    if os.path.exists(_sidecar_path(path)):
        with open(_sidecar_path(path)) as fp:
            labels = tuple(int(x) for x in json.load(fp)["labels"])
        if len(labels) != k:
            raise NiftiError(f"{path}: sidecar lists {len(labels)} labels for {k} channels")
    return Atlas(probs=np.ascontiguousarray(probs), labels=labels)
