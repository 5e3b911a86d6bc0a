"""Dense 3D grids and the interpolation primitives everything else builds on.

Conventions, fixed once for the whole package:

* A volume is an ``(nx, ny, nz)`` array indexed ``data[x, y, z]``.  The
  declared flat serialization order is x-fastest, i.e. ``ravel(order="F")``.
* Continuous positions are in voxel coordinates: point ``(i, j, k)`` sits
  exactly on grid node ``[i, j, k]``.
* Scalar interpolation clamps out-of-field coordinates to the grid edge;
  label lookup returns background 0 outside the field.
* Grid resizing uses the align-corners convention: source corners map to
  target corners.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

Dims = tuple[int, int, int]


def _check_dims3(data: np.ndarray, what: str) -> None:
    if data.ndim != 3:
        raise ValueError(f"{what} must be a 3-D array, got shape {data.shape}")
    if min(data.shape) < 1:
        raise ValueError(f"{what} has an empty axis: {data.shape}")


@dataclass(frozen=True)
class Volume:
    """Dense scalar grid (intensities, probabilities or field components)."""

    data: np.ndarray
    voxel_size: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        _check_dims3(data, "Volume data")
        if not np.isfinite(data).all():
            raise ValueError("Volume data contains NaN/Inf")
        object.__setattr__(self, "data", data)

    @property
    def dims(self) -> Dims:
        return self.data.shape  # type: ignore[return-value]


@dataclass(frozen=True)
class LabelMap:
    """Dense integer grid over anatomical labels; 0 is reserved background."""

    labels: np.ndarray
    voxel_size: tuple[float, float, float] = (1.0, 1.0, 1.0)
    label_set: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels, dtype=np.int32)
        _check_dims3(labels, "LabelMap labels")
        if labels.min() < 0:
            raise ValueError("LabelMap contains negative labels")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(
            self, "label_set", tuple(int(v) for v in np.unique(labels))
        )

    @property
    def dims(self) -> Dims:
        return self.labels.shape  # type: ignore[return-value]

    def as_volume(self) -> Volume:
        """Label ids viewed as scalar intensities (for I/O and plotting)."""
        return Volume(self.labels.astype(np.float32), self.voxel_size)


@dataclass(frozen=True)
class VectorField:
    """Three scalar components per voxel, in voxel units; shape (nx, ny, nz, 3)."""

    data: np.ndarray
    voxel_size: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 4 or data.shape[-1] != 3:
            raise ValueError(f"VectorField must have shape (nx, ny, nz, 3), got {data.shape}")
        if not np.isfinite(data).all():
            raise ValueError("VectorField contains NaN/Inf")
        object.__setattr__(self, "data", data)

    @property
    def dims(self) -> Dims:
        return self.data.shape[:3]  # type: ignore[return-value]


def sample_trilinear_array(data: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of ``data`` at continuous voxel coordinates.

    Parameters
    ----------
    data : ndarray
        ``(nx, ny, nz)`` scalar grid or ``(nx, ny, nz, C)`` multi-channel grid.
    pts : ndarray
        ``(..., 3)`` voxel coordinates; out-of-field points are edge-clamped.

    Returns
    -------
    ndarray of shape ``(...,)`` or ``(..., C)``, dtype float32.
    """
    scalar = data.ndim == 3
    if scalar:
        data = data[..., None]
    data = np.ascontiguousarray(data, dtype=np.float32)
    nx, ny, nz, nc = data.shape
    flat = data.reshape(-1, nc)

    p = np.asarray(pts, dtype=np.float32)
    lead = p.shape[:-1]
    p = p.reshape(-1, 3)

    one = np.float32(1.0)
    x = np.clip(p[:, 0], 0.0, np.float32(nx - 1))
    y = np.clip(p[:, 1], 0.0, np.float32(ny - 1))
    z = np.clip(p[:, 2], 0.0, np.float32(nz - 1))
    # Anchor the cell so coordinates exactly on the far face still index a
    # valid cell (fraction becomes 1 there).
    x0 = np.minimum(x.astype(np.int64), max(nx - 2, 0))
    y0 = np.minimum(y.astype(np.int64), max(ny - 2, 0))
    z0 = np.minimum(z.astype(np.int64), max(nz - 2, 0))
    fx = x - x0.astype(np.float32)
    fy = y - y0.astype(np.float32)
    fz = z - z0.astype(np.float32)
    gx, gy, gz = one - fx, one - fy, one - fz

    sx, sy, sz = ny * nz, nz, 1
    # Degenerate axes (size 1): the far corner collapses onto the near one.
    dx = sx if nx > 1 else 0
    dy = sy if ny > 1 else 0
    dz = sz if nz > 1 else 0
    base = x0 * sx + y0 * sy + z0 * sz

    out = flat[base] * (gx * gy * gz)[:, None]
    out += flat[base + dz] * (gx * gy * fz)[:, None]
    out += flat[base + dy] * (gx * fy * gz)[:, None]
    out += flat[base + dy + dz] * (gx * fy * fz)[:, None]
    out += flat[base + dx] * (fx * gy * gz)[:, None]
    out += flat[base + dx + dz] * (fx * gy * fz)[:, None]
    out += flat[base + dx + dy] * (fx * fy * gz)[:, None]
    out += flat[base + dx + dy + dz] * (fx * fy * fz)[:, None]

    if scalar:
        return out[:, 0].reshape(lead)
    return out.reshape(lead + (nc,))


def sample_nearest_labels(labels: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Nearest-node label lookup (round half up per axis); 0 outside the field."""
    nx, ny, nz = labels.shape
    p = np.asarray(pts, dtype=np.float32)
    lead = p.shape[:-1]
    p = p.reshape(-1, 3)
    idx = np.floor(p + np.float32(0.5)).astype(np.int64)
    inside = (
        (idx[:, 0] >= 0) & (idx[:, 0] < nx)
        & (idx[:, 1] >= 0) & (idx[:, 1] < ny)
        & (idx[:, 2] >= 0) & (idx[:, 2] < nz)
    )
    idx[~inside] = 0
    out = labels[idx[:, 0], idx[:, 1], idx[:, 2]]
    out = np.where(inside, out, np.int32(0)).astype(np.int32)
    return out.reshape(lead)


def trilinear_sample(v: Volume, p) -> float:
    """Trilinear interpolation of a single point, edge-clamped outside."""
    return float(sample_trilinear_array(v.data, np.asarray(p, dtype=np.float32)))


def nearest_sample(m: LabelMap, p) -> int:
    """Label of the nearest grid node; background 0 outside the field."""
    return int(sample_nearest_labels(m.labels, np.asarray(p, dtype=np.float32)))


def _resize_axis_linear(arr: np.ndarray, axis: int, n_dst: int) -> np.ndarray:
    """Linear resize along one axis, align-corners."""
    n_src = arr.shape[axis]
    if n_dst == n_src:
        return arr
    pos = np.arange(n_dst, dtype=np.float64) * ((n_src - 1) / (n_dst - 1))
    i0 = np.minimum(pos.astype(np.int64), n_src - 2)
    f = (pos - i0).astype(np.float32)
    a0 = np.take(arr, i0, axis=axis)
    a1 = np.take(arr, i0 + 1, axis=axis)
    shape = [1] * arr.ndim
    shape[axis] = n_dst
    f = f.reshape(shape)
    return a0 * (np.float32(1.0) - f) + a1 * f


def _upscale_data(data: np.ndarray, target_dims: Dims) -> np.ndarray:
    if len(target_dims) != 3 or min(target_dims) < 2:
        raise ValueError(f"target dims must be >= 2 per axis, got {target_dims}")
    if min(data.shape[:3]) < 2:
        raise ValueError(f"coarse grid must be >= 2 per axis, got {data.shape[:3]}")
    out = np.ascontiguousarray(data, dtype=np.float32)
    for axis in range(3):
        out = _resize_axis_linear(out, axis, target_dims[axis])
    return np.ascontiguousarray(out)


def upscale_trilinear(coarse: Volume | VectorField, target_dims: Dims):
    """Resample a grid to ``target_dims`` with align-corners trilinear interpolation.

    Works per component for vector fields. The same convention is used for
    velocity-field and bias-field upscaling so their oracles agree.
    """
    if isinstance(coarse, VectorField):
        return VectorField(_upscale_data(coarse.data, target_dims), coarse.voxel_size)
    return Volume(_upscale_data(coarse.data, target_dims), coarse.voxel_size)


def one_hot(m: LabelMap, ordering) -> list[Volume]:
    """Binary indicator volume per label in ``ordering``; channels sum to 1."""
    ordering = [int(k) for k in ordering]
    missing = set(m.label_set) - set(ordering)
    if missing:
        raise ValueError(f"labels {sorted(missing)} present in map but absent from ordering")
    return [
        Volume((m.labels == k).astype(np.float32), m.voxel_size) for k in ordering
    ]
