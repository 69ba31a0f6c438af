"""Fixed-point backward warping through dense motion fields.

``warp`` samples the reference at ``p + field(p)`` for every voxel ``p``.
Positions are clamped to the volume; intensities are interpolated
bilinearly within a slice (2-component fields) or trilinearly (3-component
fields) and returned with 8 fractional bits, floored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .mesh import Mesh, MotionField, dense_field, negate
from .volume import Volume3D


@dataclass(frozen=True)
class WarpResult:
    """Warped intensities in fixed point: ``data = floor(value * 256)``."""

    data: np.ndarray

    frac_bits = K.FRAC_BITS

    def floor(self) -> np.ndarray:
        """``floor(value)`` as int64."""
        return self.data >> K.FRAC_BITS

    def floor_half(self) -> np.ndarray:
        """``floor(value / 2)`` as int64, a single rounding of the halved value."""
        return self.data >> (K.FRAC_BITS + 1)

    def to_float(self) -> np.ndarray:
        return self.data / K.ONE

    def __eq__(self, other):
        if not isinstance(other, WarpResult):
            return NotImplemented
        return bool(np.array_equal(self.data, other.data))

    __hash__ = None


def _ref_array(reference) -> np.ndarray:
    data = reference.data if isinstance(reference, Volume3D) else np.asarray(reference)
    if data.ndim == 2:
        data = data[np.newaxis]
    return np.ascontiguousarray(data, dtype=np.int32)


def identity(reference) -> WarpResult:
    return WarpResult(_ref_array(reference).astype(np.int64) << K.FRAC_BITS)


def warp(reference, field: MotionField) -> WarpResult:
    ref = _ref_array(reference)
    d, h, w = ref.shape
    if field.dims != (w, h, d):
        raise ValueError(f"field dims {field.dims} do not match reference dims {(w, h, d)}")
    if field.components == 3:
        return WarpResult(K.warp3(ref, field.data))
    return WarpResult(K.warp2(ref, field.data))


def _check_meshes(reference, meshes) -> None:
    ref = _ref_array(reference)
    d, h, w = ref.shape
    if isinstance(meshes, Mesh) and meshes.ndim == 3:
        if tuple(meshes.grid.dims) != (w, h, d):
            raise ValueError(f"mesh covers {meshes.grid.dims}, volume is {(w, h, d)}")
        return
    seq = [meshes] if isinstance(meshes, Mesh) else list(meshes)
    if len(seq) != d:
        raise ValueError(f"{len(seq)} slice meshes for a volume with {d} slices")
    if tuple(seq[0].grid.dims) != (w, h):
        raise ValueError(f"slice mesh covers {seq[0].grid.dims}, slices are {(w, h)}")


def compensate(reference, meshes) -> WarpResult:
    """Motion-compensated prediction from ``reference``.

    ``meshes`` is a 3-D :class:`Mesh`, a sequence of per-slice 2-D meshes
    (one per z slice), or None for no compensation.
    """
    if meshes is None:
        return identity(reference)
    _check_meshes(reference, meshes)
    return warp(reference, dense_field(meshes))


def negate_meshes(meshes):
    if meshes is None or isinstance(meshes, Mesh):
        return None if meshes is None else negate(meshes)
    return [negate(m) for m in meshes]


def inverse_compensate(band, meshes) -> WarpResult:
    """Approximate inverse of :func:`compensate`: warp with negated grid-point vectors.

    This is not an exact inverse of the mesh warp; the lifting structure keeps
    the overall transform lossless regardless.
    """
    return compensate(band, negate_meshes(meshes))
