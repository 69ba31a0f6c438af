"""Brute-force reference evaluations, independent of the numba kernels.

Everything here works point by point with exact rational arithmetic.
"""

from fractions import Fraction
from math import floor

import numpy as np

ONE = 256


def field_at(vectors, cell, p, cell_index=None):
    """Fixed-point bilinear/trilinear field at integer voxel ``p`` (x, y[, z]).

    ``vectors`` is laid out like ``Mesh.vectors``. ``cell_index`` forces the
    interpolation cell (for continuity checks); by default the cell containing
    ``p`` is used.
    """
    ndim = len(cell)
    if cell_index is None:
        cell_index = [p[a] // cell[a] for a in range(ndim)]
    out = []
    for comp in range(ndim):
        value = Fraction(0)
        for corner in np.ndindex(*([2] * ndim)):
            weight = Fraction(1)
            for a in range(ndim):
                t = Fraction(p[a] - cell_index[a] * cell[a], cell[a])
                weight *= t if corner[a] else 1 - t
            idx = tuple(cell_index[a] + corner[a] for a in range(ndim))
            if weight:
                value += weight * int(vectors[idx[::-1] + (comp,)])
        out.append(floor(value * ONE))
    return out


def sample_at(ref, pos_q8):
    """Trilinear intensity at fixed-point position (x, y, z), floored to fixed point."""
    d, h, w = ref.shape
    lims = (w, h, d)
    pos = []
    for a in range(3):
        q = min(max(pos_q8[a], 0), (lims[a] - 1) * ONE)
        pos.append(Fraction(q, ONE))
    base = [floor(c) for c in pos]
    frac = [pos[a] - base[a] for a in range(3)]
    total = Fraction(0)
    for corner in np.ndindex(2, 2, 2):
        weight = Fraction(1)
        idx = []
        for a in range(3):
            weight *= frac[a] if corner[a] else 1 - frac[a]
            idx.append(min(base[a] + corner[a], lims[a] - 1))
        if weight:
            total += weight * int(ref[idx[2], idx[1], idx[0]])
    return floor(total * ONE)


def bilinear_at(ref, z, pos_q8):
    d, h, w = ref.shape
    lims = (w, h)
    pos = []
    for a in range(2):
        q = min(max(pos_q8[a], 0), (lims[a] - 1) * ONE)
        pos.append(Fraction(q, ONE))
    base = [floor(c) for c in pos]
    frac = [pos[a] - base[a] for a in range(2)]
    total = Fraction(0)
    for corner in np.ndindex(2, 2):
        weight = Fraction(1)
        idx = []
        for a in range(2):
            weight *= frac[a] if corner[a] else 1 - frac[a]
            idx.append(min(base[a] + corner[a], lims[a] - 1))
        if weight:
            total += weight * int(ref[z, idx[1], idx[0]])
    return floor(total * ONE)


def warp_voxel(ref, field, p):
    """Warped value at voxel p = (x, y, z) for a 2- or 3-component field."""
    x, y, z = p
    f = field[z, y, x]
    if len(f) == 3:
        return sample_at(ref, (x * ONE + int(f[0]), y * ONE + int(f[1]), z * ONE + int(f[2])))
    return bilinear_at(ref, z, (x * ONE + int(f[0]), y * ONE + int(f[1])))


def octahedron_equations(points):
    """Outward unit normals and offsets of the convex hull of ``points`` (qhull)."""
    from scipy.spatial import ConvexHull

    hull = ConvexHull(np.asarray(points, dtype=float))
    return hull.equations
