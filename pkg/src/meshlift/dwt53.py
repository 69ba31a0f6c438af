"""Reversible LeGall 5/3 lifting along volume axes.

One step along an axis of even length::

    d[n] = x[2n+1] - floor((x[2n] + x[2n+2]) / 2)
    s[n] = x[2n]   + floor((d[n-1] + d[n] + 2) / 4)

with whole-sample symmetric extension (x[N] = x[N-2], d[-1] = d[0]).
Lowpass coefficients go to the first half of the axis, highpass to the
second (Mallat layout, in place).

``dwt53_forward`` applies ``levels_z`` dyadic steps along z first, then
``levels_xy`` dyadic 2-D steps (y, then x at each level) on every slice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volume import Volume3D


def lift_forward(x: np.ndarray, axis: int) -> np.ndarray:
    """One 5/3 analysis step along ``axis``; returns [s | d] concatenated."""
    x = np.moveaxis(np.asarray(x, dtype=np.int64), axis, 0)
    n = x.shape[0]
    if n < 2 or n % 2:
        raise ValueError(f"5/3 step needs an even length >= 2, got {n}")
    even, odd = x[0::2], x[1::2]
    even_next = np.concatenate([even[1:], even[-1:]])
    d = odd - ((even + even_next) >> 1)
    d_prev = np.concatenate([d[:1], d[:-1]])
    s = even + ((d_prev + d + 2) >> 2)
    return np.moveaxis(np.concatenate([s, d]), 0, axis)


def lift_inverse(c: np.ndarray, axis: int) -> np.ndarray:
    c = np.moveaxis(np.asarray(c, dtype=np.int64), axis, 0)
    n = c.shape[0]
    if n < 2 or n % 2:
        raise ValueError(f"5/3 step needs an even length >= 2, got {n}")
    s, d = c[: n // 2], c[n // 2:]
    d_prev = np.concatenate([d[:1], d[:-1]])
    even = s - ((d_prev + d + 2) >> 2)
    even_next = np.concatenate([even[1:], even[-1:]])
    odd = d + ((even + even_next) >> 1)
    x = np.empty_like(c)
    x[0::2] = even
    x[1::2] = odd
    return np.moveaxis(x, 0, axis)


@dataclass
class SpatialDecomposition:
    """5/3 coefficients of a volume in Mallat layout ``coeffs[z, y, x]``."""

    coeffs: np.ndarray
    levels_xy: int
    levels_z: int

    def subbands(self) -> list[tuple[str, tuple[slice, slice, slice]]]:
        """Names and index regions of every subband.

        Names read ``<z band>.<xy band>``, e.g. ``"L2.LL5"``, ``"H1.HH3"``;
        xy band letters are (y, x) ordered.
        """
        depth, height, width = self.coeffs.shape
        zbands = []
        lo = depth
        for lev in range(1, self.levels_z + 1):
            half = lo // 2
            zbands.append((f"H{lev}", slice(half, lo)))
            lo = half
        zbands.append((f"L{self.levels_z}", slice(0, lo)))
        xybands = []
        h, w = height, width
        for lev in range(1, self.levels_xy + 1):
            h2, w2 = h // 2, w // 2
            xybands.append((f"LH{lev}", (slice(0, h2), slice(w2, w))))
            xybands.append((f"HL{lev}", (slice(h2, h), slice(0, w2))))
            xybands.append((f"HH{lev}", (slice(h2, h), slice(w2, w))))
            h, w = h2, w2
        xybands.append((f"LL{self.levels_xy}", (slice(0, h), slice(0, w))))
        return [(f"{zn}.{xn}", (zs, ys, xs)) for zn, zs in zbands for xn, (ys, xs) in xybands]


def _check_levels(shape, levels_xy, levels_z):
    depth, height, width = shape
    if levels_xy < 0 or levels_z < 0:
        raise ValueError("level counts must be >= 0")
    for name, n, lev in (("depth", depth, levels_z), ("height", height, levels_xy),
                         ("width", width, levels_xy)):
        if lev and (n % (1 << lev) or n < (1 << lev) or n // (1 << lev) < 1):
            raise ValueError(f"{name} {n} is not divisible by 2^{lev}")


def max_levels(n: int, wanted: int) -> int:
    """Largest level count <= ``wanted`` that ``n`` supports."""
    lev = 0
    while lev < wanted and n % (1 << (lev + 1)) == 0:
        lev += 1
    return lev


def dwt53_forward(vol, levels_xy: int = 5, levels_z: int = 2) -> SpatialDecomposition:
    data = vol.data if isinstance(vol, Volume3D) else np.asarray(vol)
    _check_levels(data.shape, levels_xy, levels_z)
    c = data.astype(np.int64).copy()
    n = c.shape[0]
    for _ in range(levels_z):
        c[:n] = lift_forward(c[:n], axis=0)
        n //= 2
    h, w = c.shape[1], c.shape[2]
    for _ in range(levels_xy):
        c[:, :h, :w] = lift_forward(c[:, :h, :w], axis=1)
        c[:, :h, :w] = lift_forward(c[:, :h, :w], axis=2)
        h //= 2
        w //= 2
    return SpatialDecomposition(c, levels_xy, levels_z)


def dwt53_inverse(dec: SpatialDecomposition) -> Volume3D:
    c = dec.coeffs.astype(np.int64).copy()
    _check_levels(c.shape, dec.levels_xy, dec.levels_z)
    depth, height, width = c.shape
    for lev in range(dec.levels_xy, 0, -1):
        h, w = height >> (lev - 1), width >> (lev - 1)
        c[:, :h, :w] = lift_inverse(c[:, :h, :w], axis=2)
        c[:, :h, :w] = lift_inverse(c[:, :h, :w], axis=1)
    for lev in range(dec.levels_z, 0, -1):
        n = depth >> (lev - 1)
        c[:n] = lift_inverse(c[:n], axis=0)
    return Volume3D(c)
