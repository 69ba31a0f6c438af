"""Numba kernels shared by the mesh, warp and motion modules.

All arithmetic is integer. Motion fields and warped intensities carry
``FRAC_BITS`` fractional bits; accumulators are 64 bit.

Array conventions
-----------------
volumes      int32/int64 ``[z, y, x]``
3-D vectors  int32 ``[k, j, i, 3]`` with components ordered (x, y, z)
2-D vectors  int32 ``[s, j, i, 2]`` (one 2-D mesh per slice ``s``)
fields       int32 ``[z, y, x, c]`` in fixed point
"""

import numpy as np
from numba import njit

FRAC_BITS = 8
ONE = 1 << FRAC_BITS
FRAC_MASK = ONE - 1

_opts = dict(cache=True, nogil=True)


# --------------------------------------------------------------------------
# dense field
# --------------------------------------------------------------------------

@njit(inline="always", **_opts)
def _numer3(vec, gx, gy, gz, x, y, z, gi, gj, gk, cand, out):
    """Trilinear field numerator (over gx*gy*gz) at voxel (x, y, z).

    The grid point (gi, gj, gk) reads ``cand`` instead of its stored vector.
    """
    ci = x // gx
    cj = y // gy
    ck = z // gz
    fx = x - ci * gx
    fy = y - cj * gy
    fz = z - ck * gz
    n0 = np.int64(0)
    n1 = np.int64(0)
    n2 = np.int64(0)
    for oz in range(2):
        wz = fz if oz else gz - fz
        if wz == 0:
            continue
        for oy in range(2):
            wy = fy if oy else gy - fy
            if wy == 0:
                continue
            for ox in range(2):
                wx = fx if ox else gx - fx
                if wx == 0:
                    continue
                w = np.int64(wx * wy * wz)
                i = ci + ox
                j = cj + oy
                k = ck + oz
                if i == gi and j == gj and k == gk:
                    n0 += w * cand[0]
                    n1 += w * cand[1]
                    n2 += w * cand[2]
                else:
                    n0 += w * vec[k, j, i, 0]
                    n1 += w * vec[k, j, i, 1]
                    n2 += w * vec[k, j, i, 2]
    out[0] = n0
    out[1] = n1
    out[2] = n2


@njit(inline="always", **_opts)
def _field3(vec, gx, gy, gz, x, y, z, gi, gj, gk, cand, out):
    """Fixed-point field: floor(numerator * 256 / (gx*gy*gz))."""
    _numer3(vec, gx, gy, gz, x, y, z, gi, gj, gk, cand, out)
    den = np.int64(gx * gy * gz)
    out[0] = (out[0] * ONE) // den
    out[1] = (out[1] * ONE) // den
    out[2] = (out[2] * ONE) // den


@njit(inline="always", **_opts)
def _numer2(vec, s, gx, gy, x, y, gi, gj, cand, out):
    ci = x // gx
    cj = y // gy
    fx = x - ci * gx
    fy = y - cj * gy
    n0 = np.int64(0)
    n1 = np.int64(0)
    for oy in range(2):
        wy = fy if oy else gy - fy
        if wy == 0:
            continue
        for ox in range(2):
            wx = fx if ox else gx - fx
            if wx == 0:
                continue
            w = np.int64(wx * wy)
            i = ci + ox
            j = cj + oy
            if i == gi and j == gj:
                n0 += w * cand[0]
                n1 += w * cand[1]
            else:
                n0 += w * vec[s, j, i, 0]
                n1 += w * vec[s, j, i, 1]
    out[0] = n0
    out[1] = n1


@njit(inline="always", **_opts)
def _field2(vec, s, gx, gy, x, y, gi, gj, cand, out):
    _numer2(vec, s, gx, gy, x, y, gi, gj, cand, out)
    den = np.int64(gx * gy)
    out[0] = (out[0] * ONE) // den
    out[1] = (out[1] * ONE) // den


@njit(**_opts)
def dense_field3(vec, gx, gy, gz, width, height, depth):
    field = np.empty((depth, height, width, 3), dtype=np.int32)
    tmp = np.empty(3, dtype=np.int64)
    nocand = np.zeros(3, dtype=np.int64)
    for z in range(depth):
        for y in range(height):
            for x in range(width):
                _field3(vec, gx, gy, gz, x, y, z, -1, -1, -1, nocand, tmp)
                field[z, y, x, 0] = tmp[0]
                field[z, y, x, 1] = tmp[1]
                field[z, y, x, 2] = tmp[2]
    return field


@njit(**_opts)
def dense_field2(vec, gx, gy, width, height):
    slices = vec.shape[0]
    field = np.empty((slices, height, width, 2), dtype=np.int32)
    tmp = np.empty(2, dtype=np.int64)
    nocand = np.zeros(2, dtype=np.int64)
    for s in range(slices):
        for y in range(height):
            for x in range(width):
                _field2(vec, s, gx, gy, x, y, -1, -1, nocand, tmp)
                field[s, y, x, 0] = tmp[0]
                field[s, y, x, 1] = tmp[1]
    return field


# --------------------------------------------------------------------------
# intensity sampling
# --------------------------------------------------------------------------

@njit(inline="always", **_opts)
def _clamp(p, hi):
    if p < 0:
        return 0
    if p > hi:
        return hi
    return p


@njit(inline="always", **_opts)
def _sample3(ref, px, py, pz):
    """Trilinear sample at fixed-point position; result in fixed point (floor)."""
    depth, height, width = ref.shape
    px = _clamp(px, np.int64(width - 1) * ONE)
    py = _clamp(py, np.int64(height - 1) * ONE)
    pz = _clamp(pz, np.int64(depth - 1) * ONE)
    ix = px >> FRAC_BITS
    iy = py >> FRAC_BITS
    iz = pz >> FRAC_BITS
    ax = px & FRAC_MASK
    ay = py & FRAC_MASK
    az = pz & FRAC_MASK
    ix1 = ix + 1 if ix < width - 1 else ix
    iy1 = iy + 1 if iy < height - 1 else iy
    iz1 = iz + 1 if iz < depth - 1 else iz
    bx = ONE - ax
    by = ONE - ay
    bz = ONE - az
    acc = (bz * (by * (bx * np.int64(ref[iz, iy, ix]) + ax * np.int64(ref[iz, iy, ix1]))
                 + ay * (bx * np.int64(ref[iz, iy1, ix]) + ax * np.int64(ref[iz, iy1, ix1])))
           + az * (by * (bx * np.int64(ref[iz1, iy, ix]) + ax * np.int64(ref[iz1, iy, ix1]))
                   + ay * (bx * np.int64(ref[iz1, iy1, ix]) + ax * np.int64(ref[iz1, iy1, ix1]))))
    return acc >> (2 * FRAC_BITS)


@njit(inline="always", **_opts)
def _sample2(ref, z, px, py):
    height = ref.shape[1]
    width = ref.shape[2]
    px = _clamp(px, np.int64(width - 1) * ONE)
    py = _clamp(py, np.int64(height - 1) * ONE)
    ix = px >> FRAC_BITS
    iy = py >> FRAC_BITS
    ax = px & FRAC_MASK
    ay = py & FRAC_MASK
    ix1 = ix + 1 if ix < width - 1 else ix
    iy1 = iy + 1 if iy < height - 1 else iy
    bx = ONE - ax
    by = ONE - ay
    acc = (by * (bx * np.int64(ref[z, iy, ix]) + ax * np.int64(ref[z, iy, ix1]))
           + ay * (bx * np.int64(ref[z, iy1, ix]) + ax * np.int64(ref[z, iy1, ix1])))
    return acc >> FRAC_BITS


@njit(**_opts)
def warp3(ref, field):
    depth, height, width = ref.shape
    out = np.empty((depth, height, width), dtype=np.int64)
    for z in range(depth):
        for y in range(height):
            for x in range(width):
                out[z, y, x] = _sample3(
                    ref,
                    np.int64(x) * ONE + field[z, y, x, 0],
                    np.int64(y) * ONE + field[z, y, x, 1],
                    np.int64(z) * ONE + field[z, y, x, 2],
                )
    return out


@njit(**_opts)
def warp2(ref, field):
    depth, height, width = ref.shape
    out = np.empty((depth, height, width), dtype=np.int64)
    for z in range(depth):
        for y in range(height):
            for x in range(width):
                out[z, y, x] = _sample2(
                    ref, z,
                    np.int64(x) * ONE + field[z, y, x, 0],
                    np.int64(y) * ONE + field[z, y, x, 1],
                )
    return out


# --------------------------------------------------------------------------
# local prediction error
# --------------------------------------------------------------------------

@njit(inline="always", **_opts)
def _span(idx, n, g, size):
    lo = (idx - 1) * g if idx > 0 else 0
    hi = (idx + 1) * g if idx < n - 1 else idx * g
    if hi > size - 1:
        hi = size - 1
    return lo, hi


@njit(**_opts)
def _prepare3(ref, tgt, vec, gx, gy, gz, gi, gj, gk):
    """Region of the cells incident to (gi, gj, gk) with the field split into
    the contribution of the other corners (``base``) and the weight of the
    grid point itself (``wgt``), both as numerators over gx*gy*gz."""
    depth, height, width = ref.shape
    nz, ny, nx = vec.shape[0], vec.shape[1], vec.shape[2]
    x0, x1 = _span(gi, nx, gx, width)
    y0, y1 = _span(gj, ny, gy, height)
    z0, z1 = _span(gk, nz, gz, depth)
    n = (x1 - x0 + 1) * (y1 - y0 + 1) * (z1 - z0 + 1)
    coords = np.empty((n, 3), dtype=np.int64)
    base = np.empty((n, 3), dtype=np.int64)
    wgt = np.empty(n, dtype=np.int64)
    tv = np.empty(n, dtype=np.int64)
    zero = np.zeros(3, dtype=np.int64)
    unit = np.empty(3, dtype=np.int64)
    tmp = np.empty(3, dtype=np.int64)
    den = np.int64(gx * gy * gz)
    m = 0
    for z in range(z0, z1 + 1):
        for y in range(y0, y1 + 1):
            for x in range(x0, x1 + 1):
                coords[m, 0] = x
                coords[m, 1] = y
                coords[m, 2] = z
                _numer3(vec, gx, gy, gz, x, y, z, gi, gj, gk, zero, tmp)
                base[m, 0] = tmp[0]
                base[m, 1] = tmp[1]
                base[m, 2] = tmp[2]
                unit[0] = 1
                unit[1] = 0
                unit[2] = 0
                _numer3(vec, gx, gy, gz, x, y, z, gi, gj, gk, unit, tmp)
                wgt[m] = tmp[0] - base[m, 0]
                tv[m] = tgt[z, y, x]
                m += 1
    return coords, base, wgt, tv, den


@njit(**_opts)
def _eval3(ref, coords, base, wgt, tv, den, cand):
    ssd = np.int64(0)
    c0 = np.int64(cand[0])
    c1 = np.int64(cand[1])
    c2 = np.int64(cand[2])
    for m in range(coords.shape[0]):
        w = wgt[m]
        f0 = ((base[m, 0] + w * c0) * ONE) // den
        f1 = ((base[m, 1] + w * c1) * ONE) // den
        f2 = ((base[m, 2] + w * c2) * ONE) // den
        v = _sample3(ref, coords[m, 0] * ONE + f0, coords[m, 1] * ONE + f1, coords[m, 2] * ONE + f2)
        r = tv[m] - (v >> FRAC_BITS)
        ssd += r * r
    return ssd


@njit(**_opts)
def region_ssd3(ref, tgt, vec, gx, gy, gz, gi, gj, gk, cand):
    """SSD of ``tgt - floor(W(ref))`` over the cells incident to (gi, gj, gk)."""
    coords, base, wgt, tv, den = _prepare3(ref, tgt, vec, gx, gy, gz, gi, gj, gk)
    return _eval3(ref, coords, base, wgt, tv, den, cand)


@njit(**_opts)
def _prepare2(ref, tgt, vec, s, gx, gy, gi, gj):
    height, width = ref.shape[1], ref.shape[2]
    ny, nx = vec.shape[1], vec.shape[2]
    x0, x1 = _span(gi, nx, gx, width)
    y0, y1 = _span(gj, ny, gy, height)
    n = (x1 - x0 + 1) * (y1 - y0 + 1)
    coords = np.empty((n, 2), dtype=np.int64)
    base = np.empty((n, 2), dtype=np.int64)
    wgt = np.empty(n, dtype=np.int64)
    tv = np.empty(n, dtype=np.int64)
    zero = np.zeros(2, dtype=np.int64)
    unit = np.empty(2, dtype=np.int64)
    tmp = np.empty(2, dtype=np.int64)
    den = np.int64(gx * gy)
    m = 0
    for y in range(y0, y1 + 1):
        for x in range(x0, x1 + 1):
            coords[m, 0] = x
            coords[m, 1] = y
            _numer2(vec, s, gx, gy, x, y, gi, gj, zero, tmp)
            base[m, 0] = tmp[0]
            base[m, 1] = tmp[1]
            unit[0] = 1
            unit[1] = 0
            _numer2(vec, s, gx, gy, x, y, gi, gj, unit, tmp)
            wgt[m] = tmp[0] - base[m, 0]
            tv[m] = tgt[s, y, x]
            m += 1
    return coords, base, wgt, tv, den


@njit(**_opts)
def _eval2(ref, s, coords, base, wgt, tv, den, cand):
    ssd = np.int64(0)
    c0 = np.int64(cand[0])
    c1 = np.int64(cand[1])
    for m in range(coords.shape[0]):
        w = wgt[m]
        f0 = ((base[m, 0] + w * c0) * ONE) // den
        f1 = ((base[m, 1] + w * c1) * ONE) // den
        v = _sample2(ref, s, coords[m, 0] * ONE + f0, coords[m, 1] * ONE + f1)
        r = tv[m] - (v >> FRAC_BITS)
        ssd += r * r
    return ssd


@njit(**_opts)
def region_ssd2(ref, tgt, vec, s, gx, gy, gi, gj, cand):
    coords, base, wgt, tv, den = _prepare2(ref, tgt, vec, s, gx, gy, gi, gj)
    return _eval2(ref, s, coords, base, wgt, tv, den, cand)


# --------------------------------------------------------------------------
# search-region constraints
# --------------------------------------------------------------------------

@njit(inline="always", **_opts)
def _inside(s, norm2, d):
    # s is the signed inward distance scaled by sqrt(norm2)
    if s <= 0:
        return False
    return s * s >= d * d * norm2


@njit(**_opts)
def allowed2(vec, s, gx, gy, gi, gj, cx, cy, d):
    """Candidate position (cx, cy) of grid point (gi, gj) inside the shrunk A-B-C-D quadrilateral."""
    ny, nx = vec.shape[1], vec.shape[2]
    # fixed components
    if (gi == 0 or gi == nx - 1) and cx != gi * gx:
        return False
    if (gj == 0 or gj == ny - 1) and cy != gj * gy:
        return False
    # neighbour cycle: -x, -y, +x, +y
    di = (-1, 0, 1, 0)
    dj = (0, -1, 0, 1)
    for e in range(4):
        i1 = gi + di[e]
        j1 = gj + dj[e]
        i2 = gi + di[(e + 1) % 4]
        j2 = gj + dj[(e + 1) % 4]
        if i1 < 0 or i1 >= nx or j1 < 0 or j1 >= ny:
            continue
        if i2 < 0 or i2 >= nx or j2 < 0 or j2 >= ny:
            continue
        ax = np.int64(i1 * gx + vec[s, j1, i1, 0])
        ay = np.int64(j1 * gy + vec[s, j1, i1, 1])
        bx = np.int64(i2 * gx + vec[s, j2, i2, 0])
        by = np.int64(j2 * gy + vec[s, j2, i2, 1])
        ex = bx - ax
        ey = by - ay
        cross = ex * (cy - ay) - ey * (cx - ax)
        if not _inside(float(cross), float(ex * ex + ey * ey), d):
            return False
    return True


@njit(**_opts)
def allowed3(vec, gx, gy, gz, gi, gj, gk, cx, cy, cz, d):
    """Candidate position inside the shrunk octahedron of the six face neighbours."""
    nz, ny, nx = vec.shape[0], vec.shape[1], vec.shape[2]
    if (gi == 0 or gi == nx - 1) and cx != gi * gx:
        return False
    if (gj == 0 or gj == ny - 1) and cy != gj * gy:
        return False
    if (gk == 0 or gk == nz - 1) and cz != gk * gz:
        return False
    for sx in (-1, 1):
        ix = gi + sx
        if ix < 0 or ix >= nx:
            continue
        for sy in (-1, 1):
            jy = gj + sy
            if jy < 0 or jy >= ny:
                continue
            for sz in (-1, 1):
                kz = gk + sz
                if kz < 0 or kz >= nz:
                    continue
                # X: neighbour along x, Y along y, Z along z
                Xx = np.int64(ix * gx + vec[gk, gj, ix, 0])
                Xy = np.int64(gj * gy + vec[gk, gj, ix, 1])
                Xz = np.int64(gk * gz + vec[gk, gj, ix, 2])
                Yx = np.int64(gi * gx + vec[gk, jy, gi, 0])
                Yy = np.int64(jy * gy + vec[gk, jy, gi, 1])
                Yz = np.int64(gk * gz + vec[gk, jy, gi, 2])
                Zx = np.int64(gi * gx + vec[kz, gj, gi, 0])
                Zy = np.int64(gj * gy + vec[kz, gj, gi, 1])
                Zz = np.int64(kz * gz + vec[kz, gj, gi, 2])
                ax, ay, az = Yx - Xx, Yy - Xy, Yz - Xz
                bx, by, bz = Zx - Xx, Zy - Xy, Zz - Xz
                nx_ = ay * bz - az * by
                ny_ = az * bx - ax * bz
                nz_ = ax * by - ay * bx
                # outward normal is sign * n
                sign = sx * sy * sz
                s = -sign * (nx_ * (cx - Xx) + ny_ * (cy - Xy) + nz_ * (cz - Xz))
                if not _inside(float(s), float(nx_ * nx_ + ny_ * ny_ + nz_ * nz_), d):
                    return False
    return True


@njit(inline="always", **_opts)
def _pos2(vec, s, gx, gy, i, j, gi, gj, cx, cy, out):
    if i == gi and j == gj:
        out[0] = cx
        out[1] = cy
    else:
        out[0] = i * gx + vec[s, j, i, 0]
        out[1] = j * gy + vec[s, j, i, 1]


@njit(**_opts)
def cell_ok2(vec, s, gx, gy, ci, cj, gi, gj, cx, cy):
    """All four corner turns of cell (ci, cj) strictly positive."""
    px = np.empty(4, dtype=np.int64)
    py = np.empty(4, dtype=np.int64)
    tmp = np.empty(2, dtype=np.int64)
    oi = (0, 1, 1, 0)
    oj = (0, 0, 1, 1)
    for c in range(4):
        _pos2(vec, s, gx, gy, ci + oi[c], cj + oj[c], gi, gj, cx, cy, tmp)
        px[c] = tmp[0]
        py[c] = tmp[1]
    for c in range(4):
        nxt = (c + 1) % 4
        prv = (c + 3) % 4
        ux = px[nxt] - px[c]
        uy = py[nxt] - py[c]
        vx = px[prv] - px[c]
        vy = py[prv] - py[c]
        if ux * vy - uy * vx <= 0:
            return False
    return True


@njit(inline="always", **_opts)
def _pos3(vec, gx, gy, gz, i, j, k, gi, gj, gk, cx, cy, cz, out):
    if i == gi and j == gj and k == gk:
        out[0] = cx
        out[1] = cy
        out[2] = cz
    else:
        out[0] = i * gx + vec[k, j, i, 0]
        out[1] = j * gy + vec[k, j, i, 1]
        out[2] = k * gz + vec[k, j, i, 2]


@njit(**_opts)
def cell_ok3(vec, gx, gy, gz, ci, cj, ck, gi, gj, gk, cx, cy, cz):
    """Signed corner-tetrahedron volumes of hexahedral cell (ci, cj, ck) all positive."""
    p = np.empty((2, 2, 2, 3), dtype=np.int64)
    tmp = np.empty(3, dtype=np.int64)
    for a in range(2):
        for b in range(2):
            for c in range(2):
                _pos3(vec, gx, gy, gz, ci + a, cj + b, ck + c, gi, gj, gk, cx, cy, cz, tmp)
                p[a, b, c, 0] = tmp[0]
                p[a, b, c, 1] = tmp[1]
                p[a, b, c, 2] = tmp[2]
    for a in range(2):
        for b in range(2):
            for c in range(2):
                ex0 = p[1 - a, b, c, 0] - p[a, b, c, 0]
                ex1 = p[1 - a, b, c, 1] - p[a, b, c, 1]
                ex2 = p[1 - a, b, c, 2] - p[a, b, c, 2]
                ey0 = p[a, 1 - b, c, 0] - p[a, b, c, 0]
                ey1 = p[a, 1 - b, c, 1] - p[a, b, c, 1]
                ey2 = p[a, 1 - b, c, 2] - p[a, b, c, 2]
                ez0 = p[a, b, 1 - c, 0] - p[a, b, c, 0]
                ez1 = p[a, b, 1 - c, 1] - p[a, b, c, 1]
                ez2 = p[a, b, 1 - c, 2] - p[a, b, c, 2]
                det = (ex0 * (ey1 * ez2 - ey2 * ez1)
                       - ex1 * (ey0 * ez2 - ey2 * ez0)
                       + ex2 * (ey0 * ez1 - ey1 * ez0))
                sign = (1 - 2 * a) * (1 - 2 * b) * (1 - 2 * c)
                if sign * det <= 0:
                    return False
    return True


@njit(**_opts)
def incident_ok2(vec, s, gx, gy, gi, gj, cx, cy):
    ny, nx = vec.shape[1], vec.shape[2]
    for cj in range(gj - 1, gj + 1):
        if cj < 0 or cj >= ny - 1:
            continue
        for ci in range(gi - 1, gi + 1):
            if ci < 0 or ci >= nx - 1:
                continue
            if not cell_ok2(vec, s, gx, gy, ci, cj, gi, gj, cx, cy):
                return False
    return True


@njit(**_opts)
def incident_ok3(vec, gx, gy, gz, gi, gj, gk, cx, cy, cz):
    nz, ny, nx = vec.shape[0], vec.shape[1], vec.shape[2]
    for ck in range(gk - 1, gk + 1):
        if ck < 0 or ck >= nz - 1:
            continue
        for cj in range(gj - 1, gj + 1):
            if cj < 0 or cj >= ny - 1:
                continue
            for ci in range(gi - 1, gi + 1):
                if ci < 0 or ci >= nx - 1:
                    continue
                if not cell_ok3(vec, gx, gy, gz, ci, cj, ck, gi, gj, gk, cx, cy, cz):
                    return False
    return True


# --------------------------------------------------------------------------
# single grid-point refinement
# --------------------------------------------------------------------------

@njit(**_opts)
def refine3(ref, tgt, vec, gx, gy, gz, gi, gj, gk, step, d, best):
    """Best of the 27 candidate updates for one grid point.

    Writes the winning vector into ``best`` and returns (best_ssd, current_ssd).
    Ties go to the unperturbed vector, then to the first candidate in
    lexicographic (dx, dy, dz) order.
    """
    nz, ny, nx = vec.shape[0], vec.shape[1], vec.shape[2]
    cur = np.empty(3, dtype=np.int64)
    cur[0] = vec[gk, gj, gi, 0]
    cur[1] = vec[gk, gj, gi, 1]
    cur[2] = vec[gk, gj, gi, 2]
    free_x = 0 < gi < nx - 1
    free_y = 0 < gj < ny - 1
    free_z = 0 < gk < nz - 1
    best[0] = cur[0]
    best[1] = cur[1]
    best[2] = cur[2]
    coords, base, wgt, tv, den = _prepare3(ref, tgt, vec, gx, gy, gz, gi, gj, gk)
    zero_ssd = _eval3(ref, coords, base, wgt, tv, den, cur)
    best_ssd = zero_ssd
    if zero_ssd == 0:
        return best_ssd, zero_ssd
    cand = np.empty(3, dtype=np.int64)
    for dx in (-step, 0, step):
        if dx != 0 and not free_x:
            continue
        for dy in (-step, 0, step):
            if dy != 0 and not free_y:
                continue
            for dz in (-step, 0, step):
                if dz != 0 and not free_z:
                    continue
                if dx == 0 and dy == 0 and dz == 0:
                    continue
                cand[0] = cur[0] + dx
                cand[1] = cur[1] + dy
                cand[2] = cur[2] + dz
                cx = gi * gx + cand[0]
                cy = gj * gy + cand[1]
                cz = gk * gz + cand[2]
                if not allowed3(vec, gx, gy, gz, gi, gj, gk, cx, cy, cz, d):
                    continue
                if not incident_ok3(vec, gx, gy, gz, gi, gj, gk, cx, cy, cz):
                    continue
                e = _eval3(ref, coords, base, wgt, tv, den, cand)
                if e < best_ssd:
                    best_ssd = e
                    best[0] = cand[0]
                    best[1] = cand[1]
                    best[2] = cand[2]
    return best_ssd, zero_ssd


@njit(**_opts)
def refine2(ref, tgt, vec, s, gx, gy, gi, gj, step, d, best):
    ny, nx = vec.shape[1], vec.shape[2]
    cur = np.empty(2, dtype=np.int64)
    cur[0] = vec[s, gj, gi, 0]
    cur[1] = vec[s, gj, gi, 1]
    free_x = 0 < gi < nx - 1
    free_y = 0 < gj < ny - 1
    best[0] = cur[0]
    best[1] = cur[1]
    coords, base, wgt, tv, den = _prepare2(ref, tgt, vec, s, gx, gy, gi, gj)
    zero_ssd = _eval2(ref, s, coords, base, wgt, tv, den, cur)
    best_ssd = zero_ssd
    if zero_ssd == 0:
        return best_ssd, zero_ssd
    cand = np.empty(2, dtype=np.int64)
    for dx in (-step, 0, step):
        if dx != 0 and not free_x:
            continue
        for dy in (-step, 0, step):
            if dy != 0 and not free_y:
                continue
            if dx == 0 and dy == 0:
                continue
            cand[0] = cur[0] + dx
            cand[1] = cur[1] + dy
            cx = gi * gx + cand[0]
            cy = gj * gy + cand[1]
            if not allowed2(vec, s, gx, gy, gi, gj, cx, cy, d):
                continue
            if not incident_ok2(vec, s, gx, gy, gi, gj, cx, cy):
                continue
            e = _eval2(ref, s, coords, base, wgt, tv, den, cand)
            if e < best_ssd:
                best_ssd = e
                best[0] = cand[0]
                best[1] = cand[1]
    return best_ssd, zero_ssd
