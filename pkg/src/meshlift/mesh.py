"""Regular quadrilateral (2-D) and hexahedral (3-D) meshes of grid points.

A grid point with index ``(i, j[, k])`` rests at ``(i*gx, j*gy[, k*gz])`` and
carries an integer motion vector. Vectors live in ``Mesh.vectors`` with shape
``(ny, nx, 2)`` or ``(nz, ny, nx, 3)``; components are ordered (x, y[, z]).

A component is free only when the grid point lies strictly inside the grid
along that axis, which keeps the outer hull of the mesh fixed: corners never
move, edge points slide along their edge, face points stay in their face.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels as K
from .volume import read_keyvalue, write_keyvalue, raw_path


@dataclass(frozen=True)
class GridSpec:
    """Cell size per axis and the image/volume dimensions it covers."""

    cell: tuple[int, ...]
    dims: tuple[int, ...]

    def __post_init__(self):
        cell = tuple(int(c) for c in self.cell)
        dims = tuple(int(n) for n in self.dims)
        object.__setattr__(self, "cell", cell)
        object.__setattr__(self, "dims", dims)
        if len(cell) not in (2, 3) or len(cell) != len(dims):
            raise ValueError(f"cell {cell} and dims {dims} must both have 2 or 3 entries")
        for axis, (g, n) in enumerate(zip(cell, dims)):
            if g < 2:
                raise ValueError(f"cell size along {'xyz'[axis]} must be >= 2, got {g}")
            if n < 1 or n % g:
                raise ValueError(f"cell size {g} does not divide dimension {n} along {'xyz'[axis]}")

    @property
    def ndim(self) -> int:
        return len(self.cell)

    @property
    def counts(self) -> tuple[int, ...]:
        """Grid points per axis, ordered (nx, ny[, nz])."""
        return tuple(n // g + 1 for g, n in zip(self.cell, self.dims))

    @property
    def shape(self) -> tuple[int, ...]:
        """Array shape of the vector field without the component axis."""
        return self.counts[::-1]

    def __str__(self):
        return "x".join(str(g) for g in self.cell)


def parse_grid(text: str, dims: Sequence[int]) -> GridSpec:
    """``"16x16"`` or ``"16x16x4"`` for an image/volume of ``dims`` (w, h, d)."""
    try:
        cell = tuple(int(v) for v in text.lower().split("x"))
    except ValueError:
        raise ValueError(f"bad grid {text!r}, expected e.g. 16x16 or 16x16x4") from None
    if len(cell) not in (2, 3):
        raise ValueError(f"bad grid {text!r}, expected 2 or 3 sizes")
    return GridSpec(cell, tuple(dims[: len(cell)]))


class Mesh:
    """Grid points of one 2-D or 3-D mesh with their motion vectors."""

    def __init__(self, grid: GridSpec, vectors=None):
        self.grid = grid
        shape = grid.shape + (grid.ndim,)
        if vectors is None:
            vectors = np.zeros(shape, dtype=np.int32)
        vectors = np.array(vectors, dtype=np.int32, copy=True)
        if vectors.shape != shape:
            raise ValueError(f"vectors have shape {vectors.shape}, grid needs {shape}")
        self.vectors = vectors

    @property
    def ndim(self) -> int:
        return self.grid.ndim

    def copy(self) -> "Mesh":
        return Mesh(self.grid, self.vectors)

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented
        return self.grid == other.grid and bool(np.array_equal(self.vectors, other.vectors))

    __hash__ = None

    def __repr__(self):
        return f"Mesh(grid={self.grid.cell}, dims={self.grid.dims}, max|v|={int(np.abs(self.vectors).max(initial=0))})"

    def check_index(self, gp) -> tuple[int, ...]:
        gp = tuple(int(v) for v in gp)
        if len(gp) != self.ndim or any(not 0 <= v < n for v, n in zip(gp, self.grid.counts)):
            raise IndexError(f"grid point {gp} outside grid {self.grid.counts}")
        return gp

    def vector(self, gp) -> np.ndarray:
        gp = self.check_index(gp)
        return self.vectors[gp[::-1]].copy()

    def rest_position(self, gp) -> np.ndarray:
        gp = self.check_index(gp)
        return np.array([v * g for v, g in zip(gp, self.grid.cell)], dtype=np.int64)

    def position(self, gp) -> np.ndarray:
        return self.rest_position(gp) + self.vector(gp)

    def positions(self) -> np.ndarray:
        """Current positions of all grid points, same layout as ``vectors``."""
        axes = [np.arange(n) * g for n, g in zip(self.grid.counts, self.grid.cell)]
        rest = np.stack(np.meshgrid(*axes[::-1], indexing="ij")[::-1], axis=-1)
        return rest + self.vectors

    def free_mask(self) -> np.ndarray:
        """Boolean array like ``vectors``: True where a component may be nonzero."""
        mask = np.ones(self.vectors.shape, dtype=bool)
        for axis, n in enumerate(self.grid.counts):
            idx = [slice(None)] * self.ndim
            arr_axis = self.ndim - 1 - axis
            for edge in (0, n - 1):
                idx[arr_axis] = edge
                mask[tuple(idx) + (axis,)] = False
        return mask

    def respects_boundary(self) -> bool:
        return not np.any(self.vectors[~self.free_mask()])


def create_mesh(spec: GridSpec) -> Mesh:
    return Mesh(spec)


def negate(mesh: Mesh) -> Mesh:
    return Mesh(mesh.grid, -mesh.vectors)


def count_free_parameters(mesh, slices: int = 1) -> int:
    """Scalar degrees of freedom after the boundary rules.

    For a 2-D mesh the count is per slice times ``slices``; ``mesh`` may also
    be a bare :class:`GridSpec`.
    """
    grid = mesh.grid if isinstance(mesh, Mesh) else mesh
    counts = grid.counts
    total = 0
    for axis, n in enumerate(counts):
        others = 1
        for b, m in enumerate(counts):
            if b != axis:
                others *= m
        total += max(n - 2, 0) * others
    if grid.ndim == 2:
        total *= slices
    return total


def _stack2(meshes: Sequence[Mesh]) -> np.ndarray:
    return np.ascontiguousarray(np.stack([m.vectors for m in meshes]))


def _vec4(mesh: Mesh) -> np.ndarray:
    return np.ascontiguousarray(mesh.vectors)


def candidate_allowed(mesh: Mesh, gp, candidate, d: float = 1) -> bool:
    """Whether grid point ``gp`` may move to absolute position ``candidate``.

    The position must keep the fixed (boundary) components at rest and lie at
    Euclidean distance >= ``d`` (and > 0) inside every supporting line/plane of
    the polytope spanned by the current positions of the axis neighbours: the
    quadrilateral A-B-C-D in 2-D, the octahedron of the six face neighbours in
    3-D. Sides that would need a missing neighbour are dropped.
    """
    if d < 0:
        raise ValueError("safety margin must be >= 0")
    gp = mesh.check_index(gp)
    c = [int(v) for v in candidate]
    if len(c) != mesh.ndim:
        raise ValueError(f"candidate {candidate} has wrong length for a {mesh.ndim}-D mesh")
    if mesh.ndim == 2:
        gx, gy = mesh.grid.cell
        return bool(K.allowed2(_vec4(mesh)[np.newaxis], 0, gx, gy, gp[0], gp[1], c[0], c[1], float(d)))
    gx, gy, gz = mesh.grid.cell
    return bool(K.allowed3(_vec4(mesh), gx, gy, gz, *gp, *c, float(d)))


# --------------------------------------------------------------------------
# cell validity
# --------------------------------------------------------------------------

def cell_orientations(mesh: Mesh) -> np.ndarray:
    """Smallest signed corner measure per cell.

    2-D: cross product of the two edges at each corner of the quadrilateral.
    3-D: determinant of the three edges at each hexahedron corner (corner
    tetrahedron volume times 6), sign-corrected so rest cells are positive.
    Positive everywhere means every cell is convex (2-D) / non-inverted (3-D).
    """
    p = mesh.positions().astype(np.int64)
    if mesh.ndim == 2:
        c00, c10 = p[:-1, :-1], p[:-1, 1:]
        c11, c01 = p[1:, 1:], p[1:, :-1]
        ring = [c00, c10, c11, c01]
        out = None
        for n in range(4):
            u = ring[(n + 1) % 4] - ring[n]
            v = ring[(n + 3) % 4] - ring[n]
            cr = u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]
            out = cr if out is None else np.minimum(out, cr)
        return out
    corners = {}
    for a in (0, 1):
        for b in (0, 1):
            for c in (0, 1):
                corners[a, b, c] = p[c: p.shape[0] - 1 + c, b: p.shape[1] - 1 + b, a: p.shape[2] - 1 + a]
    out = None
    for (a, b, c), q in corners.items():
        ex = corners[1 - a, b, c] - q
        ey = corners[a, 1 - b, c] - q
        ez = corners[a, b, 1 - c] - q
        det = np.einsum("...i,...i->...", ex, np.cross(ey, ez))
        det = det * (1 - 2 * a) * (1 - 2 * b) * (1 - 2 * c)
        out = det if out is None else np.minimum(out, det)
    return out


def is_valid(mesh: Mesh) -> bool:
    return bool(np.all(cell_orientations(mesh) > 0))


# --------------------------------------------------------------------------
# dense motion field
# --------------------------------------------------------------------------

class MotionField:
    """Per-voxel displacement in fixed point (``FRAC_BITS`` fractional bits).

    ``data`` has shape ``(depth, height, width, c)`` with c = 3 for a 3-D
    mesh and c = 2 for per-slice 2-D meshes.
    """

    frac_bits = K.FRAC_BITS

    def __init__(self, data: np.ndarray):
        data = np.ascontiguousarray(data, dtype=np.int32)
        if data.ndim != 4 or data.shape[-1] not in (2, 3):
            raise ValueError(f"field must have shape (d, h, w, 2|3), got {data.shape}")
        self.data = data

    @classmethod
    def from_float(cls, values) -> "MotionField":
        values = np.asarray(values, dtype=np.float64)
        return cls(np.floor(values * K.ONE).astype(np.int32))

    @property
    def dims(self) -> tuple[int, int, int]:
        d, h, w, _ = self.data.shape
        return (w, h, d)

    @property
    def components(self) -> int:
        return self.data.shape[-1]

    def to_float(self) -> np.ndarray:
        return self.data / K.ONE


def _as_slices(meshes) -> list[Mesh]:
    if isinstance(meshes, Mesh):
        if meshes.ndim != 2:
            raise TypeError("expected 2-D meshes")
        return [meshes]
    meshes = list(meshes)
    if not meshes or any(m.ndim != 2 for m in meshes):
        raise TypeError("expected a non-empty sequence of 2-D meshes")
    grids = {m.grid for m in meshes}
    if len(grids) != 1:
        raise ValueError("per-slice meshes must share one grid")
    return meshes


def dense_field(meshes) -> MotionField:
    """Interpolate grid-point vectors to every voxel.

    A 3-D mesh gives a trilinear 3-component field. A 2-D mesh, or a sequence
    of per-slice 2-D meshes, gives a bilinear 2-component field with one slice
    per mesh.
    """
    if isinstance(meshes, Mesh) and meshes.ndim == 3:
        gx, gy, gz = meshes.grid.cell
        w, h, d = meshes.grid.dims
        return MotionField(K.dense_field3(_vec4(meshes), gx, gy, gz, w, h, d))
    slices = _as_slices(meshes)
    gx, gy = slices[0].grid.cell
    w, h = slices[0].grid.dims
    return MotionField(K.dense_field2(_stack2(slices), gx, gy, w, h))


# --------------------------------------------------------------------------
# file format
# --------------------------------------------------------------------------

def save_mesh(meshes, path) -> Path:
    """Write a 3-D mesh or a per-slice 2-D mesh sequence.

    Header keys: ``dim``, ``gx``, ``gy`` [``gz``], ``width``, ``height``
    [``depth``], plus ``slices`` for 2-D sequences. The raw file holds
    little-endian int16 components, grid points x fastest, components
    interleaved.
    """
    path = Path(path)
    if isinstance(meshes, Mesh) and meshes.ndim == 3:
        grid, data, slices = meshes.grid, meshes.vectors, None
    else:
        seq = _as_slices(meshes)
        grid, data, slices = seq[0].grid, _stack2(seq), len(seq)
    if data.size and (data.min() < -32768 or data.max() > 32767):
        raise ValueError("motion vectors exceed int16 storage")
    header = {"dim": grid.ndim}
    for name, g in zip("xyz", grid.cell):
        header[f"g{name}"] = g
    for name, n in zip(("width", "height", "depth"), grid.dims):
        header[name] = n
    if slices is not None:
        header["slices"] = slices
    data.astype("<i2").tofile(raw_path(path))
    write_keyvalue(path, header)
    return path


def load_mesh(path):
    """Inverse of :func:`save_mesh`; returns a Mesh or a list of 2-D meshes."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such mesh header: {path}")
    hdr = read_keyvalue(path)
    try:
        dim = int(hdr["dim"])
        if dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {dim}")
        keys = ("gx", "gy", "gz")[:dim]
        cell = tuple(int(hdr[k]) for k in keys)
        dims = tuple(int(hdr[k]) for k in ("width", "height", "depth")[:dim])
        slices = int(hdr.get("slices", 1))
    except KeyError as exc:
        raise ValueError(f"mesh header missing {exc.args[0]!r}") from None
    grid = GridSpec(cell, dims)
    rpath = raw_path(path)
    if not rpath.exists():
        raise FileNotFoundError(f"no raw file next to mesh header: {rpath}")
    per = int(np.prod(grid.shape)) * dim
    count = per * (slices if dim == 2 else 1)
    if rpath.stat().st_size != 2 * count:
        raise ValueError(f"{rpath}: {rpath.stat().st_size} bytes, header implies {2 * count}")
    raw = np.fromfile(rpath, dtype="<i2").astype(np.int32)
    if dim == 3:
        return Mesh(grid, raw.reshape(grid.shape + (3,)))
    raw = raw.reshape((slices,) + grid.shape + (2,))
    return [Mesh(grid, raw[s]) for s in range(slices)]
