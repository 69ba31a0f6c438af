"""Iterative constrained grid-point motion estimation.

Every iteration visits the grid points in parity groups. Members of one
group share no incident cell and never appear in each other's search
polytope, so their updates are computed against a frozen mesh, possibly on
several threads, and applied together at the end of the group pass. The
result does not depend on the thread count.

For each grid point the current vector is perturbed by ``{-step, 0, +step}``
per free component (9 positions in 2-D, 27 in 3-D). Candidates outside the
shrunk neighbour polytope, or that would turn an incident cell non-convex /
inverted, are dropped. The candidate with the smallest SSD between target and
floored prediction over the incident cells wins; ties go to the unperturbed
vector, then to the first candidate in lexicographic order.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.ndimage import maximum_filter

from . import _kernels as K
from .mesh import GridSpec, Mesh
from .volume import Volume3D
from .warp import compensate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EstimationConfig:
    iterations: int = 50
    d: float = 1
    step: int = 1
    metric: str = "ssd"

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.d < 0:
            raise ValueError(f"safety margin d must be >= 0, got {self.d}")
        if self.step < 1:
            raise ValueError(f"step must be >= 1, got {self.step}")
        if self.metric != "ssd":
            raise ValueError(f"unsupported error metric {self.metric!r}")


@dataclass
class RefinementTrace:
    """Global SSD and number of accepted updates after each iteration."""

    error: list[int] = field(default_factory=list)
    accepted: list[int] = field(default_factory=list)
    initial_error: int = 0

    def __len__(self):
        return len(self.error)


def coloring(spec: GridSpec) -> list[list[tuple[int, ...]]]:
    """Parity classes of grid-point indices, in (i, j[, k]) index order.

    Groups are ordered by parity pattern with the x parity varying slowest,
    i.e. (0, 0), (0, 1), (1, 0), (1, 1) in 2-D.
    """
    counts = spec.counts
    groups = []
    for parity in itertools.product((0, 1), repeat=spec.ndim):
        ranges = [range(p, n, 2) for p, n in zip(parity, counts)]
        members = sorted(itertools.product(*ranges))
        if members:
            groups.append(members)
    return groups


def _arrays(reference, target):
    ref = reference.data if isinstance(reference, Volume3D) else np.asarray(reference)
    tgt = target.data if isinstance(target, Volume3D) else np.asarray(target)
    if ref.ndim == 2:
        ref = ref[np.newaxis]
    if tgt.ndim == 2:
        tgt = tgt[np.newaxis]
    if ref.shape != tgt.shape:
        raise ValueError(f"reference {ref.shape[::-1]} and target {tgt.shape[::-1]} differ in size")
    return (np.ascontiguousarray(ref, dtype=np.int32), np.ascontiguousarray(tgt, dtype=np.int32))


def local_error(reference, target, mesh: Mesh, gp, candidate, z: int = 0) -> int:
    """SSD of ``target - floor(prediction)`` over the cells incident to ``gp``.

    The prediction uses ``mesh`` with the vector of ``gp`` replaced by
    ``candidate``. For a 2-D mesh the slice ``z`` of the volumes is used.
    """
    ref, tgt = _arrays(reference, target)
    gp = mesh.check_index(gp)
    cand = np.asarray(candidate, dtype=np.int64)
    if cand.shape != (mesh.ndim,):
        raise ValueError(f"candidate must have {mesh.ndim} components")
    if mesh.ndim == 3:
        if tuple(mesh.grid.dims) != (ref.shape[2], ref.shape[1], ref.shape[0]):
            raise ValueError("mesh does not match the volume")
        gx, gy, gz = mesh.grid.cell
        return int(K.region_ssd3(ref, tgt, np.ascontiguousarray(mesh.vectors), gx, gy, gz, *gp, cand))
    if tuple(mesh.grid.dims) != (ref.shape[2], ref.shape[1]):
        raise ValueError("mesh does not match the slice")
    if not 0 <= z < ref.shape[0]:
        raise IndexError(f"slice {z} out of range")
    gx, gy = mesh.grid.cell
    vec = np.zeros((ref.shape[0],) + mesh.vectors.shape, dtype=np.int32)
    vec[z] = mesh.vectors
    return int(K.region_ssd2(ref, tgt, vec, z, gx, gy, gp[0], gp[1], cand))


def prediction_ssd(reference, target, meshes) -> int:
    ref, tgt = _arrays(reference, target)
    pred = compensate(ref, meshes).floor()
    r = tgt.astype(np.int64) - pred
    return int(np.sum(r * r))


class _Estimator:
    """Shared driver for the 3-D and the per-slice 2-D refinement."""

    def __init__(self, ref, tgt, spec: GridSpec, cfg: EstimationConfig, threads: int):
        self.ref, self.tgt, self.spec, self.cfg = ref, tgt, spec, cfg
        self.threads = max(1, int(threads))
        self.groups = coloring(spec)
        self.d = float(cfg.d)
        if spec.ndim == 3:
            self.vec = np.zeros(spec.shape + (3,), dtype=np.int32)
            self.slices = [None]
        else:
            self.vec = np.zeros((ref.shape[0],) + spec.shape + (2,), dtype=np.int32)
            self.slices = list(range(ref.shape[0]))
        # pass stamps for skipping grid points whose neighbourhood is unchanged
        stamp_shape = self.vec.shape[:-1]
        self.changed = np.full(stamp_shape, -1, dtype=np.int64)
        self.evaluated = np.full(stamp_shape, -2, dtype=np.int64)
        self.pass_no = 0

    def meshes(self):
        if self.spec.ndim == 3:
            return Mesh(self.spec, self.vec)
        return [Mesh(self.spec, self.vec[s]) for s in self.slices]

    def _refine(self, task):
        s, gp = task
        cfg = self.cfg
        if self.spec.ndim == 3:
            best = np.empty(3, dtype=np.int64)
            gx, gy, gz = self.spec.cell
            K.refine3(self.ref, self.tgt, self.vec, gx, gy, gz, gp[0], gp[1], gp[2],
                      cfg.step, self.d, best)
        else:
            best = np.empty(2, dtype=np.int64)
            gx, gy = self.spec.cell
            K.refine2(self.ref, self.tgt, self.vec, s, gx, gy, gp[0], gp[1], cfg.step, self.d, best)
        return best

    def _index(self, s, gp):
        return tuple(gp[::-1]) if s is None else (s,) + tuple(gp[::-1])

    def _stale(self):
        # neighbourhood = the grid point and every grid point sharing a cell with it
        size = [3] * self.vec.ndim
        size[-1] = 1
        if self.spec.ndim == 2:
            size[0] = 1
        recent = maximum_filter(self.changed, size=size[:-1], mode="constant", cval=-1)
        return recent >= self.evaluated

    def one_pass(self, pool) -> int:
        accepted = 0
        for group in self.groups:
            stale = self._stale()
            tasks = [(s, gp) for s in self.slices for gp in group if stale[self._index(s, gp)]]
            if pool is None:
                results = [self._refine(t) for t in tasks]
            else:
                results = list(pool.map(self._refine, tasks))
            for (s, gp), best in zip(tasks, results):
                idx = self._index(s, gp)
                self.evaluated[idx] = self.pass_no
                if np.any(self.vec[idx] != best):
                    self.vec[idx] = best
                    self.changed[idx] = self.pass_no
                    accepted += 1
            self.pass_no += 1
        return accepted


def estimate(reference, target, spec: GridSpec, cfg: EstimationConfig = EstimationConfig(),
             *, threads: int = 1,
             on_iteration: Callable[[int, object], None] | None = None):
    """Estimate grid-point motion so that compensate(reference) predicts target.

    Parameters
    ----------
    reference, target : Volume3D
        ``f_{2t-1}`` and ``f_{2t}``.
    spec : GridSpec
        A 3-D grid over the volume, or a 2-D grid over each slice; in the 2-D
        case every z slice gets its own independent mesh.
    cfg : EstimationConfig
    threads : int
        Worker threads for the grid points of one parity group.
    on_iteration : callable, optional
        Called as ``on_iteration(k, meshes)`` after iteration ``k`` (1-based).

    Returns
    -------
    (Mesh or list of Mesh, RefinementTrace)

    Once an iteration accepts no update the mesh is a fixed point; the
    remaining iterations are not computed and the trace repeats the last
    values, exactly as running them would.
    """
    ref, tgt = _arrays(reference, target)
    d, h, w = ref.shape
    if spec.ndim == 3 and tuple(spec.dims) != (w, h, d):
        raise ValueError(f"grid covers {spec.dims}, volume is {(w, h, d)}")
    if spec.ndim == 2 and tuple(spec.dims) != (w, h):
        raise ValueError(f"grid covers {spec.dims}, slices are {(w, h)}")
    est = _Estimator(ref, tgt, spec, cfg, threads)
    trace = RefinementTrace(initial_error=prediction_ssd(ref, tgt, est.meshes()))
    pool = ThreadPoolExecutor(est.threads) if est.threads > 1 else None
    try:
        error = trace.initial_error
        for k in range(1, cfg.iterations + 1):
            accepted = est.one_pass(pool)
            if accepted:
                error = prediction_ssd(ref, tgt, est.meshes())
            trace.error.append(error)
            trace.accepted.append(accepted)
            if on_iteration is not None:
                on_iteration(k, est.meshes())
            if not accepted:
                log.debug("fixed point after %d iterations", k)
                for k2 in range(k + 1, cfg.iterations + 1):
                    trace.error.append(error)
                    trace.accepted.append(0)
                    if on_iteration is not None:
                        on_iteration(k2, est.meshes())
                break
    finally:
        if pool is not None:
            pool.shutdown()
    return est.meshes(), trace


def zero_meshes(spec: GridSpec, depth: int = 1):
    if spec.ndim == 3:
        return Mesh(spec)
    return [Mesh(spec) for _ in range(depth)]


__all__ = [
    "EstimationConfig", "RefinementTrace", "coloring", "estimate", "local_error",
    "prediction_ssd", "zero_meshes",
]
