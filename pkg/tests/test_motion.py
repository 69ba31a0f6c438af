import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_mesh, random_volume
from meshlift.lifting import predict_step
from meshlift.mesh import GridSpec, Mesh, is_valid
from meshlift.metrics import mean_energy
from meshlift.motion import (
    EstimationConfig, coloring, estimate, local_error, prediction_ssd,
)
from meshlift.volume import PhantomSpec, Volume3D, generate_phantom
from meshlift.warp import compensate


def phantom_pair(dims, amplitude, seed, noise=0):
    w, h, d = dims
    vol = generate_phantom(PhantomSpec(w, h, d, 2, amplitude=amplitude, seed=seed, noise=noise))
    return Volume3D(vol.data[0]), Volume3D(vol.data[1])


# --------------------------------------------------------------------------
# coloring
# --------------------------------------------------------------------------

def test_coloring_3x3():
    groups = coloring(GridSpec((16, 16), (32, 32)))
    assert groups == [
        [(0, 0), (0, 2), (2, 0), (2, 2)],
        [(0, 1), (2, 1)],
        [(1, 0), (1, 2)],
        [(1, 1)],
    ]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 7), min_size=2, max_size=3))
def test_coloring_partition_and_spacing(cells):
    spec = GridSpec((2,) * len(cells), tuple(2 * c for c in cells))
    groups = coloring(spec)
    assert len(groups) <= 2 ** spec.ndim
    flat = [gp for g in groups for gp in g]
    assert sorted(flat) == sorted(itertools.product(*[range(n) for n in spec.counts]))
    assert len(flat) == len(set(flat))
    for g in groups:
        for a, b in itertools.combinations(g, 2):
            assert max(abs(u - v) for u, v in zip(a, b)) >= 2


# --------------------------------------------------------------------------
# local error
# --------------------------------------------------------------------------

def test_local_error_zero_when_equal(rng):
    ref = Volume3D(random_volume(rng, (32, 32, 1)))
    mesh = Mesh(GridSpec((16, 16), (32, 32)))
    assert local_error(ref, ref, mesh, (1, 1), (0, 0)) == 0


@pytest.mark.parametrize("gp,volume", [((1, 1), 33 * 32), ((0, 0), 17 * 17), ((3, 1), 16 * 32)])
def test_local_error_constant_offset(gp, volume, rng):
    # grid points rest at x = 0, 16, 32, 48 and y = 0, 16, 32 on a 48x32 slice;
    # the incident region is clipped to the last voxel row / column
    ref = random_volume(rng, (48, 32, 1))
    mesh = Mesh(GridSpec((16, 16), (48, 32)))
    c = 7
    assert local_error(Volume3D(ref), Volume3D(ref + c), mesh, gp, (0, 0)) == c * c * volume


def test_local_error_3d_constant_offset(rng):
    ref = random_volume(rng, (24, 16, 8))
    mesh = Mesh(GridSpec((8, 8, 4), (24, 16, 8)))
    # x in [0, 16], y in [0, 15], z in [0, 7]
    assert local_error(Volume3D(ref), Volume3D(ref - 3), mesh, (1, 1, 1), (0, 0, 0)) == 9 * 17 * 16 * 8


def replaced(mesh, gp, vec):
    out = mesh.copy()
    out.vectors[tuple(gp[::-1])] = vec
    return out


@pytest.mark.parametrize("grid,dims", [(GridSpec((4, 4), (16, 12)), (16, 12, 1)),
                                       (GridSpec((4, 4, 2), (16, 12, 6)), (16, 12, 6))])
def test_local_error_matches_full_frame(grid, dims, rng):
    for _ in range(10):
        ref = Volume3D(random_volume(rng, dims))
        tgt = Volume3D(random_volume(rng, dims))
        mesh = random_mesh(rng, grid, amp=1)
        gp = tuple(int(rng.integers(0, n)) for n in grid.counts)
        cand = mesh.vector(gp) + rng.integers(-1, 2, size=grid.ndim) * mesh.free_mask()[gp[::-1]]
        moved = replaced(mesh, gp, cand)
        full_pred = compensate(ref, moved if grid.ndim == 3 else [moved]).floor()
        # the region: incident cells in rest coordinates, bounds inclusive
        box = []
        for a in range(grid.ndim):
            g, n, size = grid.cell[a], grid.counts[a], dims[a]
            lo = max(gp[a] - 1, 0) * g
            hi = min(min(gp[a] + 1, n - 1) * g, size - 1)
            box.append(slice(lo, hi + 1))
        region = (slice(None),) + tuple(box[::-1]) if grid.ndim == 2 else tuple(box[::-1])
        r = tgt.data.astype(np.int64)[region] - full_pred[region]
        assert local_error(ref, tgt, mesh, gp, cand) == int(np.sum(r * r))
        # differences between candidates equal full-frame differences
        before = prediction_ssd(ref, tgt, mesh if grid.ndim == 3 else [mesh])
        after = prediction_ssd(ref, tgt, moved if grid.ndim == 3 else [moved])
        assert (local_error(ref, tgt, mesh, gp, cand)
                - local_error(ref, tgt, mesh, gp, mesh.vector(gp))) == after - before


# --------------------------------------------------------------------------
# estimation
# --------------------------------------------------------------------------

def test_config_validation():
    for kwargs in (dict(iterations=0), dict(d=-1), dict(step=0), dict(metric="sad")):
        with pytest.raises(ValueError):
            EstimationConfig(**kwargs)


def test_identical_frames_give_zero_mesh():
    f1, _ = phantom_pair((32, 32, 16), (2, 2, 1), seed=1, noise=5)
    mesh, trace = estimate(f1, f1, GridSpec((8, 8, 4), (32, 32, 16)), EstimationConfig(iterations=5))
    assert not mesh.vectors.any()
    assert trace.error == [0] * 5
    meshes, _ = estimate(f1, f1, GridSpec((8, 8), (32, 32)), EstimationConfig(iterations=3))
    assert len(meshes) == 16 and not any(m.vectors.any() for m in meshes)


def test_estimation_beats_zero_mesh():
    f1, f2 = phantom_pair((64, 64, 16), (3, 3, 1.5), seed=2)
    spec = GridSpec((16, 16, 4), (64, 64, 16))
    mesh, trace = estimate(f1, f2, spec, EstimationConfig(iterations=20))
    assert trace.error[-1] < trace.initial_error
    compensated = mean_energy(predict_step(f1, f2, mesh))
    baseline = mean_energy(predict_step(f1, f2, None))
    assert compensated < baseline
    assert is_valid(mesh) and mesh.respects_boundary()


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3]), st.sampled_from([1, 2]))
def test_trace_non_increasing(seed, ndim, step):
    rng = np.random.default_rng(seed)
    dims = (16, 12, 6)
    ref = Volume3D(rng.integers(0, 4096, size=dims[::-1]))
    tgt = Volume3D(np.roll(ref.data, 1, axis=2) + rng.integers(-20, 21, size=dims[::-1]))
    spec = GridSpec((4, 4, 2), dims) if ndim == 3 else GridSpec((4, 4), dims[:2])
    _, trace = estimate(ref, tgt, spec, EstimationConfig(iterations=6, step=step))
    errors = [trace.initial_error] + trace.error
    assert all(b <= a for a, b in zip(errors, errors[1:]))
    assert len(trace) == 6


def test_trace_matches_prediction_error():
    f1, f2 = phantom_pair((32, 32, 16), (2, 2, 1), seed=3)
    spec = GridSpec((8, 8), (32, 32))
    seen = []
    meshes, trace = estimate(f1, f2, spec, EstimationConfig(iterations=4),
                             on_iteration=lambda k, m: seen.append((k, prediction_ssd(f1, f2, m))))
    assert [k for k, _ in seen] == [1, 2, 3, 4]
    assert [e for _, e in seen] == trace.error
    assert trace.error[-1] == prediction_ssd(f1, f2, meshes)


@pytest.mark.parametrize("spec", [GridSpec((8, 8, 4), (32, 32, 16)), GridSpec((8, 8), (32, 32))])
def test_threads_do_not_change_result(spec):
    f1, f2 = phantom_pair((32, 32, 16), (2, 2, 1), seed=4, noise=10)
    cfg = EstimationConfig(iterations=6)
    m1, t1 = estimate(f1, f2, spec, cfg, threads=1)
    m4, t4 = estimate(f1, f2, spec, cfg, threads=4)
    assert t1.error == t4.error and t1.accepted == t4.accepted
    if spec.ndim == 3:
        assert m1 == m4
    else:
        assert m1 == m4


def test_estimated_meshes_are_valid():
    f1, f2 = phantom_pair((32, 32, 16), (4, 4, 2), seed=6, noise=20)
    for spec in (GridSpec((4, 4, 2), (32, 32, 16)), GridSpec((4, 4), (32, 32))):
        meshes, _ = estimate(f1, f2, spec, EstimationConfig(iterations=10, d=1))
        for m in (meshes if isinstance(meshes, list) else [meshes]):
            assert is_valid(m)
            assert m.respects_boundary()


def test_grid_must_match_volume():
    f1 = Volume3D(np.zeros((4, 8, 8)))
    with pytest.raises(ValueError):
        estimate(f1, f1, GridSpec((4, 4, 2), (8, 8, 8)))
    with pytest.raises(ValueError):
        estimate(f1, Volume3D(np.zeros((4, 8, 16))), GridSpec((4, 4), (8, 8)))
