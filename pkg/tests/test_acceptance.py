"""Acceptance gate: one test per headline criterion, each with its time budget.

Every criterion prints a ``PASS``/``FAIL`` line (also collected into the
terminal summary).
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest

from helpers import random_mesh
from meshlift.dwt53 import dwt53_forward, dwt53_inverse
from meshlift.lifting import mctf_forward, mctf_inverse
from meshlift.mesh import (
    GridSpec, Mesh, MotionField, cell_orientations, count_free_parameters, dense_field,
)
from meshlift.metrics import mean_energy, psnr
from meshlift.motion import EstimationConfig, estimate
from meshlift.volume import PhantomSpec, Volume3D, Volume4D, generate_phantom
from meshlift.warp import warp
from oracles import field_at, warp_voxel

RESULTS: list[str] = []


@contextmanager
def criterion(name: str, budget: float):
    start = time.perf_counter()
    info = {}
    try:
        yield info
        elapsed = time.perf_counter() - start
        assert elapsed < budget, f"took {elapsed:.1f} s, budget {budget:.0f} s"
    except BaseException as exc:
        elapsed = time.perf_counter() - start
        line = f"FAIL  {name} ({elapsed:.1f} s): {exc}"
        RESULTS.append(line)
        print(line)
        raise
    detail = f"; {info['detail']}" if "detail" in info else ""
    line = f"PASS  {name} ({elapsed:.1f} s{detail})"
    RESULTS.append(line)
    print(line)


FULL = (512, 512, 128)


def test_parameter_counts():
    with criterion("parameter counts on 512x512x128", 1.0) as info:
        got = {
            "2-D 16x16": count_free_parameters(GridSpec((16, 16), FULL[:2]), slices=FULL[2]),
            "3-D 16x16x16": count_free_parameters(GridSpec((16, 16, 16), FULL)),
            "3-D 16x16x8": count_free_parameters(GridSpec((16, 16, 8), FULL)),
            "3-D 16x16x4": count_free_parameters(GridSpec((16, 16, 4), FULL)),
        }
        assert got == {"2-D 16x16": 261888, "3-D 16x16x16": 26037,
                       "3-D 16x16x8": 51117, "3-D 16x16x4": 101277}
        info["detail"] = ", ".join(f"{k}: {v}" for k, v in got.items())


def test_parameter_reduction():
    with criterion("3-D 16x16x4 uses < 40% of the 2-D parameters", 1.0) as info:
        p3 = count_free_parameters(GridSpec((16, 16, 4), FULL))
        p2 = count_free_parameters(GridSpec((16, 16), FULL[:2]), slices=FULL[2])
        assert p3 * 100 < 40 * p2
        info["detail"] = f"ratio {p3 / p2:.4f}"


def _adversarial(rng, spec, depth):
    amp = int(rng.integers(1, 2 * max(spec.cell) + 1))
    if spec.ndim == 3:
        return Mesh(spec, rng.integers(-amp, amp + 1, size=spec.shape + (3,)))
    return [Mesh(spec, rng.integers(-amp, amp + 1, size=spec.shape + (2,))) for _ in range(depth)]


def _random_dims(rng, big=False):
    if big:
        return (64, 64, 32)
    return (int(rng.choice([8, 16, 32, 64])), int(rng.choice([8, 16, 32, 64])),
            int(rng.choice([4, 8, 16, 32])))


def _random_grid(rng, dims, ndim):
    w, h, d = dims
    cells = [int(rng.choice([g for g in (2, 4, 8, 16) if n % g == 0])) for n in (w, h)]
    if ndim == 3:
        cells.append(int(rng.choice([g for g in (2, 4, 8) if d % g == 0])))
        return GridSpec(tuple(cells), dims)
    return GridSpec(tuple(cells), (w, h))


def test_lossless_round_trip():
    rng = np.random.default_rng(20240501)
    with criterion("lossless MCTF round trip on 200 random instances", 120.0) as info:
        kinds = {"haar": 0, "adversarial": 0, "estimated": 0}
        for n in range(200):
            big = n % 25 == 0
            dims = _random_dims(rng, big)
            frames = 4 if big else int(rng.choice([2, 4]))
            w, h, d = dims
            style = ("haar", "adversarial", "adversarial", "estimated")[n % 4]
            if rng.random() < 0.5:
                vol = Volume4D(rng.integers(0, 4096, size=(frames, d, h, w)))
            else:
                amp = (min(2.0, (w - 1) / 7), min(2.0, (h - 1) / 7), min(1.0, (d - 1) / 7))
                vol = generate_phantom(PhantomSpec(w, h, d, frames, amplitude=amp,
                                                   noise=int(rng.integers(0, 50)), seed=n))
            ndim = int(rng.choice([2, 3]))
            if style == "haar":
                pairs = mctf_forward(vol)
            elif style == "adversarial":
                spec = _random_grid(rng, dims, ndim)
                pairs = mctf_forward(vol, meshes=[_adversarial(rng, spec, d) for _ in range(frames // 2)])
            else:
                if big:
                    dims = (32, 32, 16)
                    vol = Volume4D(vol.data[:, :16, :32, :32])
                spec = _random_grid(rng, dims, ndim)
                cfg = EstimationConfig(iterations=int(rng.integers(1, 4)),
                                       d=float(rng.choice([0, 1, 2.5])),
                                       step=int(rng.integers(1, 3)))
                pairs = mctf_forward(vol, spec, cfg)
            kinds[style] += 1
            assert mctf_inverse(pairs) == vol, f"instance {n} ({style}, dims {dims})"
        info["detail"] = ", ".join(f"{k} {v}" for k, v in kinds.items())


def test_dwt53_round_trip():
    rng = np.random.default_rng(77)
    with criterion("5/3 round trip at (5,2) on 64x64x32, odd shapes rejected at (2,1)", 30.0) as info:
        for _ in range(10):
            vol = rng.integers(-40000, 40000, size=(32, 64, 64))
            assert np.array_equal(dwt53_inverse(dwt53_forward(vol, 5, 2)).data, vol)
        rejected = 0
        for shape in [(31, 64, 64), (32, 62, 64), (32, 64, 63), (33, 65, 65), (32, 64, 66)]:
            with pytest.raises(ValueError):
                dwt53_forward(np.zeros(shape, dtype=np.int64), 2, 1)
            rejected += 1
        info["detail"] = f"10 volumes exact, {rejected} shapes rejected"


def _phantom_pair(rng, seed, dims=(32, 32, 16)):
    w, h, d = dims
    amp = (float(rng.uniform(0.5, 3.5)), float(rng.uniform(0.5, 3.5)), float(rng.uniform(0.3, 1.8)))
    vol = generate_phantom(PhantomSpec(w, h, d, 2, amplitude=amp,
                                       noise=int(rng.integers(0, 40)), seed=seed))
    return Volume3D(vol.data[0]), Volume3D(vol.data[1])


def test_estimation_monotone():
    rng = np.random.default_rng(5)
    with criterion("global SSD non-increasing on 50 phantom pairs", 300.0) as info:
        violations = 0
        for n in range(50):
            f1, f2 = _phantom_pair(rng, 1000 + n)
            spec = GridSpec((8, 8, 4), (32, 32, 16)) if n % 2 else GridSpec((8, 8), (32, 32))
            _, trace = estimate(f1, f2, spec, EstimationConfig(iterations=10))
            errors = [trace.initial_error] + trace.error
            violations += sum(b > a for a, b in zip(errors, errors[1:]))
        assert violations == 0
        info["detail"] = "0 violations"


def test_mesh_validity():
    rng = np.random.default_rng(6)
    with criterion("all cells convex / non-inverted after estimation with d=1", 60.0) as info:
        cells = bad = 0
        for n in range(8):
            f1, f2 = _phantom_pair(rng, 2000 + n)
            spec = GridSpec((4, 4, 2), (32, 32, 16)) if n % 2 else GridSpec((4, 4), (32, 32))
            meshes, _ = estimate(f1, f2, spec, EstimationConfig(iterations=15, d=1))
            for m in meshes if isinstance(meshes, list) else [meshes]:
                orient = cell_orientations(m)
                cells += orient.size
                bad += int(np.count_nonzero(orient <= 0))
                assert m.respects_boundary()
        assert bad == 0
        info["detail"] = f"{cells} cells, 0 failing"


def test_compensation_ordering():
    cfg = EstimationConfig(iterations=20)
    with criterion("energy 3-D < 2-D < none and PSNR reversed on >= 90% of 20 phantoms", 600.0) as info:
        good = 0
        for seed in range(20):
            vol = generate_phantom(PhantomSpec(64, 64, 32, 2, amplitude=(2, 2, 2), seed=seed))
            f1 = Volume3D(vol.data[0])
            result = {}
            for name, spec in (("none", None), ("2d", GridSpec((16, 16), (64, 64))),
                               ("3d", GridSpec((16, 16, 4), (64, 64, 32)))):
                (pair,) = mctf_forward(vol, spec, cfg)
                result[name] = (mean_energy(pair.hp), psnr(pair.lp, f1))
            e = {k: v[0] for k, v in result.items()}
            p = {k: v[1] for k, v in result.items()}
            good += e["3d"] < e["2d"] < e["none"] and p["3d"] > p["2d"] > p["none"]
        assert good >= 18, f"ordering held for {good}/20"
        info["detail"] = f"ordering held for {good}/20"


def test_warp_oracle():
    rng = np.random.default_rng(8)
    with criterion("dense_field and warp equal brute-force interpolation on >= 1e4 samples", 30.0) as info:
        field_samples = warp_samples = 0
        grid3 = GridSpec((4, 4, 2), (16, 12, 8))
        grid2 = GridSpec((4, 3), (16, 12))
        for _ in range(5):
            m3 = random_mesh(rng, grid3, amp=4)
            m2 = random_mesh(rng, grid2, amp=4)
            f3 = dense_field(m3).data
            f2 = dense_field(m2).data[0]
            for _ in range(1000):
                x, y, z = int(rng.integers(16)), int(rng.integers(12)), int(rng.integers(8))
                assert f3[z, y, x].tolist() == field_at(m3.vectors, grid3.cell, (x, y, z))
                assert f2[y, x].tolist() == field_at(m2.vectors, grid2.cell, (x, y))
                field_samples += 2
        for comps in (2, 3):
            ref = rng.integers(0, 4096, size=(8, 12, 16))
            field = rng.integers(-6 * 256, 6 * 256, size=(8, 12, 16, comps))
            out = warp(ref, MotionField(field)).data
            for _ in range(5000):
                x, y, z = int(rng.integers(16)), int(rng.integers(12)), int(rng.integers(8))
                assert out[z, y, x] == warp_voxel(ref, field, (x, y, z))
                warp_samples += 1
        info["detail"] = f"{field_samples} field + {warp_samples} warp samples, max discrepancy 0"


def test_parallel_determinism():
    rng = np.random.default_rng(9)
    with criterion("1 thread and 4 threads give identical meshes on 20 instances", 300.0) as info:
        for n in range(20):
            f1, f2 = _phantom_pair(rng, 3000 + n)
            spec = GridSpec((8, 8, 4), (32, 32, 16)) if n % 2 else GridSpec((8, 8), (32, 32))
            cfg = EstimationConfig(iterations=8)
            m1, t1 = estimate(f1, f2, spec, cfg, threads=1)
            m4, t4 = estimate(f1, f2, spec, cfg, threads=4)
            assert m1 == m4 and t1.error == t4.error, f"instance {n}"
        info["detail"] = "20/20 identical"


def test_closed_form_haar():
    rng = np.random.default_rng(10)
    with criterion("uncompensated HP = f2 - f1, LP = f1 + floor(HP/2)", 10.0) as info:
        for _ in range(20):
            frames = 2 * int(rng.integers(1, 4))
            vol = Volume4D(rng.integers(0, 4096, size=(frames, 8, 16, 16)))
            for pair in mctf_forward(vol):
                f1 = vol.data[2 * pair.t - 2].astype(np.int64)
                f2 = vol.data[2 * pair.t - 1].astype(np.int64)
                hp = f2 - f1
                assert np.array_equal(pair.hp.data, hp)
                assert np.array_equal(pair.lp.data, f1 + np.floor_divide(hp, 2))
        info["detail"] = "20 volumes exact"
