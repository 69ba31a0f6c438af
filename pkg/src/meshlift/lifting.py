"""Compensated temporal Haar lifting, forward and bit-exact inverse.

For each frame pair ``(f_{2t-1}, f_{2t})``::

    HP_t = f_{2t} - floor(W(f_{2t-1}))
    LP_t = f_{2t-1} + floor(W^-1(HP_t) / 2)

``W`` is the mesh compensation and ``W^-1`` its approximation with negated
grid-point vectors. Both floors act on 8-bit fixed-point warped values, so
synthesis recomputes exactly the same terms and reconstruction is lossless
for any mesh.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .mesh import GridSpec, Mesh, load_mesh, save_mesh
from .motion import EstimationConfig, RefinementTrace, estimate
from .volume import (Volume3D, Volume4D, load_volume, read_keyvalue, store_band,
                     write_keyvalue)
from .warp import compensate, inverse_compensate

log = logging.getLogger(__name__)


@dataclass
class SubbandPair:
    """Lowpass/highpass bands of pair ``t`` (1-based) and the meshes used."""

    lp: Volume3D
    hp: Volume3D
    t: int
    meshes: Mesh | list[Mesh] | None = None
    trace: RefinementTrace | None = None
    curves: dict[str, list[float]] = field(default_factory=dict)


def _check(a: Volume3D, b: Volume3D):
    if a.data.shape != b.data.shape:
        raise ValueError(f"volume dims differ: {a.dims} vs {b.dims}")


def predict_step(f_odd: Volume3D, f_even: Volume3D, meshes=None) -> Volume3D:
    _check(f_odd, f_even)
    return Volume3D(f_even.data.astype(np.int64) - compensate(f_odd, meshes).floor())


def update_step(f_odd: Volume3D, hp: Volume3D, meshes=None) -> Volume3D:
    _check(f_odd, hp)
    return Volume3D(f_odd.data.astype(np.int64) + inverse_compensate(hp, meshes).floor_half())


def synthesize(lp: Volume3D, hp: Volume3D, meshes=None) -> tuple[Volume3D, Volume3D]:
    """Undo :func:`update_step` then :func:`predict_step`."""
    _check(lp, hp)
    f_odd = Volume3D(lp.data.astype(np.int64) - inverse_compensate(hp, meshes).floor_half())
    f_even = Volume3D(hp.data.astype(np.int64) + compensate(f_odd, meshes).floor())
    return f_odd, f_even


def _mse(a: np.ndarray, b: np.ndarray) -> float:
    r = a.astype(np.int64) - b.astype(np.int64)
    return float(np.sum(r * r)) / r.size


def mctf_forward(vol: Volume4D, spec: GridSpec | None = None,
                 cfg: EstimationConfig = EstimationConfig(), *, threads: int = 1,
                 curves: bool = False, meshes: Sequence | None = None) -> list[SubbandPair]:
    """One temporal lifting level over all frame pairs.

    ``spec`` None gives the uncompensated Haar transform. With ``curves`` the
    highpass mean energy and lowpass MSE against ``f_{2t-1}`` are recorded
    after every refinement iteration (keys ``"hp_energy"`` and ``"lp_mse"``).
    ``meshes`` supplies fixed motion per pair (a 3-D mesh or a per-slice
    list each) and skips estimation; ``spec`` is then ignored.
    """
    if vol.frames < 2 or vol.frames % 2:
        raise ValueError(f"need an even number of frames >= 2, got {vol.frames}")
    if meshes is not None:
        if len(meshes) != vol.frames // 2:
            raise ValueError(f"{len(meshes)} meshes for {vol.frames // 2} frame pairs")
        pairs = []
        for t, m in enumerate(meshes, 1):
            f_odd = Volume3D(vol.data[2 * t - 2])
            hp = predict_step(f_odd, Volume3D(vol.data[2 * t - 1]), m)
            pairs.append(SubbandPair(lp=update_step(f_odd, hp, m), hp=hp, t=t, meshes=m))
        return pairs
    if spec is not None:
        w, h, d = vol.dims
        want = (w, h, d)[: spec.ndim]
        if tuple(spec.dims) != want:
            raise ValueError(f"grid covers {spec.dims}, volume is {want}")
    pairs = []
    for t in range(1, vol.frames // 2 + 1):
        f_odd = Volume3D(vol.data[2 * t - 2])
        f_even = Volume3D(vol.data[2 * t - 1])
        meshes = trace = None
        rec = {"hp_energy": [], "lp_mse": []}
        if spec is not None:
            def track(k, m, f_odd=f_odd, f_even=f_even, rec=rec):
                hp = predict_step(f_odd, f_even, m)
                lp = update_step(f_odd, hp, m)
                rec["hp_energy"].append(float(np.mean(hp.data.astype(np.int64) ** 2)))
                rec["lp_mse"].append(_mse(lp.data, f_odd.data))

            meshes, trace = estimate(f_odd, f_even, spec, cfg, threads=threads,
                                     on_iteration=track if curves else None)
            log.info("pair %d: SSD %d -> %d in %d iterations", t, trace.initial_error,
                     trace.error[-1], len(trace))
        hp = predict_step(f_odd, f_even, meshes)
        lp = update_step(f_odd, hp, meshes)
        pairs.append(SubbandPair(lp=lp, hp=hp, t=t, meshes=meshes, trace=trace,
                                 curves=rec if curves and spec is not None else {}))
    return pairs


def mctf_inverse(pairs: Sequence[SubbandPair]) -> Volume4D:
    if not pairs:
        raise ValueError("no subband pairs")
    frames = []
    for pair in sorted(pairs, key=lambda p: p.t):
        f_odd, f_even = synthesize(pair.lp, pair.hp, pair.meshes)
        frames += [f_odd, f_even]
    return Volume4D.from_frames(frames)


# --------------------------------------------------------------------------
# on-disk container
# --------------------------------------------------------------------------

def save_pairs(pairs: Sequence[SubbandPair], directory, params: dict | None = None) -> Path:
    """Write bands, meshes and a ``manifest.txt`` listing them.

    Returns the manifest path. ``params`` are copied into the manifest.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = dict(params or {})
    manifest["pairs"] = len(pairs)
    for pair in pairs:
        t = pair.t
        store_band(pair.lp, directory / f"lp_{t}.hdr")
        store_band(pair.hp, directory / f"hp_{t}.hdr")
        manifest[f"lp_{t}"] = f"lp_{t}.hdr"
        manifest[f"hp_{t}"] = f"hp_{t}.hdr"
        if pair.meshes is not None:
            save_mesh(pair.meshes, directory / f"mesh_{t}.hdr")
            manifest[f"mesh_{t}"] = f"mesh_{t}.hdr"
    path = directory / "manifest.txt"
    write_keyvalue(path, manifest)
    return path


def load_pairs(manifest_path) -> tuple[list[SubbandPair], dict[str, str]]:
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise FileNotFoundError(f"no such manifest: {manifest_path}")
    manifest = read_keyvalue(manifest_path)
    base = manifest_path.parent
    try:
        count = int(manifest["pairs"])
    except (KeyError, ValueError):
        raise ValueError(f"{manifest_path}: missing or bad 'pairs' entry") from None
    compensated = manifest.get("method", "none") != "none"
    pairs = []
    for t in range(1, count + 1):
        try:
            lp = load_volume(base / manifest[f"lp_{t}"])
            hp = load_volume(base / manifest[f"hp_{t}"])
        except KeyError as exc:
            raise ValueError(f"{manifest_path}: missing entry {exc.args[0]!r}") from None
        meshes = None
        if f"mesh_{t}" in manifest:
            meshes = load_mesh(base / manifest[f"mesh_{t}"])
        elif compensated:
            raise ValueError(f"{manifest_path}: compensated run without mesh_{t}")
        pairs.append(SubbandPair(lp=Volume3D(lp.data[0]), hp=Volume3D(hp.data[0]), t=t, meshes=meshes))
    return pairs, manifest
