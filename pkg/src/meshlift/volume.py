"""Volume containers, raw file I/O and the synthetic deforming phantom.

On disk a volume is a pair of files sharing a stem: ``<stem>.hdr`` holds
``key=value`` lines and ``<stem>.raw`` holds little-endian 16-bit samples,
x fastest, then y, z and frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

MAX_12BIT = 4095
SIGNED_OFFSET = 32768

HEADER_KEYS = ("width", "height", "depth", "frames", "bits", "signed", "offset")


@dataclass(frozen=True)
class Volume3D:
    """A ``depth x height x width`` integer volume stored as ``data[z, y, x]``."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.int32, copy=True)
        if arr.ndim == 2:
            arr = arr[np.newaxis]
        if arr.ndim != 3 or arr.size == 0:
            raise ValueError(f"expected a non-empty 3-D array, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def depth(self) -> int:
        return self.data.shape[0]

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.width, self.height, self.depth)

    def __eq__(self, other):
        if not isinstance(other, Volume3D):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    __hash__ = None


@dataclass(frozen=True)
class Volume4D:
    """An ordered sequence of equally sized frames stored as ``data[t, z, y, x]``."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.int32, copy=True)
        if arr.ndim != 4 or arr.size == 0:
            raise ValueError(f"expected a non-empty 4-D array, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_frames(cls, frames: Sequence[Volume3D]) -> "Volume4D":
        if not frames:
            raise ValueError("need at least one frame")
        shapes = {f.data.shape for f in frames}
        if len(shapes) != 1:
            raise ValueError(f"frames differ in size: {sorted(shapes)}")
        return cls(np.stack([f.data for f in frames]))

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.data.shape[3], self.data.shape[2], self.data.shape[1])

    def __len__(self):
        return self.frames

    def __iter__(self) -> Iterator[Volume3D]:
        for t in range(self.frames):
            yield Volume3D(self.data[t])

    def __eq__(self, other):
        if not isinstance(other, Volume4D):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    __hash__ = None


def extract_frame(vol: Volume4D, t: int) -> Volume3D:
    if not 0 <= t < vol.frames:
        raise IndexError(f"frame {t} out of range for {vol.frames} frames")
    return Volume3D(vol.data[t])


# --------------------------------------------------------------------------
# key=value headers
# --------------------------------------------------------------------------

def read_keyvalue(path: Path) -> dict[str, str]:
    """Parse a UTF-8 ``key=value`` file; blank lines and ``#`` comments are skipped."""
    out = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def write_keyvalue(path: Path, items: dict) -> None:
    lines = [f"{k}={v}" for k, v in items.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def raw_path(header: Path) -> Path:
    return Path(header).with_suffix(".raw")


def _int_field(hdr, key, default=None):
    if key not in hdr:
        if default is None:
            raise ValueError(f"header is missing {key!r}")
        return default
    try:
        return int(hdr[key])
    except ValueError:
        raise ValueError(f"header field {key}={hdr[key]!r} is not an integer") from None


def read_header(path: Path) -> dict[str, int]:
    hdr = read_keyvalue(path)
    info = {k: _int_field(hdr, k) for k in ("width", "height", "depth", "frames")}
    info["bits"] = _int_field(hdr, "bits", 16)
    info["signed"] = _int_field(hdr, "signed", 0)
    info["offset"] = _int_field(hdr, "offset", 0)
    for k in ("width", "height", "depth", "frames"):
        if info[k] < 1:
            raise ValueError(f"header field {k} must be >= 1, got {info[k]}")
    if info["bits"] not in (12, 16):
        raise ValueError(f"bits must be 12 or 16, got {info['bits']}")
    if info["signed"] not in (0, 1):
        raise ValueError(f"signed must be 0 or 1, got {info['signed']}")
    return info


def load_volume(path) -> Volume4D:
    """Read a volume from ``<stem>.hdr`` and ``<stem>.raw``.

    Stored values are biased by the header ``offset``: ``sample = raw - offset``.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such header: {path}")
    info = read_header(path)
    rpath = raw_path(path)
    if not rpath.exists():
        raise FileNotFoundError(f"no raw file next to header: {rpath}")
    w, h, d, t = info["width"], info["height"], info["depth"], info["frames"]
    expected = 2 * w * h * d * t
    size = rpath.stat().st_size
    if size != expected:
        raise ValueError(f"{rpath}: {size} bytes, header implies {expected}")
    raw = np.fromfile(rpath, dtype="<u2").astype(np.int32)
    if not info["signed"] and info["offset"] == 0 and info["bits"] == 12 and raw.max(initial=0) > MAX_12BIT:
        raise ValueError(f"{rpath}: sample exceeds 12-bit range")
    samples = raw - info["offset"]
    return Volume4D(samples.reshape(t, d, h, w))


def store_volume(vol, path, *, offset: int = 0, signed: bool = False, bits: int | None = None) -> Path:
    """Write ``vol`` (Volume4D or Volume3D) as ``<stem>.hdr`` + ``<stem>.raw``."""
    if isinstance(vol, Volume3D):
        vol = Volume4D(vol.data[np.newaxis])
    path = Path(path)
    raw = vol.data.astype(np.int64) + offset
    lo, hi = int(raw.min()), int(raw.max())
    if lo < 0 or hi > 0xFFFF:
        raise ValueError(f"samples out of 16-bit storage range after offset {offset}: [{lo}, {hi}]")
    if bits is None:
        bits = 12 if (hi <= MAX_12BIT and not signed and offset == 0) else 16
    w, h, d = vol.dims
    header = dict(width=w, height=h, depth=d, frames=vol.frames, bits=bits,
                  signed=int(signed), offset=offset)
    rpath = raw_path(path)
    raw.astype("<u2").tofile(rpath)
    write_keyvalue(path, header)
    return path


def store_band(vol, path) -> Path:
    """Store a possibly signed band; signed data uses the 32768 bias."""
    data = vol.data
    if data.min() < 0:
        return store_volume(vol, path, offset=SIGNED_OFFSET, signed=True)
    return store_volume(vol, path)


# --------------------------------------------------------------------------
# phantom
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PhantomSpec:
    """Parameters of the deforming synthetic volume.

    Frame ``t`` samples an analytic base pattern at ``p + u(p, t)`` where

        u_a(p, t) = A_a * s(t) * sin(2 pi x_a / L_a) * prod_{b != a} sin(pi x_b / L_b)
        s(t) = (1 - cos(2 pi t / period)) / 2

    with ``L = dim - 1``. ``u_a`` vanishes on every boundary face, so the outer
    hull is stationary, and grows/shrinks the two halves of each axis in
    opposition (tissue-like expansion and compression). Frame 0 is the
    undeformed pattern.

    The base pattern is a raised-cosine ellipsoid carrying a smooth sinusoidal
    texture plus seeded raised-cosine blobs. Noise is i.i.d. uniform integer
    noise in ``[-noise, noise]``. Amplitudes must satisfy
    ``A_a < (dim_a - 1) / (2 pi)`` which keeps the deformation fold-free.
    """

    width: int
    height: int
    depth: int
    frames: int
    center: tuple[float, float, float] | None = None
    radii: tuple[float, float, float] | None = None
    amplitude: tuple[float, float, float] = (2.0, 2.0, 2.0)
    period: float | None = None
    noise: int = 0
    seed: int = 0
    blobs: int = 8

    def validate(self) -> None:
        dims = (self.width, self.height, self.depth)
        if min(dims) < 1 or self.frames < 1:
            raise ValueError(f"dimensions must be >= 1, got {dims} x {self.frames}")
        if len(self.amplitude) != 3 or any(a < 0 for a in self.amplitude):
            raise ValueError(f"amplitude must be three non-negative values, got {self.amplitude}")
        for axis, (a, n) in enumerate(zip(self.amplitude, dims)):
            limit = (n - 1) / (2 * math.pi)
            if a > 0 and a >= limit:
                raise ValueError(
                    f"amplitude {a} along axis {'xyz'[axis]} must be < {limit:.3f} for dimension {n}")
        if self.period is not None and self.period <= 0:
            raise ValueError("period must be positive")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")
        if self.radii is not None and any(r <= 0 for r in self.radii):
            raise ValueError("radii must be positive")


def _raised_cosine(r):
    return np.where(r < 1.0, 0.5 * (1.0 + np.cos(np.pi * np.minimum(r, 1.0))), 0.0)


def _base_pattern(spec: PhantomSpec, x, y, z, blobs):
    w, h, d = spec.width, spec.height, spec.depth
    cx, cy, cz = spec.center if spec.center is not None else ((w - 1) / 2, (h - 1) / 2, (d - 1) / 2)
    rx, ry, rz = spec.radii if spec.radii is not None else (0.42 * w, 0.42 * h, 0.42 * d)
    r = np.sqrt(((x - cx) / rx) ** 2 + ((y - cy) / ry) ** 2 + ((z - cz) / rz) ** 2)
    body = _raised_cosine(r)
    texture = 0.5 + 0.5 * (np.sin(2 * np.pi * x / 13.0 + 0.3)
                           * np.sin(2 * np.pi * y / 11.0 + 0.7)
                           * np.sin(2 * np.pi * z / 9.0 + 1.1))
    f = 150.0 + 1400.0 * body + 900.0 * texture * np.sqrt(body)
    for bx, by, bz, br, ba in blobs:
        bzr = br * rz / rx
        rb = np.sqrt(((x - bx) / br) ** 2 + ((y - by) / br) ** 2 + ((z - bz) / bzr) ** 2)
        f = f + ba * _raised_cosine(rb)
    return f


def _displacement(spec: PhantomSpec, x, y, z, t):
    period = spec.period if spec.period is not None else spec.frames
    s = 0.5 * (1.0 - math.cos(2 * math.pi * t / period))
    coords = (x, y, z)
    lengths = [max(n - 1, 1) for n in (spec.width, spec.height, spec.depth)]
    half = [np.sin(np.pi * c / L) for c, L in zip(coords, lengths)]
    full = [np.sin(2 * np.pi * c / L) for c, L in zip(coords, lengths)]
    u = []
    for a in range(3):
        term = spec.amplitude[a] * s * full[a]
        for b in range(3):
            if b != a:
                term = term * half[b]
        u.append(term)
    return u


def generate_phantom(spec: PhantomSpec) -> Volume4D:
    """Deterministic 12-bit deforming phantom (see :class:`PhantomSpec`)."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    w, h, d = spec.width, spec.height, spec.depth
    blobs = []
    for _ in range(spec.blobs):
        bx = rng.uniform(0.25, 0.75) * (w - 1)
        by = rng.uniform(0.25, 0.75) * (h - 1)
        bz = rng.uniform(0.25, 0.75) * (d - 1)
        br = rng.uniform(0.06, 0.14) * min(w, h)
        ba = rng.choice([-1.0, 1.0]) * rng.uniform(300.0, 900.0)
        blobs.append((bx, by, bz, br, ba))
    z, y, x = np.meshgrid(np.arange(d, dtype=np.float64), np.arange(h, dtype=np.float64),
                          np.arange(w, dtype=np.float64), indexing="ij")
    frames = np.empty((spec.frames, d, h, w), dtype=np.int32)
    for t in range(spec.frames):
        ux, uy, uz = _displacement(spec, x, y, z, t)
        f = _base_pattern(spec, x + ux, y + uy, z + uz, blobs)
        f = np.rint(f)
        if spec.noise:
            f = f + rng.integers(-spec.noise, spec.noise, size=f.shape, endpoint=True)
        frames[t] = np.clip(f, 0, MAX_12BIT).astype(np.int32)
    return Volume4D(frames)


def phantom_header(spec: PhantomSpec) -> dict:
    """Flat key=value view of a phantom spec for manifests."""
    out = {
        "dims": f"{spec.width}x{spec.height}x{spec.depth}x{spec.frames}",
        "amplitude": ",".join(repr(float(a)) for a in spec.amplitude),
        "noise": spec.noise,
        "seed": spec.seed,
        "blobs": spec.blobs,
    }
    if spec.period is not None:
        out["period"] = repr(float(spec.period))
    if spec.center is not None:
        out["center"] = ",".join(repr(float(c)) for c in spec.center)
    if spec.radii is not None:
        out["radii"] = ",".join(repr(float(r)) for r in spec.radii)
    return out


__all__ = [
    "MAX_12BIT", "SIGNED_OFFSET", "Volume3D", "Volume4D", "PhantomSpec",
    "extract_frame", "load_volume", "store_volume", "store_band",
    "generate_phantom", "read_keyvalue", "write_keyvalue", "raw_path",
]
