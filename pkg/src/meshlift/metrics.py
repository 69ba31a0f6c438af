"""Highpass energy, lowpass PSNR and a zero-order entropy size estimate."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dwt53 import SpatialDecomposition, dwt53_forward, max_levels
from .volume import MAX_12BIT, Volume3D

INF = float("inf")


def _data(v) -> np.ndarray:
    return v.data if isinstance(v, Volume3D) else np.asarray(v)


def mean_energy(vol) -> float:
    x = _data(vol).astype(np.int64)
    return float(np.sum(x * x)) / x.size


def mse(a, b) -> float:
    a, b = _data(a), _data(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return mean_energy(a.astype(np.int64) - b.astype(np.int64))


def psnr_from_mse(value: float, peak: float = MAX_12BIT) -> float:
    if value == 0:
        return INF
    return 10.0 * math.log10(peak * peak / value)


def psnr(a, b, peak: float = MAX_12BIT) -> float:
    """PSNR in dB; ``inf`` for identical inputs."""
    if peak <= 0:
        raise ValueError("peak must be positive")
    return psnr_from_mse(mse(a, b), peak)


def zero_order_entropy(values) -> float:
    """Shannon entropy of the sample histogram in bits per sample."""
    x = np.asarray(values).ravel()
    if x.size == 0:
        return 0.0
    _, counts = np.unique(x, return_counts=True)
    if counts.size == 1:
        return 0.0
    p = counts / x.size
    return float(-np.sum(p * np.log2(p)))


def entropy_bytes(dec: SpatialDecomposition) -> float:
    """Sum over subbands of ``N * H0 / 8``."""
    total = 0.0
    for _, region in dec.subbands():
        band = dec.coeffs[region]
        total += band.size * zero_order_entropy(band) / 8.0
    return total


def decomposition_for(vol, levels_xy: int = 5, levels_z: int = 2) -> SpatialDecomposition:
    """5/3 decomposition with the level counts clipped to what the dims allow."""
    d, h, w = _data(vol).shape
    lxy = min(max_levels(h, levels_xy), max_levels(w, levels_xy))
    lz = max_levels(d, levels_z)
    return dwt53_forward(vol, lxy, lz)


@dataclass
class MetricsReport:
    """One row of the method comparison table."""

    method: str
    params: int
    hp_energy: float
    lp_psnr: float
    lp_bytes: float
    hp_bytes: float
    hp_energy_per_pair: list[float] = field(default_factory=list)
    lp_psnr_per_pair: list[float] = field(default_factory=list)

    @property
    def total_bytes(self) -> float:
        return self.lp_bytes + self.hp_bytes

    def row(self) -> dict:
        return {
            "method": self.method,
            "mv_params": self.params,
            "hp_mean_energy": self.hp_energy,
            "lp_psnr_db": self.lp_psnr,
            "lp_bytes": self.lp_bytes,
            "hp_bytes": self.hp_bytes,
            "total_bytes": self.total_bytes,
            "hp_energy_per_pair": ";".join(f"{e:.4f}" for e in self.hp_energy_per_pair),
            "lp_psnr_per_pair": ";".join(f"{p:.4f}" for p in self.lp_psnr_per_pair),
        }

    @classmethod
    def from_row(cls, row: dict) -> "MetricsReport":
        def floats(text):
            return [float(v) for v in text.split(";")] if text else []
        return cls(
            method=row["method"],
            params=int(row["mv_params"]),
            hp_energy=float(row["hp_mean_energy"]),
            lp_psnr=float(row["lp_psnr_db"]),
            lp_bytes=float(row["lp_bytes"]),
            hp_bytes=float(row["hp_bytes"]),
            hp_energy_per_pair=floats(row.get("hp_energy_per_pair", "")),
            lp_psnr_per_pair=floats(row.get("lp_psnr_per_pair", "")),
        )


def evaluate(method: str, params: int, pairs, originals, levels_xy=5, levels_z=2) -> MetricsReport:
    """Build a report from subband pairs and the odd frames they came from.

    ``originals[t-1]`` must be ``f_{2t-1}`` for pair ``t``. Pooled values
    average over all pairs (energy) or pool the squared error (PSNR).
    """
    energies, psnrs = [], []
    sq_hp = sq_lp = count = 0
    lp_bytes = hp_bytes = 0.0
    for pair, ref in zip(pairs, originals):
        hp = pair.hp.data.astype(np.int64)
        diff = pair.lp.data.astype(np.int64) - _data(ref).astype(np.int64)
        sq_hp += int(np.sum(hp * hp))
        sq_lp += int(np.sum(diff * diff))
        count += hp.size
        energies.append(mean_energy(hp))
        psnrs.append(psnr(pair.lp, ref))
        lp_bytes += entropy_bytes(decomposition_for(pair.lp, levels_xy, levels_z))
        hp_bytes += entropy_bytes(decomposition_for(pair.hp, levels_xy, levels_z))
    return MetricsReport(
        method=method,
        params=params,
        hp_energy=sq_hp / count,
        lp_psnr=psnr_from_mse(sq_lp / count),
        lp_bytes=lp_bytes,
        hp_bytes=hp_bytes,
        hp_energy_per_pair=energies,
        lp_psnr_per_pair=psnrs,
    )


COLUMNS = ("method", "mv_params", "hp_mean_energy", "lp_psnr_db", "lp_bytes", "hp_bytes",
           "total_bytes", "hp_energy_per_pair", "lp_psnr_per_pair")


def to_csv(reports: Sequence[MetricsReport]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in reports:
        writer.writerow(r.row())
    return buf.getvalue()


def read_csv(text: str) -> list[MetricsReport]:
    return [MetricsReport.from_row(row) for row in csv.DictReader(io.StringIO(text))]


def _pct(a: float, b: float) -> str:
    if a == 0:
        return "n/a"
    return f"{100.0 * (b - a) / a:+.1f}%"


def delta_row(a: MetricsReport, b: MetricsReport) -> dict:
    """Change from ``a`` to ``b``: relative for counts and sizes, absolute otherwise."""
    return {
        "method": f"delta: {a.method} to {b.method}",
        "mv_params": _pct(a.params, b.params),
        "hp_mean_energy": f"{b.hp_energy - a.hp_energy:+.1f}",
        "lp_psnr_db": f"{b.lp_psnr - a.lp_psnr:+.2f}",
        "lp_bytes": _pct(a.lp_bytes, b.lp_bytes),
        "hp_bytes": _pct(a.hp_bytes, b.hp_bytes),
        "total_bytes": _pct(a.total_bytes, b.total_bytes),
    }


TABLE_COLUMNS = ("method", "mv_params", "hp_mean_energy", "lp_psnr_db", "lp_bytes",
                 "hp_bytes", "total_bytes")
TABLE_TITLES = ("Compensation method", "#mv params", "Mean energy HP", "PSNR LP [dB]",
                "LP [byte]", "HP [byte]", "LP+HP [byte]")


def _fmt(key, value):
    if isinstance(value, str):
        return value
    if key == "mv_params":
        return f"{value:,}".replace(",", " ")
    if key == "lp_psnr_db":
        return "inf" if math.isinf(value) else f"{value:.2f}"
    if key == "hp_mean_energy":
        return f"{value:.1f}"
    return f"{value:.0f}"


def table_rows(reports: Sequence[MetricsReport], delta: bool = True) -> list[dict]:
    rows = [{k: r.row()[k] for k in TABLE_COLUMNS} for r in reports]
    if delta and len(reports) >= 2:
        rows.append(delta_row(reports[0], reports[-1]))
    return rows


def format_table(reports: Sequence[MetricsReport], delta: bool = True) -> str:
    """Aligned plain-text table; a delta row compares the first and last report."""
    cells = [list(TABLE_TITLES)]
    for row in table_rows(reports, delta):
        cells.append([_fmt(k, row[k]) for k in TABLE_COLUMNS])
    widths = [max(len(r[i]) for r in cells) for i in range(len(TABLE_COLUMNS))]
    lines = []
    for n, r in enumerate(cells):
        parts = [r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
        lines.append("  ".join(parts))
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def table_csv(reports: Sequence[MetricsReport], delta: bool = True) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=TABLE_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in table_rows(reports, delta):
        writer.writerow(row)
    return buf.getvalue()
