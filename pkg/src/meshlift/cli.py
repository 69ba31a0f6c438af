"""Command-line front end.

Exit codes: 0 success, 1 usage, 2 I/O, 3 validation, 4 verification mismatch.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dwt53 import SpatialDecomposition, dwt53_forward, dwt53_inverse
from .lifting import load_pairs, mctf_forward, mctf_inverse, save_pairs
from .mesh import count_free_parameters, load_mesh, parse_grid
from .metrics import (evaluate, entropy_bytes, format_table, psnr_from_mse, read_csv,
                      table_csv, to_csv)
from .motion import EstimationConfig
from .volume import (PhantomSpec, Volume3D, extract_frame, generate_phantom,
                     load_volume, phantom_header, read_keyvalue, store_volume,
                     write_keyvalue)

log = logging.getLogger("meshlift")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_VALIDATION, EXIT_MISMATCH = 0, 1, 2, 3, 4

DEFAULT_GRIDS = {"mesh2d": "16x16", "mesh3d": "16x16x4"}


class UsageError(Exception):
    pass


class VerifyMismatch(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _dims(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad dimensions {text!r}, expected WxHxDxT") from None
    if len(vals) != 4:
        raise argparse.ArgumentTypeError(f"bad dimensions {text!r}, expected WxHxDxT")
    return vals


def _triple(text: str) -> tuple[float, float, float]:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text!r}") from None
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text!r}")
    return vals


def _number(text: str):
    value = float(text)
    return int(value) if value.is_integer() else value


# --------------------------------------------------------------------------
# phantom
# --------------------------------------------------------------------------

def manifest_path_for(out: Path) -> Path:
    return out.with_suffix(".manifest")


def cmd_phantom(args) -> int:
    w, h, d, t = args.dims
    spec = PhantomSpec(w, h, d, t, center=args.center, radii=args.radii,
                       amplitude=args.amplitude, period=args.period, noise=args.noise,
                       seed=args.seed, blobs=args.blobs)
    vol = generate_phantom(spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    store_volume(vol, out)
    manifest = {"command": "phantom", "output": out.name, "version": __version__}
    manifest.update(phantom_header(spec))
    write_keyvalue(manifest_path_for(out), manifest)
    print(f"wrote {out} ({w}x{h}x{d}, {t} frames)")
    return EXIT_OK


# --------------------------------------------------------------------------
# mctf
# --------------------------------------------------------------------------

def _label(method: str, grid: str | None) -> str:
    if method == "none":
        return "none"
    return f"{method} {grid}"


def _write_trace(path: Path, pair) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "ssd", "accepted", "hp_mean_energy", "lp_psnr_db"])
        n = pair.hp.data.size
        energy = pair.curves.get("hp_energy", [])
        lp_mse = pair.curves.get("lp_mse", [])
        for k, (err, acc) in enumerate(zip(pair.trace.error, pair.trace.accepted), 1):
            e = energy[k - 1] if energy else err / n
            p = psnr_from_mse(lp_mse[k - 1]) if lp_mse else float("nan")
            writer.writerow([k, err, acc, repr(e), repr(p)])


def cmd_mctf_forward(args) -> int:
    if args.input is None or args.out is None:
        raise UsageError("mctf: --input and --out are required")
    vol = load_volume(args.input)
    w, h, d = vol.dims
    method = args.method
    grid_text = None
    spec = None
    if method != "none":
        grid_text = args.grid or DEFAULT_GRIDS[method]
        spec = parse_grid(grid_text, (w, h, d))
        want = 2 if method == "mesh2d" else 3
        if spec.ndim != want:
            raise ValueError(f"{method} needs a {want}-D grid, got {grid_text}")
    cfg = EstimationConfig(iterations=args.iters, d=args.d, step=args.step)
    pairs = mctf_forward(vol, spec, cfg, threads=args.threads, curves=not args.no_curves)
    out = Path(args.out)
    params = 0 if spec is None else count_free_parameters(spec, slices=d)
    manifest = {
        "command": "mctf",
        "version": __version__,
        "input": str(Path(args.input).resolve()),
        "method": method,
        "label": _label(method, grid_text),
        "grid": grid_text or "",
        "d": args.d,
        "iters": args.iters,
        "step": args.step,
        "width": w, "height": h, "depth": d, "frames": vol.frames,
        "mv_params": params,
    }
    mpath = save_pairs(pairs, out, manifest)
    originals = [extract_frame(vol, 2 * p.t - 2) for p in pairs]
    report = evaluate(_label(method, grid_text), params, pairs, originals,
                      levels_xy=args.levels_xy, levels_z=args.levels_z)
    (out / "report.csv").write_text(to_csv([report]))
    (out / "report.txt").write_text(format_table([report], delta=False))
    for pair in pairs:
        if pair.trace is not None:
            _write_trace(out / f"trace_{pair.t}.csv", pair)
    print(format_table([report], delta=False), end="")
    print(f"manifest: {mpath}")
    return EXIT_OK


def cmd_mctf_inverse(args) -> int:
    if args.input is None or args.out is None:
        raise UsageError("mctf --inverse: --input MANIFEST and --out are required")
    pairs, _ = load_pairs(args.input)
    vol = mctf_inverse(pairs)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    store_volume(vol, out)
    print(f"wrote {out}")
    if args.verify:
        ref = load_volume(args.verify)
        if ref != vol:
            diff = "shape" if ref.data.shape != vol.data.shape else \
                f"{int(np.count_nonzero(ref.data != vol.data))} voxels"
            raise VerifyMismatch(f"reconstruction differs from {args.verify}: {diff}")
        print(f"verified: bit-exact match with {args.verify}")
    return EXIT_OK


def cmd_mctf(args) -> int:
    return cmd_mctf_inverse(args) if args.inverse else cmd_mctf_forward(args)


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------

def _read_trace(path: Path):
    energies, psnrs = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            energies.append(float(row["hp_mean_energy"]))
            psnrs.append(float(row["lp_psnr_db"]))
    return energies, psnrs


def cmd_report(args) -> int:
    if not args.runs:
        raise ValueError("report: no runs given")
    reports, traces = [], {}
    for run in args.runs:
        run = Path(run)
        rpath = run / "report.csv"
        if not rpath.exists():
            raise FileNotFoundError(f"no report.csv in {run}")
        rows = read_csv(rpath.read_text())
        if len(rows) != 1:
            raise ValueError(f"{rpath}: expected one row")
        reports.append(rows[0])
        tpath = run / "trace_1.csv"
        if tpath.exists():
            traces[rows[0].method] = _read_trace(tpath)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "table.csv").write_text(table_csv(reports))
    (out / "table.txt").write_text(format_table(reports))
    iters = max((len(e) for e, _ in traces.values()), default=0)
    if iters:
        energy_curves, psnr_curves = {}, {}
        for r in reports:
            if r.method in traces:
                e, p = traces[r.method]
                e = e + [e[-1]] * (iters - len(e))
                p = p + [p[-1]] * (iters - len(p))
            else:
                first = r.hp_energy_per_pair[0] if r.hp_energy_per_pair else r.hp_energy
                firstp = r.lp_psnr_per_pair[0] if r.lp_psnr_per_pair else r.lp_psnr
                e, p = [first] * iters, [firstp] * iters
            energy_curves[r.method] = e
            psnr_curves[r.method] = p
        with open(out / "curves.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            header = ["iteration"]
            for m in energy_curves:
                header += [f"{m} hp_mean_energy", f"{m} lp_psnr_db"]
            writer.writerow(header)
            for k in range(iters):
                row = [k + 1]
                for m in energy_curves:
                    row += [repr(energy_curves[m][k]), repr(psnr_curves[m][k])]
                writer.writerow(row)
        if not args.no_plots:
            from .plotting import plot_curves
            plot_curves(energy_curves, out / "hp_energy.png", "Mean energy HP_1")
            plot_curves(psnr_curves, out / "lp_psnr.png", "PSNR LP_1 in dB")
    print(format_table(reports), end="")
    return EXIT_OK


# --------------------------------------------------------------------------
# dwt / info
# --------------------------------------------------------------------------

def cmd_dwt(args) -> int:
    if args.inverse:
        hdr = read_keyvalue(args.input)
        lxy, lz = int(hdr.get("levels_xy", 0)), int(hdr.get("levels_z", 0))
        coeffs = load_volume(args.input)
        rec = dwt53_inverse(SpatialDecomposition(coeffs.data[0].astype(np.int64), lxy, lz))
        store_volume(rec, args.out)
        print(f"wrote {args.out}")
        return EXIT_OK
    vol = load_volume(args.input)
    frame = extract_frame(vol, args.frame)
    dec = dwt53_forward(frame, args.levels_xy, args.levels_z)
    coeffs = Volume3D(dec.coeffs)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    store_volume(coeffs, out, offset=32768, signed=True)
    # level counts ride along in the volume header
    hdr = read_keyvalue(out)
    hdr["levels_xy"] = dec.levels_xy
    hdr["levels_z"] = dec.levels_z
    write_keyvalue(out, hdr)
    print(f"wrote {out}; zero-order entropy estimate {entropy_bytes(dec):.0f} bytes")
    return EXIT_OK


def cmd_info(args) -> int:
    path = Path(args.path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    hdr = read_keyvalue(path)
    if "pairs" in hdr:
        for k, v in hdr.items():
            print(f"{k}={v}")
        return EXIT_OK
    if "dim" in hdr:
        meshes = load_mesh(path)
        seq = meshes if isinstance(meshes, list) else [meshes]
        vec = np.stack([m.vectors for m in seq])
        grid = seq[0].grid
        print(f"mesh: {grid.ndim}-D, cell {grid}, dims {grid.dims}, slices {len(seq)}")
        print(f"free parameters: {count_free_parameters(grid, slices=len(seq))}")
        print(f"max |vector component|: {int(np.abs(vec).max(initial=0))}")
        return EXIT_OK
    vol = load_volume(path)
    w, h, d = vol.dims
    print(f"volume: {w}x{h}x{d}, {vol.frames} frames")
    print(f"min {int(vol.data.min())}, max {int(vol.data.max())}, mean {float(vol.data.mean()):.3f}")
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="meshlift", description="Mesh-compensated wavelet lifting for 3-D+t volumes.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("phantom", help="generate a synthetic deforming volume")
    p.add_argument("--dims", type=_dims, required=True, help="WxHxDxT")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--amplitude", type=_triple, default=(2.0, 2.0, 2.0), help="ax,ay,az in voxels")
    p.add_argument("--noise", type=int, default=0)
    p.add_argument("--period", type=float, default=None, help="frames per cycle (default: T)")
    p.add_argument("--center", type=_triple, default=None)
    p.add_argument("--radii", type=_triple, default=None)
    p.add_argument("--blobs", type=int, default=8)
    p.add_argument("--out", required=True, help="output header path (.hdr)")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("mctf", help="temporal lifting (forward, or --inverse)")
    p.add_argument("--input", help="volume header, or manifest with --inverse")
    p.add_argument("--out", help="output directory, or volume header with --inverse")
    p.add_argument("--method", choices=("none", "mesh2d", "mesh3d"), default="mesh3d")
    p.add_argument("--grid", help="16x16 for mesh2d, 16x16x4 for mesh3d (defaults)")
    p.add_argument("--d", type=_number, default=1, help="safety margin in voxels")
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--step", type=int, default=1)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--levels-xy", type=int, default=5)
    p.add_argument("--levels-z", type=int, default=2)
    p.add_argument("--no-curves", action="store_true", help="skip per-iteration LP PSNR tracking")
    p.add_argument("--inverse", action="store_true")
    p.add_argument("--verify", help="with --inverse: compare against this volume")
    p.set_defaults(func=cmd_mctf)

    p = sub.add_parser("report", help="compare mctf runs")
    p.add_argument("--runs", nargs="*", default=[], help="mctf output directories")
    p.add_argument("--out", required=True)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("dwt", help="spatial 5/3 decomposition of one frame")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--levels-xy", type=int, default=5)
    p.add_argument("--levels-z", type=int, default=2)
    p.add_argument("--inverse", action="store_true")
    p.set_defaults(func=cmd_dwt)

    p = sub.add_parser("info", help="describe a volume, mesh or manifest file")
    p.add_argument("path")
    p.set_defaults(func=cmd_info)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) < 1:
        print("meshlift: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except VerifyMismatch as exc:
        print(f"meshlift: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except OSError as exc:
        print(f"meshlift: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, IndexError, TypeError) as exc:
        print(f"meshlift: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
