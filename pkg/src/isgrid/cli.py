"""Command-line driver.

Subcommands: ``selftest``, ``invert-warp``, ``recon``, ``warp``, ``grid`` and
``export-png``. Exit codes: 0 success, 1 validation error (bad config, bad
file, shape mismatch), 2 numerical failure (solver divergence, failed
self-check).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .checks import format_report, run_selftest
from .config import ConfigError, ExperimentConfig, load_config
from .grid import THREADS_ENV, make_plan, set_threads
from .igrid import DisplacementField, ImageGridder, igrid_adjoint, igrid_forward
from .kgrid import KSpaceGridder, kgrid_forward, kgrid_inverse
from .motion import ingest_displacement_fields, write_motion_table
from .pipeline import invert_warp, reconstruct
from .sim import make_field, make_phantom, simulate_acquisition
from .solver import SolverDivergence

__all__ = ["main", "build_parser", "run_invert_warp", "run_recon"]

log = logging.getLogger("isgrid")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    # usage errors are validation errors, not argparse's default exit 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _summary(title: str, metrics: dict) -> str:
    width = max(len(k) for k in metrics)
    rows = [title, "-" * len(title)]
    for k, v in metrics.items():
        rows.append(f"{k:<{width}}  {v:.6g}" if isinstance(v, float) else f"{k:<{width}}  {v}")
    return "\n".join(rows)


def _save_images(out: Path, images: dict) -> None:
    for name, img in images.items():
        io.write_array(out / name, np.asarray(img, dtype=np.complex128), "image")
        io.export_image(out / f"{name}.pgm", img)


def _finish(out: Path, title: str, metrics: dict) -> None:
    io.write_metrics(out / "metrics.txt", metrics, title)
    text = _summary(title, metrics)
    (out / "summary.txt").write_text(text + "\n")
    print(text)
    print(f"outputs written to {out}")


# -- experiments -------------------------------------------------------------------

def run_invert_warp(cfg: ExperimentConfig, write: bool = True):
    phantom = make_phantom(cfg.phantom)
    fld = make_field(cfg.field)
    res = invert_warp(phantom, fld, cfg.solver, cfg.kernel)
    if write:
        out = cfg.output
        out.mkdir(parents=True, exist_ok=True)
        _save_images(out, res.images)
        io.write_fields(out / "field", {0: DisplacementField.zeros(fld.shape), 1: fld})
        io.write_trace(out / "objective.txt", res.report)
        _finish(out, "invert-warp", res.metrics)
    return res


def run_recon(cfg: ExperimentConfig, write: bool = True):
    phantom = make_phantom(cfg.phantom)
    acq = simulate_acquisition(phantom, cfg.acquisition, cfg.seed, cfg.kernel)
    fields = None
    if cfg.fields_file is not None:
        fields = ingest_displacement_fields(cfg.fields_file, cfg.phantom.shape)
        if len(fields) != cfg.bins:
            raise ValueError(f"{cfg.fields_file}: {len(fields)} fields for {cfg.bins} bins")
    res = reconstruct(acq, cfg.bins, cfg.solver, cfg.seed, fields)
    if write:
        out = cfg.output
        out.mkdir(parents=True, exist_ok=True)
        _save_images(out, res.images)
        for name, rep in res.reports.items():
            io.write_trace(out / f"objective_{name}.txt", rep)
        write_motion_table(out / "motion.csv", res.estimate, res.bins)
        io.write_motion(out / "motion", res.estimate, res.bins.labels)
        _finish(out, "recon", res.metrics)
    return res


# -- subcommands ---------------------------------------------------------------------

def cmd_selftest(args) -> int:
    results = run_selftest(trials=args.trials, seed=args.seed or 0, fault=args.inject_fault)
    report = format_report(results)
    print(report)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "selftest.txt").write_text(report + "\n")
        io.write_metrics(out / "metrics.txt", {r.name: r.worst for r in results}, "selftest")
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERICAL


def cmd_invert_warp(args) -> int:
    run_invert_warp(load_config(args.config, "invert-warp", args.seed, args.out))
    return EXIT_OK


def cmd_recon(args) -> int:
    run_recon(load_config(args.config, "recon", args.seed, args.out))
    return EXIT_OK


def _load_field(path, bin_index, shape) -> DisplacementField:
    af = io.ArrayFile.read(path)
    if af.meta.get("kind") == "displacement_fields":
        fields, _ = io.read_fields(path)
        if bin_index is None:
            raise ValueError(f"{path} holds {len(fields)} bins; choose one with --bin")
        if bin_index not in fields:
            raise ValueError(f"{path}: no bin {bin_index}")
        fld = fields[bin_index]
    else:
        fld = DisplacementField(af.data.astype(np.float64))
    if fld.shape != tuple(shape):
        raise ValueError(f"field grid {fld.shape} does not match image {tuple(shape)}")
    return fld


def cmd_warp(args) -> int:
    img = io.read_array(args.input)
    fld = _load_field(args.field, args.bin, img.shape)
    w = ImageGridder(make_plan(img.shape), fld)
    res = igrid_adjoint(w, img) if args.adjoint else igrid_forward(w, img)
    path = io.write_array(args.out, res, "image")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_grid(args) -> int:
    coords = io.read_array(args.coords)
    if coords.ndim != 2 or np.iscomplexobj(coords):
        raise ValueError("coords must be a real (count, ndim) array")
    weights = io.read_array(args.weights) if args.weights else None
    data = io.read_array(args.input)
    if args.inverse:
        shape = data.shape[-coords.shape[1]:]
        g = KSpaceGridder(make_plan(shape), coords, weights)
        res, space = kgrid_inverse(g, data), "samples"
    else:
        if not args.shape:
            raise ValueError("gridding samples onto an image needs --shape")
        g = KSpaceGridder(make_plan(args.shape), coords, weights)
        res, space = kgrid_forward(g, data), "image"
    path = io.write_array(args.out, res, space)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_export_png(args) -> int:
    io.export_image(args.out, io.read_array(args.input))
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--out", help="output directory (experiments) or file")
    common.add_argument("--seed", type=int, help="unsigned 64-bit seed")
    common.add_argument("--threads", type=int,
                        help=f"FFT worker threads (default: ${THREADS_ENV}, else 1)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="isgrid", description="Image-space gridding experiments and tools.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("selftest", parents=[common], help="adjoint, oracle and unitarity checks")
    s.add_argument("--trials", type=int, default=4, help="random trials per adjoint check and dimension")
    s.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_selftest)

    s = sub.add_parser("invert-warp", parents=[common], help="naive vs iterative warp inversion")
    s.set_defaults(func=cmd_invert_warp)

    s = sub.add_parser("recon", parents=[common], help="simulated motion-corrected reconstruction")
    s.set_defaults(func=cmd_recon)

    s = sub.add_parser("warp", parents=[common], help="apply a displacement field to an image")
    s.add_argument("--input", required=True, help="image array header")
    s.add_argument("--field", required=True, help="field array header")
    s.add_argument("--bin", type=int, help="bin to use from a multi-bin field file")
    s.add_argument("--adjoint", action="store_true", help="apply the adjoint warp")
    s.set_defaults(func=cmd_warp)

    s = sub.add_parser("grid", parents=[common], help="k-space gridding of file-based data")
    s.add_argument("--input", required=True, help="samples (forward) or image (--inverse)")
    s.add_argument("--coords", required=True, help="(count, ndim) coordinates, cycles/FOV")
    s.add_argument("--weights", help="optional density weights")
    s.add_argument("--shape", type=int, nargs="+", help="image grid for forward gridding")
    s.add_argument("--inverse", action="store_true", help="image to samples")
    s.set_defaults(func=cmd_grid)

    s = sub.add_parser("export-png", parents=[common], help="8-bit magnitude image export")
    s.add_argument("--input", required=True, help="array header")
    s.set_defaults(func=cmd_export_png)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads is not None:
            set_threads(args.threads)
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ValueError("--seed must be an unsigned 64-bit integer")
        if args.command in ("warp", "grid", "export-png") and not args.out:
            raise ValueError(f"{args.command} needs --out")
        return args.func(args)
    except SolverDivergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    finally:
        set_threads(None)


if __name__ == "__main__":
    sys.exit(main())
