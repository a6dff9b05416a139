"""Command-line interface: one executable driving the whole pipeline.

Subcommands: trace, mesh, quality, hist, render, ablate, sweep, heat,
verify-table, export.  Diagnostics go to stderr; machine-readable results go
only to the files named by flags, and every file-producing run drops a JSON
manifest next to its first output recording thresholds, edge length,
tolerance, seed, and package version.

Exit codes: 0 on success, 1 on validation errors (bad flags, inadmissible
thresholds, unreadable inputs), 2 on pipeline failures (protocol violations,
stitch mismatches, solver breakdowns).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from typing import Dict, List, Optional, Sequence

import numpy as np

import sbmt
from sbmt import boundary, classify, fem, geom, grid, preprocess
from sbmt import quality as qual
from sbmt import remesh as rm
from sbmt import render as rnd
from sbmt import templates
from sbmt.boundary import PolyChain
from sbmt.halfedge import (canonical_off_bytes, read_obj, read_off,
                           validate_watertight, write_obj, write_off)
from sbmt.preprocess import Thresholds, validate_thresholds

log = logging.getLogger(__name__)

__all__ = ["main", "build_parser"]

# Bad inputs or configuration: the user can fix these without touching code.
VALIDATION_ERRORS = (
    FileNotFoundError,
    IsADirectoryError,
    PermissionError,
    boundary.UnsupportedFormat,
    boundary.CorruptHeader,
    boundary.EmptyMask,
    boundary.ProtocolUnsatisfiable,
    grid.InvalidEdgeLength,
    grid.NonpositiveFrequency,
    qual.EmptyMesh,
    qual.InvalidThresholds,
)

# Algorithmic failures inside the pipeline.
PIPELINE_ERRORS = (
    classify.ProtocolViolation,
    rm.StitchMismatch,
    templates.UnknownConfiguration,
    templates.TableDefect,
    templates.MissingVertexBinding,
    preprocess.ConflictingDeletion,
    fem.DegenerateFace,
    fem.SolverFailure,
)


class CLIError(ValueError):
    """Validation failure raised by command handlers (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; remap to 1 (validation)."""

    def error(self, message):  # noqa: A003 - argparse API
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# shared plumbing


def _add_threshold_flags(p: argparse.ArgumentParser) -> None:
    d = Thresholds()
    p.add_argument("--edge-length", type=float, default=d.e, metavar="E",
                   help=f"grid edge length (default {d.e:.6f})")
    p.add_argument("--a", type=float, default=d.a,
                   help=f"snap distance (default {d.a})")
    p.add_argument("--b", type=float, default=d.b,
                   help=f"edge-elimination distance (default {d.b})")
    p.add_argument("--c", type=float, default=d.c,
                   help=f"repulsion distance (default {d.c})")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE", default=None,
                   help="key=value file supplying flag defaults "
                        "(explicit flags win)")
    p.add_argument("-v", "--verbose", action="store_true",
                   help="debug logging on stderr")


def _load_config(path: str) -> Dict[str, str]:
    """Parse a key=value config file; '#' comments and blank lines ignored."""
    out: Dict[str, str] = {}
    with open(path) as fh:
        for ln, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CLIError(f"{path}:{ln}: expected key=value, got {raw!r}")
            key, val = line.split("=", 1)
            out[key.strip().replace("-", "_")] = val.strip().strip('"\'')
    return out


def _apply_config(parser: argparse.ArgumentParser, argv: List[str]) -> None:
    """Pre-scan argv for --config and install its values as parser defaults.

    Done before parse_args so explicitly passed flags override the file.
    """
    path = None
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif tok.startswith("--config="):
            path = tok.split("=", 1)[1]
    if path is None:
        return
    cfg = _load_config(path)
    subparsers = [sp_parser
                  for group in parser._subparsers._group_actions
                  for sp_parser in group.choices.values()]
    for key, val in cfg.items():
        hit = False
        for sp in subparsers:
            for action in sp._actions:
                if action.dest != key:
                    continue
                if action.type is not None:
                    typed = action.type(val)
                elif isinstance(action.const, bool) or isinstance(
                        action.default, bool):
                    typed = val.lower() in ("1", "true", "yes", "on")
                else:
                    typed = val
                # defaults must live on the subparser: subcommands parse
                # into a fresh namespace that shadows main-parser defaults
                sp.set_defaults(**{key: typed})
                hit = True
        if not hit:
            raise CLIError(f"unknown config key {key!r}")


def _thresholds_of(args) -> Thresholds:
    return Thresholds(a=args.a, b=args.b, c=args.c, e=args.edge_length)


def _check_thresholds(t: Thresholds, min_seg: float = math.inf) -> None:
    bad = validate_thresholds(t, min_seg)
    if bad:
        raise CLIError("; ".join(bad))


def _load_source(path: str, invert: bool = False):
    """Bitmap for image extensions, chain list for text files."""
    low = path.lower()
    if low.endswith((".pgm", ".pbm", ".ppm")):
        return boundary.load_bitmap(path, invert=invert)
    return boundary.load_chains_text(path)


def _read_mesh(path: str):
    low = path.lower()
    if low.endswith(".obj"):
        return read_obj(path)
    if low.endswith(".off"):
        return read_off(path)
    raise CLIError(f"unrecognized mesh extension on {path!r} "
                   "(expected .off or .obj)")


def _write_mesh(mesh, path: str) -> None:
    low = path.lower()
    if low.endswith(".obj"):
        write_obj(mesh, path)
    elif low.endswith(".off"):
        # canonical bytes so identical configurations give identical files
        with open(path, "wb") as fh:
            fh.write(canonical_off_bytes(mesh))
    else:
        raise CLIError(f"unrecognized mesh extension on {path!r} "
                       "(expected .off or .obj)")


def _write_manifest(anchor_path: str, command: str, args,
                    outputs: Sequence[str], **extra) -> str:
    """JSON reproducibility record next to the first output file."""
    doc = {
        "command": command,
        "version": sbmt.__version__,
        "eps": geom.get_eps(),
        "outputs": list(outputs),
    }
    for key in ("input", "a", "b", "c", "edge_length", "seed", "threads"):
        if hasattr(args, key):
            doc[key] = getattr(args, key)
    doc.update(extra)
    path = anchor_path + ".manifest.json"
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("manifest %s", path)
    return path


def _quality_rows(report: qual.QualityReport) -> List[tuple]:
    d = report.as_dict()
    return [(k, d[k]) for k in sorted(d)]


# ---------------------------------------------------------------------------
# command handlers


def cmd_trace(args) -> int:
    bmp = boundary.load_bitmap(args.input, invert=args.invert)
    chains = boundary.trace_contours(bmp.mask, min_area=args.min_area)
    if not args.raw:
        chains = [boundary.enforce_protocol(ch, args.edge_length)
                  for ch in chains]
    boundary.save_chains_text(args.out, chains)
    n_pts = sum(len(ch.points) for ch in chains)
    log.info("traced %d chains (%d points) -> %s", len(chains), n_pts,
             args.out)
    _write_manifest(args.out, "trace", args, [args.out],
                    n_chains=len(chains), n_points=n_pts,
                    invert=args.invert, min_area=args.min_area, raw=args.raw)
    return 0


def cmd_mesh(args) -> int:
    t = _thresholds_of(args)
    _check_thresholds(t)
    if args.threads is not None and args.threads < 1:
        raise CLIError("threads must be >= 1")
    source = _load_source(args.input, invert=args.invert)
    job = rm.prepare(source, t, margin=args.margin, lenient=args.lenient)
    if args.check_determinism:
        ok, msg = rm.check_path_independence(
            job, n_shuffles=args.check_determinism, seed=args.seed,
            lenient=args.lenient)
        if not ok:
            raise rm.StitchMismatch(f"determinism check failed: {msg}")
        log.info("determinism check passed (%d shuffles)",
                 args.check_determinism)
    result = rm.remesh(job, lenient=args.lenient)
    _write_mesh(result.mesh, args.out)
    outputs = [args.out]
    if args.classes_csv:
        classify.write_classification_csv(job.registry, args.classes_csv)
        outputs.append(args.classes_csv)
    report = validate_watertight(result.mesh)
    if report.defect_count:
        raise rm.StitchMismatch(
            f"output mesh has {report.defect_count} watertight defects")
    log.info("meshed %s: %d vertices, %d faces (%d patched, %d fallback)",
             args.input, result.mesh.n_vertices, result.mesh.n_faces,
             result.n_patched, result.n_fallback)
    _write_manifest(args.out, "mesh", args, outputs,
                    margin=args.margin, lenient=args.lenient,
                    n_vertices=result.mesh.n_vertices,
                    n_faces=result.mesh.n_faces,
                    n_patched=result.n_patched,
                    n_fallback=result.n_fallback,
                    check_determinism=args.check_determinism,
                    stage_seconds=result.stage_seconds)
    return 0


def cmd_quality(args) -> int:
    mesh = _read_mesh(args.input)
    report = qual.quality_report(mesh)
    with open(args.csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "value"])
        w.writerows(_quality_rows(report))
    log.info("min angle %.4f deg, min area %.6g, %d slivers, "
             "equilateral ratio %.4f", report.min_angle, report.min_area,
             report.sliver_count, report.equilateral_ratio)
    _write_manifest(args.csv, "quality", args, [args.csv],
                    triangle_count=report.triangle_count)
    return 0


def cmd_hist(args) -> int:
    mesh = _read_mesh(args.input)
    hist = qual.angle_histogram(mesh)
    qual.write_histogram_csv(hist, args.csv)
    outputs = [args.csv]
    if args.svg:
        rnd.histogram_svg(hist, args.svg)
        outputs.append(args.svg)
    log.info("histogram mode at %.0f deg bin center", hist.mode_center)
    _write_manifest(args.csv, "hist", args, outputs,
                    mode_center=hist.mode_center)
    return 0


def cmd_render(args) -> int:
    mesh = _read_mesh(args.input)
    face_labels = None
    if args.color_by == "class":
        if not args.classes:
            raise CLIError("--color-by class needs --classes CSV")
        face_labels = {}
        with open(args.classes, newline="") as fh:
            for row in csv.DictReader(fh):
                face_labels[int(row["face_id"])] = row["class"]
    chains = boundary.load_chains_text(args.chains) if args.chains else None
    rnd.render_svg(mesh, args.svg, color_by=args.color_by,
                   face_labels=face_labels, chains=chains, width=args.width)
    _write_manifest(args.svg, "render", args, [args.svg],
                    color_by=args.color_by)
    return 0


def cmd_ablate(args) -> int:
    t = _thresholds_of(args)
    _check_thresholds(t)
    source = _load_source(args.input, invert=args.invert)
    rows = qual.run_ablation(source, t, margin=args.margin)
    with open(args.csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["config", "snap", "repel", "delete", "min_angle_deg",
                    "min_area", "sliver_count", "equilateral_ratio",
                    "AR_median", "AR_p95", "AR_max", "n_patched",
                    "n_fallback", "n_protocol_fallback", "seconds"])
        for name, row in rows.items():
            r = row.report
            w.writerow([
                name,
                int(row.toggles["do_snap"]), int(row.toggles["do_repel"]),
                int(row.toggles["do_delete"]),
                f"{r.min_angle:.6f}", f"{r.min_area:.8g}", r.sliver_count,
                f"{r.equilateral_ratio:.6f}", f"{r.AR_median:.8g}",
                f"{r.AR_p95:.8g}", f"{r.AR_max:.8g}", row.n_patched,
                row.n_fallback, row.n_protocol_fallback,
                f"{row.seconds:.3f}",
            ])
    log.info("ablation slivers: %s",
             ", ".join(f"{k}={v.report.sliver_count}" for k, v in rows.items()))
    _write_manifest(args.csv, "ablate", args, [args.csv],
                    margin=args.margin)
    return 0


def cmd_sweep(args) -> int:
    if not args.triplet:
        raise CLIError("sweep needs at least one --triplet a b c")
    source = _load_source(args.input, invert=args.invert)
    tl = [Thresholds(a=a, b=b, c=c, e=args.edge_length)
          for a, b, c in args.triplet]
    rows = qual.sensitivity_sweep(source, tl, margin=args.margin)
    with open(args.csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["a", "b", "c", "valid", "violations", "min_angle_deg",
                    "min_area", "sliver_count", "equilateral_ratio"])
        for row in rows:
            t = row.thresholds
            if row.report is None:
                w.writerow([t.a, t.b, t.c, 0, "; ".join(row.violations),
                            "", "", "", ""])
            else:
                r = row.report
                w.writerow([t.a, t.b, t.c, 1, "",
                            f"{r.min_angle:.6f}", f"{r.min_area:.8g}",
                            r.sliver_count, f"{r.equilateral_ratio:.6f}"])
    _write_manifest(args.csv, "sweep", args, [args.csv],
                    n_triplets=len(tl),
                    n_skipped=sum(1 for r in rows if r.report is None))
    return 0


def cmd_heat(args) -> int:
    mesh = _read_mesh(args.input)
    if args.chains:
        chains = boundary.load_chains_text(args.chains)
        walls = fem.dirichlet_vertices(mesh, chains)
    else:
        walls = None  # assemble() defaults to the hull
    system = fem.assemble(mesh, dirichlet=walls)
    u0 = fem.gaussian_field(mesh, amplitude=args.amplitude, sigma=args.sigma)
    times = []
    if args.snapshots:
        times = sorted(float(tok) for tok in args.snapshots.split(","))
    run = fem.heat_run(system, u0, alpha=args.alpha, dt=args.dt,
                       n_steps=args.steps, snapshot_times=times)
    outputs = []
    vmax = float(np.max(u0.values))
    for t_snap, values in sorted(run.snapshots.items()):
        tag = f"{t_snap:g}".replace(".", "p")
        csv_path = f"{args.out}_t{tag}.csv"
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["vertex_id", "x", "y", "value"])
            for i, (x, y) in enumerate(mesh.vertices):
                w.writerow([i, f"{x:.9g}", f"{y:.9g}", f"{values[i]:.9g}"])
        svg_path = f"{args.out}_t{tag}.svg"
        rnd.render_field_svg(mesh, values, svg_path, vmin=0.0, vmax=vmax)
        outputs.extend([csv_path, svg_path])
    series_path = f"{args.out}_series.csv"
    with open(series_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "time", "peak", "dirichlet_energy"])
        for i, (p, en) in enumerate(zip(run.peaks, run.energies)):
            w.writerow([i, f"{i * args.dt:.9g}", f"{p:.9g}", f"{en:.9g}"])
    outputs.append(series_path)
    log.info("heat run: peak %.4f -> %.4f over %d steps",
             run.peaks[0], run.peaks[-1], args.steps)
    _write_manifest(series_path, "heat", args, outputs,
                    alpha=args.alpha, dt=args.dt, steps=args.steps,
                    amplitude=args.amplitude, sigma=args.sigma,
                    n_dirichlet=int(len(system.dirichlet)),
                    negative_weights=system.n_negative_weights)
    return 0


def cmd_verify_table(args) -> int:
    defects = templates.verify_table()
    print(f"{len(defects)} defects", file=sys.stderr)
    for d in defects:
        print(f"  {d}", file=sys.stderr)
    return 0 if not defects else 1


def cmd_export(args) -> int:
    mesh = _read_mesh(args.input)
    _write_mesh(mesh, args.out)
    log.info("converted %s -> %s (%d vertices, %d faces)", args.input,
             args.out, mesh.n_vertices, mesh.n_faces)
    _write_manifest(args.out, "export", args, [args.out])
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sbmt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version",
                        version=f"sbmt {sbmt.__version__}")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="COMMAND")

    p = sub.add_parser("trace", help="extract boundary chains from a bitmap")
    p.add_argument("--input", required=True, help="PGM/PBM bitmap")
    p.add_argument("--out", required=True, help="chains text file")
    p.add_argument("--invert", action="store_true",
                   help="treat dark pixels as foreground")
    p.add_argument("--min-area", type=float, default=1.0,
                   help="drop contours enclosing less area (px^2)")
    p.add_argument("--raw", action="store_true",
                   help="skip segment-length protocol enforcement")
    _add_threshold_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("mesh", help="run the full triangulation pipeline")
    p.add_argument("--input", required=True,
                   help="bitmap (.pgm/.pbm) or chains text file")
    p.add_argument("--out", required=True, help="mesh output (.off or .obj)")
    p.add_argument("--invert", action="store_true")
    p.add_argument("--margin", type=float, default=None,
                   help="grid margin beyond chain bounds (default 3e)")
    p.add_argument("--lenient", action="store_true",
                   help="fan-fill protocol-violating faces instead of "
                        "aborting")
    p.add_argument("--threads", type=int, default=None,
                   help="advisory worker cap (current build is sequential)")
    p.add_argument("--seed", type=int, default=0,
                   help="shuffle seed for --check-determinism")
    p.add_argument("--check-determinism", type=int, default=0, metavar="K",
                   help="re-run K shuffled patch schedules and require "
                        "byte-identical output")
    p.add_argument("--classes-csv", default=None,
                   help="also dump per-face intersection classes")
    _add_threshold_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("quality", help="angle/area/aspect statistics")
    p.add_argument("--input", required=True, help="mesh (.off or .obj)")
    p.add_argument("--csv", required=True, help="metric,value output")
    _add_common(p)
    p.set_defaults(func=cmd_quality)

    p = sub.add_parser("hist", help="minimum-angle histogram")
    p.add_argument("--input", required=True, help="mesh (.off or .obj)")
    p.add_argument("--csv", required=True, help="bin output")
    p.add_argument("--svg", default=None, help="optional log-scale bar chart")
    _add_common(p)
    p.set_defaults(func=cmd_hist)

    p = sub.add_parser("render", help="SVG wireframe / quality coloring")
    p.add_argument("--input", required=True, help="mesh (.off or .obj)")
    p.add_argument("--svg", required=True, help="SVG output")
    p.add_argument("--color-by", choices=("angle", "class", "none"),
                   default="angle")
    p.add_argument("--classes", default=None,
                   help="classification CSV (from mesh --classes-csv)")
    p.add_argument("--chains", default=None, help="overlay chains text file")
    p.add_argument("--width", type=int, default=900)
    _add_common(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("ablate",
                       help="remesh under the five rule-toggle configs")
    p.add_argument("--input", required=True)
    p.add_argument("--csv", required=True)
    p.add_argument("--invert", action="store_true")
    p.add_argument("--margin", type=float, default=None)
    _add_threshold_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="quality across threshold triplets")
    p.add_argument("--input", required=True)
    p.add_argument("--csv", required=True)
    p.add_argument("--invert", action="store_true")
    p.add_argument("--margin", type=float, default=None)
    p.add_argument("--triplet", type=float, nargs=3, action="append",
                   metavar=("A", "B", "C"),
                   help="threshold triplet; repeatable")
    _add_threshold_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("heat", help="implicit heat diffusion on a mesh")
    p.add_argument("--input", required=True, help="mesh (.off or .obj)")
    p.add_argument("--out", required=True, metavar="PREFIX",
                   help="output prefix for series/snapshot files")
    p.add_argument("--chains", default=None,
                   help="chains text file; its vertices join the Dirichlet "
                        "boundary")
    p.add_argument("--alpha", type=float, default=500.0,
                   help="diffusivity (default 500)")
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--snapshots", default=None,
                   help="comma-separated times to dump fields at")
    p.add_argument("--amplitude", type=float, default=100.0,
                   help="initial Gaussian peak height")
    p.add_argument("--sigma", type=float, default=5.0,
                   help="initial Gaussian width")
    _add_common(p)
    p.set_defaults(func=cmd_heat)

    p = sub.add_parser("verify-table",
                       help="audit the retriangulation template table")
    _add_common(p)
    p.set_defaults(func=cmd_verify_table)

    p = sub.add_parser("export", help="convert between OFF and OBJ")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_export)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse --help / usage errors
        return int(exc.code or 0)
    except CLIError as exc:
        print(f"sbmt: error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CLIError as exc:
        print(f"sbmt: error: {exc}", file=sys.stderr)
        return 1
    except VALIDATION_ERRORS as exc:
        print(f"sbmt: error: {exc}", file=sys.stderr)
        return 1
    except PIPELINE_ERRORS as exc:
        print(f"sbmt: pipeline error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
