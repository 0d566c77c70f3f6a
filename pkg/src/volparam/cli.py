"""Command-line interface.

Subcommands:
  generate  write one of the synthetic test solids as OFF
  run       execute the full pipeline from a config file and/or flags
  probe     evaluate phi and grad(phi) at points of a stored field
  atlas     re-render the scatter SVG from an atlas CSV
  invert    read "phi theta psi" triples from stdin, print positions

Exit codes: 0 success, 2 configuration error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__, mapper, mesh_io, pipeline, shapes, tracer
from .errors import ConfigError, StageError, VolparamError
from .sampler import sample_gradient, sample_phi


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--input", help="input mesh path")
    p.add_argument("--format", dest="fmt", choices=["off", "obj"],
                   help="input format (default: by extension)")
    p.add_argument("--output-dir", help="artifact directory")
    p.add_argument("--resolution", type=int,
                   help="nodes across the longest bounding-box edge")
    p.add_argument("--padding", type=int)
    p.add_argument("--epsilon", type=float, help="guard-layer increment")
    p.add_argument("--guard-layers", type=int)
    p.add_argument("--center", help="x,y,z shape-center override")
    p.add_argument("--zeta", type=float, help="solver tolerance")
    p.add_argument("--max-iters", type=int)
    p.add_argument("--scheme", help="jacobi | gauss-seidel | sor:omega")
    p.add_argument("--eta", type=float, help="streamline normalization")
    p.add_argument("--terminal-phi", type=float)
    p.add_argument("--threads", type=int)
    p.add_argument("--dump-streamlines", help="streamline dump filename")
    p.add_argument("--roundtrip", type=int, dest="roundtrip_samples",
                   help="check N interior round trips and report the error")


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="volparam",
        description="Volumetric parameterization of genus-0 solids: harmonic "
                    "potential + gradient streamlines + spherical angles.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic test solid")
    g.add_argument("kind", choices=shapes.SHAPE_KINDS)
    g.add_argument("--out", required=True, help="output OFF path")
    g.add_argument("--radius", type=float)
    g.add_argument("--subdivisions", type=int)
    g.add_argument("--lobe-ratio", type=float, dest="lobe_ratio")
    g.add_argument("--sharpness", type=int)
    g.add_argument("--r1", type=float)
    g.add_argument("--r2", type=float)
    g.add_argument("--separation", type=float)
    g.add_argument("--extent", help="ex,ey,ez box extents")
    g.add_argument("--cells", type=int)

    r = sub.add_parser("run", help="run the nine-step pipeline")
    _add_run_flags(r)

    pr = sub.add_parser("probe", help="evaluate phi and grad(phi)")
    pr.add_argument("--field", required=True, help="field file from a run")
    pr.add_argument("--probe", action="append", required=True,
                    metavar="X,Y,Z", help="query point (repeatable)")

    at = sub.add_parser("atlas", help="re-render the atlas SVG from CSV")
    at.add_argument("--csv", required=True)
    at.add_argument("--out", required=True)

    inv = sub.add_parser("invert", help="map parameter triples to positions")
    inv.add_argument("--run-dir", required=True,
                     help="output directory of a previous run")
    return ap


def _cmd_generate(args) -> int:
    params = {}
    for name in ("radius", "subdivisions", "lobe_ratio", "sharpness",
                 "r1", "r2", "separation", "cells"):
        val = getattr(args, name, None)
        if val is not None:
            params[name] = val
    if args.extent is not None:
        params["extent"] = tuple(float(x) for x in args.extent.split(","))
    mesh = shapes.generate_shape(args.kind, args.out, **params)
    print(f"wrote {args.kind} ({mesh.n_vertices} vertices, "
          f"{mesh.n_triangles} triangles) to {args.out}")
    return 0


def _cmd_run(args) -> int:
    overrides = {k: getattr(args, k, None) for k in (
        "input", "fmt", "output_dir", "resolution", "padding", "epsilon",
        "guard_layers", "zeta", "max_iters", "scheme", "eta", "terminal_phi",
        "threads", "dump_streamlines", "roundtrip_samples")}
    if args.center is not None:
        overrides["center"] = tuple(float(x) for x in args.center.split(","))
    overrides = {k: v for k, v in overrides.items() if v is not None}
    cfg = pipeline.load_config(args.config, overrides)
    try:
        report = pipeline.run_pipeline(cfg)
    except StageError as e:
        pipeline.write_report_error(cfg, e)
        print(f"error: {e}", file=sys.stderr)
        return 3
    print(json.dumps(report["solve"]))
    print(f"report: {report['artifacts']['report']}")
    return 0


def _cmd_probe(args) -> int:
    grid = mesh_io.read_field(args.field)
    for spec in args.probe:
        pt = [float(x) for x in spec.split(",")]
        if len(pt) != 3:
            raise ConfigError(f"--probe expects x,y,z, got {spec!r}")
        phi = sample_phi(grid, pt)
        grad = sample_gradient(grid, pt)
        print(json.dumps({"point": pt, "phi": phi,
                          "grad": [float(g) for g in grad]}))
    return 0


def _cmd_atlas(args) -> int:
    entries = mapper.read_atlas_csv(args.csv)
    mapper.write_atlas_svg(entries, args.out)
    print(f"wrote {args.out} ({len(entries)} vertices)")
    return 0


def _cmd_invert(args) -> int:
    run_dir = Path(args.run_dir)
    report_path = run_dir / "report.json"
    if not report_path.exists():
        raise ConfigError(f"no report.json under {run_dir}")
    report = json.loads(report_path.read_text())
    center = report["grid"]["center_position"]
    lines = tracer.load_streamlines(report["artifacts"]["streamlines"])
    ctx = mapper.build_mapping(lines, center)
    status = 0
    for ln, raw in enumerate(sys.stdin, start=1):
        raw = raw.strip()
        if not raw:
            continue
        try:
            phi, theta, psi = (float(x) for x in raw.replace(",", " ").split())
            pos = mapper.inverse_map(ctx, mapper.ParamTriple(phi, theta, psi))
            x, y, z = pos.tolist()
            print(f"{x!r} {y!r} {z!r}")
        except (ValueError, VolparamError) as e:
            print(f"line {ln}: {e}", file=sys.stderr)
            print("nan nan nan")
            status = 3
    return status


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {"generate": _cmd_generate, "run": _cmd_run,
                "probe": _cmd_probe, "atlas": _cmd_atlas,
                "invert": _cmd_invert}
    try:
        return handlers[args.command](args)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except StageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except VolparamError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
