"""Command-line entry points.

    isomesh optimize --config run.json --out DIR
    isomesh geodesics --mesh mesh.txt --field s2 --out overlay.json
    isomesh report --mesh mesh.txt --config run.json [--out report.json]
    isomesh export --mesh mesh.txt --format vtk|svg [--out FILE] [--geodesics overlay.json]

Exit codes: 0 success, 2 bad config or usage, 3 numerical failure.
``ISOMESH_LOG`` sets the log level (default INFO).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .formats import MeshFormatError, read_mesh, write_mesh, write_svg, write_vtk
from .metrics import make_field
from .pipeline import build_report, macroedge_geodesics, optimize, subtriangle_qualities

log = logging.getLogger("isomesh")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


def _clean(obj):
    """Make ``obj`` strict-JSON: arrays to lists, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dump_json(obj, path=None) -> str:
    text = json.dumps(_clean(obj), indent=1, sort_keys=True, allow_nan=False) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def _setup_logging(logfile=None):
    level = os.environ.get("ISOMESH_LOG", "INFO").upper()
    root = logging.getLogger("isomesh")
    root.setLevel(getattr(logging, level, logging.INFO))
    if not root.handlers:
        h = logging.StreamHandler(sys.stderr)
        h.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        root.addHandler(h)
    if logfile is not None:
        fh = logging.FileHandler(logfile, mode="w")
        fh.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        root.addHandler(fh)
        return fh
    return None


def _field_from(args, spec):
    if getattr(args, "field", None):
        params = json.loads(args.field_params) if getattr(args, "field_params", None) else {}
        return make_field(args.field, params)
    if spec is not None:
        return make_field(spec["id"], spec.get("params", {}))
    return None


def cmd_optimize(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    fh = _setup_logging(out / "run.log")
    try:
        mesh, stats = optimize(cfg)
        fld = cfg.make_field()
        write_mesh(out / "mesh.txt", mesh, fld.to_dict())
        report = build_report(mesh, fld, cfg, stats)
        dump_json(report, out / "report.json")
        log.info("E_initial %.6e  E_final %.6e  (%.1f s)", stats.E_initial, stats.E_final, stats.wall_time)
        bad = [s for s in stats.stages if s.reason in ("line_search_failure", "infeasible_start")]
        if bad:
            log.error("stage %d ended with %s", bad[0].stage, bad[0].reason)
            return EXIT_NUMERIC
        return EXIT_OK
    finally:
        if fh is not None:
            logging.getLogger("isomesh").removeHandler(fh)
            fh.close()


def cmd_geodesics(args) -> int:
    mesh, spec = read_mesh(args.mesh)
    fld = _field_from(args, spec)
    if fld is None:
        raise ConfigError("no field given and none stored in the mesh file")
    geos = macroedge_geodesics(mesh, fld, args.tol, args.steps)
    rows = []
    for g in geos:
        rows.append({"a": g["a"], "b": g["b"], "converged": g["geodesic"] is not None,
                     "deviation": g["deviation"], "metric_length": g["metric_length"],
                     "relative_deviation": g["deviation"] / g["metric_length"],
                     "points": g["geodesic"] if g["geodesic"] is not None else []})
    n_fail = sum(not r["converged"] for r in rows)
    if n_fail:
        log.warning("%d macroedges without a converged geodesic", n_fail)
    dump_json({"field": fld.to_dict(), "edges": rows}, args.out)
    return EXIT_OK


def cmd_report(args) -> int:
    mesh, spec = read_mesh(args.mesh)
    cfg = load_config(args.config) if args.config else None
    fld = cfg.make_field() if cfg is not None else _field_from(args, spec)
    if fld is None:
        raise ConfigError("no field given and none stored in the mesh file")
    text = dump_json(build_report(mesh, fld, cfg), args.out)
    if args.out is None:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_export(args) -> int:
    mesh, spec = read_mesh(args.mesh)
    if len(mesh.tris) == 0:
        raise MeshFormatError("empty mesh")
    fld = _field_from(args, spec)
    quality = subtriangle_qualities(mesh, fld) if fld is not None else None
    if quality is None:
        log.warning("no field available; quality left out")
    out = args.out or str(Path(args.mesh).with_suffix("." + args.format))
    if args.format == "vtk":
        write_vtk(out, mesh, quality)
    else:
        overlay = None
        if args.geodesics:
            data = json.loads(Path(args.geodesics).read_text())
            overlay = [np.asarray(e["points"], dtype=float) for e in data["edges"] if e["points"]]
        write_svg(out, mesh, quality, overlay)
    log.info("wrote %s", out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="isomesh", description="Isometric unit-mesh optimisation.")
    sub = p.add_subparsers(dest="command", required=True)

    o = sub.add_parser("optimize", help="build and optimise a mesh from a JSON config")
    o.add_argument("--config", required=True)
    o.add_argument("--out", help="output directory (default: config output_dir)")
    o.set_defaults(func=cmd_optimize)

    g = sub.add_parser("geodesics", help="solve macroedge geodesics and their deviation")
    g.add_argument("--mesh", required=True)
    g.add_argument("--field", help="field id (default: the one stored in the mesh)")
    g.add_argument("--field-params", help="JSON object of field parameters")
    g.add_argument("--out", required=True)
    g.add_argument("--steps", type=int, default=200)
    g.add_argument("--tol", type=float, default=1e-8)
    g.set_defaults(func=cmd_geodesics)

    r = sub.add_parser("report", help="quality, edge lengths and unitness summary")
    r.add_argument("--mesh", required=True)
    r.add_argument("--config")
    r.add_argument("--field")
    r.add_argument("--field-params")
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)

    e = sub.add_parser("export", help="write a VTK or SVG figure")
    e.add_argument("--mesh", required=True)
    e.add_argument("--format", required=True, choices=("vtk", "svg"))
    e.add_argument("--out")
    e.add_argument("--field")
    e.add_argument("--field-params")
    e.add_argument("--geodesics", help="overlay JSON from the geodesics command")
    e.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging()
    try:
        return args.func(args)
    except (ConfigError, MeshFormatError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
