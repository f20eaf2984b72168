"""Run one or more experiment configs and print a one-line summary for each.

    python3 scripts/run_experiment.py scripts/configs/s2_equilateral.json
    python3 scripts/run_experiment.py --all --out runs/

Each run writes mesh.txt, report.json, geodesics.json, mesh.vtk and mesh.svg
into ``OUT/<config name>/``.
"""
import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from isomesh.cli import dump_json
from isomesh.config import ConfigError, load_config
from isomesh.formats import write_mesh, write_svg, write_vtk
from isomesh.pipeline import build_report, macroedge_geodesics, optimize, subtriangle_qualities

CONFIG_DIR = Path(__file__).resolve().parent / "configs"


def run_one(path: Path, out_root: Path) -> dict:
    cfg = load_config(path)
    out = out_root / path.stem
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    mesh, stats = optimize(cfg)
    elapsed = time.perf_counter() - t0
    fld = cfg.make_field()
    geos = macroedge_geodesics(mesh, fld, cfg.geodesic_tol, cfg.geodesic_steps)
    report = build_report(mesh, fld, cfg, stats, geodesics=geos)
    write_mesh(out / "mesh.txt", mesh, fld.to_dict())
    dump_json(report, out / "report.json")
    dump_json({"field": fld.to_dict(),
               "edges": [{"a": g["a"], "b": g["b"], "deviation": g["deviation"],
                          "points": [] if g["geodesic"] is None else g["geodesic"]} for g in geos]},
              out / "geodesics.json")
    Q = subtriangle_qualities(mesh, fld, cfg.tiling)
    write_vtk(out / "mesh.vtk", mesh, Q)
    write_svg(out / "mesh.svg", mesh, Q, [g["geodesic"] for g in geos])
    lengths = report["edge_ratio"]
    return {
        "name": path.stem,
        "time": elapsed,
        "E_initial": stats.E_initial,
        "E_final": stats.E_final,
        "q_min": report["quality"]["min"],
        "q_frac": report["quality"]["fraction_ge_0.9"],
        "ratio": (lengths["min"], lengths["max"]),
        "geo": report["geodesics"]["max_relative_deviation"],
        "parabola": report["parabola_fit"]["max_relative_residual"],
    }


def fmt(r: dict) -> str:
    geo = "n/a" if r["geo"] is None else f"{r['geo']:.2e}"
    return (f"{r['name']:<26} {r['time']:7.1f}s  E {r['E_initial']:9.3e} -> {r['E_final']:9.3e}  "
            f"Qmin {r['q_min']:.4f}  Q>=0.9 {100 * r['q_frac']:5.1f}%  "
            f"l/t [{r['ratio'][0]:.3f}, {r['ratio'][1]:.3f}]  geo {geo}  parabola {r['parabola']:.2e}")


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("configs", nargs="*", type=Path)
    p.add_argument("--all", action="store_true", help="run every config in scripts/configs")
    p.add_argument("--out", type=Path, default=Path("runs"))
    p.add_argument("--summary", type=Path, help="also write the summaries as JSON")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    paths = sorted(CONFIG_DIR.glob("*.json")) if args.all else args.configs
    if not paths:
        p.error("give config files or --all")
    rows = []
    for path in paths:
        try:
            r = run_one(path, args.out)
        except ConfigError as exc:
            print(f"{path}: {exc}", file=sys.stderr)
            return 2
        rows.append(r)
        print(fmt(r), flush=True)
    if args.summary:
        args.summary.write_text(json.dumps(rows, indent=1, default=lambda v: float(np.asarray(v))) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
