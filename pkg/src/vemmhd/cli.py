"""Command line entry point: ``vemmhd mesh|run|convergence|tables``.

Exit status 0 on success, 1 on invalid input or a failed check, 2 when a
solve fails.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

from .config import DEFAULTS, load_config, parse_config, parse_mesh_arg, run_spec, study_plan
from .exceptions import (ConfigError, DegenerateScalarError, DivergenceCheckError, GeometryError,
                         NonmonotoneEnergyError, NumericalRankError, ParseError, SingularSystemError,
                         SolveError)
from .harness import ERROR_COLUMNS, convergence_study, divergence_table, make_mesh, replace_spec, \
    simulate, write_study
from .mesh import export_mesh, import_mesh, mesh_size, regularity_report

log = logging.getLogger("vemmhd")

INPUT_ERRORS = (ConfigError, ParseError, GeometryError, DivergenceCheckError, ValueError)
SOLVER_ERRORS = (SolveError, DegenerateScalarError, NonmonotoneEnergyError, NumericalRankError,
                 SingularSystemError)


def _config(args):
    cfg = load_config(args.config) if getattr(args, "config", None) else parse_config("")
    for item in getattr(args, "set", None) or []:
        key, sep, val = item.partition("=")
        key = key.strip()
        if not sep or key not in DEFAULTS:
            raise ConfigError(f"--set: unknown or malformed {item!r}", key=key)
        cfg[key] = val.strip()
    if getattr(args, "mesh", None):
        cfg.update(parse_mesh_arg(args.mesh))
    for opt, key in (("scheme", "scheme"), ("dt", "dt"), ("case", "case"), ("out", "out.dir")):
        val = getattr(args, opt, None)
        if val is not None:
            cfg[key] = str(val)
    return cfg


def _meta(cfg):
    keys = ("Re", "kappa", "T", "dt", "scheme", "k_u", "k_J", "mesh.type", "mesh.n", "mesh.jitter",
            "mesh.seed", "mesh.path", "case", "B")
    return {k: cfg[k] for k in keys}


# ----------------------------------------------------------------------
def cmd_mesh(args):
    if args.action == "gen":
        mesh = make_mesh(args.type, args.n, args.jitter, args.seed)
        export_mesh(mesh, args.output)
        print(f"wrote {args.output}: {mesh.n_cells} cells, h = {mesh_size(mesh):.6g}")
        return 0
    mesh = import_mesh(args.path) if args.path else make_mesh(args.type, args.n, args.jitter, args.seed)
    if args.action == "check":
        rep = regularity_report(mesh, args.rho)
        print(f"ok: {mesh.n_cells} cells pass the closure, planarity and orientation checks")
        print(f"regularity: min ball {rep.ball.min():.4f}, min disk {rep.disk.min():.4f}, "
              f"min edge {rep.edge.min():.4f} (rho = {args.rho})")
        if len(rep.flagged):
            print(f"flagged cells: {rep.flagged.tolist()}")
        return 0
    print(f"vertices {mesh.n_vertices}\nedges {mesh.n_edges}\nfaces {mesh.n_faces}\n"
          f"cells {mesh.n_cells}\nvolume {mesh.domain_volume:.15g}\nh {mesh_size(mesh):.15g}")
    return 0


def cmd_run(args):
    cfg = _config(args)
    spec = run_spec(cfg)
    out = cfg["out.dir"]
    os.makedirs(out, exist_ok=True)
    disc, result, rep = simulate(spec)
    meta = _meta(cfg)
    result.write_energy_csv(os.path.join(out, "energy.csv"), meta)
    with open(os.path.join(out, "errors.csv"), "w", newline="") as fh:
        fh.write("".join(f"# {k} = {v}\n" for k, v in meta.items()))
        w = csv.writer(fh)
        if rep is None:
            # no exact solution for the unforced run
            last = result.trace[-1]
            w.writerow(["h", "dt", "div_u", "div_J"])
            w.writerow([repr(float(x)) for x in (mesh_size(disc.mesh), spec.dt, last.div_u, last.div_J)])
        else:
            w.writerow(ERROR_COLUMNS)
            w.writerow([repr(float(x)) for x in rep.row()])
    print(f"wrote {out}/energy.csv and {out}/errors.csv")
    if rep is not None:
        print("  ".join(f"{k} = {float(v):.4e}" for k, v in zip(ERROR_COLUMNS, rep.row())))
    return 0


def cmd_convergence(args):
    cfg = load_config(args.plan)
    if args.out is not None:
        cfg["out.dir"] = args.out
    plan = study_plan(cfg)
    reports, slopes = convergence_study(plan)
    meta = _meta(cfg)
    meta.update({"study.mode": plan.mode, "study.sizes": cfg["study.sizes"], "study.dts": cfg["study.dts"]})
    write_study(reports, slopes, cfg["out.dir"], meta)
    for k, v in slopes.items():
        print(f"{k}: slope {v:.3f}")
    return 0


def cmd_tables(args):
    cfg = _config(args)
    base = run_spec(cfg)
    specs = []
    for m in args.meshes.split(","):
        over = parse_mesh_arg(m.strip())
        kw = {"mesh_type": over["mesh.type"]}
        if "mesh.n" in over:
            kw["n"] = int(over["mesh.n"])
        if "mesh.path" in over:
            kw["mesh_path"] = over["mesh.path"]
        for order in (int(s) for s in args.schemes.split(",")):
            for dt in (float(d) for d in args.dts.split(",")):
                specs.append(replace_spec(base, order=order, dt=dt, **kw))
    rows = divergence_table(specs, tol=args.tol)
    out = cfg["out.dir"]
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "divergence.csv")
    with open(path, "w", newline="") as fh:
        fh.write("".join(f"# {k} = {v}\n" for k, v in _meta(cfg).items()))
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    print(f"wrote {path} ({len(rows)} rows, all <= {args.tol:g})")
    return 0


# ----------------------------------------------------------------------
def build_parser():
    p = argparse.ArgumentParser(prog="vemmhd", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("mesh", help="generate, check or describe a mesh")
    m.add_argument("action", choices=["gen", "check", "info"])
    m.add_argument("path", nargs="?", help="mesh file (check/info)")
    m.add_argument("--type", choices=["cube", "dtp"], default="cube")
    m.add_argument("--n", type=int, default=4)
    m.add_argument("--jitter", type=float, default=0.2)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--rho", type=float, default=0.1)
    m.add_argument("-o", "--output", default="mesh.txt")
    m.set_defaults(func=cmd_mesh)

    def run_opts(sp):
        sp.add_argument("--config")
        sp.add_argument("--mesh", help="cube:N, dtp:N or file:PATH")
        sp.add_argument("--scheme", type=int, choices=[1, 2])
        sp.add_argument("--dt", type=float)
        sp.add_argument("--case", choices=["ms1", "ms2", "decay"])
        sp.add_argument("--out")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE")

    r = sub.add_parser("run", help="one simulation; writes energy.csv and errors.csv")
    run_opts(r)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("convergence", help="convergence study; writes errors.csv and slopes.csv")
    c.add_argument("--plan", required=True)
    c.add_argument("--out")
    c.set_defaults(func=cmd_convergence)

    t = sub.add_parser("tables", help="divergence norms at the final time")
    run_opts(t)
    t.add_argument("--meshes", default="cube:4,dtp:4")
    t.add_argument("--schemes", default="1,2")
    t.add_argument("--dts", default="0.2,0.1,0.05,0.025,0.0125")
    t.add_argument("--tol", type=float, default=1e-11)
    t.set_defaults(func=cmd_tables)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except INPUT_ERRORS as exc:
        key = getattr(exc, "key", None)
        print(f"error: {exc}" + (f" [key: {key}]" if key else ""), file=sys.stderr)
        return 1
    except SOLVER_ERRORS as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
