"""Command-line entry point: ``neutral-inclusion <subcommand>``.

Task subcommands assemble a scenario from flags (optionally on top of a
``--config`` file) and run it through the same path as ``run``.
Exit status: 0 pass, 2 threshold failure, 1 error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import NeutralInclusionError, SchemaError
from .scenario import (
    dumps_json,
    execute,
    list_scenarios,
    load_scenario,
    parse_scenario,
    resolve_scenario,
)

EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


def _floats(text: str, n: int | None = None, name: str = "value") -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"{name}: expected comma-separated numbers, got {text!r}") from None
    if n is not None and len(vals) != n:
        raise argparse.ArgumentTypeError(f"{name}: expected {n} numbers, got {len(vals)}")
    return vals


def _sigma(text: str) -> list:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) not in (2, 3):
        raise argparse.ArgumentTypeError("--sigma: expected c,s or c,s,m")
    out = []
    for i, p in enumerate(parts):
        if i == 0 and p.lower() in ("inf", "infinity"):
            out.append("inf")
            continue
        try:
            out.append(float(p))
        except ValueError:
            raise argparse.ArgumentTypeError(f"--sigma: bad number {p!r}") from None
    return out


def _confocal(text: str) -> dict:
    c1, c2, c3, rho0 = _floats(text, 4, "--confocal")
    return {"kind": "confocal", "axes": [c1, c2, c3], "rho0": rho0}


def _spheres(text: str) -> dict:
    r_i, r_e = _floats(text, 2, "--spheres")
    return {"kind": "spheres", "r_i": r_i, "r_e": r_e}


# ---------------------------------------------------------------------------
# Scenario assembly from flags
# ---------------------------------------------------------------------------


def _base(args, task: str) -> dict:
    if getattr(args, "config", None):
        raw = json.loads(Path(args.config).read_text())
        if raw.get("task", task) != task:
            raise SchemaError(f"{args.config}: task {raw.get('task')!r} does not match subcommand {task!r}")
    else:
        raw = {}
    raw.setdefault("name", args.name or task)
    if args.name:
        raw["name"] = args.name
    raw["task"] = task
    return raw


def _set(raw: dict, block: str, key: str, value) -> None:
    if value is not None:
        raw.setdefault(block, {})[key] = value


def _geometry(args, raw: dict) -> None:
    outer = getattr(args, "outer_mesh", None) or getattr(args, "shell", None)
    inner = getattr(args, "inner_mesh", None) or getattr(args, "core", None)
    if getattr(args, "confocal", None):
        raw["geometry"] = args.confocal
    elif getattr(args, "spheres", None):
        g = dict(args.spheres)
        if getattr(args, "offset", None):
            g["core_offset"] = args.offset
        raw["geometry"] = g
    elif outer or inner:
        if not (outer and inner):
            raise SchemaError("both the outer (shell) and inner (core) mesh files are required")
        raw["geometry"] = {"kind": "meshes", "shell": str(Path(outer).resolve()), "core": str(Path(inner).resolve())}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="scenario file used as the base; flags override it")
    p.add_argument("--out-dir", default=".", help="directory for JSON/CSV artifacts")
    p.add_argument("--name", help="scenario name (artifact file stem)")


def _build_phi(args) -> dict:
    raw = _base(args, "phi")
    if args.axes:
        raw["geometry"] = {"kind": "confocal", "axes": args.axes, "rho0": 0.0}
    raw.setdefault("geometry", {"kind": "confocal", "axes": [1.0, 2.0, 3.0], "rho0": 0.0})
    if args.logspace:
        lo, hi, n = args.logspace
        _set(raw, "settings", "rho", [float(v) for v in np.logspace(np.log10(lo), np.log10(hi), int(n))])
    elif args.rho:
        _set(raw, "settings", "rho", args.rho)
    return raw


def _build_solve(args) -> dict:
    raw = _base(args, "solve-ellipsoid")
    _geometry(args, raw)
    raw.setdefault("geometry", {"kind": "confocal", "axes": [1.0, 1.0, 1.0], "rho0": 3.0})
    _set(raw, "settings", "subdivisions", args.subdiv)
    _set(raw, "settings", "seed", args.seed)
    return raw


def _build_neutral(args) -> dict:
    raw = _base(args, "neutral-sphere")
    _geometry(args, raw)
    raw.setdefault("geometry", {"kind": "spheres", "r_i": 1.0, "r_e": 2.0})
    if args.sigma:
        raw["medium"] = {"sigma_c": args.sigma[0], "sigma_s": args.sigma[1]}
    return raw


def _build_mfs(args) -> dict:
    raw = _base(args, "mfs-fit")
    _geometry(args, raw)
    _set(raw, "settings", "constraint", args.constraint)
    _set(raw, "settings", "sources", args.sources)
    _set(raw, "settings", "subdivisions", args.subdiv)
    _set(raw, "numerics", "mfs_tsvd_cut", args.tsvd_cut)
    return raw


def _build_newtonian(args) -> dict:
    raw = _base(args, "newtonian-check")
    _geometry(args, raw)
    _set(raw, "settings", "seed", args.seed)
    _set(raw, "settings", "n_points", args.points)
    _set(raw, "settings", "n_samples", args.samples)
    _set(raw, "settings", "subdivisions", args.subdiv)
    if args.mc:
        _set(raw, "settings", "mc", True)
    return raw


def _build_bem(args) -> dict:
    raw = _base(args, "bem-defect")
    _geometry(args, raw)
    if args.sigma:
        if len(args.sigma) != 3:
            raise SchemaError("--sigma for bem-defect needs c,s,m")
        raw["medium"] = dict(zip(("sigma_c", "sigma_s", "sigma_m"), args.sigma))
    _set(raw, "settings", "subdivisions", args.subdiv)
    _set(raw, "settings", "method", args.method)
    return raw


def _build_sweep(args) -> dict:
    raw = _base(args, "sweep")
    if args.family or args.t:
        g = raw.get("geometry", {"kind": "family", "family": "core-distortion", "t": [0.0, 0.5, 1.0]})
        if args.family:
            g["family"] = args.family
        if args.t:
            g["t"] = args.t
        raw["geometry"] = g
    raw.setdefault("geometry", {"kind": "family", "family": "core-distortion", "t": [0.0, 0.5, 1.0]})
    _set(raw, "settings", "subdivisions", args.subdiv)
    _set(raw, "settings", "constraint", args.constraint)
    _set(raw, "settings", "sources", args.sources)
    return raw


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="neutral-inclusion", description="Neutral coated inclusions: solvers and checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phi", help="depolarization integrals on a rho grid (CSV)")
    _common(p)
    p.add_argument("--axes", type=lambda s: _floats(s, 3, "--axes"))
    p.add_argument("--rho", type=lambda s: _floats(s, None, "--rho"))
    p.add_argument("--logspace", type=lambda s: _floats(s, 3, "--logspace"), help="lo,hi,n")
    p.set_defaults(build=_build_phi)

    p = sub.add_parser("solve-ellipsoid", help="closed-form confocal solution with residual table (JSON)")
    _common(p)
    p.add_argument("--confocal", type=_confocal, help="c1,c2,c3,rho0")
    p.add_argument("--subdiv", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(build=_build_solve)

    p = sub.add_parser("neutral-sphere", help="neutral coated sphere and its shell field (JSON)")
    _common(p)
    p.add_argument("--spheres", type=_spheres, help="r_i,r_e")
    p.add_argument("--sigma", type=_sigma, help="sigma_c,sigma_s")
    p.set_defaults(build=_build_neutral)

    p = sub.add_parser("mfs-fit", help="fundamental-solution fit of the overdetermined problem")
    _common(p)
    p.add_argument("--outer-mesh")
    p.add_argument("--inner-mesh")
    p.add_argument("--confocal", type=_confocal, help="c1,c2,c3,rho0")
    p.add_argument("--spheres", type=_spheres, help="r_i,r_e")
    p.add_argument("--offset", type=lambda s: _floats(s, 3, "--offset"), help="core offset for --spheres")
    p.add_argument("--constraint", choices=("isotropic", "symmetric"))
    p.add_argument("--sources", type=int)
    p.add_argument("--tsvd-cut", type=float)
    p.add_argument("--subdiv", type=int)
    p.set_defaults(build=_build_mfs)

    p = sub.add_parser("newtonian-check", help="averaged Newtonian potential difference and quadratic fit")
    _common(p)
    p.add_argument("--confocal", type=_confocal, help="c1,c2,c3,rho0")
    p.add_argument("--spheres", type=_spheres, help="r_i,r_e")
    p.add_argument("--offset", type=lambda s: _floats(s, 3, "--offset"))
    p.add_argument("--outer-mesh")
    p.add_argument("--inner-mesh")
    p.add_argument("--seed", type=int)
    p.add_argument("--points", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--subdiv", type=int)
    p.add_argument("--mc", action="store_true", help="Monte Carlo even for ellipsoids")
    p.set_defaults(build=_build_newtonian)

    p = sub.add_parser("bem-defect", help="boundary-element neutrality defect (JSON + probe CSV)")
    _common(p)
    p.add_argument("--core")
    p.add_argument("--shell")
    p.add_argument("--spheres", type=_spheres, help="r_i,r_e")
    p.add_argument("--offset", type=lambda s: _floats(s, 3, "--offset"))
    p.add_argument("--sigma", type=_sigma, help="sigma_c,sigma_s,sigma_m (sigma_c may be inf)")
    p.add_argument("--subdiv", type=int)
    p.add_argument("--method", choices=("auto", "dense", "subspace"))
    p.set_defaults(build=_build_bem)

    p = sub.add_parser("sweep", help="isotropy sweep over a geometry family (CSV of t, rho_fit)")
    _common(p)
    p.add_argument("--family", choices=("core-distortion", "offset", "confocal"))
    p.add_argument("--t", type=lambda s: _floats(s, None, "--t"))
    p.add_argument("--subdiv", type=int)
    p.add_argument("--constraint", choices=("isotropic", "symmetric"))
    p.add_argument("--sources", type=int)
    p.set_defaults(build=_build_sweep)

    p = sub.add_parser("run", help="run a scenario file or bundled scenario")
    p.add_argument("scenario", nargs="?")
    p.add_argument("--config", help="scenario file (alternative to the positional argument)")
    p.add_argument("--out-dir", default=".")

    p = sub.add_parser("validate", help="schema-check scenario files without running them")
    p.add_argument("scenarios", nargs="+")

    sub.add_parser("list-scenarios", help="list bundled scenarios")
    return parser


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _report(outcome) -> int:
    print(outcome.summary())
    return EXIT_PASS if outcome.passed else EXIT_FAIL


def _cmd_run(args) -> int:
    target = args.config or args.scenario
    if not target:
        raise SchemaError("run needs a scenario path or bundled name")
    sc, base = load_scenario(resolve_scenario(target))
    return _report(execute(sc, base, Path(args.out_dir)))


def _cmd_validate(args) -> int:
    status = EXIT_PASS
    for target in args.scenarios:
        entry = {"file": target}
        try:
            sc, _ = load_scenario(resolve_scenario(target))
            entry |= {"status": "ok", "name": sc.name, "task": sc.task}
        except SchemaError as exc:
            entry |= {"status": "error", "message": str(exc)}
            status = EXIT_ERROR
        print(json.dumps(entry, sort_keys=True))
    return status


def _cmd_list(args) -> int:
    rows = []
    for path in list_scenarios():
        sc, _ = load_scenario(path)
        rows.append({"name": sc.name, "task": sc.task, "file": path.name, "metrics": sorted(sc.thresholds)})
    sys.stdout.write(dumps_json({"scenarios": rows}))
    return EXIT_PASS


def _cmd_task(args) -> int:
    raw = args.build(args)
    sc = parse_scenario(json.dumps(raw), f"<{raw['task']} flags>")
    base = Path(args.config).resolve().parent if args.config else Path.cwd()
    return _report(execute(sc, base, Path(args.out_dir)))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"run": _cmd_run, "validate": _cmd_validate, "list-scenarios": _cmd_list}
    handler = handlers.get(args.command, _cmd_task)
    try:
        return handler(args)
    except NeutralInclusionError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
