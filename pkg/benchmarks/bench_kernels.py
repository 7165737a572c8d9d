"""Compare the compiled and numpy kernel backends on representative sizes.

Usage: python3 benchmarks/bench_kernels.py [--sizes 1000,4000] [--repeat 3] [--json out.json]
"""
from __future__ import annotations

import argparse
import json
import time

import numpy as np

from neutral_inclusion._kernels import backend_module
from neutral_inclusion.geometry import Ellipsoid, mesh_ellipsoid


def _inputs(n: int, rng: np.random.Generator):
    sub = max(int(np.ceil(np.log(n / 20.0) / np.log(4.0))), 1)
    mesh = mesh_ellipsoid(Ellipsoid((1.0, 1.3, 1.7)), sub)
    x = rng.normal(size=(n, 3))
    return mesh, x


def _time(fn, repeat: int) -> float:
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run(sizes, repeat: int) -> list[dict]:
    rng = np.random.default_rng(0)
    rows = []
    for n in sizes:
        mesh, x = _inputs(n, rng)
        y, nu, w = mesh.centroids, mesh.normals, mesh.areas
        tri = np.ascontiguousarray(mesh.corners)
        cases = {
            "single_layer": lambda b: b.single_layer(x, y, w, 1),
            "double_layer": lambda b: b.double_layer(x, y, nu, w, 1),
            "adjoint_double_layer": lambda b: b.adjoint_double_layer(y, nu, y, w, 1),
            "winding_numbers": lambda b: b.winding_numbers(x[: max(n // 10, 1)], tri, 1),
        }
        for name, fn in cases.items():
            times = {}
            outs = {}
            for backend in ("compiled", "python"):
                mod = backend_module(backend)
                times[backend] = _time(lambda: fn(mod), repeat)
                outs[backend] = fn(mod)
            diff = float(np.max(np.abs(outs["compiled"] - outs["python"])) / max(np.max(np.abs(outs["python"])), 1e-300))
            rows.append(
                {
                    "kernel": name,
                    "targets": n,
                    "sources": int(len(y)),
                    "compiled_s": times["compiled"],
                    "python_s": times["python"],
                    "speedup": times["python"] / times["compiled"],
                    "max_rel_diff": diff,
                }
            )
    return rows


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", default="1000,4000")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json")
    args = ap.parse_args()
    rows = run([int(s) for s in args.sizes.split(",")], args.repeat)
    print(f"{'kernel':<22}{'targets':>8}{'sources':>9}{'compiled s':>12}{'python s':>11}{'speedup':>9}{'rel diff':>11}")
    for r in rows:
        print(
            f"{r['kernel']:<22}{r['targets']:>8}{r['sources']:>9}{r['compiled_s']:>12.4f}"
            f"{r['python_s']:>11.4f}{r['speedup']:>9.1f}{r['max_rel_diff']:>11.2e}"
        )
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
