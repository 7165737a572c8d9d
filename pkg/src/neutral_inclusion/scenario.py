"""Scenario files: strict schema, task execution and deterministic artifacts."""
from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import asdict, fields
from pathlib import Path
from typing import Annotated, Any, Callable, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, create_model, field_validator, model_validator

from .config import DEFAULT, Tolerances
from .errors import SchemaError

TASKS = ("phi", "solve-ellipsoid", "neutral-sphere", "mfs-fit", "newtonian-check", "bem-defect", "sweep")
STOCHASTIC_TASKS = ("newtonian-check",)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# ---------------------------------------------------------------------------
# Schema
# ---------------------------------------------------------------------------


def _conductivity(v: Any) -> float:
    if isinstance(v, str) and v.strip().lower() in ("inf", "infinity"):
        return math.inf
    return float(v)


class ConfocalGeometry(_Strict):
    kind: Literal["confocal"]
    axes: tuple[float, float, float]
    rho0: float
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)


class SpheresGeometry(_Strict):
    kind: Literal["spheres"]
    r_i: float
    r_e: float
    core_offset: tuple[float, float, float] = (0.0, 0.0, 0.0)


class MeshGeometry(_Strict):
    kind: Literal["meshes"]
    core: str
    shell: str


class FamilyGeometry(_Strict):
    kind: Literal["family"]
    family: Literal["core-distortion", "offset", "confocal"]
    t: list[float]


Geometry = Annotated[
    Union[ConfocalGeometry, SpheresGeometry, MeshGeometry, FamilyGeometry], Field(discriminator="kind")
]


class Medium(_Strict):
    sigma_c: float
    sigma_s: float
    sigma_m: Optional[float] = None

    @field_validator("sigma_c", mode="before")
    @classmethod
    def _extended(cls, v):
        return _conductivity(v)


class Settings(_Strict):
    seed: Optional[int] = None
    subdivisions: int = 3
    rho: list[float] = [0.0, 1.0]
    n_points: int = 400
    n_samples: int = 200_000
    n_interior: int = 1000
    fd_step: Optional[float] = 1e-4
    mc: bool = False
    constraint: Literal["isotropic", "symmetric"] = "isotropic"
    sources: Optional[int] = None
    directions: list[tuple[float, float, float]] = [(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)]
    method: Literal["auto", "dense", "subspace"] = "auto"
    radii: int = 30


Numerics = create_model(
    "Numerics",
    __config__=ConfigDict(extra="forbid", frozen=True),
    **{f.name: (Optional[type(f.default)], None) for f in fields(Tolerances)},
)


class Threshold(_Strict):
    max: Optional[float] = None
    min: Optional[float] = None
    expect: Optional[float] = None
    tol: Optional[float] = None

    @model_validator(mode="after")
    def _shape(self):
        if self.expect is not None and self.tol is None:
            raise ValueError("'expect' needs a 'tol'")
        if self.max is None and self.min is None and self.expect is None:
            raise ValueError("threshold needs 'max', 'min' or 'expect'")
        return self

    def check(self, value: float) -> bool:
        if not math.isfinite(value):
            return False
        if self.max is not None and not value <= self.max:
            return False
        if self.min is not None and not value >= self.min:
            return False
        if self.expect is not None and not abs(value - self.expect) <= self.tol:
            return False
        return True


class Outputs(_Strict):
    json_path: Optional[str] = Field(default=None, alias="json")
    csv_path: Optional[str] = Field(default=None, alias="csv")


class Scenario(_Strict):
    name: str
    task: Literal[TASKS]  # type: ignore[valid-type]
    geometry: Geometry
    medium: Optional[Medium] = None
    settings: Settings = Settings()
    numerics: Numerics = Numerics()  # type: ignore[valid-type]
    thresholds: dict[str, Threshold] = {}
    outputs: Outputs = Outputs()
    key_metric: Optional[str] = None

    @model_validator(mode="after")
    def _consistency(self):
        allowed = _GEOMETRIES[self.task]
        if self.geometry.kind not in allowed:
            raise ValueError(f"task {self.task!r} needs geometry kind in {allowed}, got {self.geometry.kind!r}")
        if self.task in STOCHASTIC_TASKS and self.settings.seed is None:
            raise ValueError("seed required for stochastic task " + repr(self.task))
        if self.task in ("neutral-sphere", "bem-defect") and self.medium is None:
            raise ValueError(f"task {self.task!r} needs a medium")
        if self.task == "bem-defect" and self.medium.sigma_m is None:
            raise ValueError("bem-defect needs medium.sigma_m")
        unknown = set(self.thresholds) - set(METRICS[self.task])
        if unknown:
            raise ValueError(f"unknown metrics for {self.task!r}: {sorted(unknown)}; known: {list(METRICS[self.task])}")
        if self.key_metric is not None and self.key_metric not in METRICS[self.task]:
            raise ValueError(f"key_metric {self.key_metric!r} is not a metric of {self.task!r}")
        return self

    @property
    def tolerances(self) -> Tolerances:
        overrides = {k: v for k, v in self.numerics.model_dump().items() if v is not None}
        return DEFAULT.updated(**overrides)


_GEOMETRIES = {
    "phi": ("confocal",),
    "solve-ellipsoid": ("confocal",),
    "neutral-sphere": ("spheres",),
    "mfs-fit": ("confocal", "spheres", "meshes", "family"),
    "newtonian-check": ("confocal", "spheres", "meshes"),
    "bem-defect": ("spheres", "meshes"),
    "sweep": ("family",),
}

METRICS = {
    "phi": ("sum_identity", "phi_min"),
    "solve-ellipsoid": ("k", "A_11", "A_22", "A_33", "residual_outer", "residual_inner", "residual_interior", "trace_defect", "max_A_eig"),
    "neutral-sphere": ("sigma_m", "c0", "k", "A_over_k", "exterior_dipole", "interface_residual"),
    "mfs-fit": ("rho_fit", "c", "trace_defect", "rank"),
    "newtonian-check": ("fit_residual", "exterior_residual", "C_star", "A_error", "exterior_max"),
    "bem-defect": ("defect", "dipole", "charge"),
    "sweep": ("rho_fit_first", "rho_fit_last", "rho_fit_max"),
}


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------


def _line_of(text: str, key: str) -> Optional[int]:
    pattern = re.compile(r'"' + re.escape(str(key)) + r'"\s*:')
    for i, line in enumerate(text.splitlines(), start=1):
        if pattern.search(line):
            return i
    return None


def _describe(err: dict, text: str) -> str:
    loc = [str(p) for p in err["loc"] if not str(p).startswith("function-")]
    keys = [p for p in loc if not p.isdigit() and p not in _GEOMETRY_TAGS]
    where = ".".join(loc) or "<root>"
    line = None
    for key in reversed(keys):
        line = _line_of(text, key)
        if line:
            break
    if err["type"] == "extra_forbidden":
        msg = f"unknown key {keys[-1]!r} at {where}"
    else:
        msg = f"{where}: {err['msg']}"
    return f"line {line}: {msg}" if line else msg


_GEOMETRY_TAGS = {"confocal", "spheres", "meshes", "family"}


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{source}: line {exc.lineno}: invalid JSON ({exc.msg})") from None
    try:
        return Scenario.model_validate(raw)
    except ValidationError as exc:
        details = "; ".join(_describe(e, text) for e in exc.errors())
        raise SchemaError(f"{source}: {details}") from None


def load_scenario(path) -> tuple[Scenario, Path]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SchemaError(f"{path}: cannot read ({exc.strerror})") from None
    return parse_scenario(text, str(path)), path.parent


def bundled_dir() -> Path:
    return Path(__file__).parent / "scenarios"


def list_scenarios() -> list[Path]:
    return sorted(bundled_dir().glob("*.json"))


def resolve_scenario(name_or_path: str) -> Path:
    p = Path(name_or_path)
    if p.exists():
        return p
    for cand in (bundled_dir() / name_or_path, bundled_dir() / f"{name_or_path}.json"):
        if cand.exists():
            return cand
    raise SchemaError(f"{name_or_path}: no such scenario file or bundled scenario")


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps_json(payload: dict) -> str:
    return json.dumps(_plain(payload), sort_keys=True, indent=2) + "\n"


def dumps_csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


class Result:
    def __init__(self, metrics: dict[str, float], payload: dict, csv_header=None, csv_rows=None):
        self.metrics = {k: float(v) for k, v in metrics.items()}
        self.payload = payload
        self.csv_header = csv_header
        self.csv_rows = csv_rows


# ---------------------------------------------------------------------------
# Tasks
# ---------------------------------------------------------------------------


def _confocal_pair(g: ConfocalGeometry):
    from .geometry import ConfocalPair

    return ConfocalPair.from_axes(g.axes, g.rho0, g.center)


def _ellipsoids(g):
    from .geometry import Ellipsoid

    if isinstance(g, ConfocalGeometry):
        pair = _confocal_pair(g)
        return pair.outer, pair.inner
    return Ellipsoid.sphere(g.r_e), Ellipsoid.sphere(g.r_i, g.core_offset)


def _meshes(sc: Scenario, base: Path, t: Optional[float] = None):
    from .geometry import mesh_ellipsoid, read_off
    from .overdet import sweep_pair

    g = sc.geometry
    s = sc.settings.subdivisions
    if isinstance(g, MeshGeometry):
        return read_off(base / g.shell), read_off(base / g.core)
    if isinstance(g, FamilyGeometry):
        return sweep_pair(g.family, g.t[0] if t is None else t, s)
    outer, inner = _ellipsoids(g)
    return mesh_ellipsoid(outer, s), mesh_ellipsoid(inner, s)


def _task_phi(sc: Scenario, base: Path) -> Result:
    from .elliptic import EllipticContext, g_eval, i0, phi_all

    ctx = EllipticContext.from_axes(sc.geometry.axes, sc.tolerances)
    rho = np.asarray(sc.settings.rho, dtype=float)
    ph = phi_all(ctx, rho)
    target = 2.0 / np.sqrt(g_eval(ctx, rho))
    gap = ph.sum(axis=-1) - target
    ident = np.abs(gap) / target
    vals = i0(ctx, rho)
    rows = [(r, *p, v, e) for r, p, v, e in zip(rho, ph, vals, gap)]
    payload = {"rho": rho, "phi": ph, "i0": vals, "sum_identity": ident}
    return Result(
        {"sum_identity": float(ident.max()), "phi_min": float(ph.min())},
        payload,
        ["rho", "phi_1", "phi_2", "phi_3", "i0", "sum_phi_minus_target"],
        rows,
    )


def _task_solve_ellipsoid(sc: Scenario, base: Path) -> Result:
    from .analytic import overdet_solution
    from .geometry import mesh_ellipsoid
    from .overdet import residuals
    from .potential import trace_check

    pair = _confocal_pair(sc.geometry)
    sol = overdet_solution(pair, sc.tolerances)
    st = sc.settings
    outer, inner = mesh_ellipsoid(pair.outer, st.subdivisions), mesh_ellipsoid(pair.inner, st.subdivisions)
    res = residuals(outer, inner, sol, sol.k, sol.A, sol.d, st.n_interior, st.seed or 0, st.fd_step)
    tr = trace_check(sol)
    norm = res.normalized
    metrics = {
        "k": sol.k,
        "A_11": sol.A[0, 0],
        "A_22": sol.A[1, 1],
        "A_33": sol.A[2, 2],
        "residual_outer": norm[0],
        "residual_inner": norm[1],
        "residual_interior": norm[2],
        "trace_defect": tr.relative,
        "max_A_eig": float(np.linalg.eigvalsh(sol.A).max()),
    }
    payload = {"k": sol.k, "A": sol.A, "d": sol.d, "rho0": pair.rho0, "axes": pair.base.c, "residuals": res.as_dict(), "trace": asdict(tr)}
    return Result(metrics, payload)


def _task_neutral_sphere(sc: Scenario, base: Path) -> Result:
    from .analytic import neutral_shell_field

    g, m = sc.geometry, sc.medium
    ns = neutral_shell_field(g.r_i, g.r_e, m.sigma_c, m.sigma_s)
    st = ns.transmission
    metrics = {
        "sigma_m": ns.sigma_m,
        "c0": ns.c0,
        "k": ns.k,
        "A_over_k": ns.A[0, 0] / ns.k,
        "exterior_dipole": abs(st.exterior_dipole),
        "interface_residual": st.residual,
    }
    payload = {
        "sigma_m": ns.sigma_m,
        "c0": ns.c0,
        "k": ns.k,
        "A": ns.A,
        "d": ns.d,
        "coefficients": {
            "core_slope": st.core_slope,
            "shell_slope": st.shell_slope,
            "shell_dipole": st.shell_dipole,
            "exterior_dipole": st.exterior_dipole,
        },
    }
    return Result(metrics, payload)


def _task_mfs_fit(sc: Scenario, base: Path) -> Result:
    from .overdet import mfs_fit
    from .potential import trace_check

    outer, inner = _meshes(sc, base)
    fit = mfs_fit(outer, inner, sc.settings.constraint, sc.settings.sources, sc.tolerances)
    tr = trace_check(fit)
    val = np.vstack([outer.vertices, inner.vertices])
    grad = fit.gradient(val)
    target = np.vstack([np.zeros_like(outer.vertices), inner.vertices @ fit.A.T + fit.d])
    mis = np.linalg.norm(grad - target, axis=1) / fit.diameter
    surface = ["outer"] * len(outer.vertices) + ["inner"] * len(inner.vertices)
    rows = [(*p, s, m) for p, s, m in zip(val, surface, mis)]
    metrics = {"rho_fit": fit.rho_fit, "c": fit.c if fit.c is not None else math.nan, "trace_defect": tr.relative, "rank": fit.rank}
    payload = fit.as_dict() | {"trace": asdict(tr)}
    return Result(metrics, payload, ["x", "y", "z", "surface", "misfit"], rows)


def _task_newtonian_check(sc: Scenario, base: Path) -> Result:
    from .geometry import TriMesh, fibonacci_sphere
    from .potential import averaged_difference, interior_samples, quadratic_fit

    st = sc.settings
    if isinstance(sc.geometry, MeshGeometry):
        outer, inner = _meshes(sc, base)
        pair = (outer, inner)
    elif isinstance(sc.geometry, ConfocalGeometry):
        pair = _confocal_pair(sc.geometry)
        outer, inner = pair.outer, pair.inner
    else:
        outer, inner = _ellipsoids(sc.geometry)
        pair = (outer, inner)
    method = "mc" if st.mc else "auto"
    pts = interior_samples(inner, st.n_points, st.seed)
    fit = quadratic_fit(pair, pts, n_samples=st.n_samples, seed=st.seed, tol=sc.tolerances) if method == "auto" else None
    center = np.asarray(outer.centroid if isinstance(outer, TriMesh) else outer.center, dtype=float)
    ext = center + 1.5 * float(outer.diameter) * fibonacci_sphere(24)
    samples = np.vstack([pts, ext])
    diff = averaged_difference(pair, samples, st.n_samples, st.seed, sc.tolerances, method)
    rows = [(*p, v, e, b) for p, v, e, b in zip(diff.points, diff.values, diff.stderr, diff.branch)]
    exterior = diff.branch == "exterior"
    metrics = {"exterior_max": float(np.max(np.abs(diff.values[exterior]) - 3.0 * diff.stderr[exterior]))}
    payload = {"exterior_max": metrics["exterior_max"]}
    if fit is not None:
        metrics |= {
            "fit_residual": fit.residual,
            "exterior_residual": fit.exterior_residual,
            "C_star": fit.C_star,
            "A_error": fit.A_error if fit.A_error is not None else math.nan,
        }
        payload["fit"] = fit.as_dict()
    return Result(metrics, payload, ["x", "y", "z", "difference", "stderr", "branch"], rows)


def _task_bem_defect(sc: Scenario, base: Path) -> Result:
    from .analytic import LayeredMedium
    from .bem import neutrality_defect, probe_points, solve_family

    outer, inner = _meshes(sc, base)
    m = sc.medium
    medium = LayeredMedium.isotropic(m.sigma_c, m.sigma_s, m.sigma_m)
    sols = solve_family(inner, outer, [medium], sc.settings.directions, sc.tolerances, sc.settings.method)[0]
    nd = neutrality_defect(sols, sc.tolerances)
    probes, _ = probe_points(sols[0], sc.tolerances)
    pert = np.column_stack([s.perturbation(probes) for s in sols])
    rows = [(*p, *v) for p, v in zip(probes, pert)]
    charge = max(abs(q) for s in sols for q in s.charges)
    dip = max(float(np.linalg.norm(d)) for d in nd.dipoles)
    metrics = {"defect": nd.defect, "dipole": dip, "charge": charge}
    payload = nd.as_dict() | {"relative_residuals": [s.relative_residual for s in sols], "charges": [s.charges for s in sols]}
    header = ["x", "y", "z"] + [f"perturbation_{i + 1}" for i in range(len(sols))]
    return Result(metrics, payload, header, rows)


def _task_sweep(sc: Scenario, base: Path) -> Result:
    from .overdet import isotropy_sweep

    g = sc.geometry
    st = sc.settings
    rows = isotropy_sweep(g.t, st.subdivisions, g.family, st.constraint, st.sources, sc.tolerances)
    vals = [r for _, r in rows]
    metrics = {"rho_fit_first": vals[0], "rho_fit_last": vals[-1], "rho_fit_max": max(vals)}
    return Result(metrics, {"family": g.family, "rows": rows}, ["t", "rho_fit"], rows)


_RUNNERS: dict[str, Callable[[Scenario, Path], Result]] = {
    "phi": _task_phi,
    "solve-ellipsoid": _task_solve_ellipsoid,
    "neutral-sphere": _task_neutral_sphere,
    "mfs-fit": _task_mfs_fit,
    "newtonian-check": _task_newtonian_check,
    "bem-defect": _task_bem_defect,
    "sweep": _task_sweep,
}

_KEY_METRIC = {
    "phi": "sum_identity",
    "solve-ellipsoid": "k",
    "neutral-sphere": "sigma_m",
    "mfs-fit": "rho_fit",
    "newtonian-check": "fit_residual",
    "bem-defect": "defect",
    "sweep": "rho_fit_last",
}


class Outcome:
    def __init__(self, scenario: Scenario, result: Result, failures: list[str], written: list[Path]):
        self.scenario = scenario
        self.result = result
        self.failures = failures
        self.written = written

    @property
    def passed(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        sc = self.scenario
        key = sc.key_metric or _KEY_METRIC[sc.task]
        value = self.result.metrics.get(key, math.nan)
        status = "PASS" if self.passed else "FAIL(" + ",".join(self.failures) + ")"
        return f"{sc.task} {sc.name}: {key}={value!r} {status}"


def execute(sc: Scenario, base: Path, out_dir: Path) -> Outcome:
    result = _RUNNERS[sc.task](sc, base)
    failures = [
        name for name, th in sorted(sc.thresholds.items()) if not th.check(result.metrics.get(name, math.nan))
    ]
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    payload = {
        "name": sc.name,
        "task": sc.task,
        "metrics": result.metrics,
        "result": result.payload,
        "passed": not failures,
        "failures": failures,
    }
    json_path = out_dir / (sc.outputs.json_path or f"{sc.name}.json")
    json_path.write_text(dumps_json(payload))
    written.append(json_path)
    if result.csv_header is not None:
        csv_path = out_dir / (sc.outputs.csv_path or f"{sc.name}.csv")
        csv_path.write_text(dumps_csv(result.csv_header, result.csv_rows))
        written.append(csv_path)
    return Outcome(sc, result, failures, written)
