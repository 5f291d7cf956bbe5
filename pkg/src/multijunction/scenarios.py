"""
Scenario runner: geometry -> relaxed tensor -> kernel -> solve -> traces.

A scenario is a small JSON-compatible dict::

    {"geometry": "piston", "levels": 5, "mode": "projected", "tol": 1e-10,
     "conductivity": {...}, "source": {"patches": {...}}, "out": "results"}

``geometry`` may instead be ``{"mesh": "path/to/mesh.json"}``. Missing
conductivity/source entries fall back to the built-in defaults for the
named geometry.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import fem
from .fem import Constant, Radial, SourceTerm
from .kernel import component_poincare, kernel_decomposition
from .mesh import BUILTIN_GEOMETRIES, MeshError, builtin_geometry, load_complex, refine
from .oracles import radial_profile, tilted_conductivity, y_graph_solution
from .tensors import ConductivitySpec, relax_field
from .trace import trace_battery


class ScenarioError(ValueError):
    pass


Q_DISK = (4.0, -6.0)   # q(r) = 4 - 6r, int_0^1 r q dr = 0

DISK_CENTERS = {
    "two_disks": {0: (0.0, 0.0, 0.0), 1: (0.0, 0.0, 0.0)},
    "piston": {0: (-1.0, 0.0, 0.0), 1: (1.0, 0.0, 0.0)},
    "tilted_disks": {0: (0.0, 0.0, -1.0), 1: (1.0, 0.0, 0.0)},
    "two_disks_point": {0: (0.0, 0.0, -1.0), 1: (1.0, 0.0, 0.0)},
    "antenna": {0: (0.0, 0.0, 0.0)},
}


def default_source(name: str) -> SourceTerm:
    neg = tuple(-x for x in Q_DISK)
    if name == "y_graph":
        return SourceTerm.piecewise_constant([1.0, 2.0, -3.0])
    if name == "segment":
        return SourceTerm({0: Radial((1.0, -2.0), (0.0, 0.0), zero_mean=True)})
    cen = DISK_CENTERS[name]
    if name == "two_disks":
        return SourceTerm({p: Radial(Q_DISK, cen[p], True) for p in (0, 1)})
    if name == "antenna":
        return SourceTerm({0: Radial(Q_DISK, cen[0], True)})
    return SourceTerm({0: Radial(Q_DISK, cen[0], True), 1: Radial(neg, cen[1], True)})


def default_conductivity(name: str, N: int) -> ConductivitySpec:
    if name == "tilted_disks":
        return ConductivitySpec("constant", matrix=tilted_conductivity(), lam=0.5)
    return ConductivitySpec.identity(N)


@dataclass
class ScenarioConfig:
    geometry: str | None = "y_graph"
    mesh: str | None = None
    levels: int = 3
    mode: str = "projected"
    tol: float = 1e-10
    compat_tol: float = 1e-8
    conductivity: dict | None = None
    source: dict | None = None
    coupling: str = "auto"
    out: str | None = None
    format: str = "csv"
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        geom = d.pop("geometry", "y_graph")
        mesh = d.pop("mesh", None)
        if isinstance(geom, dict):
            mesh = geom.get("mesh", mesh)
            geom = geom.get("name")
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ScenarioError(f"unknown scenario keys {sorted(unknown)}")
        cfg = cls(geometry=geom, mesh=mesh, **d)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path: str) -> "ScenarioConfig":
        if not os.path.exists(path):
            raise ScenarioError(f"scenario file {path!r} does not exist")
        with open(path) as fh:
            try:
                return cls.from_dict(json.load(fh))
            except json.JSONDecodeError as exc:
                raise ScenarioError(f"malformed scenario file: {exc}") from exc

    def validate(self) -> None:
        if self.levels < 1:
            raise ScenarioError("levels must be >= 1")
        if self.tol <= 0 or self.compat_tol <= 0:
            raise ScenarioError("tolerances must be positive")
        if self.mode not in ("projected", "schur"):
            raise ScenarioError(f"unknown relaxation mode {self.mode!r}")
        if self.format not in ("csv", "json"):
            raise ScenarioError(f"unknown output format {self.format!r}")
        if self.mesh is None and self.geometry not in BUILTIN_GEOMETRIES:
            raise ScenarioError(f"unknown geometry {self.geometry!r}")
        if self.mesh is not None and not os.path.exists(self.mesh):
            raise ScenarioError(f"mesh file {self.mesh!r} does not exist")

    def complex_at(self, level: int):
        if self.mesh is not None:
            c = load_complex(self.mesh)
            while c.level < level:
                c = refine(c)
            return c
        return builtin_geometry(self.geometry, level, coupling=self.coupling)

    def source_term(self) -> SourceTerm:
        if self.source is not None:
            return SourceTerm.from_document(self.source)
        if self.mesh is not None:
            raise ScenarioError("a mesh-file scenario needs an explicit source")
        return default_source(self.geometry)

    def conductivity_spec(self, N: int) -> ConductivitySpec:
        if self.conductivity is not None:
            return ConductivitySpec.from_document(self.conductivity)
        return default_conductivity(self.geometry or "", N)


def exact_solution(cfg: ScenarioConfig, source: SourceTerm):
    """Oracle ``exact(patch, points)`` when the scenario has a closed form, else None."""
    name = cfg.geometry
    if cfg.mesh is not None or cfg.conductivity is not None or cfg.coupling != "auto":
        return None
    dens = source.densities
    if name == "y_graph":
        if not all(isinstance(dens.get(i), Constant) for i in range(3)):
            return None
        a = np.array([dens[i].value for i in range(3)])
        if abs(a.sum()) > 1e-12:
            return None
        return lambda p, x: y_graph_solution(a, p, np.linalg.norm(x, axis=-1))
    if name not in ("piston", "two_disks", "two_disks_point", "antenna"):
        return None
    centers = DISK_CENTERS[name]
    profiles = {}
    for p, cen in centers.items():
        d = dens.get(p)
        if not isinstance(d, Radial) or tuple(d.center) != tuple(cen):
            return None
        profiles[p] = (radial_profile(d.coeffs), np.asarray(cen))
    if name == "two_disks" and tuple(dens[0].coeffs) != tuple(dens[1].coeffs):
        return None
    if any(p not in centers and p in dens for p in dens):
        return None

    def exact(p, x):
        if p not in profiles:
            return np.zeros(x.shape[:-1])
        prof, cen = profiles[p]
        return prof(np.linalg.norm(x - cen, axis=-1))
    return exact


@dataclass
class LevelResult:
    level: int
    h: float
    dofs: int
    kernel_dim: int
    energy: float
    residual: float
    iterations: int
    kernel_defect: float
    compatibility_defects: list
    trace_max: float
    trace_one: float
    l2_error: float | None
    poincare: list
    junction_values: dict = field(default_factory=dict)
    complex: object = None
    u: object = None
    field: object = None
    trace: object = None
    report: object = None
    tensors: object = None
    kd: object = None
    K: object = None
    M: object = None
    b: object = None


def junction_values(c, kd, u) -> dict:
    """Per-junction nodal values of every incident patch copy."""
    out = {}
    for ji, j in enumerate(c.junctions):
        if len(j.vertices) != 1:
            continue
        v = j.vertices[0]
        out[ji] = {p: float(u[kd.dofs.vertex_dof[p][v]]) for p in j.patches}
    return out


def solve_level(cfg: ScenarioConfig, level: int, x0=None, with_poincare: bool = True) -> LevelResult:
    c = cfg.complex_at(level)
    source = cfg.source_term()
    t = relax_field(c, cfg.conductivity_spec(c.ambient_dim), cfg.mode)
    kd = kernel_decomposition(c)
    K = fem.assemble_stiffness(c, t, kd.dofs)
    M = fem.assemble_mass(c, kd.dofs)
    b = fem.assemble_load(c, source, kd.dofs)
    u, rep = fem.solve(K, b, kd, M, tol=cfg.tol, x0=x0, compat_tol=cfg.compat_tol)
    fld = fem.tangential_gradient(u, c, kd.dofs)
    tr = trace_battery(c, fld, t, source)
    trace_one = tr.rows[0].value
    rep.trace = {"max_abs": tr.max_abs(c.level), "phi_one": trace_one,
                 "tv_bound": tr.rows[0].tv_bound}
    exact = exact_solution(cfg, source)
    l2 = fem.l2_error(c, kd.dofs, u, exact) if exact is not None else None
    pc = []
    if with_poincare:
        for l in range(kd.d):
            try:
                pc.append(component_poincare(K, M, kd, l)[1])
            except ValueError:
                pc.append(float("nan"))
    return LevelResult(level=c.level, h=c.mesh_size(), dofs=kd.dofs.n_dofs, kernel_dim=kd.d,
                       energy=rep.energy, residual=rep.residual, iterations=rep.iterations,
                       kernel_defect=rep.kernel_defect,
                       compatibility_defects=rep.compatibility_defects,
                       trace_max=tr.max_abs(c.level), trace_one=trace_one, l2_error=l2,
                       poincare=pc, junction_values=junction_values(c, kd, u),
                       complex=c, u=u, field=fld, trace=tr, report=rep, tensors=t,
                       kd=kd, K=K, M=M, b=b)


def _write(path: str, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def run_solve(cfg: ScenarioConfig) -> list[LevelResult]:
    """Solve at every level 1..cfg.levels, writing per-level outputs to ``cfg.out``."""
    results = []
    for level in range(1, cfg.levels + 1):
        r = solve_level(cfg, level)
        results.append(r)
        if cfg.out:
            os.makedirs(cfg.out, exist_ok=True)
            stem = os.path.join(cfg.out, f"L{r.level}")
            _write(stem + "_solution.csv", fem.solution_csv(r.complex, r.kd.dofs, r.u))
            _write(stem + "_gradient.csv", fem.gradient_csv(r.complex, r.field))
            _write(stem + "_report.json", r.report.to_json() + "\n")
            _write(stem + "_trace.csv", r.trace.to_csv())
    return results


CONVERGENCE_COLUMNS = ["level", "h", "dofs", "kernel_dim", "L2_error", "L2_order",
                       "energy", "trace_max", "trace_phi_one", "poincare_C"]


def run_convergence(cfg: ScenarioConfig) -> list[dict]:
    results = run_solve(cfg)
    rows = []
    prev = None
    for r in results:
        order = None
        if prev is not None and r.l2_error and prev.l2_error:
            order = math.log2(prev.l2_error / r.l2_error)
        rows.append({"level": r.level, "h": r.h, "dofs": r.dofs, "kernel_dim": r.kernel_dim,
                     "L2_error": r.l2_error, "L2_order": order, "energy": r.energy,
                     "trace_max": r.trace_max, "trace_phi_one": r.trace_one,
                     "poincare_C": r.poincare, "junction_values": r.junction_values})
        prev = r
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
        name = "convergence." + cfg.format
        _write(os.path.join(cfg.out, name), format_table(rows, cfg.format))
    return rows


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.17g}"
    if isinstance(v, (list, tuple)):
        return ";".join(_fmt(x) for x in v)
    return str(v)


def format_table(rows: list[dict], fmt: str = "csv", columns=None) -> str:
    if fmt == "json":
        return json.dumps(rows, indent=2, default=str) + "\n"
    columns = columns or (list(rows[0]) if rows else [])
    columns = [c for c in columns if not rows or not isinstance(rows[0].get(c), dict)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def run_kernel(cfg: ScenarioConfig) -> list[dict]:
    """Components, kernel dimension, measures and Poincare constants per level."""
    rows = []
    conductivity = None
    for level in range(1, cfg.levels + 1):
        c = cfg.complex_at(level)
        if conductivity is None:
            conductivity = cfg.conductivity_spec(c.ambient_dim)
        kd = kernel_decomposition(c)
        t = relax_field(c, conductivity, cfg.mode)
        K = fem.assemble_stiffness(c, t, kd.dofs)
        M = fem.assemble_mass(c, kd.dofs)
        for l, comp in enumerate(kd.components):
            lam, C = component_poincare(K, M, kd, l)
            rows.append({"level": c.level, "d": kd.d, "component_id": l,
                         "patches": list(comp), "measure": float(kd.measures[l]),
                         "dofs": int(len(kd.component_dofs(l))), "lambda1": lam, "C_l": C})
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
        _write(os.path.join(cfg.out, "kernel." + cfg.format), format_table(rows, cfg.format))
    return rows


def run_poincare(cfg: ScenarioConfig) -> list[dict]:
    rows = [{"component_id": r["component_id"], "level": r["level"], "dofs": r["dofs"],
             "lambda1": r["lambda1"], "C_l": r["C_l"]}
            for r in run_kernel(ScenarioConfig(**{**cfg.__dict__, "out": None}))]
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
        _write(os.path.join(cfg.out, "poincare." + cfg.format), format_table(rows, cfg.format))
    return rows


def run_relax(cfg: ScenarioConfig) -> list[dict]:
    """Per-element relaxed tensors at the finest level with the projected/schur disagreement."""
    c = cfg.complex_at(cfg.levels)
    t = relax_field(c, cfg.conductivity_spec(c.ambient_dim), cfg.mode)
    N = c.ambient_dim
    rows = []
    for i, p in enumerate(c.patches):
        for e in range(p.n_elements):
            row = {"patch_id": i, "element_id": e}
            for a in range(N):
                for b_ in range(N):
                    row[f"a{a + 1}{b_ + 1}"] = float(t.tensors[i][e, a, b_])
            row["disagreement"] = float(t.disagreement[i][e])
            rows.append(row)
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
        _write(os.path.join(cfg.out, "relaxed_tensor." + cfg.format), format_table(rows, cfg.format))
    return rows
