"""Command line entry point: ``multijunction {solve,convergence,kernel,relax-tensor,poincare}``.

Exit codes: 0 success, 1 invalid configuration or mesh, 2 source violates
the compatibility condition, 3 solver or eigen-iteration failed to converge.
Failures print a JSON diagnostic on stderr (and to ``<out>/error.json``).
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from . import fem
from .fem import IncompatibleSourceError, SolverConvergenceError
from .kernel import EigenConvergenceError, kernel_decomposition
from .mesh import MeshError
from .scenarios import (CONVERGENCE_COLUMNS, ScenarioConfig, ScenarioError, format_table,
                        run_convergence, run_kernel, run_poincare, run_relax, run_solve)
from .tensors import ConductivityError

EXIT_OK, EXIT_CONFIG, EXIT_INCOMPATIBLE, EXIT_NONCONVERGED = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="multijunction", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("solve", "convergence", "kernel", "relax-tensor", "poincare"):
        p = sub.add_parser(name)
        p.add_argument("--scenario", help="scenario JSON file (flags override its entries)")
        p.add_argument("--geometry", help="built-in geometry name")
        p.add_argument("--mesh", help="mesh JSON document instead of a built-in geometry")
        p.add_argument("--levels", type=int)
        p.add_argument("--mode", choices=["projected", "schur"])
        p.add_argument("--tol", type=float)
        p.add_argument("--compat-tol", type=float, dest="compat_tol")
        p.add_argument("--coupling", choices=["auto", "coupled", "decoupled"])
        p.add_argument("--source", help="source document as a JSON string")
        p.add_argument("--conductivity", help="conductivity document as a JSON string")
        p.add_argument("--out", help="output directory")
        p.add_argument("--format", choices=["csv", "json"])
    return ap


def config_from_args(args) -> ScenarioConfig:
    base = {}
    if args.scenario:
        if not os.path.exists(args.scenario):
            raise ScenarioError(f"scenario file {args.scenario!r} does not exist")
        with open(args.scenario) as fh:
            try:
                base = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ScenarioError(f"malformed scenario file: {exc}") from exc
    for key in ("geometry", "mesh", "levels", "mode", "tol", "compat_tol", "coupling",
                "out", "format"):
        v = getattr(args, key)
        if v is not None:
            base[key] = v
    for key in ("source", "conductivity"):
        v = getattr(args, key)
        if v is not None:
            try:
                base[key] = json.loads(v)
            except json.JSONDecodeError as exc:
                raise ScenarioError(f"malformed --{key} JSON: {exc}") from exc
    if args.mesh and "geometry" not in base:
        base["geometry"] = None
    return ScenarioConfig.from_dict(base)


def _incompatibility_payload(cfg: ScenarioConfig, exc: IncompatibleSourceError) -> dict:
    payload = {"error": "incompatible_source", "check": "compatibility", "components": []}
    try:
        c = cfg.complex_at(1)
        kd = kernel_decomposition(c)
        comps = kd.components
        payload["patch_integrals"] = fem.patch_integrals(c, cfg.source_term()).tolist()
    except Exception:  # diagnostics are best effort
        comps = [None] * len(exc.report.defects)
    for l, (d, t, ok) in enumerate(zip(exc.report.defects, exc.report.thresholds,
                                       exc.report.component_ok)):
        payload["components"].append({"component": l, "patches": list(comps[l] or []),
                                      "defect": d, "threshold": t, "ok": ok})
    return payload


def _fail(cfg, code: int, payload: dict) -> int:
    text = json.dumps(payload, sort_keys=True)
    print(text, file=sys.stderr)
    if cfg is not None and cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
        with open(os.path.join(cfg.out, "error.json"), "w") as fh:
            fh.write(text + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = None
    try:
        cfg = config_from_args(args)
        if args.command == "solve":
            results = run_solve(cfg)
            rows = [{"level": r.level, "dofs": r.dofs, "energy": r.energy,
                     "residual": r.residual, "iterations": r.iterations,
                     "kernel_defect": r.kernel_defect, "trace_max": r.trace_max,
                     "L2_error": r.l2_error} for r in results]
            print(format_table(rows, cfg.format), end="")
        elif args.command == "convergence":
            print(format_table(run_convergence(cfg), cfg.format, CONVERGENCE_COLUMNS), end="")
        elif args.command == "kernel":
            print(format_table(run_kernel(cfg), cfg.format), end="")
        elif args.command == "poincare":
            print(format_table(run_poincare(cfg), cfg.format), end="")
        else:
            print(format_table(run_relax(cfg), cfg.format), end="")
    except IncompatibleSourceError as exc:
        return _fail(cfg, EXIT_INCOMPATIBLE, _incompatibility_payload(cfg, exc))
    except (SolverConvergenceError, EigenConvergenceError) as exc:
        return _fail(cfg, EXIT_NONCONVERGED, {"error": "not_converged", "check": "solver",
                                              "message": str(exc)})
    except (ScenarioError, MeshError, ConductivityError, ValueError, OSError) as exc:
        return _fail(cfg, EXIT_CONFIG, {"error": "invalid_config",
                                        "check": type(exc).__name__, "message": str(exc)})
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
