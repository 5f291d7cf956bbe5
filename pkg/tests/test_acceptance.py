"""Acceptance checks, one test group per criterion.

Run ``pytest tests/test_acceptance.py -v`` to get one PASS/FAIL line per
criterion in the terminal summary.
"""
import json
import math
import subprocess
import sys

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.integrate import quad

from multijunction import fem
from multijunction.kernel import component_poincare, kernel_decomposition, poincare_constant, project_kernel
from multijunction.mesh import BUILTIN_GEOMETRIES, TangentFrame, builtin_geometry
from multijunction.oracles import tilted_disks_tensor, y_graph_solution
from multijunction.scenarios import ScenarioConfig, solve_level
from multijunction.tensors import (ConductivitySpec, relax_field, relax_projected, relax_schur,
                                   tangential_projector)

LEVELS = range(1, 6)
B_PISTON = 7 / 30


def crit(n, title):
    return pytest.mark.criterion(n, title)


@pytest.fixture(scope="module")
def y_runs():
    cfg = ScenarioConfig(geometry="y_graph")
    return [solve_level(cfg, L, with_poincare=False) for L in LEVELS]


@pytest.fixture(scope="module")
def piston_runs():
    cfg = ScenarioConfig(geometry="piston")
    return [solve_level(cfg, L, with_poincare=False) for L in LEVELS]


# 1 -------------------------------------------------------------------------

@crit(1, "Y-graph nodal exactness and L2 order")
def test_y_graph_nodal_exactness(y_runs):
    a = np.array([1.0, 2.0, -3.0])
    for r in y_runs:
        worst = 0.0
        for p, patch in enumerate(r.complex.patches):
            for v in patch.vertex_ids:
                s = np.linalg.norm(r.complex.vertices[v])
                uh = r.u[r.kd.dofs.vertex_dof[p][v]]
                worst = max(worst, abs(uh - y_graph_solution(a, p, s)))
        assert worst <= 1e-9, (r.level, worst)


@crit(1, "Y-graph nodal exactness and L2 order")
def test_y_graph_l2_order(y_runs):
    err = [r.l2_error for r in y_runs]
    orders = [math.log2(err[i - 1] / err[i]) for i in (3, 4)]
    assert min(orders) >= 1.9, orders


# 2 -------------------------------------------------------------------------

def _patch_tensors(name, mode="projected", spec=None):
    c = builtin_geometry(name, 2)
    spec = spec or ConductivitySpec.identity(c.ambient_dim)
    return relax_field(c, spec, mode)


@crit(2, "relaxed tensor oracles")
def test_relaxed_piston_and_two_disks():
    expected = {"piston": [np.diag([0, 1, 1]), np.diag([0, 1, 1]), np.diag([1, 0, 0])],
                "two_disks": [np.diag([1, 1, 0]), np.diag([0, 1, 1])]}
    for name, masks in expected.items():
        t = _patch_tensors(name)
        for T, mask in zip(t.tensors, masks):
            assert np.abs(T - mask).max() <= 1e-12, name


@crit(2, "relaxed tensor oracles")
def test_relaxed_tilted_disks():
    from multijunction.scenarios import default_conductivity
    spec = default_conductivity("tilted_disks", 3)
    proj = _patch_tensors("tilted_disks", "projected", spec)
    for p in (0, 1):
        assert np.abs(proj.tensors[p] - tilted_disks_tensor(p + 1)).max() <= 1e-12
    schur = _patch_tensors("tilted_disks", "schur", spec)
    e2e2 = np.diag([0.0, 1.0, 0.0])
    for p in (0, 1):
        assert np.abs(schur.tensors[p] - e2e2).max() <= 1e-12
    assert proj.disagrees and schur.disagrees


# 3 -------------------------------------------------------------------------

@crit(3, "piston discontinuity")
def test_piston_segment_is_flat(piston_runs):
    r = piston_runs[-1]
    idx = r.kd.dofs.patch_dofs(2)
    assert np.abs(r.u[idx]).max() <= 1e-6


@crit(3, "piston discontinuity")
def test_piston_junction_values(piston_runs):
    # independent value of b: zero mean of 7/30 - r^2 + 2/3 r^3 on the unit disk
    b = -quad(lambda r: 2 * r * (-r ** 2 + 2 / 3 * r ** 3), 0, 1)[0]
    assert abs(b - B_PISTON) < 1e-12
    tail = []
    for r in piston_runs:
        vals = {p: v for jv in r.junction_values.values() for p, v in jv.items() if p in (0, 1)}
        tail.append((vals[0], vals[1]))
    u1, u2 = tail[-1]
    assert abs(u1 - B_PISTON) / B_PISTON <= 0.05
    assert abs(u2 + B_PISTON) / B_PISTON <= 0.05
    dist = [abs(v1 - B_PISTON) for v1, _ in tail[-3:]]
    assert dist[0] > dist[1] > dist[2], dist


@crit(3, "piston discontinuity")
def test_piston_l2_order_on_first_disk(piston_runs):
    cfg = ScenarioConfig(geometry="piston")
    from multijunction.scenarios import exact_solution
    exact = exact_solution(cfg, cfg.source_term())
    err = [fem.l2_error(r.complex, r.kd.dofs, r.u, exact, patches={0}) for r in piston_runs]
    assert all(e1 < e0 for e0, e1 in zip(err, err[1:])), err
    assert math.log2(err[-2] / err[-1]) >= 1.5, err


# 4 -------------------------------------------------------------------------

KERNEL_DIMS = {"y_graph": 1, "antenna": 2, "two_disks_point": 2, "piston": 3, "two_disks": 1}


@crit(4, "kernel dimensions")
@pytest.mark.parametrize("name", sorted(KERNEL_DIMS))
def test_kernel_dimension(name):
    for L in (1, 2, 3):
        c = builtin_geometry(name, L)
        kd = kernel_decomposition(c)
        assert kd.d == KERNEL_DIMS[name], (name, L)
        t = relax_field(c, ConductivitySpec.identity(c.ambient_dim))
        K = fem.assemble_stiffness(c, t, kd.dofs)
        normK = sp.linalg.norm(K)
        for chi in kd.indicators:
            assert np.linalg.norm(K @ chi) <= 1e-10 * normK * np.linalg.norm(chi)


# 5 -------------------------------------------------------------------------

@crit(5, "compatibility gate")
def test_incompatible_source_refused(tmp_path):
    src = {"patches": {str(i): {"kind": "constant", "value": 1.0} for i in range(3)}}
    proc = subprocess.run([sys.executable, "-m", "multijunction", "solve", "--geometry", "y_graph",
                           "--levels", "2", "--source", json.dumps(src), "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    payload = json.loads(proc.stderr)
    assert payload["error"] == "incompatible_source"
    assert np.allclose(payload["patch_integrals"], [1.0, 1.0, 1.0], rtol=0, atol=1e-12)
    comp = payload["components"][0]
    assert abs(comp["defect"] - 3.0) <= 1e-12 and not comp["ok"]
    assert not list(tmp_path.glob("L*_solution.csv"))


# 6 -------------------------------------------------------------------------

@crit(6, "weak Poincare inequality")
def test_segment_eigenvalue():
    rep = poincare_constant(builtin_geometry("segment", 1), None, 0, 5)
    lam = rep.history[-1].lambda1
    assert abs(lam - math.pi ** 2) / math.pi ** 2 <= 0.01, lam


@crit(6, "weak Poincare inequality")
@pytest.mark.parametrize("name", BUILTIN_GEOMETRIES)
def test_poincare_inequality_random(name):
    rng = np.random.default_rng(20261018)
    r = solve_level(ScenarioConfig(geometry=name), 3, with_poincare=False)
    K, M, kd = r.K, r.M, r.kd
    violations = 0
    for l in range(kd.d):
        _, C = component_poincare(K, M, kd, l)
        idx = kd.component_dofs(l)
        for _ in range(100):
            u = np.zeros(kd.dofs.n_dofs)
            u[idx] = rng.standard_normal(idx.size)
            w = u - project_kernel(u, kd, M)
            lhs, rhs = w @ (M @ w), C * (u @ (K @ u))
            violations += lhs > rhs * (1 + 1e-10)
    assert violations == 0


# 7 -------------------------------------------------------------------------

@crit(7, "Neumann trace decay")
@pytest.mark.parametrize("which", ["y_runs", "piston_runs"])
def test_trace_decay(which, request):
    runs = request.getfixturevalue(which)
    tm = [r.trace_max for r in runs]
    for a, b in zip(tm[-3:], tm[-2:]):
        assert a / b >= 1.5, tm
    assert all(abs(r.trace_one) <= 1e-8 for r in runs)


# 8 -------------------------------------------------------------------------

@crit(8, "uniqueness and linearity")
@pytest.mark.parametrize("name", ["y_graph", "piston", "two_disks_point"])
def test_uniqueness_and_scaling(name):
    tol = 1e-10
    rng = np.random.default_rng(7)
    r = solve_level(ScenarioConfig(geometry=name, tol=tol), 3, with_poincare=False)
    K, M, kd, b = r.K, r.M, r.kd, r.b
    mnorm = lambda v: math.sqrt(max(v @ (M @ v), 0.0))
    u1, _ = fem.solve(K, b, kd, M, tol=tol, x0=rng.standard_normal(b.size))
    u2, _ = fem.solve(K, b, kd, M, tol=tol, x0=rng.standard_normal(b.size))
    assert mnorm(u1 - u2) <= 10 * tol
    for alpha in (-1.0, 2.0):
        ua, _ = fem.solve(K, alpha * b, kd, M, tol=tol)
        assert mnorm(ua - alpha * r.u) <= 10 * tol


# 9 -------------------------------------------------------------------------

def _random_frame(rng, N, k):
    Q, _ = np.linalg.qr(rng.standard_normal((N, N)))
    return TangentFrame(Q[:, :k], Q[:, k:])


@crit(9, "projector and frame properties")
def test_random_frames():
    rng = np.random.default_rng(1000)
    for _ in range(1000):
        N = int(rng.integers(2, 5))
        k = int(rng.integers(1, N))
        fr = _random_frame(rng, N, k)
        G = rng.standard_normal((N, N))
        A = G @ G.T + 0.1 * np.eye(N)
        P = tangential_projector(fr)
        assert np.abs(P @ P - P).max() <= 1e-10
        R, _ = np.linalg.qr(rng.standard_normal((k, k)))
        S, _ = np.linalg.qr(rng.standard_normal((N - k, N - k))) if N - k > 1 else (np.eye(1), None)
        rot = TangentFrame(fr.tangent @ R, fr.normal @ S)
        proj, schur = relax_projected(A, fr), relax_schur(A, fr)
        assert np.abs(relax_projected(A, rot) - proj).max() <= 1e-10
        assert np.abs(relax_schur(A, rot) - schur).max() <= 1e-10
        D = fr.tangent.T @ (proj - schur) @ fr.tangent
        assert np.linalg.eigvalsh(0.5 * (D + D.T)).min() >= -1e-10


# 10 ------------------------------------------------------------------------

@crit(10, "energy monotonicity")
@pytest.mark.parametrize("name", BUILTIN_GEOMETRIES)
def test_energy_monotone(name):
    cfg = ScenarioConfig(geometry=name)
    E = [solve_level(cfg, L, with_poincare=False).energy for L in LEVELS]
    for e0, e1 in zip(E, E[1:]):
        assert e1 <= e0 + 1e-10 * max(1.0, abs(e0)), E
        assert e1 < e0 or abs(e1 - e0) <= 1e-10, E
