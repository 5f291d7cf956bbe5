import math

import numpy as np
import pytest
import scipy.sparse as sp

from multijunction import fem
from multijunction.fem import IncompatibleSourceError, SolverConvergenceError, SourceTerm
from multijunction.kernel import kernel_decomposition
from multijunction.mesh import MeshError, builtin_geometry, load_complex
from multijunction.scenarios import ScenarioConfig, default_source, solve_level
from multijunction.tensors import ConductivitySpec, relax_field


def _system(name, level, source=None):
    c = builtin_geometry(name, level)
    kd = kernel_decomposition(c)
    t = relax_field(c, ConductivitySpec.identity(c.ambient_dim))
    K = fem.assemble_stiffness(c, t, kd.dofs)
    M = fem.assemble_mass(c, kd.dofs)
    b = fem.assemble_load(c, source or default_source(name), kd.dofs)
    return c, kd, K, M, b


def test_two_element_segment_matrices():
    c, kd, K, M, _ = _system("segment", 2)
    order = np.argsort(c.vertices[kd.dofs.dof_vertex, 0])
    Kd = K.toarray()[np.ix_(order, order)]
    Md = M.toarray()[np.ix_(order, order)]
    assert np.allclose(Kd, 2 * np.array([[1, -1, 0], [-1, 2, -1], [0, -1, 1]]))
    assert np.allclose(Md, 0.5 / 6 * np.array([[2, 1, 0], [1, 4, 1], [0, 1, 2]]))


def test_stiffness_properties():
    for name in ("y_graph", "piston", "two_disks", "antenna"):
        c, kd, K, M, _ = _system(name, 2)
        assert abs(K - K.T).max() < 1e-14
        assert np.allclose(K @ np.ones(kd.dofs.n_dofs), 0, atol=1e-12)
        w = np.linalg.eigvalsh(K.toarray())
        assert w.min() > -1e-10
        assert np.sum(w < 1e-9 * w.max()) == kd.d


def test_mass_total_and_piston_blocks():
    c, kd, K, M, _ = _system("piston", 4)
    one = np.ones(kd.dofs.n_dofs)
    n = 64  # rim edges of each disk at level 4
    polygon = n / 2 * math.sin(2 * math.pi / n)
    assert abs(one @ M @ one - (2 * polygon + 2)) < 1e-12
    for a in range(kd.d):
        for b in range(kd.d):
            if a != b:
                block = K[kd.component_dofs(a)][:, kd.component_dofs(b)]
                assert block.nnz == 0 or abs(block).max() == 0


def test_y_junction_row_couples_all_branches():
    c, kd, K, _, _ = _system("y_graph", 1)
    row = K[kd.dofs.vertex_dof[0][0]]
    assert row.nnz == 4


def test_load_vector():
    c, kd, _, _, b = _system("y_graph", 3)
    centre = kd.dofs.vertex_dof[0][0]
    for p, a in enumerate((1.0, 2.0, -3.0)):
        # branch p minus the shared centre (h = 1/4) carries a_p minus half an element
        idx = np.setdiff1d(kd.dofs.patch_dofs(p), [centre])
        assert abs(b[idx].sum() - a * (1 - 1 / 8)) < 1e-14
    assert abs(b.sum()) < 1e-14
    assert np.allclose(fem.patch_integrals(c, default_source("y_graph")), [1, 2, -3])
    zero = fem.assemble_load(c, SourceTerm({}), kd.dofs)
    assert not zero.any()


def test_raw_radial_source_defect_vanishes_with_refinement():
    q = SourceTerm({0: fem.Radial((4.0, -6.0), (-1.0, 0.0, 0.0))})
    d = [abs(fem.patch_integrals(builtin_geometry("piston", L), q)[0]) for L in (2, 3, 4)]
    assert d[0] > d[1] > d[2]
    qm = SourceTerm({0: fem.Radial((4.0, -6.0), (-1.0, 0.0, 0.0), zero_mean=True)})
    assert abs(fem.patch_integrals(builtin_geometry("piston", 2), qm)[0]) < 1e-14


def test_compatibility_reports():
    c, kd, K, M, b = _system("y_graph", 2)
    assert fem.check_compatibility(b, kd).ok
    bad = fem.assemble_load(c, SourceTerm.piecewise_constant([1, 1, 1]), kd.dofs)
    rep = fem.check_compatibility(bad, kd)
    assert not rep.ok and abs(rep.defects[0] - 3) < 1e-12
    with pytest.raises(IncompatibleSourceError):
        fem.solve(K, bad, kd, M)
    _, kd2, _, _, b2 = _system("piston", 3)
    assert fem.check_compatibility(b2, kd2).ok


def test_zero_source_gives_zero_solution():
    c, kd, K, M, _ = _system("piston", 2)
    u, rep = fem.solve(K, np.zeros(kd.dofs.n_dofs), kd, M)
    assert not u.any() and rep.energy == 0.0


def test_solution_is_constrained_minimiser():
    rng = np.random.default_rng(11)
    c, kd, K, M, b = _system("piston", 3)
    u, rep = fem.solve(K, b, kd, M)
    assert rep.kernel_defect < 1e-10
    for _ in range(20):
        v = rng.standard_normal(u.size) * 1e-3
        v = fem.deflate(v, kd, M)
        assert fem.energy(u + v, K, b) >= rep.energy - 1e-14
    # Galerkin orthogonality against the complement of the kernel
    v = fem.deflate(rng.standard_normal(u.size), kd, M)
    assert abs(v @ (K @ u - b)) < 1e-8 * np.linalg.norm(v) * np.linalg.norm(b)


def test_nonconvergence_is_reported():
    c, kd, K, M, b = _system("piston", 3)
    with pytest.raises(SolverConvergenceError):
        fem.solve(K, b, kd, M, maxiter=2)


def test_gradient_of_linear_field_is_projected():
    c = builtin_geometry("two_disks", 2)
    kd = kernel_decomposition(c)
    g = np.array([1.0, 2.0, 3.0])
    u = c.vertices[kd.dofs.dof_vertex] @ g
    fld = fem.tangential_gradient(u, c, kd.dofs)
    assert np.allclose(fld.gradients[0], [1, 2, 0])
    assert np.allclose(fld.gradients[1], [0, 2, 3])
    const = fem.tangential_gradient(np.ones(kd.dofs.n_dofs), c, kd.dofs)
    assert all(np.abs(G).max() < 1e-12 for G in const.gradients)


def test_degenerate_element_rejected_at_assembly():
    c = builtin_geometry("segment", 1)
    doc = c.to_document()
    doc["vertices"][1] = [1e-300, 0.0]
    with pytest.raises(MeshError):
        load_complex(doc)


def test_csv_outputs_are_deterministic():
    cfg = ScenarioConfig(geometry="y_graph")
    a = solve_level(cfg, 2, with_poincare=False)
    b = solve_level(cfg, 2, with_poincare=False)
    assert fem.solution_csv(a.complex, a.kd.dofs, a.u) == fem.solution_csv(b.complex, b.kd.dofs, b.u)
    text = fem.gradient_csv(a.complex, a.field)
    assert text.splitlines()[0] == "element_id,patch_id,c1,c2,g1,g2"
