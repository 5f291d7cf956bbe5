import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize

from multijunction.mesh import TangentFrame, builtin_geometry
from multijunction.tensors import (ConductivityError, ConductivitySpec, relax_explicit,
                                   relax_field, relax_projected, relax_schur,
                                   tangential_projector)

E = np.eye(3)
X_AXIS_2D = TangentFrame(np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]]))


def brute_force_relaxation(A, frame, xi):
    """min over normal eta of (A(xi + eta), xi + eta), by numerical optimisation."""
    Nm = frame.normal
    f = lambda z: (xi + Nm @ z) @ A @ (xi + Nm @ z)
    return minimize(f, np.zeros(Nm.shape[1]), method="BFGS", options={"gtol": 1e-12}).fun


def test_projector_examples():
    assert np.allclose(tangential_projector(X_AXIS_2D), np.diag([1, 0]))
    fr = TangentFrame(E[:, :2], E[:, 2:])
    assert np.allclose(tangential_projector(fr), np.diag([1, 1, 0]))


def test_schur_two_by_two_example():
    A = np.array([[2.0, 1.0], [1.0, 2.0]])
    S = relax_schur(A, X_AXIS_2D)
    assert abs(S[0, 0] - brute_force_relaxation(A, X_AXIS_2D, np.array([1.0, 0.0]))) < 1e-8
    assert abs(S[0, 0] - 1.5) < 1e-12
    assert abs(relax_projected(A, X_AXIS_2D)[0, 0] - 2.0) < 1e-15


def test_full_dimensional_frame_is_identity_map():
    A = np.array([[3.0, 1.0], [1.0, 2.0]])
    fr = TangentFrame(np.eye(2), np.zeros((2, 0)))
    assert np.allclose(relax_projected(A, fr), A)
    assert np.allclose(relax_schur(A, fr), A)


def test_asymmetric_matrix_rejected():
    with pytest.raises(ConductivityError):
        relax_projected(np.array([[1.0, 2.0], [0.0, 1.0]]), X_AXIS_2D)


def test_coercivity_failure_rejected():
    c = builtin_geometry("two_disks", 1)
    spec = ConductivitySpec("constant", matrix=np.diag([1.0, 0.0, 1.0]))
    with pytest.raises(ConductivityError):
        relax_field(c, spec)


def test_tensor_field_is_tangential_on_piston():
    c = builtin_geometry("piston", 2)
    t = relax_field(c, ConductivitySpec.identity(3))
    for i, T in enumerate(t.tensors):
        assert T.shape == (c.patches[i].n_elements, 3, 3)
    assert not t.disagrees


def test_affine_conductivity_document():
    doc = {"mode": "affine", "matrix": np.eye(3).tolist(),
           "gradient": np.zeros((3, 3, 3)).tolist()}
    spec = ConductivitySpec.from_document(doc)
    c = builtin_geometry("two_disks", 1)
    assert np.allclose(spec.on_patch(c, 0), np.eye(3))


frames = st.integers(2, 4).flatmap(lambda N: st.tuples(
    st.just(N), st.integers(1, N - 1), st.integers(0, 2 ** 32 - 1)))


def _setup(N, k, seed):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((N, N)))
    G = rng.standard_normal((N, N))
    return rng, TangentFrame(Q[:, :k], Q[:, k:]), G @ G.T + 0.05 * np.eye(N)


@settings(max_examples=80, deadline=None)
@given(frames)
def test_relaxations_annihilate_normals_and_order(args):
    rng, fr, A = _setup(*args)
    proj, schur = relax_projected(A, fr), relax_schur(A, fr)
    for R in (proj, schur):
        assert np.abs(R @ fr.normal).max() < 1e-10
    xi = fr.tangent @ rng.standard_normal(fr.dim)
    assert xi @ schur @ xi <= xi @ proj @ xi + 1e-10


@settings(max_examples=40, deadline=None)
@given(frames)
def test_schur_matches_brute_force_and_explicit_formula(args):
    rng, fr, A = _setup(*args)
    xi = fr.tangent @ rng.standard_normal(fr.dim)
    schur = relax_schur(A, fr)
    assert abs(xi @ schur @ xi - brute_force_relaxation(A, fr, xi)) < 1e-6 * (1 + abs(xi @ A @ xi))
    P = tangential_projector(fr)
    assert np.allclose(P @ relax_explicit(A, fr) @ P, schur, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(frames)
def test_modes_agree_without_coupling_block(args):
    _, fr, A = _setup(*args)
    T, Nm = fr.tangent, fr.normal
    Att, Ann = T.T @ A @ T, Nm.T @ A @ Nm
    B = T @ Att @ T.T + Nm @ Ann @ Nm.T
    assert np.allclose(relax_projected(B, fr), relax_schur(B, fr), atol=1e-10)
