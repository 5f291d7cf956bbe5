"""
P1 finite elements for div(A_mu grad_mu u) + f mu = 0 on a multijunction complex.

Each patch carries piecewise affine functions on its own k-simplices; degrees
of freedom are shared across junctions only where the junction couples (see
:mod:`multijunction.kernel`). The pure Neumann system is singular with kernel
spanned by component indicators; :func:`solve` runs conjugate gradients on
the mass-orthogonal complement of that kernel.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .kernel import DofMap, KernelDecomposition, build_dofs, project_kernel
from .mesh import MeshError, MultijunctionComplex
from .quadrature import simplex_rule
from .tensors import RelaxedTensorField

LOAD_DEGREE = 4


class IncompatibleSourceError(ValueError):
    """The source is not orthogonal to the kernel; the Neumann problem has no solution."""

    def __init__(self, report: "CompatibilityReport"):
        self.report = report
        bad = [i for i, ok in enumerate(report.component_ok) if not ok]
        super().__init__(f"source violates compatibility on components {bad}: "
                         f"defects {[report.defects[i] for i in bad]}")


class SolverConvergenceError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# sources

@dataclass
class Constant:
    value: float


@dataclass
class Radial:
    """f(x) = sum_j coeffs[j] * |x - center|^j.

    With ``zero_mean`` the discrete patch mean of the profile is subtracted, so
    a profile whose continuum mean vanishes is compatible on the polygonal
    mesh as well.
    """
    coeffs: tuple
    center: tuple
    zero_mean: bool = False


@dataclass
class ElementValues:
    values: np.ndarray


@dataclass
class SourceTerm:
    """Density f of Q = f mu, given per patch; patches not listed carry f = 0."""
    densities: dict = field(default_factory=dict)

    @classmethod
    def piecewise_constant(cls, values) -> "SourceTerm":
        return cls({i: Constant(float(a)) for i, a in enumerate(values)})

    @classmethod
    def from_document(cls, doc: dict) -> "SourceTerm":
        out = {}
        for key, d in doc.get("patches", {}).items():
            kind = d.get("kind", "constant")
            if kind == "constant":
                out[int(key)] = Constant(float(d["value"]))
            elif kind == "radial":
                out[int(key)] = Radial(tuple(float(x) for x in d["coeffs"]),
                                       tuple(float(x) for x in d["center"]),
                                       bool(d.get("zero_mean", False)))
            elif kind == "element_values":
                out[int(key)] = ElementValues(np.asarray(d["values"], dtype=float))
            else:
                raise ValueError(f"unknown source kind {kind!r}")
        return cls(out)

    def scaled(self, alpha: float) -> "SourceTerm":
        out = {}
        for p, d in self.densities.items():
            if isinstance(d, Constant):
                out[p] = Constant(alpha * d.value)
            elif isinstance(d, Radial):
                out[p] = Radial(tuple(alpha * x for x in d.coeffs), d.center, d.zero_mean)
            else:
                out[p] = ElementValues(alpha * np.asarray(d.values))
        return SourceTerm(out)

    def values(self, c: MultijunctionComplex, patch: int, degree: int = LOAD_DEGREE):
        """Density at the quadrature points of every element: array (m, q)."""
        p = c.patches[patch]
        lam, _ = simplex_rule(p.dim, degree)
        m, nq = p.n_elements, lam.shape[0]
        d = self.densities.get(patch)
        if d is None:
            return np.zeros((m, nq))
        if isinstance(d, Constant):
            return np.full((m, nq), d.value)
        if isinstance(d, ElementValues):
            v = np.asarray(d.values, dtype=float)
            if v.shape != (m,):
                raise ValueError(f"patch {patch}: expected {m} element values")
            return np.repeat(v[:, None], nq, axis=1)
        x = quadrature_points(c, patch, lam)
        r = np.linalg.norm(x - np.asarray(d.center), axis=-1)
        f = np.polynomial.polynomial.polyval(r, np.asarray(d.coeffs))
        if d.zero_mean:
            _, w = simplex_rule(p.dim, degree)
            f = f - (f @ w) @ p.measure / p.total_measure()
        return f


def quadrature_points(c: MultijunctionComplex, patch: int, lam: np.ndarray) -> np.ndarray:
    """Physical coordinates (m, q, N) of barycentric points ``lam`` on every element."""
    X = c.vertices[c.patches[patch].simplices]
    return np.einsum("qi,miN->mqN", lam, X)


# ---------------------------------------------------------------------------
# element geometry

def element_gradients(c: MultijunctionComplex, patch: int) -> np.ndarray:
    """Ambient gradients of the barycentric hat functions, shape (m, N, k+1).

    The gradients lie in the element's tangent plane.
    """
    X = c.vertices[c.patches[patch].simplices]
    E = np.swapaxes(X[:, 1:, :] - X[:, :1, :], 1, 2)       # (m, N, k)
    gram = np.einsum("mNi,mNj->mij", E, E)
    G = E @ np.linalg.inv(gram)                            # (m, N, k)
    g0 = -G.sum(axis=2, keepdims=True)
    return np.concatenate([g0, G], axis=2)


def _check_elements(c: MultijunctionComplex, patch: int) -> None:
    meas = c.patches[patch].measure
    if np.any(meas < 1e-14 * meas.mean()):
        raise MeshError(f"patch {patch}: degenerate element at assembly")


def assemble_stiffness(c: MultijunctionComplex, t: RelaxedTensorField,
                       dofs: DofMap | None = None) -> sp.csr_matrix:
    if dofs is None:
        dofs = build_dofs(c)
    rows, cols, vals = [], [], []
    for i, p in enumerate(c.patches):
        if i >= len(t.tensors) or t.tensors[i].shape[0] != p.n_elements:
            raise ValueError(f"missing relaxed tensor on patch {i}")
        _check_elements(c, i)
        G = element_gradients(c, i)
        local = np.einsum("mNa,mNM,mMb->mab", G, t.tensors[i], G) * p.measure[:, None, None]
        el = dofs.elements[i]
        rows.append(np.repeat(el, p.dim + 1, axis=1).ravel())
        cols.append(np.tile(el, (1, p.dim + 1)).ravel())
        vals.append(local.ravel())
    n = dofs.n_dofs
    K = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    return (0.5 * (K + K.T)).tocsr()


def assemble_mass(c: MultijunctionComplex, dofs: DofMap | None = None) -> sp.csr_matrix:
    if dofs is None:
        dofs = build_dofs(c)
    rows, cols, vals = [], [], []
    for i, p in enumerate(c.patches):
        k = p.dim
        ref = (np.ones((k + 1, k + 1)) + np.eye(k + 1)) / ((k + 1) * (k + 2))
        local = p.measure[:, None, None] * ref
        el = dofs.elements[i]
        rows.append(np.repeat(el, k + 1, axis=1).ravel())
        cols.append(np.tile(el, (1, k + 1)).ravel())
        vals.append(local.ravel())
    n = dofs.n_dofs
    return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n)).tocsr()


def assemble_load(c: MultijunctionComplex, q: SourceTerm, dofs: DofMap | None = None,
                  degree: int = LOAD_DEGREE) -> np.ndarray:
    """b_i = int f phi_i dmu by simplex quadrature of the given degree."""
    if dofs is None:
        dofs = build_dofs(c)
    b = np.zeros(dofs.n_dofs)
    for i, p in enumerate(c.patches):
        lam, w = simplex_rule(p.dim, degree)
        f = q.values(c, i, degree)
        local = np.einsum("mq,q,qa->ma", f, w, lam) * p.measure[:, None]
        np.add.at(b, dofs.elements[i], local)
    return b


def patch_integrals(c: MultijunctionComplex, q: SourceTerm, degree: int = LOAD_DEGREE) -> np.ndarray:
    """int_{S_j} f dmu for every patch."""
    out = np.zeros(len(c.patches))
    for i, p in enumerate(c.patches):
        _, w = simplex_rule(p.dim, degree)
        out[i] = (q.values(c, i, degree) @ w) @ p.measure
    return out


# ---------------------------------------------------------------------------
# compatibility and solve

@dataclass
class CompatibilityReport:
    defects: list[float]
    thresholds: list[float]
    component_ok: list[bool]

    @property
    def ok(self) -> bool:
        return all(self.component_ok)


def check_compatibility(b: np.ndarray, kd: KernelDecomposition, tol: float = 1e-8) -> CompatibilityReport:
    """Test |<b, chi_l>| <= tol * ||b|| * mu(S_l)^(1/2) for every component."""
    if b.shape[0] != kd.dofs.n_dofs:
        raise ValueError("load vector does not match the degrees of freedom")
    nb = float(np.linalg.norm(b))
    defects = [float(chi @ b) for chi in kd.indicators]
    thresholds = [tol * nb * float(np.sqrt(mu)) for mu in kd.measures]
    ok = [abs(d) <= t for d, t in zip(defects, thresholds)]
    return CompatibilityReport(defects, thresholds, ok)


@dataclass
class SolveReport:
    energy: float
    residual: float
    iterations: int
    kernel_defect: float
    compatibility_defects: list[float]
    converged: bool = True
    trace: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def energy(u: np.ndarray, K, b: np.ndarray) -> float:
    return float(0.5 * u @ (K @ u) - b @ u)


def deflate(x: np.ndarray, kd: KernelDecomposition, M) -> np.ndarray:
    return x - project_kernel(x, kd, M)


def solve(K, b: np.ndarray, kd: KernelDecomposition, M, tol: float = 1e-10,
          x0: np.ndarray | None = None, maxiter: int | None = None,
          compat_tol: float = 1e-8) -> tuple[np.ndarray, SolveReport]:
    """Minimize 1/2 u.Ku - b.u over {Pu = 0} by deflated Jacobi-preconditioned CG.

    Raises :class:`IncompatibleSourceError` if ``b`` fails the compatibility
    gate, :class:`SolverConvergenceError` after ``maxiter`` iterations
    (default 50 * n).
    """
    compat = check_compatibility(b, kd, compat_tol)
    if not compat.ok:
        raise IncompatibleSourceError(compat)
    n = b.shape[0]
    maxiter = 50 * n if maxiter is None else maxiter
    # strip round-off components along the kernel so the system is consistent
    bc = b.copy()
    for chi in kd.indicators:
        bc -= chi * (chi @ bc) / (chi @ chi)
    nb = np.linalg.norm(bc)

    x = np.zeros(n) if x0 is None else deflate(np.asarray(x0, dtype=float), kd, M)
    if nb == 0.0:
        x = np.zeros(n)
        return x, SolveReport(0.0, 0.0, 0, 0.0, compat.defects)

    dinv = 1.0 / np.where(K.diagonal() > 0, K.diagonal(), 1.0)
    r = bc - K @ x
    z = dinv * r
    p = z.copy()
    rz = r @ z
    it = 0
    converged = np.linalg.norm(r) <= tol * nb
    while not converged and it < maxiter:
        Ap = K @ p
        alpha = rz / (p @ Ap)
        x = deflate(x + alpha * p, kd, M)
        r -= alpha * Ap
        it += 1
        if np.linalg.norm(r) <= tol * nb:
            r = bc - K @ x
            converged = np.linalg.norm(r) <= tol * nb
            if converged:
                break
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    res = float(np.linalg.norm(bc - K @ x) / nb)
    if not converged:
        raise SolverConvergenceError(
            f"CG did not reach relative residual {tol} in {maxiter} iterations (got {res:.3e})")
    Px = project_kernel(x, kd, M)
    kernel_defect = float(np.sqrt(max(Px @ (M @ Px), 0.0)))
    return x, SolveReport(energy(x, K, b), res, it, kernel_defect, compat.defects)


# ---------------------------------------------------------------------------
# post-processing

@dataclass
class DiscreteField:
    u: np.ndarray
    gradients: list[np.ndarray]
    dofs: DofMap


def tangential_gradient(u: np.ndarray, c: MultijunctionComplex,
                        dofs: DofMap | None = None) -> DiscreteField:
    if dofs is None:
        dofs = build_dofs(c)
    grads = []
    for i in range(len(c.patches)):
        G = element_gradients(c, i)
        grads.append(np.einsum("mNa,ma->mN", G, u[dofs.elements[i]]))
    return DiscreteField(u, grads, dofs)


def evaluate(field_u: np.ndarray, dofs: DofMap, patch: int, lam: np.ndarray) -> np.ndarray:
    """Values of the P1 field at barycentric points ``lam`` on every element of ``patch``."""
    return field_u[dofs.elements[patch]] @ lam.T


def l2_error(c: MultijunctionComplex, dofs: DofMap, u: np.ndarray,
             exact: Callable[[int, np.ndarray], np.ndarray], patches=None,
             degree: int = 6) -> float:
    """L2(mu) distance between the P1 field and ``exact(patch, points)``."""
    total = 0.0
    for i, p in enumerate(c.patches):
        if patches is not None and i not in patches:
            continue
        lam, w = simplex_rule(p.dim, degree)
        uh = evaluate(u, dofs, i, lam)
        ue = exact(i, quadrature_points(c, i, lam))
        total += ((uh - ue) ** 2 @ w) @ p.measure
    return float(np.sqrt(total))


def solution_csv(c: MultijunctionComplex, dofs: DofMap, u: np.ndarray) -> str:
    """Rows dof_id, patch_id, x1..xN, u (one row per patch a dof belongs to)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["dof_id", "patch_id"] + [f"x{i + 1}" for i in range(c.ambient_dim)] + ["u"])
    for d in range(dofs.n_dofs):
        x = c.vertices[dofs.dof_vertex[d]]
        for p in dofs.dof_patches[d]:
            w.writerow([d, p] + [f"{v:.17g}" for v in x] + [f"{u[d]:.17g}"])
    return buf.getvalue()


def gradient_csv(c: MultijunctionComplex, fld: DiscreteField) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    N = c.ambient_dim
    w.writerow(["element_id", "patch_id"] + [f"c{i + 1}" for i in range(N)]
               + [f"g{i + 1}" for i in range(N)])
    eid = 0
    for i, p in enumerate(c.patches):
        cent = c.vertices[p.simplices].mean(axis=1)
        for e in range(p.n_elements):
            w.writerow([eid, i] + [f"{v:.17g}" for v in cent[e]]
                       + [f"{v:.17g}" for v in fld.gradients[i][e]])
            eid += 1
    return buf.getvalue()
