"""
Kernel of the tangential gradient on a multijunction complex.

A junction of dimension m transmits continuity between two patches of
dimensions k_i, k_j when m > k_i - 2 and m > k_j - 2 (positive capacity on
both sides); the per-junction ``coupling`` override can force either answer.
Coupled junctions share one degree of freedom per vertex, decoupled ones give
every incident patch its own copy, so the kernel of the discrete gradient is
exactly spanned by the indicators of the connected components of the
coupling graph.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import eigsh

from .mesh import JunctionSpec, MultijunctionComplex, refine


class EigenConvergenceError(RuntimeError):
    pass


def junction_couples(j: JunctionSpec, k_i: int, k_j: int) -> bool:
    if j.coupling == "coupled":
        return True
    if j.coupling == "decoupled":
        return False
    return j.dim > k_i - 2 and j.dim > k_j - 2


def coupled_pairs(c: MultijunctionComplex, j: JunctionSpec) -> list[tuple[int, int]]:
    ps = sorted(set(j.patches))
    return [(a, b) for i, a in enumerate(ps) for b in ps[i + 1:]
            if junction_couples(j, c.patches[a].dim, c.patches[b].dim)]


def coupling_graph(c: MultijunctionComplex) -> sp.csr_matrix:
    """Adjacency matrix over patches; an entry marks a coupling junction."""
    n = len(c.patches)
    rows, cols = [], []
    for j in c.junctions:
        for a, b in coupled_pairs(c, j):
            rows += [a, b]
            cols += [b, a]
    return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))


@dataclass
class DofMap:
    """Patch-local vertex -> global degree-of-freedom numbering."""
    n_dofs: int
    vertex_dof: list[dict]          # per patch: vertex id -> dof
    elements: list[np.ndarray]      # per patch: (m, k+1) dof ids
    dof_vertex: np.ndarray
    dof_patches: list[tuple]        # patches sharing each dof

    def patch_dofs(self, patch: int) -> np.ndarray:
        return np.unique(self.elements[patch])


def build_dofs(c: MultijunctionComplex) -> DofMap:
    keys = [(p, v) for p, patch in enumerate(c.patches) for v in patch.vertex_ids.tolist()]
    index = {key: i for i, key in enumerate(keys)}
    parent = list(range(len(keys)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for j in c.junctions:
        for a, b in coupled_pairs(c, j):
            for v in j.vertices:
                ra, rb = find(index[(a, v)]), find(index[(b, v)])
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)

    root_dof: dict[int, int] = {}
    vertex_dof: list[dict] = [dict() for _ in c.patches]
    dof_vertex, dof_patches = [], []
    for i, (p, v) in enumerate(keys):
        r = find(i)
        if r not in root_dof:
            root_dof[r] = len(root_dof)
            dof_vertex.append(v)
            dof_patches.append([])
        d = root_dof[r]
        vertex_dof[p][v] = d
        dof_patches[d].append(p)

    elements = []
    for p, patch in enumerate(c.patches):
        lut = vertex_dof[p]
        elements.append(np.vectorize(lut.__getitem__, otypes=[np.int64])(patch.simplices))
    return DofMap(len(root_dof), vertex_dof, elements, np.array(dof_vertex),
                  [tuple(x) for x in dof_patches])


@dataclass
class KernelDecomposition:
    components: list[tuple[int, ...]]
    indicators: np.ndarray           # (d, n_dofs)
    measures: np.ndarray             # mu(S_l) per component
    dofs: DofMap

    @property
    def d(self) -> int:
        return len(self.components)

    def component_of_patch(self, patch: int) -> int:
        for l, comp in enumerate(self.components):
            if patch in comp:
                return l
        raise KeyError(patch)

    def component_dofs(self, l: int) -> np.ndarray:
        return np.flatnonzero(self.indicators[l])


def kernel_decomposition(c: MultijunctionComplex, dofs: DofMap | None = None) -> KernelDecomposition:
    if dofs is None:
        dofs = build_dofs(c)
    n, labels = connected_components(coupling_graph(c), directed=False)
    # number components by their smallest patch id
    order = sorted(range(n), key=lambda l: int(np.flatnonzero(labels == l)[0]))
    components = [tuple(np.flatnonzero(labels == l).tolist()) for l in order]
    ind = np.zeros((n, dofs.n_dofs))
    measures = np.zeros(n)
    for l, comp in enumerate(components):
        for p in comp:
            ind[l, dofs.patch_dofs(p)] = 1.0
            measures[l] += c.patches[p].total_measure()
    return KernelDecomposition(components, ind, measures, dofs)


def project_kernel(u: np.ndarray, kd: KernelDecomposition, mass) -> np.ndarray:
    """Mass-orthogonal projection onto span of the component indicators."""
    u = np.asarray(u, dtype=float)
    if u.shape[0] != kd.dofs.n_dofs:
        raise ValueError(f"field has {u.shape[0]} entries, expected {kd.dofs.n_dofs}")
    Mu = mass @ u
    out = np.zeros_like(u)
    for chi, mu_l in zip(kd.indicators, kd.measures):
        if mu_l <= 0:
            raise ValueError("component of zero measure")
        out += chi * (chi @ Mu) / (chi @ (mass @ chi))
    return out


# ---------------------------------------------------------------------------
# Poincare constants

@dataclass
class PoincareEntry:
    component: int
    level: int
    dofs: int
    lambda1: float
    C: float


@dataclass
class PoincareReport:
    component: int
    history: list[PoincareEntry] = field(default_factory=list)

    @property
    def C(self) -> float:
        return self.history[-1].C

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["component_id", "level", "dofs", "lambda1", "C_l"])
        for e in self.history:
            w.writerow([e.component, e.level, e.dofs, f"{e.lambda1:.17g}", f"{e.C:.17g}"])
        return buf.getvalue()


def smallest_positive_eigenvalue(K, M, tol: float = 1e-8, maxiter: int = 10_000,
                                 dense_limit: int = 400) -> float:
    """Smallest eigenvalue of K x = lambda M x on the M-complement of the constants.

    ``K`` and ``M`` are restricted to one connected component, so the kernel of
    K is one-dimensional and spanned by the constant vector.
    """
    n = K.shape[0]
    if n < 2:
        raise ValueError("component has fewer than two degrees of freedom")
    if n <= dense_limit:
        Kd = K.toarray() if sp.issparse(K) else np.asarray(K)
        Md = M.toarray() if sp.issparse(M) else np.asarray(M)
        w = la.eigh(Kd, Md, eigvals_only=True, subset_by_index=[0, 1])
        return float(w[1])
    K = sp.csc_matrix(K)
    M = sp.csc_matrix(M)
    shift = -1e-3 * abs(K.diagonal()).max() / abs(M.diagonal()).max()
    try:
        w = eigsh(K, k=2, M=M, sigma=shift, which="LM", tol=tol * 1e-2,
                  maxiter=maxiter, return_eigenvectors=False)
    except Exception as exc:  # ArpackNoConvergence and factorization failures
        raise EigenConvergenceError(f"eigen-iteration did not converge: {exc}") from exc
    return float(np.sort(w)[1])


def component_poincare(K, M, kd: KernelDecomposition, l: int, **kw) -> tuple[float, float]:
    """(lambda1, C_l) for component ``l`` of an assembled system."""
    idx = kd.component_dofs(l)
    Kl = sp.csr_matrix(K)[idx][:, idx]
    Ml = sp.csr_matrix(M)[idx][:, idx]
    lam = smallest_positive_eigenvalue(Kl, Ml, **kw)
    return lam, 1.0 / lam


def poincare_constant(c: MultijunctionComplex, kd: KernelDecomposition | None,
                      component: int, levels: int, conductivity=None) -> PoincareReport:
    """Discrete Poincare constant of one component over ``levels`` nested meshes.

    The stiffness uses the relaxed ``conductivity`` (identity by default).
    """
    from .fem import assemble_mass, assemble_stiffness
    from .tensors import ConductivitySpec, relax_field

    if levels < 1:
        raise ValueError("levels must be >= 1")
    if conductivity is None:
        conductivity = ConductivitySpec.identity(c.ambient_dim)
    report = PoincareReport(component)
    cur = c
    for i in range(levels):
        if i > 0:
            cur = refine(cur)
        kdi = kernel_decomposition(cur) if (i > 0 or kd is None) else kd
        K = assemble_stiffness(cur, relax_field(cur, conductivity), kdi.dofs)
        M = assemble_mass(cur, kdi.dofs)
        lam, C = component_poincare(K, M, kdi, component)
        report.history.append(PoincareEntry(component, cur.level,
                                            len(kdi.component_dofs(component)), lam, C))
    return report
