"""
Normal trace of the flux F = A_mu grad_mu u on the boundary of the design region.

For a test function phi in C^2 the trace functional is

    <[F, nu], phi> = <div F, phi> + <F, grad phi>,

and for a minimizer div F = -f mu. The discrete value

    sum_elements int (A_mu grad_mu u_h) . grad phi dmu - int f phi dmu

therefore vanishes in the limit; it is the quantity evaluated here.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np

from .fem import LOAD_DEGREE, DiscreteField, SourceTerm, quadrature_points
from .mesh import MeshError, MultijunctionComplex, boundary_facets
from .quadrature import simplex_rule
from .tensors import RelaxedTensorField

MAX_TEST_DEGREE = 3


class PolynomialTestFunction:
    """Polynomial on R^N given as ``{exponent tuple: coefficient}``."""

    def __init__(self, terms: dict, ambient_dim: int):
        self.terms = {tuple(int(e) for e in k): float(v) for k, v in terms.items()}
        self.N = ambient_dim
        for k in self.terms:
            if len(k) != ambient_dim:
                raise ValueError("exponent tuple length must equal the ambient dimension")
        if self.degree > MAX_TEST_DEGREE:
            raise ValueError(f"test functions of degree {self.degree} > {MAX_TEST_DEGREE} unsupported")

    @classmethod
    def monomial(cls, exps) -> "PolynomialTestFunction":
        return cls({tuple(exps): 1.0}, len(exps))

    @classmethod
    def constant(cls, N: int, value: float = 1.0) -> "PolynomialTestFunction":
        return cls({(0,) * N: value}, N)

    @property
    def degree(self) -> int:
        return max((sum(k) for k in self.terms), default=0)

    def __add__(self, other: "PolynomialTestFunction") -> "PolynomialTestFunction":
        t = dict(self.terms)
        for k, v in other.terms.items():
            t[k] = t.get(k, 0.0) + v
        return PolynomialTestFunction(t, self.N)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for k, v in self.terms.items():
            out = out + v * np.prod(x ** np.asarray(k), axis=-1)
        return out

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for k, v in self.terms.items():
            k = np.asarray(k)
            for i in range(self.N):
                if k[i] == 0:
                    continue
                kk = k.copy()
                kk[i] -= 1
                out[..., i] += v * k[i] * np.prod(x ** kk, axis=-1)
        return out

    def __repr__(self):
        return f"PolynomialTestFunction({self.terms})"


def monomial_battery(N: int, degree: int = MAX_TEST_DEGREE) -> list[PolynomialTestFunction]:
    """All monomials of total degree <= ``degree`` in N variables."""
    out = []
    for d in range(degree + 1):
        for combo in combinations_with_replacement(range(N), d):
            exps = [0] * N
            for i in combo:
                exps[i] += 1
            out.append(PolynomialTestFunction.monomial(exps))
    return out


def normal_trace(c: MultijunctionComplex, u: DiscreteField, t: RelaxedTensorField,
                 q: SourceTerm, phi: PolynomialTestFunction, degree: int = LOAD_DEGREE) -> float:
    if phi.degree > MAX_TEST_DEGREE:
        raise ValueError("unsupported test function degree")
    total = 0.0
    for i, p in enumerate(c.patches):
        lam, w = simplex_rule(p.dim, degree)
        x = quadrature_points(c, i, lam)
        flux = np.einsum("mNM,mM->mN", t.tensors[i], u.gradients[i])
        dphi = phi.gradient(x)
        total += (np.einsum("mN,mqN->mq", flux, dphi) @ w) @ p.measure
        total -= ((q.values(c, i, degree) * phi(x)) @ w) @ p.measure
    return float(total)


def divergence_tv_bound(q: SourceTerm, c: MultijunctionComplex, degree: int = 8) -> float:
    """int |f| dmu, the total variation of div F for a minimizer."""
    total = 0.0
    for i, p in enumerate(c.patches):
        _, w = simplex_rule(p.dim, degree)
        total += (np.abs(q.values(c, i, degree)) @ w) @ p.measure
    return float(total)


def flux_l1(c: MultijunctionComplex, u: DiscreteField, t: RelaxedTensorField) -> float:
    total = 0.0
    for i, p in enumerate(c.patches):
        flux = np.einsum("mNM,mM->mN", t.tensors[i], u.gradients[i])
        total += np.linalg.norm(flux, axis=1) @ p.measure
    return float(total)


def sup_norm_c1(c: MultijunctionComplex, phi: PolynomialTestFunction) -> float:
    """max(|phi|, |grad phi|) over the mesh vertices and quadrature points."""
    pts = [c.vertices]
    for i, p in enumerate(c.patches):
        lam, _ = simplex_rule(p.dim, LOAD_DEGREE)
        pts.append(quadrature_points(c, i, lam).reshape(-1, c.ambient_dim))
    X = np.vstack(pts)
    return float(max(np.abs(phi(X)).max(), np.linalg.norm(phi.gradient(X), axis=1).max()))


def _gauss_segment(n: int = 3):
    t, w = np.polynomial.legendre.leggauss(n)
    return (t + 1) / 2, w / 2


def normal_vs_projected_trace(c: MultijunctionComplex, u: DiscreteField, t: RelaxedTensorField,
                              phi: PolynomialTestFunction) -> tuple[float, float]:
    """Pointwise rim fluxes int (F.nu) phi and int (F.n) phi over S cap dOmega.

    nu is the outer normal of the design ball, n the normalized projection of
    nu onto the element's tangent space (the in-patch conormal). Because F is
    tangential, F.nu = alpha F.n with alpha = |P_T nu|; the two values differ
    by that factor.
    """
    if c.domain is None:
        raise MeshError("complex has no design region; the rim cannot be resolved")
    flux_nu = flux_n = 0.0
    found = False
    for i, p in enumerate(c.patches):
        bf = boundary_facets(p)
        on_rim = np.all(np.isin(bf, list(c.boundary_vertices)), axis=1)
        bf = bf[on_rim]
        if bf.size == 0:
            continue
        found = True
        F = np.einsum("mNM,mM->mN", t.tensors[i], u.gradients[i])
        # owning element of each rim facet
        owner = {}
        for e, s in enumerate(p.simplices.tolist()):
            for drop in range(p.dim + 1):
                owner[tuple(sorted(s[:drop] + s[drop + 1:]))] = e
        for facet in bf.tolist():
            e = owner[tuple(facet)]
            X = c.vertices[facet]
            if p.dim == 1:
                pts, wts = X, np.ones(1)
            elif p.dim == 2:
                s, ws = _gauss_segment()
                pts = X[0] + s[:, None] * (X[1] - X[0])
                wts = ws * np.linalg.norm(X[1] - X[0])
            else:
                raise MeshError("rim fluxes are implemented for patches of dimension <= 2")
            nu = c.domain.normal(pts)
            T = _tangent_basis(c.vertices[p.simplices[e]])
            pn = nu @ T @ T.T
            alpha = np.linalg.norm(pn, axis=1)
            if np.any(alpha < 1e-8):
                raise MeshError(f"patch {i} meets the domain boundary tangentially")
            n = pn / alpha[:, None]
            vals = phi(pts)
            flux_nu += float(np.sum(wts * (nu @ F[e]) * vals))
            flux_n += float(np.sum(wts * (n @ F[e]) * vals))
    if not found:
        raise MeshError("no patch reaches the domain boundary")
    return flux_nu, flux_n


def rim_alpha(c: MultijunctionComplex, patch: int) -> np.ndarray:
    """|P_T nu| at every rim vertex of a patch."""
    p = c.patches[patch]
    bf = boundary_facets(p)
    verts = sorted(set(bf.ravel().tolist()) & set(c.boundary_vertices))
    out = []
    for v in verts:
        e = int(np.flatnonzero(np.any(p.simplices == v, axis=1))[0])
        T = _tangent_basis(c.vertices[p.simplices[e]])
        nu = c.domain.normal(c.vertices[v])
        out.append(np.linalg.norm(T.T @ nu))
    return np.array(out)


def _tangent_basis(points: np.ndarray) -> np.ndarray:
    E = (points[1:] - points[0]).T
    Q, _ = np.linalg.qr(E)
    return Q


@dataclass
class TraceRow:
    level: int
    phi_id: int
    value: float
    tv_bound: float


@dataclass
class TraceReport:
    rows: list[TraceRow] = field(default_factory=list)

    def max_abs(self, level: int) -> float:
        return max(abs(r.value) for r in self.rows if r.level == level)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "phi_id", "value", "tv_bound"])
        for r in self.rows:
            w.writerow([r.level, r.phi_id, f"{r.value:.17g}", f"{r.tv_bound:.17g}"])
        return buf.getvalue()


def trace_battery(c: MultijunctionComplex, u: DiscreteField, t: RelaxedTensorField,
                  q: SourceTerm, level: int | None = None) -> TraceReport:
    tv = divergence_tv_bound(q, c)
    lvl = c.level if level is None else level
    rows = [TraceRow(lvl, k, normal_trace(c, u, t, q, phi), tv)
            for k, phi in enumerate(monomial_battery(c.ambient_dim))]
    return TraceReport(rows)
