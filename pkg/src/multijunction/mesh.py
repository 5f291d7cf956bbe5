"""
Multijunction complexes: unions of affine simplicial meshes of manifolds of
different dimensions embedded in R^N, glued at explicitly declared junctions.

A complex is immutable. Refinement returns a new complex whose vertex array
starts with the parent's vertices (ids are preserved), so nodal spaces are
nested.

Examples
--------

.. code-block:: python

    from multijunction.mesh import builtin_geometry, refine
    c = builtin_geometry("piston", resolution=3)
    c.patches[0].measure.sum()   # approximately pi
    finer = refine(c)
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np


COUPLING_MODES = ("auto", "coupled", "decoupled")

BUILTIN_GEOMETRIES = (
    "y_graph",
    "two_disks",
    "piston",
    "tilted_disks",
    "antenna",
    "two_disks_point",
    "segment",
)


class MeshError(ValueError):
    """Raised when a mesh document or complex violates the complex invariants."""


@dataclass(frozen=True, eq=False)
class Patch:
    """One manifold S_j, triangulated by k-simplices.

    ``measure`` holds the k-dimensional Hausdorff measure (k-volume) of each
    simplex.
    """
    dim: int
    simplices: np.ndarray
    measure: np.ndarray

    @property
    def n_elements(self) -> int:
        return self.simplices.shape[0]

    @property
    def vertex_ids(self) -> np.ndarray:
        return np.unique(self.simplices)

    def total_measure(self) -> float:
        return float(self.measure.sum())


@dataclass(frozen=True)
class JunctionSpec:
    vertices: tuple[int, ...]
    patches: tuple[int, ...]
    dim: int
    coupling: str = "auto"


@dataclass(frozen=True)
class Ball:
    """Design region Omega = B(center, radius); used for boundary normals."""
    center: tuple[float, ...]
    radius: float

    def normal(self, x: np.ndarray) -> np.ndarray:
        d = np.asarray(x, dtype=float) - np.asarray(self.center)
        return d / np.linalg.norm(d, axis=-1, keepdims=True)


@dataclass(frozen=True)
class Rim:
    """Exact circular rim of a flat 2-dimensional patch.

    Refinement projects new boundary vertices of ``patch`` radially onto the
    circle of ``radius`` about ``center`` (the circle lies in the patch plane).
    """
    patch: int
    center: tuple[float, ...]
    radius: float


@dataclass(frozen=True)
class TangentFrame:
    """Orthonormal tangent basis (N x k) and normal basis (N x (N-k))."""
    tangent: np.ndarray
    normal: np.ndarray

    @property
    def dim(self) -> int:
        return self.tangent.shape[1]


@dataclass(frozen=True, eq=False)
class MultijunctionComplex:
    ambient_dim: int
    vertices: np.ndarray
    patches: tuple[Patch, ...]
    junctions: tuple[JunctionSpec, ...]
    boundary_vertices: frozenset
    domain: Ball | None = None
    rims: tuple[Rim, ...] = ()
    name: str = ""
    level: int = 1

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    def patch_vertex_sets(self) -> list[set[int]]:
        return [set(p.vertex_ids.tolist()) for p in self.patches]

    def mesh_size(self) -> float:
        """Largest edge length over all simplices."""
        h = 0.0
        for p in self.patches:
            for a, b in combinations(range(p.dim + 1), 2):
                d = self.vertices[p.simplices[:, a]] - self.vertices[p.simplices[:, b]]
                h = max(h, float(np.linalg.norm(d, axis=1).max()))
        return h

    def to_document(self) -> dict:
        doc = {
            "ambient_dim": self.ambient_dim,
            "vertices": self.vertices.tolist(),
            "patches": [{"dim": p.dim, "simplices": p.simplices.tolist()}
                        for p in self.patches],
            "junctions": [{"vertices": list(j.vertices), "patches": list(j.patches),
                           "dim": j.dim, "coupling": j.coupling}
                          for j in self.junctions],
            "boundary_vertices": sorted(self.boundary_vertices),
        }
        if self.domain is not None:
            doc["domain"] = {"center": list(self.domain.center),
                             "radius": self.domain.radius}
        if self.rims:
            doc["rims"] = [{"patch": r.patch, "center": list(r.center),
                            "radius": r.radius} for r in self.rims]
        return doc


# ---------------------------------------------------------------------------
# simplex geometry

def simplex_volumes(points: np.ndarray) -> np.ndarray:
    """k-volumes of simplices given as an array (m, k+1, N) of vertex coordinates."""
    k = points.shape[1] - 1
    E = points[:, 1:, :] - points[:, :1, :]
    gram = np.einsum("mid,mjd->mij", E, E)
    det = np.linalg.det(gram)
    return np.sqrt(np.clip(det, 0.0, None)) / math.factorial(k)


def frame_from_points(points: np.ndarray) -> TangentFrame:
    """Tangent/normal frame of a single simplex with vertex rows ``points``."""
    points = np.asarray(points, dtype=float)
    N = points.shape[1]
    k = points.shape[0] - 1
    E = (points[1:] - points[0]).T
    if k == 0:
        return TangentFrame(np.zeros((N, 0)), np.eye(N))
    Q, R = np.linalg.qr(E, mode="complete")
    scale = max(np.abs(E).max(), 1e-300)
    if np.min(np.abs(np.diag(R[:k, :k]))) <= 1e-12 * scale:
        raise MeshError("degenerate simplex: edge vectors are linearly dependent")
    return TangentFrame(Q[:, :k], Q[:, k:])


def tangent_frame(c: MultijunctionComplex, patch: int, simplex: int) -> TangentFrame:
    """Orthonormal basis of T_mu on one element of ``patch`` and its normal complement."""
    p = c.patches[patch]
    return frame_from_points(c.vertices[p.simplices[simplex]])


def patch_projectors(c: MultijunctionComplex, patch: int) -> np.ndarray:
    """Tangential projectors of all elements of a patch, shape (m, N, N)."""
    p = c.patches[patch]
    X = c.vertices[p.simplices]
    E = np.swapaxes(X[:, 1:, :] - X[:, :1, :], 1, 2)
    Q, _ = np.linalg.qr(E)
    return np.einsum("mik,mjk->mij", Q, Q)


def boundary_facets(p: Patch) -> np.ndarray:
    """Facets ((k-1)-faces) that belong to exactly one simplex of the patch."""
    k = p.dim
    faces = np.concatenate(
        [np.delete(p.simplices, i, axis=1) for i in range(k + 1)], axis=0)
    faces = np.sort(faces, axis=1)
    uniq, counts = np.unique(faces, axis=0, return_counts=True)
    return uniq[counts == 1]


def _edges(simplices: np.ndarray) -> set[tuple[int, int]]:
    out = set()
    for a, b in combinations(range(simplices.shape[1]), 2):
        for u, v in zip(simplices[:, a].tolist(), simplices[:, b].tolist()):
            out.add((u, v) if u < v else (v, u))
    return out


# ---------------------------------------------------------------------------
# construction and validation

def _make_patch(vertices: np.ndarray, dim: int, simplices) -> Patch:
    s = np.asarray(simplices, dtype=np.int64)
    if s.ndim != 2 or s.shape[1] != dim + 1:
        raise MeshError(f"a patch of dimension {dim} needs simplices with {dim + 1} vertex ids")
    if s.size and (s.min() < 0 or s.max() >= vertices.shape[0]):
        raise MeshError("simplex references a nonexistent vertex")
    if s.shape[0] == 0:
        raise MeshError("patch has no simplices")
    if np.any(np.sort(s, axis=1)[:, 1:] == np.sort(s, axis=1)[:, :-1]):
        raise MeshError("simplex with repeated vertex ids")
    X = vertices[s]
    vol = simplex_volumes(X)
    edge_scale = np.max(np.linalg.norm(X - X[:, :1, :], axis=2), axis=1)
    bad = vol <= 1e-12 * np.maximum(edge_scale, 1e-300) ** dim
    if np.any(bad):
        raise MeshError(f"degenerate simplex {int(np.argmax(bad))} in patch of dimension {dim}")
    return Patch(dim=dim, simplices=s, measure=vol)


def validate(c: MultijunctionComplex) -> None:
    """Check the complex invariants; raise :class:`MeshError` on the first violation."""
    N = c.ambient_dim
    if c.vertices.ndim != 2 or c.vertices.shape[1] != N:
        raise MeshError(f"vertices must have {N} coordinates")
    if not c.patches:
        raise MeshError("complex has no patches")
    sets = c.patch_vertex_sets()
    for i, p in enumerate(c.patches):
        if not 1 <= p.dim < N:
            raise MeshError(f"patch {i}: dimension {p.dim} must satisfy 1 <= k < N = {N}")
        if p.total_measure() <= 0:
            raise MeshError(f"patch {i}: zero measure")

    covered: dict[int, set[int]] = {}
    for ji, j in enumerate(c.junctions):
        if j.coupling not in COUPLING_MODES:
            raise MeshError(f"junction {ji}: unknown coupling {j.coupling!r}")
        if len(set(j.patches)) < 2:
            raise MeshError(f"junction {ji}: needs at least two incident patches")
        if any(not 0 <= q < len(c.patches) for q in j.patches):
            raise MeshError(f"junction {ji}: unknown patch id")
        kmin = min(c.patches[q].dim for q in j.patches)
        if not 0 <= j.dim < kmin:
            raise MeshError(f"junction {ji}: dimension {j.dim} must be below incident patch dims")
        for v in j.vertices:
            for q in j.patches:
                if v not in sets[q]:
                    raise MeshError(f"junction {ji}: vertex {v} not in patch {q}")
            covered.setdefault(v, set()).update(j.patches)

    owners: dict[int, set[int]] = {}
    for i, s in enumerate(sets):
        for v in s:
            owners.setdefault(v, set()).add(i)
    for v, ps in owners.items():
        if len(ps) > 1 and not ps <= covered.get(v, set()):
            raise MeshError(f"vertex {v} is shared by patches {sorted(ps)} without a junction")

    for v in c.boundary_vertices:
        if v not in owners:
            raise MeshError(f"boundary vertex {v} belongs to no patch")
    for i, p in enumerate(c.patches):
        bverts = set(np.unique(boundary_facets(p)).tolist())
        for v in bverts:
            if v not in c.boundary_vertices and v not in covered:
                raise MeshError(
                    f"patch {i}: boundary vertex {v} is neither on the domain boundary nor in a junction")
        # relative interior must avoid the domain boundary (only checked through the flags)
        for v in sets[i] & c.boundary_vertices:
            if v not in bverts:
                raise MeshError(f"patch {i}: interior vertex {v} flagged as domain boundary")


def make_complex(ambient_dim: int, vertices, patches: Sequence[tuple[int, Iterable]],
                 junctions: Sequence[JunctionSpec] = (), boundary_vertices: Iterable[int] = (),
                 domain: Ball | None = None, rims: Sequence[Rim] = (), name: str = "",
                 level: int = 1) -> MultijunctionComplex:
    """Build and validate a complex from raw arrays.

    ``patches`` is a sequence of ``(dim, simplices)`` pairs.
    """
    V = np.asarray(vertices, dtype=float)
    if V.ndim != 2 or V.shape[1] != ambient_dim:
        raise MeshError(f"vertices must be an array of shape (n, {ambient_dim})")
    for dim, _ in patches:
        if not 1 <= int(dim) < ambient_dim:
            raise MeshError(f"patch dimension {dim} must satisfy 1 <= k < N = {ambient_dim}")
    plist = tuple(_make_patch(V, int(dim), s) for dim, s in patches)
    c = MultijunctionComplex(
        ambient_dim=int(ambient_dim), vertices=V, patches=plist,
        junctions=tuple(junctions), boundary_vertices=frozenset(int(v) for v in boundary_vertices),
        domain=domain, rims=tuple(rims), name=name, level=level)
    validate(c)
    return c


def load_complex(document: dict | str) -> MultijunctionComplex:
    """Parse a JSON mesh document (a dict, a JSON string, or a path to a file)."""
    if isinstance(document, str):
        text = document
        if not text.lstrip().startswith("{"):
            with open(text) as fh:
                text = fh.read()
        try:
            document = json.loads(text)
        except json.JSONDecodeError as exc:
            raise MeshError(f"malformed mesh document: {exc}") from exc
    try:
        N = int(document["ambient_dim"])
        vertices = document["vertices"]
        patches = [(int(p["dim"]), p["simplices"]) for p in document["patches"]]
        junctions = [JunctionSpec(vertices=tuple(int(v) for v in j["vertices"]),
                                  patches=tuple(int(q) for q in j["patches"]),
                                  dim=int(j["dim"]),
                                  coupling=j.get("coupling", "auto"))
                     for j in document.get("junctions", [])]
        boundary = document.get("boundary_vertices", [])
        domain = None
        if "domain" in document:
            d = document["domain"]
            domain = Ball(tuple(float(x) for x in d["center"]), float(d["radius"]))
        rims = [Rim(int(r["patch"]), tuple(float(x) for x in r["center"]), float(r["radius"]))
                for r in document.get("rims", [])]
    except (KeyError, TypeError) as exc:
        raise MeshError(f"malformed mesh document: {exc!r}") from exc
    return make_complex(N, vertices, patches, junctions, boundary, domain, rims)


def with_coupling(c: MultijunctionComplex, junction: int, coupling: str) -> MultijunctionComplex:
    """Copy of ``c`` with the coupling override of one junction replaced."""
    if coupling not in COUPLING_MODES:
        raise MeshError(f"unknown coupling {coupling!r}")
    js = list(c.junctions)
    js[junction] = replace(js[junction], coupling=coupling)
    return replace(c, junctions=tuple(js))


# ---------------------------------------------------------------------------
# uniform refinement

def _split_simplex(v: list[int], mid) -> list[list[int]]:
    k = len(v) - 1
    if k == 1:
        a, b = v
        m = mid(a, b)
        return [[a, m], [m, b]]
    if k == 2:
        a, b, c = v
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        return [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
    if k == 3:
        a, b, c, d = v
        ab, ac, ad = mid(a, b), mid(a, c), mid(a, d)
        bc, bd, cd = mid(b, c), mid(b, d), mid(c, d)
        corners = [[a, ab, ac, ad], [ab, b, bc, bd], [ac, bc, c, cd], [ad, bd, cd, d]]
        # inner octahedron split along the ac-bd diagonal
        inner = [[ab, ac, ad, bd], [ab, ac, bc, bd], [ac, ad, bd, cd], [ac, bc, bd, cd]]
        return corners + inner
    raise MeshError(f"refinement of {k}-simplices is not supported")


def refine(c: MultijunctionComplex) -> MultijunctionComplex:
    """Nested uniform refinement by edge midpoints (2^k children per k-simplex).

    Midpoints of boundary edges on a declared :class:`Rim` are projected onto
    the exact circle. Junction membership and boundary flags are propagated.
    """
    V = [row for row in c.vertices]
    mids: dict[tuple[int, int], int] = {}

    def mid(a: int, b: int) -> int:
        key = (a, b) if a < b else (b, a)
        if key not in mids:
            mids[key] = len(V)
            V.append(0.5 * (c.vertices[a] + c.vertices[b]))
        return mids[key]

    new_patches = []
    for p in c.patches:
        children = []
        for s in p.simplices.tolist():
            children.extend(_split_simplex(s, mid))
        new_patches.append((p.dim, children))

    # edges lying in some boundary facet, per patch
    boundary_edges: list[set] = []
    for p in c.patches:
        bf = boundary_facets(p)
        boundary_edges.append(_edges(bf) if bf.shape[1] >= 2 else set())
    patch_edges = [_edges(p.simplices) for p in c.patches]
    rim_of = {r.patch: r for r in c.rims}

    boundary = set(c.boundary_vertices)
    V = np.array(V)
    for (a, b), m in mids.items():
        if a in c.boundary_vertices and b in c.boundary_vertices:
            for i, be in enumerate(boundary_edges):
                if (a, b) in be:
                    boundary.add(m)
                    if i in rim_of:
                        r = rim_of[i]
                        w = V[m] - np.asarray(r.center)
                        V[m] = np.asarray(r.center) + r.radius * w / np.linalg.norm(w)
                    break

    junctions = []
    for j in c.junctions:
        verts = list(j.vertices)
        if j.dim >= 1:
            jset = set(j.vertices)
            for (a, b), m in mids.items():
                if a in jset and b in jset and all((a, b) in patch_edges[q] for q in j.patches):
                    verts.append(m)
        junctions.append(replace(j, vertices=tuple(verts)))

    return make_complex(c.ambient_dim, V, new_patches, junctions, boundary,
                        c.domain, c.rims, c.name, c.level + 1)


def refine_to(c: MultijunctionComplex, level: int) -> MultijunctionComplex:
    while c.level < level:
        c = refine(c)
    return c


# ---------------------------------------------------------------------------
# built-in geometries

def _disk(center, u, v, radius, sectors=8):
    """Fan triangulation of a flat disk; returns (points, triangles) with the center first."""
    center = np.asarray(center, dtype=float)
    th = 2 * np.pi * np.arange(sectors) / sectors
    rim = center + radius * (np.cos(th)[:, None] * np.asarray(u, float)
                             + np.sin(th)[:, None] * np.asarray(v, float))
    rim = np.round(rim, 15)
    pts = np.vstack([center, rim])
    tris = [[0, 1 + i, 1 + (i + 1) % sectors] for i in range(sectors)]
    return pts, tris


class _Builder:
    def __init__(self, N):
        self.N = N
        self.points: list[np.ndarray] = []

    def vid(self, x) -> int:
        x = np.asarray(x, dtype=float)
        for i, y in enumerate(self.points):
            if np.allclose(x, y, atol=1e-12):
                return i
        self.points.append(x)
        return len(self.points) - 1

    def disk(self, center, u, v, radius):
        pts, tris = _disk(center, u, v, radius)
        ids = [self.vid(x) for x in pts]
        return ids, [[ids[i] for i in t] for t in tris]


def builtin_geometry(name: str, resolution: int = 1, **params) -> MultijunctionComplex:
    """One of the built-in multijunction geometries.

    ``resolution`` r >= 1 is the refinement level: the coarse mesh refined
    ``r - 1`` times. Disks start from an 8-sector fan. ``params`` may carry
    ``coupling`` (override applied to every junction).
    """
    if name not in BUILTIN_GEOMETRIES:
        raise MeshError(f"unknown geometry {name!r}; choose from {BUILTIN_GEOMETRIES}")
    if int(resolution) < 1:
        raise MeshError("resolution must be >= 1")
    coupling = params.pop("coupling", "auto")
    if params:
        raise MeshError(f"unexpected geometry parameters {sorted(params)}")
    e1, e2, e3 = np.eye(3)

    if name == "segment":
        c = make_complex(2, [[0.0, 0.0], [1.0, 0.0]], [(1, [[0, 1]])], (), [0, 1],
                         domain=Ball((0.5, 0.0), 0.5), name=name)

    elif name == "y_graph":
        angles = np.deg2rad([90.0, 210.0, 330.0])
        tips = np.column_stack([np.cos(angles), np.sin(angles)])
        V = np.vstack([[0.0, 0.0], np.round(tips, 15)])
        c = make_complex(
            2, V, [(1, [[0, 1]]), (1, [[0, 2]]), (1, [[0, 3]])],
            [JunctionSpec((0,), (0, 1, 2), 0, coupling)], [1, 2, 3],
            domain=Ball((0.0, 0.0), 1.0), name=name)

    elif name == "two_disks":
        b = _Builder(3)
        ids1, t1 = b.disk([0, 0, 0], e1, e2, 1.0)
        ids2, t2 = b.disk([0, 0, 0], e2, e3, 1.0)
        shared = sorted(set(ids1) & set(ids2))
        rim = sorted((set(ids1) | set(ids2)) - {0})
        c = make_complex(
            3, b.points, [(2, t1), (2, t2)],
            [JunctionSpec(tuple(shared), (0, 1), 1, coupling)], rim,
            domain=Ball((0.0, 0.0, 0.0), 1.0),
            rims=[Rim(0, (0.0, 0.0, 0.0), 1.0), Rim(1, (0.0, 0.0, 0.0), 1.0)], name=name)

    elif name == "piston":
        b = _Builder(3)
        ids1, t1 = b.disk([-1, 0, 0], e2, e3, 1.0)
        ids2, t2 = b.disk([1, 0, 0], e2, e3, 1.0)
        seg = [[ids1[0], ids2[0]]]
        c = make_complex(
            3, b.points, [(2, t1), (2, t2), (1, seg)],
            [JunctionSpec((ids1[0],), (0, 2), 0, coupling),
             JunctionSpec((ids2[0],), (1, 2), 0, coupling)],
            ids1[1:] + ids2[1:], domain=Ball((0.0, 0.0, 0.0), math.sqrt(2.0)),
            rims=[Rim(0, (-1.0, 0.0, 0.0), 1.0), Rim(1, (1.0, 0.0, 0.0), 1.0)], name=name)

    elif name in ("tilted_disks", "two_disks_point"):
        b = _Builder(3)
        ids1, t1 = b.disk([0, 0, -1], e1, e2, 1.0)
        ids2, t2 = b.disk([1, 0, 0], e2, e3, 1.0)
        touch = sorted(set(ids1) & set(ids2))
        rim = sorted((set(ids1) | set(ids2)) - {ids1[0], ids2[0]})
        c = make_complex(
            3, b.points, [(2, t1), (2, t2)],
            [JunctionSpec(tuple(touch), (0, 1), 0, coupling)], rim,
            domain=Ball((0.0, 0.0, 0.0), math.sqrt(2.0)),
            rims=[Rim(0, (0.0, 0.0, -1.0), 1.0), Rim(1, (1.0, 0.0, 0.0), 1.0)], name=name)

    else:  # antenna
        b = _Builder(3)
        ids1, t1 = b.disk([0, 0, 0], e1, e2, 1.0)
        tip = b.vid([0, 0, 1])
        c = make_complex(
            3, b.points, [(2, t1), (1, [[ids1[0], tip]])],
            [JunctionSpec((ids1[0],), (0, 1), 0, coupling)], ids1[1:] + [tip],
            domain=Ball((0.0, 0.0, 0.0), 1.0),
            rims=[Rim(0, (0.0, 0.0, 0.0), 1.0)], name=name)

    return refine_to(c, int(resolution))
