"""
Tangential projectors and relaxed conductivity tensors.

Two relaxations of an ambient tensor A on a tangent space T are provided:

* projected:  P_T A P_T
* schur:      the quadratic form p -> inf_{xi normal} (A(p + xi), p + xi),
              i.e. the Schur complement A_TT - A_TN A_NN^+ A_NT lifted to R^N.

They coincide when A does not couple T with its normal complement. The
projected form is the canonical one used for assembly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .mesh import MultijunctionComplex, TangentFrame, frame_from_points

RELAXATION_MODES = ("projected", "schur")


class ConductivityError(ValueError):
    pass


def tangential_projector(frame: TangentFrame) -> np.ndarray:
    """Orthogonal projector of R^N onto span(frame.tangent)."""
    T = frame.tangent
    return T @ T.T


def _check_symmetric(A: np.ndarray, tol: float = 1e-12) -> None:
    scale = max(np.abs(A).max(), 1.0)
    if np.abs(A - A.T).max() > tol * scale:
        raise ConductivityError("conductivity matrix is not symmetric")


def relax_projected(A, frame: TangentFrame) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    _check_symmetric(A)
    P = tangential_projector(frame)
    out = P @ A @ P
    return 0.5 * (out + out.T)


def relax_schur(A, frame: TangentFrame, eps: float | None = None,
                rcond: float = 1e-10) -> np.ndarray:
    """Infimum relaxation over normal perturbations.

    ``eps`` regularizes the normal block (default ``1e-12 * ||A_NN||``);
    singular values of the regularized block below ``rcond`` times the largest
    are discarded by the pseudo-inverse.
    """
    A = np.asarray(A, dtype=float)
    T, Nm = frame.tangent, frame.normal
    Att = T.T @ A @ T
    if Nm.shape[1] == 0:
        S = Att
    else:
        Atn = T.T @ A @ Nm
        Ann = Nm.T @ A @ Nm
        if eps is None:
            eps = 1e-12 * np.linalg.norm(Ann, 2)
        Ainv = np.linalg.pinv(Ann + eps * np.eye(Ann.shape[0]), rcond=rcond, hermitian=True)
        S = Att - Atn @ Ainv @ Atn.T
    out = T @ S @ T.T
    return 0.5 * (out + out.T)


def relax_explicit(B, frame: TangentFrame, tol: float = 1e-12) -> np.ndarray:
    """B - sum_i (B e_i (x) B e_i) / (B e_i, e_i) over a B-orthogonal normal basis.

    The normal basis is B-orthogonalized by pivoted Gram-Schmidt; directions
    with (B e, e) < tol * ||B|| are in the kernel of B and contribute nothing.
    Intended as an independent check of :func:`relax_schur` for positive
    (semi)definite B.
    """
    B = np.asarray(B, dtype=float)
    scale = np.linalg.norm(B, 2)
    remaining = [frame.normal[:, i].copy() for i in range(frame.normal.shape[1])]
    out = B.copy()
    basis = []
    while remaining:
        energies = [e @ B @ e for e in remaining]
        i = int(np.argmax(energies))
        if energies[i] < tol * scale:
            break
        e = remaining.pop(i)
        basis.append(e)
        Be = B @ e
        out -= np.outer(Be, Be) / (Be @ e)
        # B-orthogonalize the rest against e
        remaining = [r - (r @ Be) / (Be @ e) * e for r in remaining]
    return 0.5 * (out + out.T)


# ---------------------------------------------------------------------------
# conductivity specs and per-element fields

@dataclass
class ConductivitySpec:
    """Ambient conductivity A on the complex.

    mode is one of ``"constant"`` (``matrix``), ``"per_patch"``
    (``matrices[patch_id]``) or ``"function"`` (``function(x) -> (N, N)``,
    evaluated at element centroids). ``lam`` is the declared tangential
    coercivity bound.
    """
    mode: str = "constant"
    matrix: np.ndarray | None = None
    matrices: dict | None = None
    function: Callable | None = None
    lam: float = 1.0

    @classmethod
    def identity(cls, N: int, lam: float = 1.0) -> "ConductivitySpec":
        return cls("constant", matrix=np.eye(N), lam=lam)

    @classmethod
    def from_document(cls, doc: dict | str) -> "ConductivitySpec":
        if isinstance(doc, str):
            doc = json.loads(doc)
        mode = doc.get("mode", "constant")
        lam = float(doc.get("lambda", 1.0))
        if mode == "constant":
            return cls(mode, matrix=np.asarray(doc["matrix"], dtype=float), lam=lam)
        if mode == "per_patch":
            mats = {int(k): np.asarray(v, dtype=float) for k, v in doc["matrices"].items()}
            return cls(mode, matrices=mats, lam=lam)
        if mode == "affine":
            # A(x) = A0 + sum_i x_i A_i
            A0 = np.asarray(doc["matrix"], dtype=float)
            Ai = np.asarray(doc["gradient"], dtype=float)
            return cls("function", function=lambda x: A0 + np.tensordot(x, Ai, axes=1), lam=lam)
        raise ConductivityError(f"unknown conductivity mode {mode!r}")

    def on_patch(self, c: MultijunctionComplex, patch: int) -> np.ndarray:
        """Ambient matrices on every element of a patch, shape (m, N, N)."""
        p = c.patches[patch]
        m, N = p.n_elements, c.ambient_dim
        if self.mode == "constant":
            A = np.broadcast_to(np.asarray(self.matrix, dtype=float), (m, N, N))
        elif self.mode == "per_patch":
            if patch not in self.matrices:
                raise ConductivityError(f"no conductivity given for patch {patch}")
            A = np.broadcast_to(np.asarray(self.matrices[patch], dtype=float), (m, N, N))
        elif self.mode == "function":
            centroids = c.vertices[p.simplices].mean(axis=1)
            A = np.array([self.function(x) for x in centroids], dtype=float)
        else:
            raise ConductivityError(f"unknown conductivity mode {self.mode!r}")
        if A.shape[1:] != (N, N):
            raise ConductivityError(f"conductivity must be {N}x{N}")
        return A


@dataclass
class RelaxedTensorField:
    tensors: list[np.ndarray]
    mode: str
    disagreement: list[np.ndarray] = field(default_factory=list)

    @property
    def disagrees(self) -> bool:
        """True if projected and schur relaxations differ (> 1e-10 relative) anywhere."""
        return any(np.any(d > 1e-10) for d in self.disagreement)


def _frames(c: MultijunctionComplex, patch: int) -> list[TangentFrame]:
    p = c.patches[patch]
    return [frame_from_points(c.vertices[s]) for s in p.simplices]


def validate_conductivity(A: np.ndarray, frame: TangentFrame, lam: float,
                          where: str = "") -> None:
    _check_symmetric(A)
    w = np.linalg.eigvalsh(A)
    if w[0] < -1e-10 * max(abs(w[-1]), 1.0):
        raise ConductivityError(f"conductivity is not nonnegative definite{where}")
    T = frame.tangent
    k = T.shape[1]
    probes = [T[:, i] for i in range(k)]
    probes += [T[:, i] + T[:, j] for i in range(k) for j in range(i + 1, k)]
    for xi in probes:
        if xi @ A @ xi < lam * (xi @ xi) * (1 - 1e-12):
            raise ConductivityError(
                f"tangential coercivity (A xi, xi) >= {lam} |xi|^2 fails{where}")


def relax_field(c: MultijunctionComplex, spec: ConductivitySpec,
                mode: str = "projected") -> RelaxedTensorField:
    """Relaxed tensor on every element of every patch.

    Both relaxations are computed; the per-element Frobenius distance between
    them (relative to ||A||) is kept in ``disagreement``.
    """
    if mode not in RELAXATION_MODES:
        raise ConductivityError(f"unknown relaxation mode {mode!r}")
    tensors, disagreement = [], []
    for i, p in enumerate(c.patches):
        A_all = spec.on_patch(c, i)
        frames = _frames(c, i)
        proj = np.empty_like(A_all)
        schur = np.empty_like(A_all)
        for e, (A, fr) in enumerate(zip(A_all, frames)):
            validate_conductivity(A, fr, spec.lam, where=f" on patch {i}, element {e}")
            proj[e] = relax_projected(A, fr)
            schur[e] = relax_schur(A, fr)
        scale = np.maximum(np.linalg.norm(A_all, axis=(1, 2)), 1e-300)
        disagreement.append(np.linalg.norm(proj - schur, axis=(1, 2)) / scale)
        tensors.append(proj if mode == "projected" else schur)
    return RelaxedTensorField(tensors, mode, disagreement)
