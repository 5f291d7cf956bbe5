"""
Closed-form reference solutions for the built-in geometries.

* Y-graph with A = Id and f = a_i on branch i (sum a_i = 0):
  u = -a_i (s^2/2 - s), s the arc length from the center.
* Radially forced unit-normal disk with Neumann rim (int_0^R r q dr = 0):
  u(r) = b - int_0^r rho^-1 int_0^rho s q(s) ds drho, b fixed by zero mean.
  On the piston the second disk carries -q and the segment carries 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial


class OracleError(ValueError):
    pass


def y_graph_solution(a, branch: int, s):
    a = np.asarray(a, dtype=float)
    if a.shape != (3,):
        raise OracleError("the Y-graph needs three branch loads")
    if abs(a.sum()) > 1e-12 * max(1.0, np.abs(a).max()):
        raise OracleError(f"incompatible loads: a1 + a2 + a3 = {a.sum()} != 0")
    s = np.asarray(s, dtype=float)
    return -a[branch] * (s ** 2 / 2 - s)


@dataclass(frozen=True)
class RadialProfile:
    """Zero-mean Neumann solution of u'' + u'/r + q = 0 on the disk of radius R."""
    q: Polynomial
    R: float = 1.0

    def __post_init__(self):
        flux = (Polynomial([0, 1]) * self.q).integ()(self.R)
        scale = max(1.0, float(np.abs(self.q.coef).max()))
        if abs(flux) > 1e-12 * scale:
            raise OracleError(f"incompatible radial source: int_0^R r q dr = {flux}")

    @property
    def _w(self) -> Polynomial:
        # w(r) = int_0^r rho^-1 int_0^rho s q(s) ds drho; int_0^rho s q = rho^2 * (...)
        inner = (Polynomial([0, 1]) * self.q).integ()
        inner_over_rho = Polynomial(inner.coef[1:]) if inner.coef.size > 1 else Polynomial([0])
        return inner_over_rho.integ()

    @property
    def b(self) -> float:
        w = self._w
        return float(2.0 / self.R ** 2 * (Polynomial([0, 1]) * w).integ()(self.R))

    def __call__(self, r):
        return self.b - self._w(np.asarray(r, dtype=float))

    def derivative(self, r):
        return -self._w.deriv()(np.asarray(r, dtype=float))


def radial_profile(q_coeffs, R: float = 1.0) -> RadialProfile:
    return RadialProfile(Polynomial(np.asarray(q_coeffs, dtype=float)), float(R))


def piston_profile(q_coeffs, R: float, side: int, r):
    """Value on S1 (side 1), S2 (side 2, antisymmetric) or S3 (side 3, zero)."""
    prof = radial_profile(q_coeffs, R)
    r = np.asarray(r, dtype=float)
    if side == 1:
        return prof(r)
    if side == 2:
        return -prof(r)
    if side == 3:
        return np.zeros_like(r)
    raise OracleError(f"unknown piston side {side}")


_TILTED = {
    1: np.diag([0.5, 1.0, 0.0]),
    2: np.diag([0.0, 1.0, 0.5]),
}


def tilted_disks_tensor(patch: int) -> np.ndarray:
    """Relaxed tensor of A = e2(x)e2 + 1/2 (e1+e3)(x)(e1+e3) on S1 = {x3=-1}, S2 = {x1=1}."""
    if patch not in _TILTED:
        raise OracleError(f"unknown patch {patch}; expected 1 or 2")
    return _TILTED[patch].copy()


def tilted_conductivity() -> np.ndarray:
    e1, e2, e3 = np.eye(3)
    return np.outer(e2, e2) + 0.5 * np.outer(e1 + e3, e1 + e3)
