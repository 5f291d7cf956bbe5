"""Quadrature on reference k-simplices in barycentric coordinates."""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@lru_cache(maxsize=None)
def simplex_rule(k: int, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Barycentric points (q, k+1) and weights (q,) summing to 1.

    Integrates polynomials of total degree <= ``degree`` exactly against the
    normalized measure of a k-simplex. Degree <= 2 uses vertex/midpoint
    type rules; higher degrees use a collapsed Gauss-Jacobi product rule.
    """
    if degree <= 2:
        if k == 1:
            return (np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]]),
                    np.array([1 / 6, 1 / 6, 2 / 3]))
        if k == 2:
            return (np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]),
                    np.full(3, 1 / 3))
        if k == 3:
            a, b = 0.5854101966249685, 0.1381966011250105
            pts = np.full((4, 4), b)
            np.fill_diagonal(pts, a)
            return pts, np.full(4, 0.25)
    return _conical(k, degree)


def _conical(k: int, degree: int) -> tuple[np.ndarray, np.ndarray]:
    n = degree // 2 + 1
    # Stroud conical product: x_1 = t_1, x_2 = (1 - t_1) t_2, ...
    grids, wts = [], []
    for i in range(k):
        alpha = k - 1 - i
        t, w = roots_jacobi(n, alpha, 0.0)
        grids.append((t + 1) / 2)
        wts.append(w / 2 ** (alpha + 1))
    T = np.stack(np.meshgrid(*grids, indexing="ij"), -1).reshape(-1, k)
    W = np.prod(np.stack(np.meshgrid(*wts, indexing="ij"), -1).reshape(-1, k), axis=1)
    lam = np.empty((T.shape[0], k + 1))
    rest = np.ones(T.shape[0])
    for i in range(k):
        lam[:, i + 1] = rest * T[:, i]
        rest = rest * (1 - T[:, i])
    lam[:, 0] = rest
    W = W * math.factorial(k)
    return lam, W / W.sum()
