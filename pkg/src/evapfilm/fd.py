"""Finite-difference weights on arbitrary node sets (Fornberg's algorithm)."""
from __future__ import annotations

import numpy as np


def fd_weights(x0: float, xs: np.ndarray, order: int) -> np.ndarray:
    """Weights w with f^(order)(x0) ~= sum(w * f(xs)) for nodes xs."""
    xs = np.asarray(xs, dtype=float)
    npts = xs.size
    if npts <= order:
        raise ValueError("need more than `order` points")
    c1, c4 = 1.0, xs[0] - x0
    C = np.zeros((npts, order + 1))
    C[0, 0] = 1.0
    for i in range(1, npts):
        mn = min(i, order)
        c2, c5, c4 = 1.0, c4, xs[i] - x0
        for j in range(i):
            c3 = xs[i] - xs[j]
            c2 *= c3
            if j == i - 1:
                for s in range(mn, 0, -1):
                    C[i, s] = c1 * (s * C[i - 1, s - 1] - c5 * C[i - 1, s]) / c2
                C[i, 0] = -c1 * c5 * C[i - 1, 0] / c2
            for s in range(mn, 0, -1):
                C[j, s] = (c4 * C[j, s] - s * C[j, s - 1]) / c3
            C[j, 0] = c4 * C[j, 0] / c3
        c1 = c2
    return C[:, order]


def derivative_at(x0: float, x: np.ndarray, f: np.ndarray, order: int,
                  stencil: int = 5) -> float:
    """f^(order)(x0) from the `stencil` nodes of (x, f) nearest to x0."""
    x = np.asarray(x, dtype=float)
    i = int(np.argmin(np.abs(x - x0)))
    half = stencil // 2
    lo = min(max(i - half, 0), x.size - stencil)
    sl = slice(lo, lo + stencil)
    w = fd_weights(x0, x[sl], order)
    return float(np.dot(w, np.asarray(f, dtype=float)[sl]))


def diff_matrix(x: np.ndarray, order: int, stencil: int) -> np.ndarray:
    """Dense differentiation matrix of the given order on nodes x."""
    x = np.asarray(x, dtype=float)
    n = x.size
    D = np.zeros((n, n))
    half = stencil // 2
    for i in range(n):
        lo = min(max(i - half, 0), n - stencil)
        sl = slice(lo, lo + stencil)
        D[i, sl] = fd_weights(x[i], x[sl], order)
    return D
