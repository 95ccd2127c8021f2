"""Spatial grids and film states."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Strictly increasing nodes x_0 = 0 ... x_N = L."""

    nodes: np.ndarray
    L: float

    def __post_init__(self):
        x = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", x)
        if x.size < 9:
            raise ValueError("grid needs at least 9 nodes (N >= 8 cells)")
        if x[0] != 0.0 or x[-1] != self.L:
            raise ValueError("grid endpoints must be exactly 0 and L")
        if np.any(np.diff(x) <= 0.0):
            raise ValueError("grid nodes must be strictly increasing")

    @property
    def n_cells(self) -> int:
        return self.nodes.size - 1

    @property
    def spacing(self) -> np.ndarray:
        return np.diff(self.nodes)

    @staticmethod
    def uniform(L: float, n_cells: int) -> "Grid":
        x = np.linspace(0.0, L, n_cells + 1)
        x[0], x[-1] = 0.0, L
        return Grid(x, L)


@dataclass
class FilmState:
    """Film thickness samples on a grid at one time instant.

    ``t_lo`` carries the compensated low part of the simulation time so that
    time differences between deep near-rupture states remain resolvable.
    """

    t: float
    h: np.ndarray
    t_lo: float = 0.0
    dhdt: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float)

    def check(self, grid: Grid) -> None:
        if self.h.size != grid.nodes.size:
            raise ValueError("state size does not match grid")
        if np.any(self.h <= 0.0):
            raise ValueError("film thickness must be positive")

    @property
    def h_min(self) -> float:
        return float(self.h.min())

    def copy(self) -> "FilmState":
        return FilmState(self.t, self.h.copy(), self.t_lo,
                         None if self.dhdt is None else self.dhdt.copy())


def total_mass(state: FilmState, grid: Grid) -> float:
    return float(np.trapz(state.h, grid.nodes))


def gradient_at_nodes(h: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Second-order first derivative on a nonuniform grid."""
    return np.gradient(h, x, edge_order=2)


def argmin_parabolic(x: np.ndarray, h: np.ndarray) -> tuple[float, float]:
    """Sub-grid minimum location and value via a parabola through the argmin
    node and its neighbours.  Falls back to the node itself at the ends."""
    i = int(np.argmin(h))
    if i == 0 or i == h.size - 1:
        return float(x[i]), float(h[i])
    x0, x1, x2 = x[i - 1], x[i], x[i + 1]
    y0, y1, y2 = h[i - 1], h[i], h[i + 1]
    # Newton divided differences of the interpolating parabola
    d1 = (y1 - y0) / (x1 - x0)
    d2 = ((y2 - y1) / (x2 - x1) - d1) / (x2 - x0)
    if d2 <= 0.0:
        return float(x1), float(y1)
    xv = 0.5 * (x0 + x1 - d1 / d2)
    if not (x0 <= xv <= x2):
        return float(x1), float(y1)
    yv = y0 + d1 * (xv - x0) + d2 * (xv - x0) * (xv - x1)
    return float(xv), float(min(yv, y1))
