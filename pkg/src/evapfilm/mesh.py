"""Adaptive nonuniform grids by monitor-function equidistribution.

The monitor sqrt(1 + theta1*h^(-2r) + theta2*h_x^2) concentrates nodes where
the film thins; static regridding (equidistribute + interpolate between time
steps) is used rather than a moving-mesh PDE.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from .grid import Grid, FilmState, gradient_at_nodes, total_mass


@dataclass(frozen=True)
class MonitorConfig:
    theta1: float = 1.0
    theta2: float = 0.1
    r: float = 2.0
    remesh_trigger: float = 2.0
    n_cells: int = 400

    def __post_init__(self):
        if self.theta1 < 0.0 or self.theta2 < 0.0 or self.theta1 + self.theta2 == 0.0:
            raise ValueError("need nonnegative weights with at least one positive")
        if self.r <= 0.0:
            raise ValueError("thinning exponent r must be positive")
        if self.remesh_trigger <= 1.0:
            raise ValueError("remesh_trigger must exceed 1")


def compute_monitor(state: FilmState, grid: Grid, cfg: MonitorConfig) -> np.ndarray:
    """Per-node monitor values, smoothed by two passes of 3-point averaging."""
    state.check(grid)
    h = state.h
    mon2 = 1.0 + cfg.theta1 * h ** (-2.0 * cfg.r)
    if cfg.theta2 > 0.0:
        hx = gradient_at_nodes(h, grid.nodes)
        mon2 = mon2 + cfg.theta2 * hx ** 2
    mon = np.sqrt(mon2)
    for _ in range(2):
        sm = mon.copy()
        sm[1:-1] = (mon[:-2] + mon[1:-1] + mon[2:]) / 3.0
        sm[0] = (2.0 * mon[0] + mon[1]) / 3.0
        sm[-1] = (mon[-2] + 2.0 * mon[-1]) / 3.0
        mon = sm
    return mon


def _equidistribute_once(mon: np.ndarray, x: np.ndarray, n_cells: int) -> np.ndarray:
    # cumulative integral of the piecewise-linear monitor
    cell = 0.5 * (mon[:-1] + mon[1:]) * np.diff(x)
    cum = np.concatenate([[0.0], np.cumsum(cell)])
    targets = np.linspace(0.0, cum[-1], n_cells + 1)
    xi = np.interp(targets, cum, x)
    xi[0], xi[-1] = x[0], x[-1]
    return xi


def equidistribute(mon: np.ndarray, grid: Grid, cfg: MonitorConfig,
                   max_iters: int = 10) -> Grid:
    """New grid with equal per-cell integrals of the (fixed) monitor.

    The monitor is re-interpolated onto each iterate, so the loop converges to
    the de Boor equidistribution of the piecewise-linear monitor function.
    """
    if np.any(mon <= 0.0):
        raise ValueError("monitor must be positive")
    x_old = grid.nodes
    xi = x_old
    mi = mon
    for _ in range(max_iters):
        x_new = _equidistribute_once(mi, xi, cfg.n_cells)
        move = np.max(np.abs(x_new - xi)) if xi.size == x_new.size else np.inf
        mi = np.interp(x_new, x_old, mon)
        min_dx = np.diff(x_new).min()
        xi = x_new
        if move < 1e-3 * min_dx:
            break
    return Grid(xi, grid.L)


def interpolate_state(state: FilmState, old: Grid, new: Grid) -> FilmState:
    """Monotone cubic (PCHIP) interpolation onto the new nodes.

    PCHIP keeps each interval's values inside the bracketing data, so
    positivity is preserved and linear profiles are reproduced exactly.
    """
    state.check(old)
    interp = PchipInterpolator(old.nodes, state.h)
    h_new = interp(new.nodes)
    return FilmState(state.t, h_new, state.t_lo)


@dataclass
class RemeshEvent:
    t: float
    mass_before: float
    mass_after: float
    hmin_before: float
    hmin_after: float

    @property
    def mass_drift(self) -> float:
        return abs(self.mass_after - self.mass_before) / max(abs(self.mass_before), 1e-300)


def maybe_remesh(state: FilmState, grid: Grid, cfg: MonitorConfig
                 ) -> tuple[FilmState, Grid, RemeshEvent | None]:
    """Remesh when the cell width at the thickness minimum exceeds
    remesh_trigger times what a fresh equidistribution would place there."""
    mon = compute_monitor(state, grid, cfg)
    fresh = equidistribute(mon, grid, cfg)
    i_min = int(np.argmin(state.h))
    x_min = grid.nodes[i_min]
    dx_here = _local_width(grid.nodes, x_min)
    dx_fresh = _local_width(fresh.nodes, x_min)
    if dx_here <= cfg.remesh_trigger * dx_fresh:
        return state, grid, None
    new_state = interpolate_state(state, grid, fresh)
    ev = RemeshEvent(
        t=state.t,
        mass_before=total_mass(state, grid),
        mass_after=total_mass(new_state, fresh),
        hmin_before=state.h_min,
        hmin_after=new_state.h_min,
    )
    return new_state, fresh, ev


def _local_width(x: np.ndarray, x0: float) -> float:
    j = int(np.clip(np.searchsorted(x, x0) - 1, 0, x.size - 2))
    return float(x[j + 1] - x[j])
