"""Fully implicit Keller-box integrator for all model variants.

The PDE is rewritten as a first-order system on the nodes — (h, s=h_x, p,
q=p_x) for fourth-order variants, (h, s=h_x) for the reduced second-order
ones — and discretized cell-centered (midpoint) in space.  Time stepping is
backward Euler by default; a two-level centered (trapezoidal) variant is
available through ``SolverConfig.time_centered`` for convergence studies.

The Newton Jacobian is never formed analytically: it is assembled by colored
finite differences exploiting the fixed band structure of the stencil and
solved directly as a banded system.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.linalg import LinAlgError, solve_banded

from . import model as M
from .compensated import CompensatedClock, neumaier_sum_pairwise, refine_banded_solution
from .grid import Grid, FilmState, argmin_parabolic, total_mass
from .mesh import MonitorConfig, maybe_remesh


class Precision(enum.Enum):
    DOUBLE = "double"
    EXTENDED = "extended"


class SolverBreakdown(RuntimeError):
    """Non-positive thickness or non-finite values during a residual/Jacobian
    evaluation; the caller should reduce dt."""


class StepRejected(RuntimeError):
    """Newton failed to converge (or broke down) for this dt."""


class DtUnderflow(RuntimeError):
    """dt controller hit dt_min; carries a diagnostic dump."""

    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump


@dataclass(frozen=True)
class SolverConfig:
    dt_init: float = 1e-6
    dt_min: float = 1e-30
    dt_max: float = 1e-2
    newton_tol: float = 1e-8
    newton_max_iters: int = 12
    h_stop: float = 1e-4
    precision: Precision = Precision.DOUBLE
    time_centered: bool = False
    # dt controller: grow after easy steps, halve on rejection, and near
    # rupture cap dt <= singularity_cap * h_min^(1/alpha).
    dt_grow: float = 1.2
    dt_shrink: float = 0.5
    easy_iters: int = 3
    singularity_cap: float = 0.1
    rupture_alpha: float | None = None
    t_end: float = np.inf
    flat_tol: float = 0.0  # 0 disables the flat-state stop
    max_steps: int = 200000
    snapshot_interval: int = 10
    deep_snapshot_h: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.dt_min <= self.dt_init <= self.dt_max):
            raise ValueError("need 0 < dt_min <= dt_init <= dt_max")
        if self.newton_tol <= 0.0 or self.h_stop <= 0.0:
            raise ValueError("newton_tol and h_stop must be positive")

    @property
    def theta(self) -> float:
        return 0.5 if self.time_centered else 1.0


# --------------------------------------------------------------------------
# extended state: the full Keller-box unknown vector at a time level
# --------------------------------------------------------------------------

@dataclass
class BoxState:
    """Full nodal unknown vector (interleaved per node) plus its time."""

    t: float
    u: np.ndarray
    nvar: int
    t_lo: float = 0.0

    @property
    def h(self) -> np.ndarray:
        return self.u[0::self.nvar]

    @property
    def s(self) -> np.ndarray:
        return self.u[1::self.nvar]

    def film_state(self, dhdt=None) -> FilmState:
        return FilmState(self.t, self.h.copy(), self.t_lo, dhdt)


def nvar_for(params: M.ModelParams) -> int:
    return 4 if params.is_fourth_order else 2


def box_state_from_film(state: FilmState, grid: Grid, params: M.ModelParams) -> BoxState:
    """Initialize the auxiliary unknowns (s, and p, q for fourth-order
    variants) from h by second-order finite differences."""
    state.check(grid)
    x, h = grid.nodes, state.h
    nv = nvar_for(params)
    u = np.zeros(h.size * nv)
    u[0::nv] = h
    s = np.gradient(h, x, edge_order=2)
    s[0] = s[-1] = 0.0
    u[1::nv] = s
    if nv == 4:
        h_xx = np.gradient(s, x, edge_order=2)
        p = M.pressure_relation(h, h_xx, params)
        q = np.gradient(p, x, edge_order=2)
        q[0] = q[-1] = 0.0
        u[2::nv] = p
        u[3::nv] = q
    return BoxState(state.t, u, nv, state.t_lo)


# --------------------------------------------------------------------------
# residual assembly
# --------------------------------------------------------------------------

def _spatial_terms_4(u, grid, params, source_fn, t):
    """Cell-centered flux divergence + evaporation source for the h-equation,
    and the algebraic defect terms of the auxiliary equations."""
    nv = 4
    h, s, p, q = u[0::nv], u[1::nv], u[2::nv], u[3::nv]
    if np.any(h <= 0.0) or not np.all(np.isfinite(u)):
        raise SolverBreakdown("non-positive or non-finite thickness")
    x = grid.nodes
    dx = np.diff(x)
    h_m = 0.5 * (h[:-1] + h[1:])
    p_m = 0.5 * (p[:-1] + p[1:])
    flux = M.mobility(h, params) * q
    div = np.diff(flux) / dx
    src = M.evaporation_source(h_m, p_m, params)
    if source_fn is not None:
        src = src + source_fn(0.5 * (x[:-1] + x[1:]), t)
    return div + src, h_m


def _spatial_terms_2(u, grid, params, source_fn, t):
    nv = 2
    h, s = u[0::nv], u[1::nv]
    if np.any(h <= 0.0) or not np.all(np.isfinite(u)):
        raise SolverBreakdown("non-positive or non-finite thickness")
    x = grid.nodes
    dx = np.diff(x)
    h_m = 0.5 * (h[:-1] + h[1:])
    flux = M.second_order_mobility(h, params) * s
    div = np.diff(flux) / dx
    src = M.second_order_source(h_m, params)
    if source_fn is not None:
        src = src + source_fn(0.5 * (x[:-1] + x[1:]), t)
    return div + src, h_m


def assemble_residual(u_new, old: BoxState, dt, grid: Grid, params: M.ModelParams,
                      theta=1.0, source_fn=None, extended=False):
    """Residual of the Keller-box scheme; zero iff u_new solves the step.

    Returns (residual, scale, floor): ``scale`` collects the magnitudes of the
    additive terms per row (the relative residual norm divides by it), and
    ``floor`` is the per-row roundoff representability limit -- a one-ulp
    change of h moves the time-difference rows by eps*|h|/dt, so no iteration
    can be expected to land below that.
    """
    nv = old.nvar
    x = grid.nodes
    dx = np.diff(x)
    n_nodes = x.size
    R = np.zeros(n_nodes * nv)
    S = np.zeros(n_nodes * nv)
    F = np.zeros(n_nodes * nv)

    h, s = u_new[0::nv], u_new[1::nv]
    if np.any(h <= 0.0) or not np.all(np.isfinite(u_new)):
        raise SolverBreakdown("non-positive or non-finite thickness")

    h_m = 0.5 * (h[:-1] + h[1:])
    s_m = 0.5 * (s[:-1] + s[1:])
    dh = np.diff(h) / dx
    h_old_m = 0.5 * (old.h[:-1] + old.h[1:])
    t_new = old.t + dt

    # s-definition rows (cell-centered): avg(s) - dh/dx = 0.  The scale floor
    # |h|/dx keeps the relative norm meaningful on states where s ~ 0.
    R1 = s_m - dh
    S1 = np.abs(s_m) + np.abs(dh) + np.abs(h_m) / dx + 1e-30

    if nv == 4:
        p, q = u_new[2::nv], u_new[3::nv]
        p_m = 0.5 * (p[:-1] + p[1:])
        q_m = 0.5 * (q[:-1] + q[1:])
        ds = np.diff(s) / dx
        dp = np.diff(p) / dx
        p_rel = M.pressure_relation(h_m, ds, params)
        R2 = p_m - p_rel
        S2 = np.abs(p_m) + np.abs(p_rel) + 1e-30
        R3 = q_m - dp
        S3 = np.abs(q_m) + np.abs(dp) + (np.abs(p_m) + 1e-30) / dx
        rhs_new, _ = _spatial_terms_4(u_new, grid, params, source_fn, t_new)
    else:
        rhs_new, _ = _spatial_terms_2(u_new, grid, params, source_fn, t_new)

    if theta != 1.0:
        if nv == 4:
            rhs_old, _ = _spatial_terms_4(old.u, grid, params, source_fn, old.t)
        else:
            rhs_old, _ = _spatial_terms_2(old.u, grid, params, source_fn, old.t)
        rhs = theta * rhs_new + (1.0 - theta) * rhs_old
    else:
        rhs = rhs_new

    dtterm = (h_m - h_old_m) / dt
    if extended:
        Rh = neumaier_sum_pairwise([dtterm, -rhs])
    else:
        Rh = dtterm - rhs
    Sh = np.abs(dtterm) + np.abs(rhs) + 1e-30
    Fh = 4.0 * np.finfo(float).eps * (np.abs(h_m) + np.abs(h_old_m)) / dt

    # row layout: [left BCs] [nv rows per cell] [right BCs]
    nbc = nv // 2
    for k in range(nbc):
        # left: s = 0 (and q = 0); right the same
        var = 1 if k == 0 else 3
        R[k] = u_new[var]
        S[k] = np.abs(u_new[var]) + 1.0
        R[-nbc + k] = u_new[-(nv - var)]
        S[-nbc + k] = np.abs(u_new[-(nv - var)]) + 1.0

    base = nbc
    if nv == 4:
        R[base + 0::4][: dx.size] = R1
        R[base + 1::4][: dx.size] = R2
        R[base + 2::4][: dx.size] = R3
        R[base + 3::4][: dx.size] = Rh
        S[base + 0::4][: dx.size] = S1
        S[base + 1::4][: dx.size] = S2
        S[base + 2::4][: dx.size] = S3
        S[base + 3::4][: dx.size] = Sh
        F[base + 3::4][: dx.size] = Fh
    else:
        R[base + 0::2][: dx.size] = R1
        R[base + 1::2][: dx.size] = Rh
        S[base + 0::2][: dx.size] = S1
        S[base + 1::2][: dx.size] = Sh
        F[base + 1::2][: dx.size] = Fh
    if not np.all(np.isfinite(R)):
        raise SolverBreakdown("non-finite residual")
    return R, S, F


def residual_norm(R, S, F=None):
    r = np.abs(R) if F is None else np.maximum(np.abs(R) - F, 0.0)
    return float(np.max(r / S))


def scheme_mass_rate(u, old_u, dt, grid: Grid, params: M.ModelParams, theta=1.0):
    """The scheme's own quadrature of the evaporation term: with the no-flux
    boundary rows, (M_new - M_old)/dt equals exactly this sum."""
    nv = nvar_for(params)
    dx = np.diff(grid.nodes)

    def src_of(u_):
        h = u_[0::nv]
        h_m = 0.5 * (h[:-1] + h[1:])
        if nv == 4:
            p = u_[2::nv]
            p_m = 0.5 * (p[:-1] + p[1:])
            return M.evaporation_source(h_m, p_m, params)
        return M.second_order_source(h_m, params)

    s_new = src_of(u)
    if theta != 1.0:
        s_old = src_of(old_u)
        return float(np.sum((theta * s_new + (1.0 - theta) * s_old) * dx))
    return float(np.sum(s_new * dx))


def scheme_mass(u, nv, grid: Grid) -> float:
    h = u[0::nv]
    dx = np.diff(grid.nodes)
    return float(np.sum(0.5 * (h[:-1] + h[1:]) * dx))


# --------------------------------------------------------------------------
# Newton step with colored finite-difference banded Jacobian
# --------------------------------------------------------------------------

def _row_norms(ab, kl, ku):
    n = ab.shape[1]
    rowmax = np.zeros(n)
    for off in range(-kl, ku + 1):
        j = np.arange(max(0, -off), min(n, n - off))
        np.maximum.at(rowmax, j + off, np.abs(ab[ku + off, j]))
    rowmax[rowmax == 0.0] = 1.0
    return rowmax


def _scale_rows(ab, kl, ku, rowscale):
    n = ab.shape[1]
    for off in range(-kl, ku + 1):
        j = np.arange(max(0, -off), min(n, n - off))
        ab[ku + off, j] /= rowscale[j + off]


def _bandwidths(nv: int) -> tuple[int, int]:
    # row 2 + nv*i + j couples columns nv*i .. nv*(i+1)+nv-1
    return nv + 1, nv + 1


def _banded_jacobian(u, res0, old, dt, grid, params, theta, source_fn):
    nv = old.nvar
    kl, ku = _bandwidths(nv)
    n = u.size
    ab = np.zeros((kl + ku + 1, n))
    stride = kl + ku + 1
    sqeps = np.sqrt(np.finfo(float).eps)
    deltas = sqeps * (np.abs(u) + 1.0)
    offsets = np.arange(-ku, kl + 1)
    for color in range(stride):
        cols = np.arange(color, n, stride)
        up = u.copy()
        up[cols] += deltas[cols]
        Rp, _, _ = assemble_residual(up, old, dt, grid, params, theta, source_fn)
        dR = Rp - res0
        # rows within the band of a perturbed column see only that column
        for off in offsets:
            r = cols + off
            ok = (r >= 0) & (r < n)
            ab[ku + off, cols[ok]] = dR[r[ok]] / deltas[cols[ok]]
    return ab, kl, ku


def newton_advance(old: BoxState, dt: float, grid: Grid, params: M.ModelParams,
                   config: SolverConfig, damping: float = 1.0,
                   source_fn: Callable | None = None) -> tuple[BoxState, int]:
    """One implicit step; returns (new state, newton iterations used).

    Raises StepRejected on non-convergence or positivity breakdown.
    """
    theta = config.theta
    u = old.u.copy()
    extended = config.precision is Precision.EXTENDED
    try:
        for it in range(1, config.newton_max_iters + 1):
            R, S, F = assemble_residual(u, old, dt, grid, params, theta, source_fn,
                                        extended=extended)
            if residual_norm(R, S, F) <= config.newton_tol:
                clock = CompensatedClock(old.t, old.t_lo)
                clock.advance(dt)
                return BoxState(clock.hi, u, old.nvar, clock.lo), it - 1
            ab, kl, ku = _banded_jacobian(u, R, old, dt, grid, params, theta, source_fn)
            ab_raw = ab.copy() if extended else None
            rowscale = _row_norms(ab, kl, ku)
            _scale_rows(ab, kl, ku, rowscale)

            def solve(rhs):
                return solve_banded((kl, ku), ab, rhs / rowscale)

            try:
                du = solve(R)
            except (LinAlgError, ValueError) as exc:
                raise SolverBreakdown(f"banded solve failed: {exc}") from exc
            if extended:
                du = refine_banded_solution(solve, ab_raw, kl, ku, R, du)
            if not np.all(np.isfinite(du)):
                raise SolverBreakdown("non-finite Newton update")
            u_try = u - damping * du
            h_now = u[0::old.nvar]
            if np.any(u_try[0::old.nvar] <= 0.2 * h_now):
                # pull back: keep every node positive and within a 5x shrink
                lam = damping
                for _ in range(8):
                    lam *= 0.5
                    u_try = u - lam * du
                    if np.all(u_try[0::old.nvar] > 0.2 * h_now):
                        break
                else:
                    raise SolverBreakdown("positivity violated")
            u = u_try
        raise StepRejected(f"Newton did not converge in {config.newton_max_iters} iterations")
    except SolverBreakdown as exc:
        raise StepRejected(str(exc)) from exc


# --------------------------------------------------------------------------
# time integration
# --------------------------------------------------------------------------

@dataclass
class Snapshot:
    t: float
    t_lo: float
    x: np.ndarray
    h: np.ndarray
    dhdt: np.ndarray
    p: np.ndarray
    dt: float

    @property
    def h_min(self) -> float:
        return float(self.h.min())


@dataclass
class Trajectory:
    params: M.ModelParams
    config: SolverConfig
    snapshots: list[Snapshot] = field(default_factory=list)
    events: list[tuple[float, str, str]] = field(default_factory=list)
    stop_reason: str = ""
    # per accepted step scalars
    t_hist: list[float] = field(default_factory=list)
    t_lo_hist: list[float] = field(default_factory=list)
    dt_hist: list[float] = field(default_factory=list)
    hmin_hist: list[float] = field(default_factory=list)
    xmin_hist: list[float] = field(default_factory=list)
    mass_hist: list[float] = field(default_factory=list)
    newton_hist: list[int] = field(default_factory=list)
    mass_monotone: bool = True

    @property
    def final(self) -> Snapshot:
        return self.snapshots[-1]

    def log(self, t, kind, detail=""):
        self.events.append((t, kind, detail))


def _node_pressure(u, grid: Grid, params: M.ModelParams) -> np.ndarray:
    nv = nvar_for(params)
    if nv == 4:
        return u[2::nv].copy()
    h, s = u[0::nv], u[1::nv]
    h_xx = np.gradient(s, grid.nodes, edge_order=2)
    if params.variant is M.Variant.REDUCED_2ND_EARLY:
        return -(h ** -4 + h_xx)
    return -(h ** -4 + h_xx)


def _snapshot(bstate: BoxState, prev_h, prev_x, dt, grid, params) -> Snapshot:
    h = bstate.h
    if prev_h is not None and prev_h.size == h.size and np.array_equal(prev_x, grid.nodes):
        dhdt = (h - prev_h) / dt
    else:
        dhdt = np.full_like(h, np.nan)
    return Snapshot(bstate.t, bstate.t_lo, grid.nodes.copy(), h.copy(), dhdt,
                    _node_pressure(bstate.u, grid, params), dt)


def integrate(initial: FilmState, grid: Grid, params: M.ModelParams,
              config: SolverConfig, monitor: MonitorConfig | None = None,
              source_fn: Callable | None = None) -> Trajectory:
    """Advance to rupture (min h <= h_stop), t_end, or a flat state.

    dt grows by dt_grow after steps converging in <= easy_iters Newton
    iterations, halves on rejection, and near rupture is capped by
    singularity_cap * h_min^(1/alpha) so the blow-up stays resolved in time.
    A step rejected twice is retried once with half-damped Newton before
    halving dt again; dt falling below dt_min is a hard failure.
    """
    initial.check(grid)
    traj = Trajectory(params, config)
    bstate = box_state_from_film(initial, grid, params)
    expect_mass_decreasing = _mass_should_decrease(params)

    alpha = config.rupture_alpha
    if alpha is None:
        alpha = _default_alpha(params)

    dt = config.dt_init
    snap = _snapshot(bstate, None, None, dt, grid, params)
    traj.snapshots.append(snap)
    _record_step(traj, bstate, grid, 0, dt)

    steps = 0
    rejections_here = 0
    last_mass = traj.mass_hist[-1]
    prev_h = prev_x = None
    last_dt = dt
    snapped = True
    while steps < config.max_steps:
        h_min = float(bstate.h.min())
        if h_min <= config.h_stop:
            traj.stop_reason = "rupture"
            break
        if bstate.t >= config.t_end:
            traj.stop_reason = "t_end"
            break
        if config.flat_tol > 0.0:
            mean_h = float(bstate.h.mean())
            if (bstate.h.max() - h_min) <= config.flat_tol * mean_h:
                traj.stop_reason = "flat"
                break

        if monitor is not None:
            fs, new_grid, ev = maybe_remesh(bstate.film_state(), grid, monitor)
            if ev is not None:
                grid = new_grid
                bstate = box_state_from_film(fs, grid, params)
                last_mass = scheme_mass(bstate.u, bstate.nvar, grid)
                prev_h = prev_x = None
                traj.log(bstate.t, "remesh",
                         f"mass_drift={ev.mass_drift:.3e} hmin={ev.hmin_after:.6e}")

        dt_cap = np.inf
        if alpha is not None and alpha > 0.0:
            dt_cap = config.singularity_cap * h_min ** (1.0 / alpha)
        dt_eff = float(min(dt, config.dt_max, dt_cap,
                           max(config.t_end - bstate.t, config.dt_min)))
        if dt_eff < config.dt_min:
            dt_eff = config.dt_min

        try:
            damping = 0.5 if rejections_here == 2 else 1.0
            new_state, iters = newton_advance(bstate, dt_eff, grid, params, config,
                                              damping=damping, source_fn=source_fn)
        except StepRejected as exc:
            rejections_here += 1
            traj.log(bstate.t, "reject", f"dt={dt_eff:.3e}: {exc}")
            if rejections_here == 2:
                continue  # retry same dt once with damped Newton
            dt = dt_eff * config.dt_shrink
            if dt < config.dt_min:
                traj.stop_reason = "dt_underflow"
                raise DtUnderflow(
                    f"dt underflow at t={bstate.t:.6g} (h_min={h_min:.3e})",
                    dump=traj) from exc
            continue

        rejections_here = 0
        steps += 1
        prev_h, prev_x = bstate.h.copy(), grid.nodes
        last_dt = dt_eff
        bstate = new_state

        mass = scheme_mass(bstate.u, bstate.nvar, grid)
        mass_eps = 4.0 * np.finfo(float).eps * grid.nodes.size * abs(last_mass)
        if expect_mass_decreasing and mass >= last_mass + mass_eps:
            traj.mass_monotone = False
            traj.log(bstate.t, "mass_violation", f"M={mass!r}")
        last_mass = min(mass, last_mass)
        _record_step(traj, bstate, grid, iters, dt_eff)

        deep = bstate.h.min() <= config.deep_snapshot_h
        snapped = deep or steps % config.snapshot_interval == 0
        if snapped:
            traj.snapshots.append(_snapshot(bstate, prev_h, prev_x, dt_eff, grid, params))

        if iters <= 2:
            dt = min(dt_eff * config.dt_grow ** 4, config.dt_max)
        elif iters <= config.easy_iters:
            dt = min(dt_eff * config.dt_grow, config.dt_max)
        else:
            dt = dt_eff
    else:
        traj.stop_reason = "max_steps"

    if not snapped:
        traj.snapshots.append(_snapshot(bstate, prev_h, prev_x, last_dt, grid, params))
    return traj


def _record_step(traj: Trajectory, bstate: BoxState, grid: Grid, iters: int, dt: float):
    x_min, _ = argmin_parabolic(grid.nodes, bstate.h)
    traj.t_hist.append(bstate.t)
    traj.t_lo_hist.append(bstate.t_lo)
    traj.dt_hist.append(dt)
    traj.hmin_hist.append(float(bstate.h.min()))
    traj.xmin_hist.append(x_min)
    traj.mass_hist.append(scheme_mass(bstate.u, bstate.nvar, grid))
    traj.newton_hist.append(iters)


def _mass_should_decrease(params: M.ModelParams) -> bool:
    if params.variant is M.Variant.FULL:
        # Pi < 0 everywhere together with gamma > 0 forces dM/dt < 0
        return params.gamma > 0.0 and params.P0 <= -_pi_peak(params)
    if params.variant is M.Variant.GENERALIZED:
        # dM/dt = -int h^-(4+m) - m*int h_x^2 h^-(m+1); sign-definite for m >= 0
        return params.m >= 0.0
    if params.variant in (M.Variant.REDUCED_2ND_EARLY, M.Variant.REDUCED_2ND_LATE):
        return True
    return False


def _pi_peak(params: M.ModelParams) -> float:
    # max over h of A*h^-3*(1 - eps/h); attained at h = 4*eps/3
    if params.eps == 0.0:
        return np.inf
    hp = 4.0 * params.eps / 3.0
    return params.A * hp ** -3 * (1.0 - params.eps / hp)


def _default_alpha(params: M.ModelParams) -> float | None:
    n, m, v = params.n, params.m, params.variant
    if v is M.Variant.FULL:
        return 1.0 / 6.0
    if v is M.Variant.REDUCED_2ND_LATE:
        return 0.2
    if v in (M.Variant.GENERALIZED, M.Variant.REDUCED_2ND_EARLY, M.Variant.REDUCED_4TH):
        if m + n > 5.0 and m > -4.0:
            a = 1.0 / (n + 2.0 * m)
        elif m > -5.0:
            a = 1.0 / (m + 5.0)
        else:
            return None
        return a if a > 0.0 else None
    return None
