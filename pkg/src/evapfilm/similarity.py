"""Self-similar rupture profiles: scaling exponents, shooting solutions of the
second-order similarity ODE, the discrete fourth-order family, far-field
classification, local-expansion asymptotics, and the spectrum of the
linearized similarity dynamics.

Profiles H(eta) satisfy

    -alpha*H + beta*eta*H' + ce*H^-(4+m) - 4*(H^(n-5) H')' = 0     (2nd order)
    -alpha*H + beta*eta*H' + H''/H^m + (H^n H''')' = 0             (4th order)

with even symmetry at eta = 0 and the far-field matching condition
alpha*H - beta*eta*H' -> 0, i.e. H ~ C*eta^(2/(n+m)).

Shooting integrates the ODE outward and classifies trajectories by events
(upward runaway of the matching defect vs. formation of a local maximum); the
separatrix between the two is the similarity solution.  Converged shooting
parameters seed a collocation solve on the full domain, which provides the
smooth profile used by diagnostics and the spectrum computation.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_bvp, solve_ivp
from scipy.interpolate import CubicSpline

from .fd import diff_matrix, fd_weights


class Balance(enum.Enum):
    SECOND_ORDER_EARLY = "second_order_early"
    SECOND_ORDER_LATE = "second_order_late"
    REGION_A = "region_a"
    REGION_B = "region_b"


class NoSolutionFound(RuntimeError):
    """The shooting discriminant has no sign change in the bracket."""


class ToleranceNotMet(RuntimeError):
    pass


@dataclass(frozen=True)
class ScalingExponents:
    alpha: float
    beta: float
    balance: Balance

    @property
    def nu(self) -> float:
        return 1.0 - 2.0 * self.beta / self.alpha

    @property
    def mu(self) -> float:
        return 1.0 - 1.0 / self.alpha


def scaling_exponents(n: float, m: float, balance: Balance) -> ScalingExponents:
    if balance is Balance.SECOND_ORDER_EARLY:
        alpha, beta = 1.0 / 6.0, 1.0 / 3.0
    elif balance is Balance.SECOND_ORDER_LATE:
        alpha, beta = 0.2, 0.3
    elif balance is Balance.REGION_A:
        if m + 5.0 == 0.0:
            raise ValueError("m = -5 has no second-order balance")
        alpha = 1.0 / (m + 5.0)
        beta = (n + m) / (2.0 * (m + 5.0))
    else:
        if n + 2.0 * m == 0.0:
            raise ValueError("n + 2m = 0 has no fourth-order balance")
        alpha = 1.0 / (n + 2.0 * m)
        beta = (n + m) / (2.0 * (n + 2.0 * m))
    if alpha <= 0.0 or beta <= 0.0:
        raise ValueError(f"no focusing rupture scaling at (n, m) = ({n}, {m})")
    return ScalingExponents(alpha, beta, balance)


def predicted_exponents(n: float, m: float, region: str) -> tuple[float, float]:
    """Closed-form (nu, mu) of h_xx ~ C h^nu, |h_t| ~ C h^mu at the rupture point."""
    r = str(region).upper()
    if r == "A":
        return 1.0 - n - m, -m - 4.0
    if r == "D":
        return -m - 4.0, -m - 4.0
    if r == "B":
        return 1.0 - n - m, 1.0 - n - 2.0 * m
    raise ValueError(f"no rupture exponents in region {region!r}")


@dataclass
class SimilarityProfile:
    eta: np.ndarray
    H: np.ndarray
    Hp: np.ndarray
    H0: float
    H2: float
    C: float
    branch: int
    exponents: ScalingExponents
    n: float
    m: float
    ce: float = 1.0
    extra: dict = field(default_factory=dict, repr=False)
    _interp: CubicSpline | None = field(default=None, repr=False, compare=False)

    def __call__(self, eta):
        """Even-symmetric evaluation of H; power-law far field beyond the
        stored range."""
        if self._interp is None:
            self._interp = CubicSpline(self.eta, self.H)
        a = np.abs(np.asarray(eta, dtype=float))
        out = self._interp(np.minimum(a, self.eta_max))
        far = a > self.eta_max
        if np.any(far):
            p = 2.0 / (self.n + self.m)
            out = np.where(far, self.C * np.maximum(a, 1e-300) ** p, out)
        return out if out.ndim else float(out)

    def derivative(self, eta, order=1):
        if self._interp is None:
            self._interp = CubicSpline(self.eta, self.H)
        e = np.asarray(eta, dtype=float)
        a = np.abs(e)
        val = self._interp(np.minimum(a, self.eta_max), nu=order)
        far = a > self.eta_max
        if np.any(far):
            p = 2.0 / (self.n + self.m)
            coef = self.C
            for k in range(order):
                coef *= (p - k)
            val = np.where(far, coef * np.maximum(a, 1e-300) ** (p - order), val)
        if order % 2 == 1:
            val = np.sign(e) * val
        return val if val.ndim else float(val)

    @property
    def eta_max(self) -> float:
        return float(self.eta[-1])


# --------------------------------------------------------------------------
# second-order shooting
# --------------------------------------------------------------------------

def _rhs2(n, m, alpha, beta, ce):
    def f(eta, y):
        H, Hp = y
        H = max(H, 1e-12)
        Hpp = (-alpha * H + beta * eta * Hp + ce * H ** (-(4.0 + m))
               - 4.0 * (n - 5.0) * H ** (n - 6.0) * Hp * Hp) * H ** (5.0 - n) / 4.0
        return [Hp, Hpp]
    return f


def _shoot_once(n, m, H0, eta_max, ce, alpha, beta, rtol=1e-12):
    """Signed matching defect: > 0 when the trajectory develops a local
    maximum and dips (H0 too large), < 0 on upward runaway (H0 too small);
    near zero when the far-field condition holds at eta_max."""

    def ev_dip(eta, y):
        return y[1] + 1e-14 if eta < 1e-9 else y[1]
    ev_dip.terminal, ev_dip.direction = True, -1

    def ev_run(eta, y):
        return (alpha * y[0] - beta * eta * y[1]) + 1.0
    ev_run.terminal, ev_run.direction = True, -1

    sol = solve_ivp(_rhs2(n, m, alpha, beta, ce), (0.0, eta_max), [H0, 0.0],
                    rtol=rtol, atol=1e-14, events=[ev_dip, ev_run], method="DOP853")
    if sol.t_events[0].size:
        return 1.0 + (eta_max - sol.t_events[0][0]), sol
    if sol.t_events[1].size:
        return -1.0 - (eta_max - sol.t_events[1][0]), sol
    H, Hp = sol.y[0, -1], sol.y[1, -1]
    return alpha * H - beta * eta_max * Hp, sol


def second_order_brackets(n, m, ce=1.0, eta_max=50.0, lo=None, hi=None, scan=61):
    """All sign changes of the shooting discriminant over the H0 scan range."""
    alpha = 1.0 / (m + 5.0)
    beta = (n + m) / (2.0 * (m + 5.0))
    if lo is None:
        lo = 0.2 * ce ** (1.0 / (5.0 + m))
    if hi is None:
        hi = 3.0 * ce ** (1.0 / (5.0 + m))
    grid = np.linspace(lo, hi, scan)
    vals = np.array([_shoot_once(n, m, H0, eta_max, ce, alpha, beta, rtol=1e-10)[0]
                     for H0 in grid])
    out = []
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if np.sign(fa) != np.sign(fb):
            out.append((a, b, fa, fb))
    return out


def shoot_second_order(n: float, m: float, K0_scaled: float | None = None,
                       eta_max: float = 50.0, eta_profile: float = 50.0,
                       bisections: int = 52) -> SimilarityProfile:
    """Similarity profile of the second-order rupture balance.

    ``K0_scaled`` selects the late-stage problem (evaporative coefficient
    1/K0 with m = 0); otherwise the coefficient is 1.
    """
    ce = 1.0
    balance = Balance.REGION_A
    if K0_scaled is not None:
        if K0_scaled <= 0.0:
            raise ValueError("K0_scaled must be positive")
        ce = 1.0 / K0_scaled
        m = 0.0
        balance = Balance.SECOND_ORDER_LATE if n == 3.0 else Balance.REGION_A
    elif (n, m) == (3.0, 1.0):
        balance = Balance.SECOND_ORDER_EARLY
    exps = scaling_exponents(n, m, balance)
    alpha, beta = exps.alpha, exps.beta

    brackets = second_order_brackets(n, m, ce, eta_max)
    if not brackets:
        raise NoSolutionFound(
            f"shooting discriminant has no sign change for (n, m) = ({n}, {m})")
    a, b, fa, fb = brackets[0]
    for _ in range(bisections):
        mid = 0.5 * (a + b)
        fm, _ = _shoot_once(n, m, mid, eta_max, ce, alpha, beta)
        if np.sign(fm) == np.sign(fa):
            a, fa = mid, fm
        else:
            b, fb = mid, fm
    H0 = 0.5 * (a + b)

    profile = _polish_second_order(n, m, ce, H0, eta_profile, exps)
    profile.extra["n_brackets"] = len(brackets)
    profile.extra["bisection_width"] = abs(b - a)
    return profile


def _far_field_state(n, m, ce, alpha, beta, C, eta):
    """Two-term far-field asymptotics H ~ C eta^p + corrections, used as
    inward-integration initial data."""
    s = n + m
    p = 2.0 / s
    terms = [(C, p)]
    q_e = -p * (4.0 + m)
    den_e = beta * q_e - alpha
    if abs(den_e) > 1e-12:
        terms.append((-ce * C ** (-(4.0 + m)) / den_e, q_e))
    q_d = p * (n - 4.0) - 2.0
    den_d = beta * q_d - alpha
    if abs(den_d) > 1e-12:
        terms.append((4.0 * C ** (n - 4.0) * p * (p * (n - 4.0) - 1.0) / den_d, q_d))
    H = sum(B * eta ** q for B, q in terms)
    Hp = sum(B * q * eta ** (q - 1.0) for B, q in terms)
    return H, Hp


def _integrate_inward(n, m, ce, alpha, beta, C, eta_R, rtol=1e-12, dense=False):
    y0 = _far_field_state(n, m, ce, alpha, beta, C, eta_R)

    def ev_crash(eta, y):
        return y[0] - 1e-3
    ev_crash.terminal, ev_crash.direction = True, -1

    def ev_boom(eta, y):
        return y[0] - 1e4
    ev_boom.terminal = True

    return solve_ivp(_rhs2(n, m, alpha, beta, ce), (eta_R, 0.0), list(y0),
                     rtol=rtol, atol=1e-14, events=[ev_crash, ev_boom],
                     dense_output=dense, method="DOP853")


def _profile_from_far_field(n, m, ce, H0, eta_profile, exps):
    """Full-range profile by shooting inward on the far-field amplitude C.

    Outward integration is contaminated by a violently growing mode; the same
    mode decays inward, so matching H'(0) = 0 with bisection on C recovers the
    profile on the whole domain in one stable pass."""
    alpha, beta = exps.alpha, exps.beta

    def g_of(C, rtol=1e-10):
        sol = _integrate_inward(n, m, ce, alpha, beta, C, eta_profile, rtol=rtol)
        if sol.t_events[0].size or sol.t_events[1].size or sol.t[-1] > 1e-12:
            return np.nan
        return float(sol.y[1, -1])

    # bracket: H'(0) changes sign with C around the similarity amplitude
    Cs = np.geomspace(0.25, 4.0, 10)
    vals = [g_of(C) for C in Cs]
    bracket = None
    for a, b, fa, fb in zip(Cs[:-1], Cs[1:], vals[:-1], vals[1:]):
        if np.isfinite(fa) and np.isfinite(fb) and np.sign(fa) != np.sign(fb):
            bracket = (a, b)
            break
    if bracket is None:
        return None
    from scipy.optimize import brentq
    try:
        C = brentq(g_of, bracket[0], bracket[1], xtol=1e-14, rtol=8.9e-16)
    except ValueError:
        return None
    sol = _integrate_inward(n, m, ce, alpha, beta, C, eta_profile,
                            rtol=3e-13, dense=True)
    if sol.t[-1] > 1e-12:
        return None
    H0_in = float(sol.y[0, -1])
    if abs(H0_in - H0) > 5e-4 * max(H0, 1.0):
        return None  # landed on a different member of the family
    return C, sol, H0_in


def _polish_second_order(n, m, ce, H0, eta_profile, exps) -> SimilarityProfile:
    """Full-domain profile construction seeded by the bisection value of H(0).

    Prefers the inward far-field shooting pass (stable over the whole domain);
    falls back to dense outward re-integration on the trustworthy range when
    no inward bracket is found."""
    alpha, beta = exps.alpha, exps.beta
    s = n + m
    inward = _profile_from_far_field(n, m, ce, H0, eta_profile, exps)
    if inward is not None:
        C, sol, H0_in = inward
        eta = np.linspace(0.0, eta_profile, 8001)
        y = sol.sol(eta)
        H2 = _center_curvature2(n, m, ce, alpha, H0_in)
        prof = SimilarityProfile(eta=eta, H=y[0], Hp=y[1], H0=H0_in,
                                 H2=H2, C=C, branch=1, exponents=exps,
                                 n=n, m=m, ce=ce,
                                 extra={"eta_trust": eta_profile,
                                        "construction": "inward",
                                        "H0_outward": H0})
        prof.extra["C_fit"] = _fit_far_field(eta, y[0], 2.0 / s)
        return prof

    g, sol = _shoot_once(n, m, H0, eta_profile, ce, alpha, beta, rtol=3e-13)
    eta_store = min(sol.t[-1] * 0.9, eta_profile)
    dense = solve_ivp(_rhs2(n, m, alpha, beta, ce), (0.0, eta_store), [H0, 0.0],
                      rtol=3e-13, atol=1e-15, dense_output=True, method="DOP853")
    eta_store = dense.t[-1]
    eta = np.linspace(0.0, eta_store, 8001)
    y = dense.sol(eta)
    C = _fit_far_field(eta, y[0], 2.0 / s)
    H2 = _center_curvature2(n, m, ce, alpha, H0)
    return SimilarityProfile(eta=eta, H=y[0], Hp=y[1], H0=H0,
                             H2=H2, C=C, branch=1, exponents=exps, n=n, m=m, ce=ce,
                             extra={"eta_trust": eta_store, "construction": "outward"})


def _center_curvature2(n, m, ce, alpha, H0):
    # the ODE evaluated at eta = 0 fixes H''(0) in terms of H(0)
    return float((-alpha * H0 + ce * H0 ** (-(4.0 + m))) * H0 ** (5.0 - n) / 4.0)


def _fit_far_field(eta, H, power, decade=10.0):
    sel = eta >= eta[-1] / decade
    basis = eta[sel] ** power
    return float(np.dot(basis, H[sel]) / np.dot(basis, basis))


def curvature_constant(profile: SimilarityProfile) -> float:
    """Scaling constant of h_xx(x_c, t) ~ C* h(x_c, t)^-3 for the early-stage
    profile; cross-checked against H''(0)*H(0)^3 from the profile."""
    if (profile.n, profile.m) != (3.0, 1.0) or profile.ce != 1.0:
        raise ValueError("the curvature constant is defined for the (3, 1) profile")
    H0 = profile.H0
    c_star = (1.0 - H0 ** 6 / 6.0) / 4.0
    check = profile.H2 * H0 ** 3
    if abs(check - c_star) > 0.01 * abs(c_star):
        raise ToleranceNotMet(
            f"H''(0) inconsistency: {check:.6g} vs {c_star:.6g}")
    return float(c_star)


def far_field_classify(n: float, m: float) -> str:
    """Contact-angle class of second-order rupture: A1 (90 deg), A2
    (borderline finite angle), A3 (zero angle)."""
    s = n + m
    if not (0.0 < s < 5.0 and n < 5.0 and m > -4.0):
        raise ValueError(f"({n}, {m}) is not in the second-order rupture region")
    if s > 2.0:
        return "A1"
    if s == 2.0:
        return "A2"
    return "A3"


# --------------------------------------------------------------------------
# fourth-order discrete family
# --------------------------------------------------------------------------

def _rhs4(n, m, alpha, beta):
    def f(eta, y):
        H, H1, H2, H3 = y
        H = max(H, 1e-9)
        H4 = -(-alpha * H + beta * eta * H1 + H2 / H ** m
               + n * H ** (n - 1.0) * H1 * H3) / H ** n
        return [H1, H2, H3, H4]
    return f


def _conditions4(n, m, alpha, beta, H0, H2, eta_f, rtol):
    ev_lo = lambda eta, y: y[0] - 0.02
    ev_lo.terminal, ev_lo.direction = True, -1
    ev_hi = lambda eta, y: y[0] - 30.0
    ev_hi.terminal, ev_hi.direction = True, 1
    ev_c = lambda eta, y: abs(y[2]) - 1e3
    ev_c.terminal = True
    sol = solve_ivp(_rhs4(n, m, alpha, beta), (0.0, eta_f), [H0, 0.0, H2, 0.0],
                    rtol=rtol, atol=1e-12, events=[ev_lo, ev_hi, ev_c],
                    method="DOP853")
    if sol.t[-1] < eta_f * (1.0 - 1e-12):
        return None
    H, H1, H2e, _ = sol.y[:, -1]
    return np.array([alpha * H - beta * eta_f * H1,
                     (alpha - beta) * H1 - beta * eta_f * H2e])


def _newton4(n, m, alpha, beta, x0, eta_f, rtol, tol=1e-11, itmax=25):
    x = np.array(x0, dtype=float)
    for _ in range(itmax):
        g = _conditions4(n, m, alpha, beta, x[0], x[1], eta_f, rtol)
        if g is None:
            return None
        ng = float(np.hypot(*g))
        if ng < tol:
            return x
        J = np.zeros((2, 2))
        for j in range(2):
            dx = 1e-7 * max(abs(x[j]), 1e-3)
            xp = x.copy()
            xp[j] += dx
            gp = _conditions4(n, m, alpha, beta, xp[0], xp[1], eta_f, rtol)
            if gp is None:
                return None
            J[:, j] = (gp - g) / dx
        try:
            step = np.linalg.solve(J, g)
        except np.linalg.LinAlgError:
            return None
        lam = 1.0
        while lam > 1e-3:
            xn = x - lam * step
            if xn[0] > 0.03:
                gn = _conditions4(n, m, alpha, beta, xn[0], xn[1], eta_f, rtol)
                if gn is not None and np.hypot(*gn) < ng:
                    x = xn
                    break
            lam *= 0.5
        else:
            return None
    g = _conditions4(n, m, alpha, beta, x[0], x[1], eta_f, rtol)
    return x if (g is not None and np.hypot(*g) < 1e-7) else None


@dataclass
class FourthOrderFamily:
    profiles: list[SimilarityProfile]
    complete: bool
    requested: int


def solve_fourth_order_family(n: float, m: float, k_max: int = 3,
                              eta_profile: float = 30.0,
                              scan_H0=None, scan_H2=None) -> FourthOrderFamily:
    """Discrete family H_k of the fourth-order similarity equation, found by a
    coarse scan of the (H(0), H''(0)) shooting plane followed by damped Newton
    with continuation in the matching radius.  Branches are ordered by H(0)
    descending; k = 1 is the primary profile."""
    if not (n + m > 5.0 and m > -4.0):
        raise ValueError(f"({n}, {m}) is not in the fourth-order rupture region")
    exps = scaling_exponents(n, m, Balance.REGION_B)
    alpha, beta = exps.alpha, exps.beta

    if scan_H0 is None:
        scan_H0 = np.linspace(0.2, 1.4, 13)
    if scan_H2 is None:
        scan_H2 = np.geomspace(0.004, 0.8, 12)
    eta0 = 2.5
    merit = np.full((len(scan_H0), len(scan_H2)), np.inf)
    for i, a in enumerate(scan_H0):
        for j, b in enumerate(scan_H2):
            g = _conditions4(n, m, alpha, beta, a, b, eta0, rtol=1e-6)
            if g is not None:
                merit[i, j] = np.hypot(*g)

    starts = []
    for i in range(len(scan_H0)):
        for j in range(len(scan_H2)):
            v = merit[i, j]
            if not np.isfinite(v):
                continue
            nb = merit[max(i - 1, 0):i + 2, max(j - 1, 0):j + 2]
            if v <= nb.min() and v < 0.5:
                starts.append((scan_H0[i], scan_H2[j]))

    roots = []
    for s0 in starts:
        r = _newton4(n, m, alpha, beta, s0, eta0, rtol=1e-8)
        if r is not None and not any(abs(r[0] - q[0]) < 1e-4 for q in roots):
            roots.append(r)
    roots.sort(key=lambda q: -q[0])

    profiles = []
    for x in roots:
        ok = True
        for eta_f in (4.0, 6.0, 9.0, 13.0):
            x2 = _newton4(n, m, alpha, beta, x, eta_f, rtol=1e-10)
            if x2 is None:
                ok = False
                break
            x = x2
        if not ok:
            continue
        if any(abs(x[0] - p.H0) < 1e-4 for p in profiles):
            continue
        try:
            prof = _polish_fourth_order(n, m, exps, x[0], x[1], eta_profile)
        except ToleranceNotMet:
            continue
        profiles.append(prof)
        if len(profiles) >= k_max:
            break

    profiles.sort(key=lambda p: -p.H0)
    for k, p in enumerate(profiles, start=1):
        p.branch = k
    return FourthOrderFamily(profiles=profiles,
                             complete=len(profiles) >= k_max,
                             requested=k_max)


def _polish_fourth_order(n, m, exps, H0, H2, eta_profile) -> SimilarityProfile:
    alpha, beta = exps.alpha, exps.beta
    s = n + m
    ev_lo = lambda eta, y: y[0] - 0.02
    ev_lo.terminal, ev_lo.direction = True, -1
    ev_hi = lambda eta, y: y[0] - 30.0
    ev_hi.terminal, ev_hi.direction = True, 1
    probe = solve_ivp(_rhs4(n, m, alpha, beta), (0.0, eta_profile),
                      [H0, 0.0, H2, 0.0], rtol=1e-12, atol=1e-14,
                      events=[ev_lo, ev_hi], method="DOP853")
    eta_store = min(probe.t[-1] * 0.9, eta_profile)
    dense = solve_ivp(_rhs4(n, m, alpha, beta), (0.0, eta_store),
                      [H0, 0.0, H2, 0.0], rtol=1e-12, atol=1e-14,
                      dense_output=True, method="DOP853")
    eta_store = dense.t[-1]
    eta = np.linspace(0.0, eta_store, 8001)
    y = dense.sol(eta)
    C = _fit_far_field(eta, y[0], 2.0 / s)
    return SimilarityProfile(eta=eta, H=y[0], Hp=y[1], H0=H0,
                             H2=H2, C=C, branch=0,
                             exponents=exps, n=n, m=m,
                             extra={"eta_trust": eta_store})


# --------------------------------------------------------------------------
# rescaling helpers
# --------------------------------------------------------------------------

def rescale_profile(profile: SimilarityProfile, c: float) -> SimilarityProfile:
    """Similarity group action H_c(eta) = c^alpha * H(eta / c^beta); applying
    c then 1/c returns the original profile to round-off."""
    if c <= 0.0:
        raise ValueError("scale factor must be positive")
    a, b = profile.exponents.alpha, profile.exponents.beta
    eta = profile.eta * c ** b
    H = c ** a * profile.H
    Hp = c ** (a - b) * profile.Hp
    C = profile.C * c ** (a - 2.0 * b / (profile.n + profile.m))
    return replace(profile, eta=eta, H=H, Hp=Hp,
                   H0=c ** a * profile.H0, H2=c ** (a - 2.0 * b) * profile.H2,
                   C=C, _interp=None)


def normalized_profile(profile: SimilarityProfile) -> SimilarityProfile:
    """Rescaled so the origin value is exactly 1 (the figure normalization
    H(eta * H0^(beta/alpha)) / H0)."""
    c = profile.H0 ** (-1.0 / profile.exponents.alpha)
    return rescale_profile(profile, c)


# --------------------------------------------------------------------------
# residual audits (independent of the ODE solvers)
# --------------------------------------------------------------------------

def ode_residual_second(profile: SimilarityProfile, interior=(0.02, 0.9)):
    """Pointwise residual of the second-order similarity ODE on the interior,
    using centered uniform-grid stencils independent of the solver."""
    eta, H = profile.eta, profile.H
    d = eta[1] - eta[0]
    w1 = fd_weights(0.0, d * np.arange(-3, 4), 1)
    w2 = fd_weights(0.0, d * np.arange(-3, 4), 2)
    Hp = np.correlate(H, w1, mode="valid")
    Hpp = np.correlate(H, w2, mode="valid")
    Hc = H[3:-3]
    ec = eta[3:-3]
    a, b = profile.exponents.alpha, profile.exponents.beta
    n, m, ce = profile.n, profile.m, profile.ce
    res = (-a * Hc + b * ec * Hp + ce * Hc ** (-(4.0 + m))
           - 4.0 * (n - 5.0) * Hc ** (n - 6.0) * Hp ** 2
           - 4.0 * Hc ** (n - 5.0) * Hpp)
    lo, hi = interior
    sel = (ec >= lo * ec[-1]) & (ec <= hi * ec[-1])
    return ec[sel], res[sel]


def ode_residual_fourth(profile: SimilarityProfile, interior=(0.02, 0.9)):
    eta, H = profile.eta, profile.H
    d = eta[1] - eta[0]
    offs = d * np.arange(-4, 5)
    ws = [fd_weights(0.0, offs, k) for k in (1, 2, 3, 4)]
    ders = [np.correlate(H, w, mode="valid") for w in ws]
    H1, H2, H3, H4 = ders
    Hc = H[4:-4]
    ec = eta[4:-4]
    a, b = profile.exponents.alpha, profile.exponents.beta
    n, m = profile.n, profile.m
    res = (-a * Hc + b * ec * H1 + H2 / Hc ** m
           + Hc ** n * H4 + n * Hc ** (n - 1.0) * H1 * H3)
    lo, hi = interior
    sel = (ec >= lo * ec[-1]) & (ec <= hi * ec[-1])
    return ec[sel], res[sel]


# --------------------------------------------------------------------------
# local expansion dynamics near the singularity
# --------------------------------------------------------------------------

@dataclass
class LocalExpansionState:
    """Trajectory of the center-value/curvature coefficients (v0, v2) with the
    constants of the near-rupture expansion."""

    tau: np.ndarray
    v0: np.ndarray
    v2: np.ndarray
    E: float
    F: float
    alpha: float
    beta: float
    A0: float | None = None
    B0: float | None = None
    A2: float | None = None
    B2: float | None = None
    c1: float | None = None


def expansion_constants(n: float, m: float) -> tuple[float, float, float, float]:
    """(alpha, beta, E, F) of the local-expansion ODE system."""
    exps = scaling_exponents(n, m, Balance.REGION_A)
    a, b = exps.alpha, exps.beta
    E = -4.0 * a ** (1.0 - 2.0 * b)
    F = -4.0 * a ** (1.0 - 2.0 * b) * (2.0 * a + 6.0 * b - 5.0)
    return a, b, E, F


def leading_coefficients(n: float, m: float) -> tuple[float, float]:
    """(A0, B0) solving the algebraic system of the two-term expansion
    v0 = A0 tau + ..., v2 = B0 tau^(1-2 beta) + ... (valid for beta < 1/2)."""
    a, b, E, F = expansion_constants(n, m)
    if b >= 0.5:
        raise ValueError("leading coefficients exist only for beta < 1/2 (n < 5)")
    A0 = 1.0 / (1.0 - (E / F) * (1.0 - 2.0 * b))
    B0 = (1.0 - 2.0 * b) * A0 ** (2.0 - 2.0 * b) / F
    return float(A0), float(B0)


class RegimeViolation(RuntimeError):
    pass


def local_expansion_solve(n: float, m: float, v0_init: float, v2_init: float,
                          tau_start: float = 0.5, tau_end: float = 1e-10,
                          n_points: int = 400) -> LocalExpansionState:
    """Integrate dv0/dtau = 1 + E v0^(2b-1) v2, dv2/dtau = F v0^(2b-2) v2^2
    from tau_start down to tau_end (in s = ln tau to handle the singular
    weight), extracting the regime constants."""
    if not (m > -4.0 and n + m < 5.0):
        raise ValueError("local expansion requires m > -4 and n + m < 5")
    a, b, E, F = expansion_constants(n, m)

    def f(s, y):
        tau = np.exp(s)
        v0, v2 = y
        if v0 <= 0.0:
            return [0.0, 0.0]
        return [tau * (1.0 + E * v0 ** (2.0 * b - 1.0) * v2),
                tau * F * v0 ** (2.0 * b - 2.0) * v2 ** 2]

    def ev_blow(s, y):
        return abs(y[1]) - 1e6
    ev_blow.terminal = True

    def ev_v0(s, y):
        return y[0] - 1e-14
    ev_v0.terminal, ev_v0.direction = True, -1

    s_span = (np.log(tau_start), np.log(tau_end))
    s_eval = np.linspace(s_span[0], s_span[1], n_points)
    sol = solve_ivp(f, s_span, [v0_init, v2_init], t_eval=s_eval,
                    rtol=1e-11, atol=1e-14, events=[ev_blow, ev_v0],
                    method="LSODA")
    if sol.t_events[0].size or sol.t_events[1].size:
        raise RegimeViolation("v2 blow-up (or v0 collapse) before tau -> 0")
    tau = np.exp(sol.t)
    state = LocalExpansionState(tau=tau[::-1], v0=sol.y[0][::-1], v2=sol.y[1][::-1],
                                E=E, F=F, alpha=a, beta=b)
    _extract_regime(state, n)
    return state


def _extract_regime(st: LocalExpansionState, n: float) -> None:
    b = st.beta
    tau, v0, v2 = st.tau, st.v0, st.v2
    head = slice(0, max(8, tau.size // 8))  # smallest tau values
    if b < 0.5:
        A0, B0 = leading_coefficients_from(st)
        st.A0, st.B0 = A0, B0
        # fitted subleading coefficients over the small-tau end
        resid0 = v0[head] - A0 * tau[head]
        basis0 = tau[head] ** (2.0 - 2.0 * b)
        st.A2 = float(np.dot(basis0, resid0) / np.dot(basis0, basis0))
        resid2 = v2[head] - B0 * tau[head] ** (1.0 - 2.0 * b)
        basis2 = tau[head] ** (2.0 - 4.0 * b)
        st.B2 = float(np.dot(basis2, resid2) / np.dot(basis2, basis2))
    elif b > 0.5:
        st.c1 = float(v2[0])
    # b == 0.5: v2 ~ 1/(F |ln tau|); nothing constant to record


def leading_coefficients_from(st: LocalExpansionState) -> tuple[float, float]:
    b, E, F = st.beta, st.E, st.F
    A0 = 1.0 / (1.0 - (E / F) * (1.0 - 2.0 * b))
    B0 = (1.0 - 2.0 * b) * A0 ** (2.0 - 2.0 * b) / F
    return float(A0), float(B0)


def verify_leading_algebra(n: float, m: float, A0: float, B0: float) -> tuple[float, float]:
    """Residuals of -A0 + 1 + E A0^(2b-1) B0 = 0 and
    B0 (2b-1) + F A0^(2b-2) B0^2 = 0."""
    _, b, E, F = expansion_constants(n, m)
    r1 = -A0 + 1.0 + E * A0 ** (2.0 * b - 1.0) * B0
    r2 = B0 * (2.0 * b - 1.0) + F * A0 ** (2.0 * b - 2.0) * B0 ** 2
    return float(r1), float(r2)


# --------------------------------------------------------------------------
# spectrum of the linearized similarity dynamics
# --------------------------------------------------------------------------

@dataclass
class SpectrumMode:
    eigenvalue: complex
    localization: float
    drift: float
    vector: np.ndarray = field(repr=False)


@dataclass
class SpectrumResult:
    modes: list[SpectrumMode]
    eta_max: float
    n_nodes: int
    lambda_T: complex
    lambda_X: complex
    symmetry_correlation: float
    flagged: bool

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([md.eigenvalue for md in self.modes])

    def genuine(self, loc_min=0.5, drift_max=0.02):
        return [md for md in self.modes
                if md.localization >= loc_min and md.drift <= drift_max]


def _spectrum_grid(eta_max, n_nodes, stretch=2.5):
    xi = np.linspace(-1.0, 1.0, n_nodes)
    return eta_max * np.sinh(stretch * xi) / np.sinh(stretch)


def _operator_second(profile, eta):
    n, m = profile.n, profile.m
    ce = profile.ce
    a, b = profile.exponents.alpha, profile.exponents.beta
    H = profile(eta)
    Hp = profile.derivative(eta, 1)
    D1 = diff_matrix(eta, 1, 3)
    A_c = H ** (n - 5.0)
    B_c = (n - 5.0) * H ** (n - 6.0) * Hp
    L = 4.0 * D1 @ (np.diag(A_c) @ D1 + np.diag(B_c))
    L += np.diag(a + ce * (4.0 + m) * H ** (-(5.0 + m)))
    L -= np.diag(b * eta) @ D1
    for bn in (0, eta.size - 1):
        L[bn, :] = -b * eta[bn] * D1[bn, :]
        L[bn, bn] += a
    return L, H, Hp


def _operator_fourth(profile, eta):
    n, m = profile.n, profile.m
    a, b = profile.exponents.alpha, profile.exponents.beta
    H = profile(eta)
    Hp = profile.derivative(eta, 1)
    Hpp = profile.derivative(eta, 2)
    Hppp = profile.derivative(eta, 3)
    D1 = diff_matrix(eta, 1, 3)
    D2 = diff_matrix(eta, 2, 5)
    D3 = diff_matrix(eta, 3, 7)
    L = -np.diag(H ** (-m)) @ D2 + np.diag(m * Hpp * H ** (-m - 1.0))
    L -= D1 @ (np.diag(H ** n) @ D3 + np.diag(n * H ** (n - 1.0) * Hppp))
    L += np.diag(np.full(eta.size, a))
    L -= np.diag(b * eta) @ D1
    for bn in (0, 1, eta.size - 2, eta.size - 1):
        L[bn, :] = -b * eta[bn] * D1[bn, :]
        L[bn, bn] += a
    return L, H, Hp


def similarity_spectrum(profile: SimilarityProfile, n: float | None = None,
                        m: float | None = None, eta_max: float = 10.0,
                        n_nodes: int = 2000, order: int | None = None,
                        sensitivity: bool = True) -> SpectrumResult:
    """Eigenvalues of the linearized similarity dynamics about the profile,
    sorted by descending real part.

    The discretization puts the full linearized operator on the interior of a
    stretched grid and pure advection rows at the boundary (the far-field
    behavior of admissible modes).  Eigenvalues are paired across a second,
    shorter truncation; the per-mode drift plus a localization measure let
    callers separate genuine point spectrum from truncation artifacts.
    The translation symmetry modes (1 and beta) must always be present.
    """
    if n is not None and n != profile.n or m is not None and m != profile.m:
        raise ValueError("profile was computed for different (n, m)")
    fourth = order == 4 or (order is None and profile.exponents.balance is Balance.REGION_B)
    build = _operator_fourth if fourth else _operator_second

    lam2 = None
    if sensitivity:
        eta_b = _spectrum_grid(0.7 * eta_max, int(0.8 * n_nodes))
        Lb, _, _ = build(profile, eta_b)
        lam2 = np.linalg.eigvals(Lb)

    eta = _spectrum_grid(eta_max, n_nodes)
    L, H, Hp = build(profile, eta)
    lam, vecs = np.linalg.eig(L)
    idx = np.argsort(-lam.real)
    lam, vecs = lam[idx], vecs[:, idx]

    core = np.abs(eta) <= 0.5 * eta_max
    weights = np.gradient(eta)
    modes = []
    for j in range(lam.size):
        v = vecs[:, j]
        dens = np.abs(v) ** 2 * weights
        loc = float(dens[core].sum() / dens.sum())
        if lam2 is not None:
            drift = float(np.min(np.abs(lam2 - lam[j])) / max(1.0, abs(lam[j])))
        else:
            drift = 0.0
        modes.append(SpectrumMode(complex(lam[j]), loc, drift, v))

    a, b = profile.exponents.alpha, profile.exponents.beta
    lamT = lam[np.argmin(np.abs(lam - 1.0))]
    lamX = lam[np.argmin(np.abs(lam - b))]

    # the time-shift eigenfunction must match alpha*H - beta*eta*H'
    psi_T = a * H - b * eta * Hp
    vT = vecs[:, int(np.argmin(np.abs(lam - 1.0)))].real
    corr = float(abs(np.dot(psi_T, vT))
                 / (np.linalg.norm(psi_T) * np.linalg.norm(vT) + 1e-300))

    flagged = abs(lamT - 1.0) > 0.05 or abs(lamX - b) > 0.05 * b or corr < 0.999
    return SpectrumResult(modes=modes, eta_max=eta_max, n_nodes=n_nodes,
                          lambda_T=complex(lamT), lambda_X=complex(lamX),
                          symmetry_correlation=corr, flagged=flagged)
