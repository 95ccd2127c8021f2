"""Flat-film linear stability, uniform-thinning laws, and the (n, m) region map.

Region definitions (open sets; threshold lines get boundary flags):
    A  second-order self-similar rupture:   0 < n+m < 5, n < 5, m > -4
    B  fourth-order self-similar rupture:   n+m > 5, m > -4
    C  uniform thinning (linearly stable):  n+m < 0 or m < -4
    D  non-self-similar rupture:            n+m < 5, n >= 5, m > -4
with C split into C1 (finite-time extinction, m > -5) and C2 (infinite-time,
m <= -5).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class Region(enum.Enum):
    A = "A"
    B = "B"
    C1 = "C1"
    C2 = "C2"
    D = "D"


BOUNDARY_LINES = ("m+n=0", "m+n=2", "m+n=5", "n=5", "m=-4", "m=-5")


@dataclass(frozen=True)
class RegionLabel:
    region: Region
    boundary_flags: frozenset[str] = field(default_factory=frozenset)

    def __str__(self):
        if self.boundary_flags:
            flags = ", ".join(sorted(self.boundary_flags))
            return f"{self.region.value} (boundary {flags})"
        return self.region.value


def classify_region(n: float, m: float) -> RegionLabel:
    """Classify (n, m); points on threshold lines carry boundary flags."""
    s = n + m
    flags = set()
    if s == 0.0:
        flags.add("m+n=0")
    if s == 2.0:
        flags.add("m+n=2")
    if s == 5.0:
        flags.add("m+n=5")
    if n == 5.0:
        flags.add("n=5")
    if m == -4.0:
        flags.add("m=-4")
    if m == -5.0:
        flags.add("m=-5")

    if s < 0.0 or m < -4.0:
        region = Region.C1 if m > -5.0 else Region.C2
    elif m == -4.0 or s == 0.0:
        # critical edge of the stable set; report the thinning side
        region = Region.C1 if m > -5.0 else Region.C2
    elif s < 5.0:
        region = Region.D if n >= 5.0 else Region.A
    elif s == 5.0:
        region = Region.D if n >= 5.0 else Region.A
    else:
        region = Region.B
    return RegionLabel(region, frozenset(flags))


@dataclass(frozen=True)
class StabilityPrediction:
    """Flat-film prediction bundle for one (hbar0, k, n, m)."""

    hbar0: float
    k: float
    n: float
    m: float

    @property
    def t_c_flat(self) -> float:
        if self.m > -5.0:
            return self.hbar0 ** (5.0 + self.m) / (5.0 + self.m)
        return np.inf


def flat_film(t, hbar0: float, m: float):
    """Uniform-thinning solution of dhbar/dt = -hbar^-(4+m).

    (hbar0^(5+m) - (5+m) t)^(1/(5+m)) for m != -5, hbar0*exp(-t) at m = -5.
    """
    t = np.asarray(t, dtype=float)
    if hbar0 <= 0.0:
        raise ValueError("hbar0 must be positive")
    if m == -5.0:
        return hbar0 * np.exp(-t)
    base = hbar0 ** (5.0 + m) - (5.0 + m) * t
    if m > -5.0 and np.any(base <= 0.0):
        raise ValueError("t is past the extinction time")
    return base ** (1.0 / (5.0 + m))


def growth_rate(hbar, k, n, m):
    """d(sigma)/dt of a mode with wavenumber k about hbar."""
    hb = np.asarray(hbar, dtype=float)
    if np.any(hb <= 0.0):
        raise ValueError("hbar must be positive")
    return (k ** 2 * hb ** (-m) + (m + 4.0) * hb ** (-(m + 5.0))
            - k ** 4 * hb ** n - 4.0 * k ** 2 * hb ** (n - 5.0))


def sigma_of_hbar(hbar, k, n, m, offset=0.0):
    """Disturbance exponent written as a function of hbar (additive constant
    ``offset`` absorbs the initial-condition dependence)."""
    hb = np.asarray(hbar, dtype=float)
    if np.any(hb <= 0.0):
        raise ValueError("hbar must be positive")
    s = m + n
    if s == 0.0:
        return (4.0 * k ** 2 - m - 4.0) * np.log(hb) \
            + 0.2 * (k ** 4 - k ** 2) * hb ** 5 + offset
    if s == -5.0:
        return -0.8 * k ** 2 * hb ** -5 + (k ** 4 - m - 4.0) * np.log(hb) \
            - 0.2 * k ** 2 * hb ** 5 + offset
    return (-(m + 4.0) * np.log(hb) - 0.2 * k ** 2 * hb ** 5
            + 4.0 * k ** 2 / s * hb ** s
            + k ** 4 / (s + 5.0) * hb ** (s + 5.0) + offset)


@dataclass(frozen=True)
class CurvatureLaw:
    """Predicted scaling of h_xx at the disturbance minimum as hbar -> 0."""

    exponent: float
    k_dependent: bool = False
    exp_argument_power: float | None = None  # h_xx ~ exp(c*hbar^power)*hbar^exponent

    def describe(self) -> str:
        if self.exp_argument_power is not None:
            return (f"h_xx ~ c3*exp(c*hbar^{self.exp_argument_power:g})"
                    f"*hbar^{self.exponent:g}")
        return f"h_xx ~ c*hbar^{self.exponent:g}"


def curvature_prediction(n, m, k=None) -> CurvatureLaw:
    """Early-stage/uniform-thinning law for h_xx(x_c) as a function of hbar."""
    s = m + n
    if s > 0.0:
        return CurvatureLaw(exponent=-(m + 4.0))
    if s == 0.0:
        if k is None:
            raise ValueError("the m+n=0 branch needs the wavenumber k")
        return CurvatureLaw(exponent=4.0 * k ** 2 - (m + 4.0), k_dependent=True)
    return CurvatureLaw(exponent=-(m + 4.0), exp_argument_power=s)


@dataclass(frozen=True)
class DispersionPoint:
    lam: float
    k_cutoff: float
    k_max: float
    lam_max: float


def dispersion_reduced(k, hbar, n, m) -> DispersionPoint:
    """lambda = k^2/hbar^m - k^4*hbar^n for the surface-tension-regularized
    reduced equation; longwave-unstable for 0 < k < hbar^-(n+m)/2."""
    if hbar <= 0.0:
        raise ValueError("hbar must be positive")
    lam = k ** 2 * hbar ** (-m) - k ** 4 * hbar ** n
    k_cut = hbar ** (-(n + m) / 2.0)
    k_max = np.sqrt(0.5) * k_cut
    lam_max = 0.25 * hbar ** (-(n + 2.0 * m))
    return DispersionPoint(float(lam), float(k_cut), float(k_max), float(lam_max))
