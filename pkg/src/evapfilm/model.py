"""Continuum model: disjoining pressure, potential, evaporative flux, and the
family of governing-equation variants.

All model variants are selected by data (``ModelParams.variant``), not by
separate solver code paths, so any solver or diagnostic can be run against any
member of the family under identical conditions.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np


class Variant(enum.Enum):
    """Governing-equation selector.

    FULL              h_t = (h^3 p_x)_x + gamma*p/(h+K0),  p = Pi(h) - h_xx
    GENERALIZED       h_t = (h^n p_x)_x + p/h^m,           p = -(h^-4 + h_xx)
    REDUCED_2ND_EARLY h_t = 4*(h^(n-5) h_x)_x - h^-(4+m)
    REDUCED_2ND_LATE  h_t = 4*(h^(n-5) h_x)_x - 1/(K0 h^4)
    REDUCED_4TH       h_t = -(h^n h_xxx)_x - h_xx/h^m
    """

    FULL = "full"
    GENERALIZED = "generalized"
    REDUCED_2ND_EARLY = "reduced_2nd_early"
    REDUCED_2ND_LATE = "reduced_2nd_late"
    REDUCED_4TH = "reduced_4th"


#: Variants whose spatial operator is fourth order (solved as a 4-variable
#: first-order system h, s=h_x, p, q=p_x).
FOURTH_ORDER = (Variant.FULL, Variant.GENERALIZED, Variant.REDUCED_4TH)
#: Variants with a second-order operator (2-variable system h, s=h_x).
SECOND_ORDER = (Variant.REDUCED_2ND_EARLY, Variant.REDUCED_2ND_LATE)


class ModelDomainError(ValueError):
    """Raised when an operation is evaluated outside its domain (h <= 0 etc.)."""


@dataclass(frozen=True)
class ModelParams:
    """Physical and model coefficients.

    n, m   mobility exponents of the conservative / evaporative fluxes
    gamma  evaporation sign/strength coefficient (FULL variant only)
    K0     evaporative kinetic parameter, >= 0
    P0     vapor-pressure constant
    A      Hamaker constant, > 0
    eps    ultrathin-film scale of the Born-repulsion term, >= 0
    """

    n: float = 3.0
    m: float = 1.0
    gamma: float = 1.0
    K0: float = 0.0
    P0: float = -1.0
    A: float = 1.0
    eps: float = 1.0
    variant: Variant = Variant.FULL

    def __post_init__(self):
        if self.K0 < 0.0:
            raise ValueError("K0 must be >= 0")
        if self.A <= 0.0:
            raise ValueError("A must be > 0")
        if self.eps < 0.0:
            raise ValueError("eps must be >= 0")
        if self.variant is Variant.FULL and self.n != 3.0:
            raise ValueError("FULL variant fixes the mobility exponent n = 3")
        if self.variant is Variant.REDUCED_2ND_LATE and self.K0 == 0.0:
            raise ValueError("REDUCED_2ND_LATE requires K0 > 0")

    def with_variant(self, variant: Variant) -> "ModelParams":
        if variant is Variant.FULL and self.n != 3.0:
            return replace(self, variant=variant, n=3.0)
        return replace(self, variant=variant)

    @property
    def is_fourth_order(self) -> bool:
        return self.variant in FOURTH_ORDER


def _check_positive(h, what="h"):
    h = np.asarray(h)
    if np.any(h <= 0.0) or not np.all(np.isfinite(h)):
        raise ModelDomainError(f"{what} must be positive and finite")


def disjoining_pressure(h, params: ModelParams):
    """Pi(h) = A*h^-3*(1 - eps/h) + P0.

    Evaluated as A*h^-3 - (A*eps)*h^-4 + P0 via a factored h^-4 form so the
    dominant term is computed without intermediate cancellation when h spans
    many orders of magnitude near rupture.
    """
    _check_positive(h)
    h = np.asarray(h, dtype=float)
    return (params.A * h - params.A * params.eps) / h ** 4 + params.P0


def potential(h, params: ModelParams):
    """U(h) with dU/dh = Pi(h):  -A/(2h^2) + A*eps/(3h^3) + P0*h."""
    _check_positive(h)
    h = np.asarray(h, dtype=float)
    return (params.A * params.eps / 3.0 - params.A * h / 2.0) / h ** 3 + params.P0 * h


def pressure_full(h, h_xx, params: ModelParams):
    """Full-model pressure p = Pi(h) - h_xx."""
    return disjoining_pressure(h, params) - np.asarray(h_xx, dtype=float)


def reduced_pressure(h, h_xx):
    """Small-h reduced pressure p = -(h^-4 + h_xx)."""
    _check_positive(h)
    h = np.asarray(h, dtype=float)
    return -(h ** -4 + np.asarray(h_xx, dtype=float))


def evaporative_flux(h, p, params: ModelParams):
    """Evaporative loss J = -gamma*p/(h + K0); enters the PDE as h_t = ... - J."""
    h = np.asarray(h, dtype=float)
    if np.any(h + params.K0 <= 0.0):
        raise ModelDomainError("h + K0 must be positive")
    return -params.gamma * np.asarray(p, dtype=float) / (h + params.K0)


def pi_stationary_point(params: ModelParams) -> float:
    """The unique stationary point of Pi, at h = 4*eps/3 (eps > 0)."""
    if params.eps <= 0.0:
        raise ModelDomainError("Pi is monotone for eps = 0")
    return 4.0 * params.eps / 3.0


# --- variant ingredients used by the discretization ------------------------
#
# Fourth-order variants are written as  h_t = (F(h) p_x)_x + S(h, p)  with an
# algebraic pressure relation  p = P(h, h_xx).  Second-order variants are
# written as  h_t = (G(h) h_x)_x + S2(h).


def pressure_relation(h, h_xx, params: ModelParams):
    v = params.variant
    if v is Variant.FULL:
        return pressure_full(h, h_xx, params)
    if v is Variant.GENERALIZED:
        return reduced_pressure(h, h_xx)
    if v is Variant.REDUCED_4TH:
        return -np.asarray(h_xx, dtype=float)
    raise ValueError(f"{v} has no fourth-order pressure relation")


def mobility(h, params: ModelParams):
    h = np.asarray(h, dtype=float)
    if params.variant is Variant.FULL:
        return h ** 3
    return h ** params.n


def evaporation_source(h, p, params: ModelParams):
    """Source term of the fourth-order variants: h_t = (F p_x)_x + source."""
    v = params.variant
    h = np.asarray(h, dtype=float)
    p = np.asarray(p, dtype=float)
    if v is Variant.FULL:
        return params.gamma * p / (h + params.K0)
    if v in (Variant.GENERALIZED, Variant.REDUCED_4TH):
        return p / h ** params.m
    raise ValueError(f"{v} has no fourth-order source")


def second_order_mobility(h, params: ModelParams):
    h = np.asarray(h, dtype=float)
    return 4.0 * h ** (params.n - 5.0)


def second_order_source(h, params: ModelParams):
    v = params.variant
    h = np.asarray(h, dtype=float)
    if v is Variant.REDUCED_2ND_EARLY:
        return -h ** (-(4.0 + params.m))
    if v is Variant.REDUCED_2ND_LATE:
        return -1.0 / (params.K0 * h ** 4)
    raise ValueError(f"{v} is not a second-order variant")
