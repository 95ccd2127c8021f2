"""Compensated floating-point helpers.

Provide an error-free running sum for simulation time (so time differences
between near-rupture snapshots stay meaningful long after ``t + dt == t`` in
plain double arithmetic) and the building blocks used by the EXTENDED
precision mode of the solver (Neumaier-compensated residual accumulation and
compensated iterative refinement of banded solves).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def two_sum(a, b):
    """Error-free sum: returns (s, err) with s + err == a + b exactly."""
    s = a + b
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return s, err


@dataclass
class CompensatedClock:
    """Running time accumulator stored as a hi/lo pair."""

    hi: float = 0.0
    lo: float = 0.0

    def advance(self, dt: float) -> None:
        s, e = two_sum(self.hi, dt)
        self.hi, self.lo = two_sum(s, self.lo + e)

    @property
    def value(self) -> float:
        return self.hi + self.lo

    def copy(self) -> "CompensatedClock":
        return CompensatedClock(self.hi, self.lo)


def clock_difference(hi_a, lo_a, hi_b, lo_b):
    """(a - b) for hi/lo pairs, keeping cancellation error out of the result."""
    return (np.asarray(hi_a) - np.asarray(hi_b)) + (np.asarray(lo_a) - np.asarray(lo_b))


def neumaier_sum_pairwise(terms):
    """Compensated elementwise sum of a list of equal-shaped arrays."""
    s = np.zeros_like(terms[0], dtype=float)
    c = np.zeros_like(s)
    for t in terms:
        t = np.asarray(t, dtype=float)
        new = s + t
        big = np.where(np.abs(s) >= np.abs(t), s, t)
        small = np.where(np.abs(s) >= np.abs(t), t, s)
        c += (big - new) + small
        s = new
    return s + c


def band_matvec(ab, kl, ku, x):
    """y = A @ x for a matrix stored in LAPACK band format ab[ku+i-j, j]."""
    n = x.size
    y = np.zeros(n)
    for d in range(-kl, ku + 1):
        # diagonal d: entries A[i, i+d]
        row = ku - d
        if d >= 0:
            y[: n - d] += ab[row, d:] * x[d:]
        else:
            y[-d:] += ab[row, : n + d] * x[: n + d]
    return y


def refine_banded_solution(solve, ab, kl, ku, b, x, iterations=1):
    """Compensated iterative refinement of a banded solve.

    ``solve`` re-solves A d = r in working precision; the residual r = b - A x
    is accumulated with two_sum compensation so the refined solution carries
    accuracy beyond a single double-precision factorization.
    """
    for _ in range(iterations):
        ax = band_matvec(ab, kl, ku, x)
        r, e = two_sum(b, -ax)
        x = x + solve(r + e)
    return x
