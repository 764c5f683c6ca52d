"""Markov chain stock model for a single stock.

The dividend evolves as D(k+1) = G(k+1) D(k) where G is a finite Markov
chain on gross growth factors. The fundamental price in state i is
d * psi1[i] and its second moment d**2 * psi2[i]; both ratio vectors
solve small linear systems:

    (r I - P diag(g)) psi1 = P g
    (r^2 I - P diag(g^2)) psi2 = P (g^2 + 2 psi1 * g^2)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import (
    MarkovGrowthModel,
    PriceDividendSolution,
    solve_linear_system,
)
from .errors import StateOutOfRange, TransversalityViolated

# psi2 - psi1**2 cancels catastrophically when the variance is ~0; differences
# within this relative band of psi2 are rounding.
VARIANCE_RTOL = 1e-12


@dataclass(frozen=True)
class TransversalityReport:
    g_bar: float
    g_bar2: float
    a1_holds: bool
    a2_holds: bool
    r: float

    def as_dict(self) -> dict:
        return {"A1": self.a1_holds, "A2": self.a2_holds}


def check_conditions(m: MarkovGrowthModel) -> TransversalityReport:
    """Largest one-step conditional first and second moments of the growth.

    A1 requires g_bar < r and A2 g_bar2 < r**2, both strict.
    """
    g_bar = float(np.max(m.p @ m.g))
    g_bar2 = float(np.max(m.p @ m.g**2))
    return TransversalityReport(g_bar, g_bar2, g_bar < m.r, g_bar2 < m.r**2, m.r)


def _require(report: TransversalityReport, second: bool = False) -> None:
    if not report.a1_holds:
        raise TransversalityViolated("A1", report.g_bar, report.r)
    if second and not report.a2_holds:
        raise TransversalityViolated("A2", report.g_bar2, report.r**2)


def psi1_system(m: MarkovGrowthModel):
    """Matrix and right-hand side of the first-order system."""
    n = len(m)
    return m.r * np.eye(n) - m.p * m.g, m.p @ m.g


def psi2_system(m: MarkovGrowthModel, psi1):
    n = len(m)
    g2 = m.g**2
    return m.r**2 * np.eye(n) - m.p * g2, m.p @ (g2 + 2.0 * np.asarray(psi1) * g2)


def solve_psi1(m: MarkovGrowthModel) -> PriceDividendSolution:
    """First-order price-dividend ratio per growth state.

    Raises
    ------
    TransversalityViolated
        When the largest conditional expected growth is not below ``r``.
    """
    _require(check_conditions(m))
    a, b = psi1_system(m)
    return PriceDividendSolution(solve_linear_system(a, b))


def solve_psi2(m: MarkovGrowthModel, psi1: PriceDividendSolution | None = None) -> PriceDividendSolution:
    """Add the second-order ratio to a first-order solution.

    ``psi1`` is computed when not supplied.
    """
    _require(check_conditions(m), second=True)
    if psi1 is None:
        psi1 = solve_psi1(m)
    a, b = psi2_system(m, psi1.psi1)
    return PriceDividendSolution(psi1.psi1, solve_linear_system(a, b))


class PriceRisk(NamedTuple):
    price: float
    second_moment: float
    variance: float


def price_and_risk(
    m: MarkovGrowthModel,
    current_state: int,
    d: float,
    solution: PriceDividendSolution | None = None,
) -> PriceRisk:
    """Price, second moment and variance given the current state and dividend."""
    if not 0 <= current_state < len(m):
        raise StateOutOfRange(f"state {current_state} not in 0..{len(m) - 1}")
    if solution is None or solution.psi2 is None:
        solution = solve_psi2(m, solution)
    p1 = float(solution.psi1[current_state])
    p2 = float(solution.psi2[current_state])
    return PriceRisk(d * p1, d * d * p2, d * d * variance_ratio(p1, p2))


def variance_ratio(psi1, psi2):
    """psi2 - psi1**2, with rounding-level negatives (a deterministic chain) set to 0."""
    v = np.asarray(psi2, dtype=float) - np.asarray(psi1, dtype=float) ** 2
    noise = VARIANCE_RTOL * np.abs(psi2)
    v = np.where((v < 0) & (v >= -noise), 0.0, v)
    return float(v) if v.ndim == 0 else v
