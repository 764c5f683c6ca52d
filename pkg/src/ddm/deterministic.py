"""Closed-form deterministic dividend discount models.

All growth and discount inputs here are *rates* (0.05 means 5%), unlike
the Markov modules which work with gross factors.

gordon_price       constant growth perpetuity
two_stage_price    constant high growth for n years, then Gordon
h_model_price      linearly declining growth (Fuller-Hsia H model)
three_stage_price  high / declining / stable phases with payout policy
barsky_growth      IMA(1,1) smoothed permanent growth
quarterly_rate     annual to quarterly compounding
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np

from .errors import InsufficientHistory, NonConvergent

# |k_e,h - g_h| below this switches the annuity to direct summation
_ANNUITY_EPS = 1e-12


@dataclass(frozen=True)
class GordonParams:
    d0: float
    g: float
    k_e: float


@dataclass(frozen=True)
class TwoStageParams:
    d0: float
    g_h: float
    k_e_h: float
    n: int
    g_st: float
    k_e_st: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("high-growth phase must last at least one period")


@dataclass(frozen=True)
class HModelParams:
    d0: float
    g_a: float
    g_n: float
    h: float
    k_e: float


@dataclass(frozen=True)
class ThreeStageParams:
    """Inputs of the three-stage model.

    ``decline_dividends`` holds D(t+i) for i = n1+1..n2; use
    :func:`interpolate_decline_dividends` for the usual linear fade of
    growth and payout.
    """

    eps0: float
    pi_a: float
    pi_n: float
    g_a: float
    g_n: float
    n1: int
    n2: int
    k_e_h: float
    k_e_d: float
    k_e_st: float
    decline_dividends: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "decline_dividends", tuple(float(x) for x in self.decline_dividends))
        if not 0 <= self.n1 <= self.n2:
            raise ValueError("need 0 <= n1 <= n2")
        if not (0.0 <= self.pi_a <= 1.0 and 0.0 <= self.pi_n <= 1.0):
            raise ValueError("payout ratios must lie in [0, 1]")
        if len(self.decline_dividends) != self.n2 - self.n1:
            raise ValueError(
                f"expected {self.n2 - self.n1} declining-phase dividends, "
                f"got {len(self.decline_dividends)}"
            )


@dataclass(frozen=True)
class BarskyParams:
    theta: float
    g0: float
    dividend_changes: tuple

    def __post_init__(self):
        if not 0.0 <= self.theta < 1.0:
            raise ValueError("theta must lie in [0, 1)")
        object.__setattr__(self, "dividend_changes", tuple(float(x) for x in self.dividend_changes))


def _check_growth(g: float, k_e: float, what: str = "g") -> None:
    if not g < k_e:
        raise NonConvergent(f"{what}={g} must be below the discount rate {k_e}")


def gordon_price(p: GordonParams) -> float:
    """D0 (1 + g) / (k_e - g)."""
    _check_growth(p.g, p.k_e)
    return p.d0 * (1.0 + p.g) / (p.k_e - p.g)


def _growing_annuity(d0: float, g: float, k: float, n: int) -> float:
    """PV of D0(1+g)^i discounted at (1+k)^i for i = 1..n."""
    if abs(k - g) < _ANNUITY_EPS:
        # removable singularity: every term equals d0
        x = (1.0 + g) / (1.0 + k)
        return d0 * sum(x**i for i in range(1, n + 1))
    return d0 * (1.0 + g) * (1.0 - ((1.0 + g) / (1.0 + k)) ** n) / (k - g)


def two_stage_price(p: TwoStageParams) -> float:
    """High growth ``g_h`` for ``n`` years followed by a Gordon terminal value.

    The terminal value at year n is the Gordon price of D(n) = D0 (1+g_h)^n
    under the stable parameters, discounted back at the high-phase rate.
    """
    _check_growth(p.g_st, p.k_e_st, "g_st")
    annuity = _growing_annuity(p.d0, p.g_h, p.k_e_h, p.n)
    d_n = p.d0 * (1.0 + p.g_h) ** p.n
    terminal = d_n * (1.0 + p.g_st) / (p.k_e_st - p.g_st)
    return annuity + terminal / (1.0 + p.k_e_h) ** p.n


def h_model_price(p: HModelParams) -> float:
    """H-model value.

    Evaluated as D0 (1+g_a)/(k_e-g_n) + D0 H (g_a-g_n)/(k_e-g_n). Note the
    first term grows the current dividend at ``g_a``; the textbook
    Fuller-Hsia form uses ``(1 + g_n)`` there, which is smaller by
    D0 (g_a - g_n)/(k_e - g_n).
    """
    _check_growth(p.g_n, p.k_e, "g_n")
    den = p.k_e - p.g_n
    return p.d0 * (1.0 + p.g_a) / den + p.d0 * p.h * (p.g_a - p.g_n) / den


def interpolate_decline_dividends(
    eps0: float, pi_a: float, pi_n: float, g_a: float, g_n: float, n1: int, n2: int
) -> List[float]:
    """Dividends D(t+i), i = n1+1..n2, with growth and payout fading linearly.

    Earnings grow at g_a through year n1. Over the declining phase growth
    and payout move in equal steps from (g_a, pi_a) to (g_n, pi_n), reaching
    the stable values exactly at n2.
    """
    eps = eps0 * (1.0 + g_a) ** n1
    out = []
    span = n2 - n1
    for i in range(n1 + 1, n2 + 1):
        w = (i - n1) / span
        eps *= 1.0 + g_a + w * (g_n - g_a)
        out.append(eps * (pi_a + w * (pi_n - pi_a)))
    return out


def three_stage_price(p: ThreeStageParams) -> float:
    """Three-stage value: high phase, declining phase, Gordon terminal.

    The high-phase sum runs i = 0..n1 over EPS Pi_a (1+g_a)^i, so the
    current payout is included undiscounted. The terminal dividend base
    EPS(t+n2) Pi_n is the last declining-phase dividend when that phase is
    non-empty, otherwise EPS0 (1+g_a)^n1 Pi_n.
    """
    _check_growth(p.g_n, p.k_e_st, "g_n")
    high = sum(
        p.eps0 * p.pi_a * (1.0 + p.g_a) ** i / (1.0 + p.k_e_h) ** i for i in range(p.n1 + 1)
    )
    middle = sum(
        d / (1.0 + p.k_e_d) ** i
        for i, d in zip(range(p.n1 + 1, p.n2 + 1), p.decline_dividends)
    )
    if p.decline_dividends:
        base = p.decline_dividends[-1]
    else:
        base = p.eps0 * (1.0 + p.g_a) ** p.n1 * p.pi_n
    discount = (1.0 + p.k_e_h) ** p.n1 * (1.0 + p.k_e_d) ** (p.n2 - p.n1)
    terminal = base * (1.0 + p.g_n) / ((p.k_e_st - p.g_n) * discount)
    return high + middle + terminal


def barsky_growth(p: BarskyParams, t: int) -> float:
    """(1-theta) sum_{i=0..t} theta^i dD(t-i) + theta^t g(0)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if len(p.dividend_changes) < t + 1:
        raise InsufficientHistory(
            f"need dividend changes for 0..{t}, have {len(p.dividend_changes)}"
        )
    dd = np.asarray(p.dividend_changes[: t + 1])
    weights = p.theta ** np.arange(t + 1)
    return float((1.0 - p.theta) * (weights @ dd[::-1]) + p.theta**t * p.g0)


def quarterly_rate(k_e: float) -> float:
    """Quarterly rate compounding to the annual ``k_e``: (1+k_e)^(1/4) - 1."""
    if not k_e > -1.0:
        raise ValueError("k_e must exceed -1")
    return (1.0 + k_e) ** 0.25 - 1.0

