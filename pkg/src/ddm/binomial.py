"""Hurley-Johnson and Yao i.i.d. dividend-step models.

Each period the dividend moves by one of a finite set of outcomes drawn
independently of the past. Additive models move by a fixed amount,
geometric models by a growth rate. Bankruptcy (probability ``q_b``) sends
the dividend to zero for good.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .errors import NonConvergent

_PROB_TOL = 1e-12


def _check_probs(*qs: float) -> None:
    if any(q < 0 for q in qs) or sum(qs) > 1.0 + _PROB_TOL:
        raise ValueError(f"invalid probabilities {qs}")


@dataclass(frozen=True)
class BinomialAdditiveParams:
    d0: float
    delta: float
    q: float
    q_b: float
    k_e: float

    def __post_init__(self):
        _check_probs(self.q, self.q_b)


@dataclass(frozen=True)
class BinomialGeometricParams:
    d0: float
    g: float
    q: float
    q_b: float
    k_e: float

    def __post_init__(self):
        _check_probs(self.q, self.q_b)


@dataclass(frozen=True)
class GeneralizedOutcomes:
    """Outcomes (value_i, q_i); the residual ``q0`` leaves the dividend unchanged."""

    values: tuple
    probs: tuple

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        probs = tuple(float(q) for q in self.probs)
        if len(values) != len(probs) or not values:
            raise ValueError("need matching, non-empty values and probabilities")
        _check_probs(*probs)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def of(cls, pairs: Sequence[Tuple[float, float]]) -> "GeneralizedOutcomes":
        values, probs = zip(*pairs)
        return cls(values, probs)

    @property
    def q0(self) -> float:
        return max(0.0, 1.0 - sum(self.probs))

    @property
    def drift(self) -> float:
        return float(np.dot(self.values, self.probs))


@dataclass(frozen=True)
class TrinomialParams:
    d0: float
    step: float
    q_u: float
    q_d: float
    k_e: float

    def __post_init__(self):
        _check_probs(self.q_u, self.q_d)

    @property
    def q_c(self) -> float:
        return 1.0 - self.q_u - self.q_d


def _additive_value(d0: float, k: float, drift: float) -> float:
    return d0 / k + (1.0 / k + 1.0 / k**2) * drift


def _geometric_value(d0: float, k: float, drift: float) -> float:
    if not drift < k:
        raise NonConvergent(f"expected growth {drift} must be below the discount rate {k}")
    return d0 * (1.0 + drift) / (k - drift)


def hurley_additive(p: BinomialAdditiveParams) -> Tuple[float, float]:
    """Value and bankruptcy lower bound of the additive model.

    value = D0/k + (1/k + 1/k^2) q Delta; the bound replaces k with
    k + q_b and scales D0 by the survival probability.
    """
    value = _additive_value(p.d0, p.k_e, p.q * p.delta)
    kb = p.k_e + p.q_b
    lower = p.d0 * (1.0 - p.q_b) / kb + (1.0 / kb + 1.0 / kb**2) * p.q * p.delta
    return value, lower


def hurley_geometric(p: BinomialGeometricParams) -> Tuple[float, float]:
    """Value and bankruptcy lower bound of the geometric model.

    Both are Gordon prices, with expected growth q g and q g - q_b.
    """
    value = _geometric_value(p.d0, p.k_e, p.q * p.g)
    lower = _geometric_value(p.d0, p.k_e, p.q * p.g - p.q_b)
    return value, lower


def hurley_general_additive(d0: float, k_e: float, outcomes: GeneralizedOutcomes) -> float:
    return _additive_value(d0, k_e, outcomes.drift)


def hurley_general_geometric(d0: float, k_e: float, outcomes: GeneralizedOutcomes) -> float:
    return _geometric_value(d0, k_e, outcomes.drift)


def yao_additive(p: TrinomialParams) -> float:
    """Trinomial additive model: up/down by ``step`` with q_u/q_d."""
    return _additive_value(p.d0, p.k_e, (p.q_u - p.q_d) * p.step)


def yao_geometric(p: TrinomialParams) -> float:
    """Trinomial geometric model: factor (1 +/- step) with q_u/q_d."""
    return _geometric_value(p.d0, p.k_e, (p.q_u - p.q_d) * p.step)
