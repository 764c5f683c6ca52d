"""Shared domain types and small dense numerical kernels."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    NotStochastic,
    SingularMatrix,
)

PIVOT_TOL = 1e-14
ROW_SUM_TOL = 1e-12
RENORMALIZE_TOL = 1e-9
MAX_UNKNOWNS = 4096


def _frozen(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


def solve_linear_system(a, b) -> np.ndarray:
    """Solve ``a @ x = b`` by Gaussian elimination with partial pivoting.

    Parameters
    ----------
    a : (n, n) array_like
    b : (n,) array_like

    Returns
    -------
    x : (n,) ndarray

    Raises
    ------
    SingularMatrix
        If a pivot smaller than ``PIVOT_TOL`` in magnitude is met.
    """
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"matrix must be square, got shape {a.shape}")
    n = a.shape[0]
    if b.shape != (n,):
        raise DimensionMismatch(f"rhs has shape {b.shape}, expected ({n},)")

    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if abs(a[p, k]) < PIVOT_TOL:
            raise SingularMatrix(f"pivot {a[p, k]:.3e} in column {k}")
        if p != k:
            a[[k, p]] = a[[p, k]]
            b[[k, p]] = b[[p, k]]
        if k + 1 < n:
            lam = a[k + 1:, k] / a[k, k]
            a[k + 1:, k:] -= np.outer(lam, a[k, k:])
            b[k + 1:] -= lam * b[k]

    x = np.empty(n)
    for k in range(n - 1, -1, -1):
        x[k] = (b[k] - a[k, k + 1:] @ x[k + 1:]) / a[k, k]
    return x


def residual_norm(a, x, b) -> float:
    """Max-norm of ``a @ x - b``."""
    return float(np.max(np.abs(np.asarray(a) @ np.asarray(x) - np.asarray(b)), initial=0.0))


def matrix_power_apply(a, v, n: int) -> np.ndarray:
    """Return ``a**n @ v`` by ``n`` successive matrix-vector products."""
    a = np.asarray(a, dtype=float)
    v = np.array(v, dtype=float)
    if n < 0:
        raise ValueError("n must be nonnegative")
    if a.shape[1] != v.shape[0]:
        raise DimensionMismatch(f"{a.shape} @ {v.shape}")
    for _ in range(n):
        v = a @ v
    return v


@dataclass(frozen=True)
class StochasticDiagnostics:
    max_deviation: float


def validate_stochastic(p) -> StochasticDiagnostics:
    """Check that every row of ``p`` is a probability vector.

    Rows must sum to one within ``ROW_SUM_TOL`` and all entries must lie
    in [0, 1]. Raises :class:`NotStochastic` naming the offending rows.
    """
    p = np.asarray(p.p if isinstance(p, TransitionMatrix) else p, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise DimensionMismatch(f"transition matrix must be square, got {p.shape}")
    dev = np.abs(p.sum(axis=1) - 1.0)
    bad = (dev > ROW_SUM_TOL) | np.any((p < 0.0) | (p > 1.0), axis=1)
    max_dev = float(dev.max(initial=0.0))
    if bad.any():
        raise NotStochastic(np.flatnonzero(bad).tolist(), max_dev)
    return StochasticDiagnostics(max_dev)


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DividendSeries:
    """Dated per-share cash dividends of one stock, oldest first."""

    ticker: str
    dates: tuple
    dividends: np.ndarray

    def __post_init__(self):
        dates = tuple(self.dates)
        divs = _frozen(self.dividends)
        if len(dates) < 1 or len(dates) != len(divs):
            raise ValueError("need at least one (date, dividend) observation")
        if any(not isinstance(d, dt.date) for d in dates):
            raise TypeError("dates must be datetime.date instances")
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise ValueError("dates must be strictly increasing")
        if np.any(divs <= 0):
            raise ValueError("dividends must be positive")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "dividends", divs)

    def __len__(self):
        return len(self.dates)

    @property
    def last(self) -> float:
        return float(self.dividends[-1])


@dataclass(frozen=True)
class DiscountRate:
    """Required rate of return ``k_e``; ``r`` is the gross factor ``1 + k_e``."""

    k_e: float

    def __post_init__(self):
        if not self.k_e > 0:
            raise ValueError(f"k_e must be positive, got {self.k_e}")

    @property
    def r(self) -> float:
        return 1.0 + self.k_e


@dataclass(frozen=True)
class GrowthStateSpace:
    """Gross dividend growth factors, strictly increasing."""

    factors: np.ndarray

    def __post_init__(self):
        f = _frozen(np.atleast_1d(self.factors))
        if f.ndim != 1 or f.size < 1:
            raise ValueError("need at least one growth state")
        if np.any(f <= 0):
            raise ValueError("growth factors must be positive")
        if np.any(np.diff(f) <= 0):
            raise ValueError("growth factors must be strictly increasing")
        object.__setattr__(self, "factors", f)

    def __len__(self):
        return self.factors.size

    def nearest(self, factor: float) -> int:
        return int(np.argmin(np.abs(self.factors - factor)))


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic matrix.

    Rows off by less than ``RENORMALIZE_TOL`` (estimation rounding) are
    rescaled; anything worse is rejected.
    """

    p: np.ndarray
    max_deviation: float = field(default=0.0, compare=False)

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise DimensionMismatch(f"transition matrix must be square, got {p.shape}")
        if np.any((p < 0.0) | (p > 1.0)):
            bad = np.flatnonzero(np.any((p < 0.0) | (p > 1.0), axis=1))
            raise NotStochastic(bad.tolist())
        dev = np.abs(p.sum(axis=1) - 1.0)
        if np.any(dev >= RENORMALIZE_TOL):
            raise NotStochastic(np.flatnonzero(dev >= RENORMALIZE_TOL).tolist(), float(dev.max()))
        if np.any(dev > ROW_SUM_TOL):
            p = p / p.sum(axis=1, keepdims=True)
        object.__setattr__(self, "p", _frozen(p))
        object.__setattr__(self, "max_deviation", float(dev.max()))

    def __len__(self):
        return self.p.shape[0]


@dataclass(frozen=True)
class MarkovGrowthModel:
    """Dividend growth factor driven by a finite Markov chain."""

    states: GrowthStateSpace
    transition: TransitionMatrix
    discount: DiscountRate

    def __post_init__(self):
        if len(self.states) != len(self.transition):
            raise DimensionMismatch(
                f"{len(self.states)} states but {len(self.transition)}x{len(self.transition)} matrix"
            )

    @classmethod
    def build(cls, factors, p, k_e: float) -> "MarkovGrowthModel":
        """Build from raw arrays; unsorted factors are put in canonical order
        with the matrix permuted to match."""
        factors = np.asarray(factors, dtype=float)
        p = np.asarray(p, dtype=float)
        if p.shape != (factors.size, factors.size):
            raise DimensionMismatch(f"{factors.size} states but transition matrix of shape {p.shape}")
        order = np.argsort(factors, kind="stable")
        return cls(
            GrowthStateSpace(factors[order]),
            TransitionMatrix(p[np.ix_(order, order)]),
            DiscountRate(k_e),
        )

    @property
    def g(self) -> np.ndarray:
        return self.states.factors

    @property
    def p(self) -> np.ndarray:
        return self.transition.p

    @property
    def r(self) -> float:
        return self.discount.r

    def __len__(self):
        return len(self.states)


@dataclass(frozen=True)
class PriceDividendSolution:
    """First- and (optionally) second-order price-dividend ratios per state."""

    psi1: np.ndarray
    psi2: Optional[np.ndarray] = None

    def __post_init__(self):
        psi1 = _frozen(self.psi1)
        if np.any(psi1 < 0):
            raise ValueError("psi1 must be nonnegative")
        object.__setattr__(self, "psi1", psi1)
        if self.psi2 is not None:
            psi2 = _frozen(self.psi2)
            if psi2.shape != psi1.shape:
                raise DimensionMismatch("psi1 and psi2 lengths differ")
            # Jensen: E[S^2] >= E[S]^2, up to rounding in the two solves
            if np.any(psi2 < psi1**2 * (1.0 - 1e-9) - 1e-12):
                raise ValueError("psi2 < psi1**2: second moment below squared mean")
            object.__setattr__(self, "psi2", psi2)


def as_vector(x: Sequence[float], n: int, name: str) -> np.ndarray:
    out = np.asarray(x, dtype=float)
    if out.shape != (n,):
        raise DimensionMismatch(f"{name} has shape {out.shape}, expected ({n},)")
    return out
