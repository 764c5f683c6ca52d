"""Parameter estimation from dividend and return histories."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .core import DividendSeries, GrowthStateSpace, TransitionMatrix
from .errors import (
    DegenerateBins,
    DimensionMismatch,
    InsufficientHistory,
    NonConvergent,
    ZeroVarianceMarket,
)


def growth_series(d: DividendSeries | Sequence[float]) -> np.ndarray:
    """Period growth rates (D(t+1) - D(t)) / D(t)."""
    x = np.asarray(d.dividends if isinstance(d, DividendSeries) else d, dtype=float)
    if x.size < 2:
        raise InsufficientHistory("need at least two dividends to compute growth")
    return np.diff(x) / x[:-1]


def discretize_states(growth: Sequence[float], m: int) -> Tuple[GrowthStateSpace, np.ndarray]:
    """Bin growth rates into ``m`` quantile bins.

    Each state is the gross factor 1 + (mean growth in its bin). Values on
    a bin edge go to the lower bin. Returns the state space and the 0-based
    state index of every observation.

    Raises
    ------
    DegenerateBins
        When there are fewer distinct values than bins, or a bin ends up
        empty because of ties.
    """
    x = np.asarray(growth, dtype=float)
    if m < 1:
        raise ValueError("m must be at least 1")
    if x.size < m:
        raise InsufficientHistory(f"{x.size} observations cannot fill {m} states")
    if np.unique(x).size < m:
        raise DegenerateBins(f"{np.unique(x).size} distinct growth values for {m} states")
    edges = np.quantile(x, np.linspace(0.0, 1.0, m + 1))
    idx = np.searchsorted(edges[1:-1], x, side="left")
    counts = np.bincount(idx, minlength=m)
    if np.any(counts == 0):
        raise DegenerateBins(f"empty bins {np.flatnonzero(counts == 0).tolist()} after tie handling")
    means = np.bincount(idx, weights=x, minlength=m) / counts
    return GrowthStateSpace(1.0 + means), idx


def estimate_transition_matrix(indices: Sequence[int], m: int, smoothing: float = 0.0) -> TransitionMatrix:
    """Maximum-likelihood transition matrix from a state path.

    p_ij = (n_ij + s) / (n_i + m s); rows never left are uniform.
    """
    return estimate_cross_transitions(indices, indices, m, smoothing)


def estimate_cross_transitions(
    source: Sequence[int], target: Sequence[int], m: int, smoothing: float = 0.0
) -> TransitionMatrix:
    """Frequencies of target(k+1) = j given source(k) = i."""
    source = np.asarray(source, dtype=int)
    target = np.asarray(target, dtype=int)
    if source.shape != target.shape:
        raise DimensionMismatch("state sequences must be aligned")
    if source.size < 2:
        raise InsufficientHistory("need at least two observations")
    if smoothing < 0:
        raise ValueError("smoothing must be nonnegative")
    counts = np.zeros((m, m))
    np.add.at(counts, (source[:-1], target[1:]), 1.0)
    counts += smoothing
    totals = counts.sum(axis=1, keepdims=True)
    p = np.where(totals > 0, counts / np.where(totals > 0, totals, 1.0), 1.0 / m)
    return TransitionMatrix(p)


@dataclass
class LambdaFit:
    lam: np.ndarray
    objective: List[np.ndarray] = field(default_factory=list)
    iterations: List[int] = field(default_factory=list)


def _simplex_qp(h: np.ndarray, c: np.ndarray, tol: float, max_iter: int):
    """Minimise x'Hx - 2c'x over the probability simplex.

    Pairwise coordinate descent: each move shifts mass between two
    coordinates with an exact, clipped line search, so the iterate stays
    feasible and the objective never increases.
    """
    n = len(c)
    x = np.full(n, 1.0 / n)
    f = x @ h @ x - 2 * c @ x
    history = [f]
    for it in range(1, max_iter + 1):
        f_start = f
        for i, j in itertools.combinations(range(n), 2):
            grad = 2.0 * (h @ x - c)
            slope = grad[i] - grad[j]
            curv = 2.0 * (h[i, i] + h[j, j] - 2.0 * h[i, j])
            if curv > 0:
                t = -slope / curv
            else:
                t = -np.inf if slope > 0 else np.inf
            t = float(np.clip(t, -x[i], x[j]))
            if t == 0.0:
                continue
            x_new = x.copy()
            x_new[i] += t
            x_new[j] -= t
            f_new = x_new @ h @ x_new - 2 * c @ x_new
            if f_new <= f:
                x, f = x_new, f_new
            history.append(f)
        if f_start - f < tol:
            return x, history, it
    raise NonConvergent(f"lambda estimation did not converge in {max_iter} iterations")


def estimate_lambda(
    sequences: Sequence[Sequence[int]],
    cross,
    m: int | None = None,
    tol: float = 1e-10,
    max_iter: int = 100_000,
) -> LambdaFit:
    """Mixture weights of the multivariate Markov model.

    For each destination stock alpha, picks the weight column on the simplex
    minimising the mean squared error between the observed next-state
    indicator of alpha and the mixture prediction
    sum_beta lambda[beta, alpha] * cross[beta][alpha][a_beta(k), :].

    ``cross[beta][alpha]`` are (m, m) matrices, e.g. from
    :func:`estimate_cross_transitions`.
    """
    seqs = [np.asarray(s, dtype=int) for s in sequences]
    gamma = len(seqs)
    if gamma < 1 or any(s.shape != seqs[0].shape for s in seqs):
        raise DimensionMismatch("need aligned state sequences")
    if seqs[0].size < 2:
        raise InsufficientHistory("need at least two aligned observations")
    kern = [[np.asarray(getattr(p, "p", p), dtype=float) for p in row] for row in cross]
    if m is None:
        m = kern[0][0].shape[0]
    lam = np.zeros((gamma, gamma))
    fit = LambdaFit(lam)
    n = seqs[0].size - 1
    for a in range(gamma):
        y = np.eye(m)[seqs[a][1:]]                       # (n, m)
        x = np.stack([kern[b][a][seqs[b][:-1]] for b in range(gamma)])  # (gamma, n, m)
        h = np.einsum("bkj,ckj->bc", x, x) / n
        c = np.einsum("bkj,kj->b", x, y) / n
        if gamma == 1:
            col, hist, it = np.ones(1), [float(h[0, 0] - 2 * c[0])], 0
        else:
            col, hist, it = _simplex_qp(h, c, tol, max_iter)
        lam[:, a] = col
        fit.objective.append(np.asarray(hist))
        fit.iterations.append(it)
    return fit


@dataclass(frozen=True)
class CapmInputs:
    stock_returns: np.ndarray
    market_returns: np.ndarray
    risk_free: np.ndarray | float = 0.0

    def __post_init__(self):
        s = np.asarray(self.stock_returns, dtype=float)
        mkt = np.asarray(self.market_returns, dtype=float)
        if s.shape != mkt.shape or s.ndim != 1:
            raise DimensionMismatch("stock and market returns must be equal-length series")
        if s.size < 8:
            raise InsufficientHistory(f"CAPM regression needs at least 8 periods, got {s.size}")
        rf = np.broadcast_to(np.asarray(self.risk_free, dtype=float), s.shape)
        object.__setattr__(self, "stock_returns", s)
        object.__setattr__(self, "market_returns", mkt)
        object.__setattr__(self, "risk_free", np.array(rf))


@dataclass(frozen=True)
class CapmEstimate:
    beta: float
    alpha: float
    k_e: float


def capm_cost_of_equity(c: CapmInputs) -> CapmEstimate:
    """OLS beta of stock excess returns on market excess returns.

    k_e = mean(R_f) + beta (mean(R_m) - mean(R_f)), in the period units of
    the inputs.
    """
    z_i = c.stock_returns - c.risk_free
    z_m = c.market_returns - c.risk_free
    zm_c = z_m - z_m.mean()
    var = zm_c @ zm_c
    if var <= 1e-300 or np.allclose(zm_c, 0.0, atol=1e-15):
        raise ZeroVarianceMarket("market excess returns have zero variance")
    beta = float(zm_c @ (z_i - z_i.mean()) / var)
    alpha = float(z_i.mean() - beta * z_m.mean())
    rf = float(c.risk_free.mean())
    return CapmEstimate(beta, alpha, rf + beta * (float(c.market_returns.mean()) - rf))
