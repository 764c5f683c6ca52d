"""Independent verification engines.

* truncated deterministic series (the closed forms' oracle),
* Monte Carlo simulation of discounted dividend sums for every stochastic
  dividend process in the package,
* the Donaldson-Kamstra joint growth/discount simulation.

Randomness is counter-based: paths are grouped in fixed blocks of
``BLOCK`` and block ``b`` draws from ``Philox(key=(seed, b))``. A path's
draws therefore depend only on (seed, path index), never on the number of
workers or the total path count. Per-path results are merged with
``math.fsum`` so summation order cannot leak into the estimates.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import singledispatch
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .binomial import (
    BinomialAdditiveParams,
    BinomialGeometricParams,
    GeneralizedOutcomes,
    TrinomialParams,
)
from .core import MarkovGrowthModel, matrix_power_apply
from .errors import HorizonTooShort, StateOutOfRange, TransversalityViolated
from .markov import check_conditions
from .mtd import JointState, MtdModel, check_multi_conditions

BLOCK = 4096
MAX_HORIZON = 1_000_000


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo settings. ``horizon=None`` picks the shortest horizon whose
    geometric tail bound is below ``tail_tolerance``."""

    paths: int = 100_000
    horizon: Optional[int] = None
    seed: int = 0
    tail_tolerance: float = 1e-8
    workers: int = 1

    def __post_init__(self):
        if self.paths < 1:
            raise ValueError("paths must be positive")
        if self.horizon is not None and self.horizon < 1:
            raise ValueError("horizon must be positive")


def block_rng(seed: int, block: int) -> np.random.Generator:
    key = np.array([seed % 2**64, block], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _run_blocks(paths: int, seed: int, workers: int, fn: Callable) -> np.ndarray:
    """Evaluate ``fn(rng)`` -> (BLOCK, ...) per block and stack the first ``paths`` rows."""
    n_blocks = -(-paths // BLOCK)
    work = lambda b: fn(block_rng(seed, b))
    if workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(work, range(n_blocks)))
    else:
        parts = [work(b) for b in range(n_blocks)]
    return np.concatenate(parts)[:paths]


def _mean(x: np.ndarray) -> float:
    return math.fsum(x) / len(x)


def _mean_se(x: np.ndarray):
    n = len(x)
    mu = _mean(x)
    var = math.fsum((x - mu) ** 2) / (n - 1) if n > 1 else 0.0
    return mu, var, math.sqrt(var / n)


def _draw(cum_cols: np.ndarray, rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Categorical draw: count of cumulative thresholds ``<= u`` in each row.

    ``cum_cols[j]`` holds column j of the cumulative table (last column
    dropped); one small gather per column beats a (B, m) fancy index.
    """
    out = np.zeros(len(u), dtype=np.intp)
    for col in cum_cols:
        out += u >= col.take(rows)
    return out


def geometric_tail(ratio: float, scale: float = 1.0) -> Callable[[int], float]:
    """Tail bound scale * sum_{i>H} ratio**i."""
    if ratio >= 1:
        return lambda h: math.inf
    return lambda h: scale * ratio ** (h + 1) / (1 - ratio)


def _pick_horizon(cfg: SimConfig, default_tail: Callable[[int], float], mean_tail: Callable[[int], float]):
    """Horizon (explicit, or smallest with ``default_tail`` below tolerance)
    and the tail bound of the mean there."""
    tol = cfg.tail_tolerance
    h = cfg.horizon
    if h is None:
        if default_tail(MAX_HORIZON) >= tol:
            raise HorizonTooShort(f"no horizon up to {MAX_HORIZON} brings the tail below {tol:.1e}")
        lo, hi = 0, 1
        while default_tail(hi) >= tol:
            lo, hi = hi, min(2 * hi, MAX_HORIZON)
        while hi - lo > 1:
            mid = (lo + hi) // 2
            lo, hi = (mid, hi) if default_tail(mid) >= tol else (lo, mid)
        h = hi
    tail = mean_tail(h)
    if tail > tol:
        raise HorizonTooShort(f"tail bound {tail:.3e} at horizon {h} exceeds {tol:.1e}")
    return h, tail


# ---------------------------------------------------------------------------
# Deterministic oracles
# ---------------------------------------------------------------------------


def additive_tail(d0: float, step: float, r: float) -> Callable[[int], float]:
    """Tail bound sum_{i>H} (d0 + i step) / r**i."""
    x = 1.0 / r

    def tail(h):
        head = x ** (h + 1)
        return d0 * head / (1 - x) + step * head * ((h + 1) - h * x) / (1 - x) ** 2

    return tail


def truncated_ddm(dividend_at: Callable[[int], float], rate_at: Callable[[int], float], horizon: int) -> float:
    """sum_{i=1..H} D(i) / prod_{j=1..i} (1 + k(j)), term by term."""
    terms = []
    factor = 1.0
    for i in range(1, horizon + 1):
        factor *= 1.0 + rate_at(i)
        terms.append(dividend_at(i) / factor)
    return math.fsum(terms)


class TruncatedSeries(NamedTuple):
    values: np.ndarray
    tail_bound: float
    horizon: int


def truncated_psi1_series(m: MarkovGrowthModel, n: int, enforce: bool = True) -> TruncatedSeries:
    """Partial sums sum_{i=1..n} r^-i (P diag(g))^i 1 of the price-dividend ratio.

    ``enforce=False`` evaluates the partial sums even when the series
    diverges; the tail bound is then infinite.
    """
    rep = check_conditions(m)
    if enforce and not rep.a1_holds:
        raise TransversalityViolated("A1", rep.g_bar, rep.r)
    step = m.p * m.g / m.r
    v = np.ones(len(m))
    total = np.zeros(len(m))
    for _ in range(n):
        v = matrix_power_apply(step, v, 1)
        total += v
    ratio = rep.g_bar / rep.r
    tail = ratio ** (n + 1) / (1 - ratio) if ratio < 1 else math.inf
    return TruncatedSeries(total, tail, n)


# ---------------------------------------------------------------------------
# Stochastic dividend processes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DividendStepProcess:
    """I.i.d. per-period dividend moves.

    ``values`` are additive steps or growth rates; the residual probability
    leaves the dividend unchanged and ``q_b`` is absorbing bankruptcy.
    """

    d0: float
    k_e: float
    values: tuple
    probs: tuple
    q_b: float = 0.0
    additive: bool = False

    @classmethod
    def hurley_additive(cls, p: BinomialAdditiveParams):
        return cls(p.d0, p.k_e, (p.delta,), (p.q,), p.q_b, True)

    @classmethod
    def hurley_geometric(cls, p: BinomialGeometricParams):
        return cls(p.d0, p.k_e, (p.g,), (p.q,), p.q_b, False)

    @classmethod
    def general(cls, d0: float, k_e: float, outcomes: GeneralizedOutcomes, additive: bool):
        return cls(d0, k_e, outcomes.values, outcomes.probs, 0.0, additive)

    @classmethod
    def yao(cls, p: TrinomialParams, additive: bool):
        return cls(p.d0, p.k_e, (p.step, -p.step), (p.q_u, p.q_d), 0.0, additive)

    @property
    def cumulative(self) -> np.ndarray:
        probs = list(self.probs) + [max(0.0, 1.0 - sum(self.probs) - self.q_b), self.q_b]
        cum = np.cumsum(probs)
        cum[-1] = 1.0
        return cum


class SimResult(NamedTuple):
    mean: float
    variance: float
    std_error: float
    second_moment: float
    second_moment_se: float
    paths: int
    horizon: int
    tail_bound: float
    floor_hits: int
    samples: np.ndarray


def _summarize(samples: np.ndarray, horizon: int, tail: float, floor_hits: int = 0) -> SimResult:
    mu, var, se = _mean_se(samples)
    m2, _, se2 = _mean_se(samples**2)
    return SimResult(mu, var, se, m2, se2, len(samples), horizon, tail, floor_hits, samples)


@singledispatch
def simulate_dividend_paths(model, *args, **kwargs):
    """Simulate discounted dividend sums sum_{i=1..H} D(i) / r^i.

    Dispatches on the model: :class:`MarkovGrowthModel` (``state``, ``d``),
    :class:`DividendStepProcess`, or :class:`MtdModel` (``state``, ``d``).
    """
    raise TypeError(f"no simulator for {type(model).__name__}")


@simulate_dividend_paths.register
def simulate_markov(model: MarkovGrowthModel, state: int, d: float = 1.0, cfg: SimConfig = SimConfig()) -> SimResult:
    if not 0 <= state < len(model):
        raise StateOutOfRange(f"state {state} not in 0..{len(model) - 1}")
    rep = check_conditions(model)
    mean_ratio = rep.g_bar / rep.r
    # sqrt(g_bar2)/r also bounds the tail of the second moment
    ratio = max(mean_ratio, math.sqrt(rep.g_bar2) / rep.r) if rep.a2_holds else mean_ratio
    h, tail = _pick_horizon(cfg, geometric_tail(ratio, d), geometric_tail(mean_ratio, d))
    cum_cols = np.ascontiguousarray(np.cumsum(model.p, axis=1)[:, :-1].T)
    g = model.g
    r = model.r

    def block(rng):
        s = np.full(BLOCK, state)
        div = np.full(BLOCK, float(d))
        total = np.zeros(BLOCK)
        disc = 1.0
        for _ in range(h):
            u = rng.random(BLOCK)
            s = _draw(cum_cols, s, u)
            div *= g[s]
            disc /= r
            total += div * disc
        return total

    return _summarize(_run_blocks(cfg.paths, cfg.seed, cfg.workers, block), h, tail)


@simulate_dividend_paths.register
def simulate_steps(process: DividendStepProcess, cfg: SimConfig = SimConfig()) -> SimResult:
    values = np.asarray(process.values, dtype=float)
    probs = np.asarray(process.probs, dtype=float)
    r = 1.0 + process.k_e
    drift = float(values @ probs)
    if process.additive:
        up = float(np.maximum(values, 0.0) @ probs)
        mean_tail = additive_tail(process.d0, up, r)
        # second moment: E[D_i^2] <= (d0 + i max|step|)^2
        default_tail = additive_tail(process.d0, float(np.abs(values).max()), r)
    else:
        mean_tail = geometric_tail((1.0 + drift - process.q_b) / r, process.d0)
        m2 = float(((1.0 + values) ** 2) @ probs) + (1.0 - probs.sum() - process.q_b)
        default_tail = geometric_tail(max(math.sqrt(m2), 1.0 + drift - process.q_b) / r, process.d0)
    h, tail = _pick_horizon(cfg, default_tail, mean_tail)
    cum = process.cumulative
    n_out = len(values)
    step = np.concatenate([values, [0.0, 0.0]])

    def block(rng):
        div = np.full(BLOCK, float(process.d0))
        alive = np.ones(BLOCK, dtype=bool)
        total = np.zeros(BLOCK)
        floored = np.zeros(BLOCK, dtype=bool)
        disc = 1.0
        for _ in range(h):
            k = np.searchsorted(cum, rng.random(BLOCK), side="right")
            alive &= k != n_out + 1
            if process.additive:
                div = div + step[k]
                floored |= div < 0
                div = np.maximum(div, 0.0)
            else:
                div = div * (1.0 + step[k])
            div = np.where(alive, div, 0.0)
            disc /= r
            total += div * disc
        return np.stack([total, floored], axis=1)

    out = _run_blocks(cfg.paths, cfg.seed, cfg.workers, block)
    return _summarize(out[:, 0].copy(), h, tail, int(out[:, 1].sum()))


class MtdSimResult(NamedTuple):
    means: np.ndarray
    mean_se: np.ndarray
    cross_moments: np.ndarray
    cross_se: np.ndarray
    covariance: np.ndarray
    covariance_se: np.ndarray
    paths: int
    horizon: int
    samples: np.ndarray


@simulate_dividend_paths.register
def simulate_mtd(model: MtdModel, state: JointState, d: Sequence[float] | None = None,
                 cfg: SimConfig = SimConfig()) -> MtdSimResult:
    state.check(model)
    gamma, m = model.gamma, model.m
    d = np.ones(gamma) if d is None else np.asarray(d, dtype=float)
    reps = check_multi_conditions(model)
    mean_ratio = max(rep.g_bar / rep.r for rep in reps)
    ratio = max(max(math.sqrt(rep.g_bar2) / rep.r for rep in reps), mean_ratio) \
        if all(rep.a2_holds for rep in reps) else mean_ratio
    h, _ = _pick_horizon(cfg, geometric_tail(ratio, float(d.max())), geometric_tail(mean_ratio, float(d.max())))
    lam_cum = np.cumsum(model.lam, axis=0)             # over sources, per destination
    lam_cum[-1, :] = 1.0
    # per destination f: cumulative rows of P^(w,f) stacked over sources w,
    # addressed by w * m + a_w
    ker_cols = [
        np.ascontiguousarray(
            np.concatenate([np.cumsum(model.kernel(w, f), axis=1) for w in range(gamma)])[:, :-1].T
        )
        for f in range(gamma)
    ]
    lam_cols = [lam_cum[:-1, f] for f in range(gamma)]
    g = np.stack([model.g(a) for a in range(gamma)])
    r = np.array([model.r(a) for a in range(gamma)])
    start = np.array(state.indices)
    def block(rng):
        s = np.tile(start, (BLOCK, 1))
        div = np.tile(d, (BLOCK, 1))
        total = np.zeros((BLOCK, gamma))
        disc = np.ones(gamma)
        for _ in range(h):
            u = rng.random((BLOCK, gamma, 2))
            nxt = np.empty_like(s)
            for f in range(gamma):
                # pick the driving stock, then draw from its kernel row
                w = np.zeros(BLOCK, dtype=np.intp)
                for t in lam_cols[f]:
                    w += u[:, f, 0] >= t
                src = np.take_along_axis(s, w[:, None], axis=1)[:, 0]
                nxt[:, f] = _draw(ker_cols[f], w * m + src, u[:, f, 1])
            s = nxt
            div *= g[np.arange(gamma), s]
            disc /= r
            total += div * disc
        return total

    x = _run_blocks(cfg.paths, cfg.seed, cfg.workers, block)
    n = len(x)
    means = np.empty(gamma)
    mean_se = np.empty(gamma)
    cross = np.empty((gamma, gamma))
    cross_se = np.empty((gamma, gamma))
    cov = np.empty((gamma, gamma))
    cov_se = np.empty((gamma, gamma))
    for a in range(gamma):
        means[a], _, mean_se[a] = _mean_se(x[:, a])
    for a in range(gamma):
        for b in range(gamma):
            cross[a, b], _, cross_se[a, b] = _mean_se(x[:, a] * x[:, b])
            c = (x[:, a] - means[a]) * (x[:, b] - means[b])
            mu, _, se = _mean_se(c)
            cov[a, b] = mu * n / (n - 1)
            cov_se[a, b] = se
    return MtdSimResult(means, mean_se, cross, cross_se, cov, cov_se, n, h, x)


# ---------------------------------------------------------------------------
# Donaldson-Kamstra
# ---------------------------------------------------------------------------


class DkResult(NamedTuple):
    mean: float
    std_error: float
    paths: int
    horizon: int
    tail_estimate: float


Sampler = Callable[[np.random.Generator, int, int], np.ndarray]


def dk_simulate(growth_sampler: Sampler, discount_sampler: Sampler, d0: float, cfg: SimConfig,
                strict: bool = False) -> DkResult:
    """Average of D0 sum_{i=0..H-1} prod_{j=0..i} y(j+1), y = (1+g)/(1+k).

    Samplers are called as ``sampler(rng, n, step)`` and return ``n``
    growth (resp. discount) rates for period ``step``. ``cfg.horizon`` is
    the number of terms (default 1000). The tail beyond the horizon is
    extrapolated geometrically from the last two mean terms; ``strict``
    raises :class:`HorizonTooShort` when it exceeds ``cfg.tail_tolerance``.
    """
    h = cfg.horizon or 1000

    def block(rng):
        prod = np.ones(BLOCK)
        prev = np.zeros(BLOCK)
        total = np.zeros(BLOCK)
        for j in range(h):
            g = growth_sampler(rng, BLOCK, j)
            k = discount_sampler(rng, BLOCK, j)
            prev = prod
            prod = prod * (1.0 + g) / (1.0 + k)
            total += prod
        return np.column_stack([d0 * total, d0 * prev, d0 * prod])

    out = _run_blocks(cfg.paths, cfg.seed, cfg.workers, block)
    mu, _, se = _mean_se(out[:, 0])
    prev, final = _mean(out[:, 1]), _mean(out[:, 2])
    ratio = final / prev if prev > 0 else math.inf
    tail = final * ratio / (1 - ratio) if ratio < 1 else math.inf
    if strict and tail > cfg.tail_tolerance:
        raise HorizonTooShort(f"estimated tail {tail:.3e} exceeds {cfg.tail_tolerance:.1e}")
    return DkResult(mu, se, len(out), h, tail)
