"""Multivariate Markov stock model (mixture transition distribution).

Stock ``alpha``'s next growth state is drawn from

    M_alpha(a) = sum_beta lambda[beta, alpha] * P[beta, alpha][a_beta, :]

given the current joint state ``a``, independently across stocks. The
joint chain over all m**gamma combinations therefore has transition

    Q[a, j] = prod_f M_f(a)[j_f]

and every price-dividend ratio is the solution of an m**gamma linear
system on that chain. Joint states are enumerated lexicographically with
stock 0 most significant; indices are 0-based.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import (
    MAX_UNKNOWNS,
    DiscountRate,
    GrowthStateSpace,
    TransitionMatrix,
    _frozen,
    solve_linear_system,
)
from .errors import (
    DimensionMismatch,
    NotStochastic,
    StateOutOfRange,
    SystemTooLarge,
    TransversalityViolated,
)
from .markov import TransversalityReport, variance_ratio

_LAMBDA_TOL = 1e-12


@dataclass(frozen=True)
class MtdModel:
    """gamma stocks sharing a common state count m.

    ``lam[beta, alpha]`` weighs the influence of stock beta on stock alpha;
    every column sums to one. ``cross[beta][alpha]`` is P^(beta, alpha).
    """

    states: tuple
    lam: np.ndarray
    cross: tuple
    discounts: tuple

    def __post_init__(self):
        states = tuple(s if isinstance(s, GrowthStateSpace) else GrowthStateSpace(s) for s in self.states)
        gamma = len(states)
        if gamma < 1:
            raise ValueError("need at least one stock")
        m = len(states[0])
        if any(len(s) != m for s in states):
            raise DimensionMismatch("all stocks must have the same number of growth states")
        lam = _frozen(self.lam)
        if lam.shape != (gamma, gamma):
            raise DimensionMismatch(f"lambda must be {gamma}x{gamma}, got {lam.shape}")
        if np.any((lam < 0) | (lam > 1)):
            raise ValueError("lambda entries must lie in [0, 1]")
        col_dev = np.abs(lam.sum(axis=0) - 1.0)
        if np.any(col_dev > _LAMBDA_TOL):
            raise NotStochastic(np.flatnonzero(col_dev > _LAMBDA_TOL).tolist(), float(col_dev.max()))
        if len(self.cross) != gamma or any(len(row) != gamma for row in self.cross):
            raise DimensionMismatch(f"need a {gamma}x{gamma} array of transition matrices")
        cross = tuple(
            tuple(p if isinstance(p, TransitionMatrix) else TransitionMatrix(p) for p in row)
            for row in self.cross
        )
        if any(len(p) != m for row in cross for p in row):
            raise DimensionMismatch(f"transition matrices must be {m}x{m}")
        discounts = tuple(d if isinstance(d, DiscountRate) else DiscountRate(d) for d in self.discounts)
        if len(discounts) != gamma:
            raise DimensionMismatch(f"need {gamma} discount rates")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "cross", cross)
        object.__setattr__(self, "discounts", discounts)

    @property
    def gamma(self) -> int:
        return len(self.states)

    @property
    def m(self) -> int:
        return len(self.states[0])

    @property
    def n_joint(self) -> int:
        return self.m**self.gamma

    def g(self, alpha: int) -> np.ndarray:
        return self.states[alpha].factors

    def r(self, alpha: int) -> float:
        return self.discounts[alpha].r

    def kernel(self, beta: int, alpha: int) -> np.ndarray:
        return self.cross[beta][alpha].p


@dataclass(frozen=True)
class JointState:
    indices: tuple

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))

    def check(self, model: MtdModel) -> None:
        if len(self.indices) != model.gamma:
            raise DimensionMismatch(f"{self.indices} has {len(self.indices)} entries for {model.gamma} stocks")
        if any(not 0 <= i < model.m for i in self.indices):
            raise StateOutOfRange(f"{self.indices} is not a joint state of a {model.gamma}-stock, {model.m}-state model")

    def flat(self, model: MtdModel) -> int:
        self.check(model)
        out = 0
        for i in self.indices:
            out = out * model.m + i
        return out


def joint_states(m: int, gamma: int) -> List[Tuple[int, ...]]:
    """All joint states in lexicographic order."""
    return list(itertools.product(range(m), repeat=gamma))


def _check_size(model: MtdModel, cap: int) -> None:
    if model.n_joint > cap:
        raise SystemTooLarge(
            f"{model.m}**{model.gamma} = {model.n_joint} joint states exceeds the cap of {cap}; "
            "use Monte Carlo estimation instead"
        )


def mixture_rows(model: MtdModel) -> np.ndarray:
    """M[a, f, :] = next-state distribution of stock f from joint state a."""
    states = np.array(joint_states(model.m, model.gamma), dtype=int).reshape(-1, model.gamma)
    out = np.zeros((len(states), model.gamma, model.m))
    for f in range(model.gamma):
        for w in range(model.gamma):
            out[:, f, :] += model.lam[w, f] * model.kernel(w, f)[states[:, w]]
    return out


def joint_transition(model: MtdModel, cap: int = MAX_UNKNOWNS) -> np.ndarray:
    """Dense m**gamma x m**gamma transition matrix of the joint chain."""
    _check_size(model, cap)
    mix = mixture_rows(model)
    q = mix[:, 0, :]
    for f in range(1, model.gamma):
        q = (q[:, :, None] * mix[:, f, None, :]).reshape(len(q), -1)
    return q


def joint_growth(model: MtdModel, alpha: int) -> np.ndarray:
    """Growth factor of stock ``alpha`` at every joint state."""
    idx = np.array(joint_states(model.m, model.gamma), dtype=int).reshape(-1, model.gamma)[:, alpha]
    return model.g(alpha)[idx]


def mtd_step(model: MtdModel, dist: Sequence) -> List[np.ndarray]:
    """Advance the per-stock state distributions by one period."""
    dist = [np.asarray(a, dtype=float) for a in dist]
    if len(dist) != model.gamma or any(a.shape != (model.m,) for a in dist):
        raise DimensionMismatch(f"need {model.gamma} distributions of length {model.m}")
    return [
        sum(model.lam[b, a] * (dist[b] @ model.kernel(b, a)) for b in range(model.gamma))
        for a in range(model.gamma)
    ]


def check_multi_conditions(model: MtdModel) -> List[TransversalityReport]:
    """Per-stock transversality reports.

    The maximum over joint unit-vector configurations separates over the
    source stocks, so it is computed as sum_beta lambda * max_h (P g)_h.
    """
    reports = []
    for a in range(model.gamma):
        g = model.g(a)
        g1 = sum(model.lam[b, a] * np.max(model.kernel(b, a) @ g) for b in range(model.gamma))
        g2 = sum(model.lam[b, a] * np.max(model.kernel(b, a) @ g**2) for b in range(model.gamma))
        r = model.r(a)
        reports.append(TransversalityReport(float(g1), float(g2), g1 < r, g2 < r * r, r))
    return reports


@dataclass(frozen=True)
class JointSolution:
    """Ratios per stock over the flattened joint states.

    psi1, psi2 have shape (gamma, m**gamma); psi2_cross has shape
    (gamma, gamma, m**gamma) with NaN for pairs not yet computed.
    """

    psi1: np.ndarray
    psi2: Optional[np.ndarray] = None
    psi2_cross: Optional[np.ndarray] = None
    residual: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "psi1", _frozen(self.psi1))
        if np.any(self.psi1 < 0):
            raise ValueError("psi1 must be nonnegative")
        if self.psi2 is not None:
            psi2 = _frozen(self.psi2)
            if np.any(psi2 < self.psi1**2 * (1.0 - 1e-9) - 1e-12):
                raise ValueError("psi2 < psi1**2")
            object.__setattr__(self, "psi2", psi2)
        if self.psi2_cross is not None:
            object.__setattr__(self, "psi2_cross", _frozen(self.psi2_cross))


def _require(reports, alphas, second):
    for a in alphas:
        rep = reports[a]
        if not rep.a1_holds:
            raise TransversalityViolated(f"A1[stock {a}]", rep.g_bar, rep.r)
        if second and not rep.a2_holds:
            raise TransversalityViolated(f"A2[stock {a}]", rep.g_bar2, rep.r**2)


def _solve_all(systems, workers: int):
    if workers > 1 and len(systems) > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(lambda ab: solve_linear_system(*ab), systems))
    return [solve_linear_system(a, b) for a, b in systems]


def _max_residual(systems, xs) -> float:
    return max(float(np.max(np.abs(a @ x - b))) for (a, b), x in zip(systems, xs))


def solve_joint_psi1(model: MtdModel, cap: int = MAX_UNKNOWNS, workers: int = 1) -> JointSolution:
    """First-order ratios of every stock at every joint state."""
    _check_size(model, cap)
    _require(check_multi_conditions(model), range(model.gamma), second=False)
    q = joint_transition(model, cap)
    n = model.n_joint
    systems = []
    for a in range(model.gamma):
        g = joint_growth(model, a)
        systems.append((model.r(a) * np.eye(n) - q * g, q @ g))
    xs = _solve_all(systems, workers)
    return JointSolution(np.array(xs), residual=_max_residual(systems, xs))


def solve_joint_psi2(
    model: MtdModel, s: JointSolution | None = None, cap: int = MAX_UNKNOWNS, workers: int = 1
) -> JointSolution:
    """Second-order ratios; ``s`` supplies psi1 (computed when omitted)."""
    _check_size(model, cap)
    _require(check_multi_conditions(model), range(model.gamma), second=True)
    if s is None:
        s = solve_joint_psi1(model, cap, workers)
    q = joint_transition(model, cap)
    n = model.n_joint
    systems = []
    for a in range(model.gamma):
        g2 = joint_growth(model, a) ** 2
        systems.append((model.r(a) ** 2 * np.eye(n) - q * g2, q @ (g2 + 2.0 * s.psi1[a] * g2)))
    xs = _solve_all(systems, workers)
    psi2 = np.array(xs)
    cross = np.full((model.gamma, model.gamma, n), np.nan)
    if s.psi2_cross is not None:
        cross[:] = s.psi2_cross
    for a in range(model.gamma):
        cross[a, a] = psi2[a]
    return JointSolution(s.psi1, psi2, cross, max(s.residual, _max_residual(systems, xs)))


def price_product_system(model: MtdModel, psi1: np.ndarray, alpha: int, beta: int, q=None):
    """Linear system for the product ratio of stocks alpha and beta.

    With S = sum_i D(i)/r^i per unit dividend and S = (G/r)(1 + S'),

        r_a r_b psi(a) = sum_j Q[a,j] g_a(j) g_b(j) (1 + psi1_a(j) + psi1_b(j) + psi(j)).
    """
    if q is None:
        q = joint_transition(model)
    gg = joint_growth(model, alpha) * joint_growth(model, beta)
    n = model.n_joint
    a = model.r(alpha) * model.r(beta) * np.eye(n) - q * gg
    b = q @ (gg * (1.0 + psi1[alpha] + psi1[beta]))
    return a, b


def solve_price_product(
    model: MtdModel, s: JointSolution, alpha: int, beta: int, cap: int = MAX_UNKNOWNS
) -> np.ndarray:
    """Product price-dividend ratio of stocks ``alpha`` and ``beta`` per joint state."""
    _check_size(model, cap)
    for x in (alpha, beta):
        if not 0 <= x < model.gamma:
            raise StateOutOfRange(f"stock {x} not in 0..{model.gamma - 1}")
    _require(check_multi_conditions(model), {alpha, beta}, second=True)
    a, b = price_product_system(model, s.psi1, alpha, beta)
    return solve_linear_system(a, b)


def solve_all_products(model: MtdModel, s: JointSolution | None = None, cap: int = MAX_UNKNOWNS,
                       workers: int = 1) -> JointSolution:
    """Fill psi2 and the full symmetric psi2_cross table."""
    if s is None or s.psi2 is None:
        s = solve_joint_psi2(model, s, cap, workers)
    q = joint_transition(model, cap)
    pairs = [(a, b) for a in range(model.gamma) for b in range(a + 1, model.gamma)]
    systems = [price_product_system(model, s.psi1, a, b, q) for a, b in pairs]
    xs = _solve_all(systems, workers)
    cross = np.array(s.psi2_cross)
    for (a, b), x in zip(pairs, xs):
        cross[a, b] = x
        cross[b, a] = x
    res = max(s.residual, _max_residual(systems, xs)) if systems else s.residual
    return JointSolution(s.psi1, s.psi2, cross, res)


def covariance(
    model: MtdModel,
    s: JointSolution,
    state: JointState,
    d_alpha: float,
    d_beta: float,
    alpha: int,
    beta: int,
) -> float:
    """Covariance of the two stocks' prices at a joint state."""
    k = state.flat(model)
    if s.psi2_cross is not None and not np.isnan(s.psi2_cross[alpha, beta, k]):
        prod = s.psi2_cross[alpha, beta, k]
    else:
        prod = solve_price_product(model, s, alpha, beta)[k]
    if alpha == beta:
        return float(d_alpha * d_beta * variance_ratio(s.psi1[alpha, k], prod))
    return float(d_alpha * d_beta * (prod - s.psi1[alpha, k] * s.psi1[beta, k]))


def covariance_matrix(model: MtdModel, s: JointSolution, state: JointState, d: Sequence[float]) -> np.ndarray:
    """gamma x gamma price covariance at ``state`` for current dividends ``d``."""
    if s.psi2_cross is None or np.isnan(s.psi2_cross).any():
        s = solve_all_products(model, s)
    k = state.flat(model)
    d = np.asarray(d, dtype=float)
    psi1 = s.psi1[:, k]
    ratio = s.psi2_cross[:, :, k] - np.outer(psi1, psi1)
    np.fill_diagonal(ratio, variance_ratio(psi1, np.diag(s.psi2_cross[:, :, k])))
    return np.outer(d, d) * ratio
