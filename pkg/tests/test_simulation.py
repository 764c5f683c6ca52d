import math

import numpy as np
import pytest

from conftest import random_markov
from ddm import MarkovGrowthModel
from ddm.binomial import BinomialGeometricParams
from ddm.deterministic import GordonParams, gordon_price
from ddm.errors import HorizonTooShort, TransversalityViolated
from ddm.markov import solve_psi1
from ddm.mtd import JointState
from ddm.simulation import (
    BLOCK,
    DividendStepProcess,
    SimConfig,
    additive_tail,
    block_rng,
    dk_simulate,
    geometric_tail,
    simulate_dividend_paths,
    truncated_ddm,
    truncated_psi1_series,
)


def const(v):
    return lambda rng, n, step: np.full(n, v)


def test_block_rng_is_keyed_by_seed_and_block():
    a = block_rng(5, 2).random(8)
    assert np.array_equal(a, block_rng(5, 2).random(8))
    assert not np.array_equal(a, block_rng(5, 3).random(8))
    assert not np.array_equal(a, block_rng(6, 2).random(8))


def test_truncated_series_single_state():
    m = MarkovGrowthModel.build([1.0], [[1.0]], 0.1)
    assert truncated_psi1_series(m, 1).values[0] == pytest.approx(1 / 1.1, abs=1e-15)
    long = truncated_psi1_series(m, 400)
    assert long.tail_bound < 1e-10
    # tail bound plus accumulated rounding of 400 additions
    assert long.values[0] == pytest.approx(10.0, abs=long.tail_bound + 400 * 2e-16 * 10)


def test_truncated_series_requires_a1_unless_relaxed():
    m = MarkovGrowthModel.build([1.2], [[1.0]], 0.1)
    with pytest.raises(TransversalityViolated):
        truncated_psi1_series(m, 10)
    s = truncated_psi1_series(m, 10, enforce=False)
    assert math.isinf(s.tail_bound) and s.values[0] > 10


def test_truncated_ddm_matches_gordon():
    d = lambda i: 1.02**i
    assert truncated_ddm(d, lambda i: 0.07, 1500) == pytest.approx(20.4, abs=1e-8)


def test_tail_bounds():
    assert geometric_tail(0.5)(0) == pytest.approx(1.0)
    assert math.isinf(geometric_tail(1.0)(100))
    # explicit sum of (1 + 0.5 i) / 1.1^i over i > 10
    explicit = math.fsum((1 + 0.5 * i) / 1.1**i for i in range(11, 2000))
    assert additive_tail(1.0, 0.5, 1.1)(10) == pytest.approx(explicit, rel=1e-12)


def test_deterministic_chain_paths_are_identical():
    m = MarkovGrowthModel.build([1.01], [[1.0]], 0.08)
    res = simulate_dividend_paths(m, 0, 2.0, SimConfig(paths=5000))
    assert np.all(res.samples == res.samples[0])
    assert res.variance == 0.0
    assert res.mean == pytest.approx(2.0 * solve_psi1(m).psi1[0], abs=1e-7)


def test_hurley_geometric_q1_is_gordon_path_by_path():
    p = BinomialGeometricParams(1.0, 0.02, 1.0, 0.0, 0.07)
    res = simulate_dividend_paths(DividendStepProcess.hurley_geometric(p), SimConfig(paths=3000))
    np.testing.assert_allclose(res.samples, gordon_price(GordonParams(1.0, 0.02, 0.07)), atol=1e-7)


def test_markov_mean_within_three_se(two_state):
    psi1 = solve_psi1(two_state).psi1
    res = simulate_dividend_paths(two_state, 1, 1.5, SimConfig(paths=100_000, seed=17))
    assert abs(res.mean - 1.5 * psi1[1]) <= 3 * res.std_error
    assert res.tail_bound < 1e-8


def test_default_horizon_meets_tail_tolerance(two_state):
    res = simulate_dividend_paths(two_state, 0, 1.0, SimConfig(paths=10, tail_tolerance=1e-6))
    short = simulate_dividend_paths(two_state, 0, 1.0, SimConfig(paths=10, tail_tolerance=1e-3))
    assert short.horizon < res.horizon
    assert res.tail_bound < 1e-6


def test_explicit_horizon_too_short(two_state):
    with pytest.raises(HorizonTooShort):
        simulate_dividend_paths(two_state, 0, 1.0, SimConfig(paths=10, horizon=5))


def test_paths_independent_of_total_count(two_state):
    small = simulate_dividend_paths(two_state, 0, 1.0, SimConfig(paths=100, seed=4))
    big = simulate_dividend_paths(two_state, 0, 1.0, SimConfig(paths=BLOCK + 500, seed=4))
    np.testing.assert_array_equal(small.samples, big.samples[:100])


def test_workers_do_not_change_results(two_state, coupled_mtd):
    cfg1 = SimConfig(paths=3 * BLOCK + 17, seed=9, workers=1)
    cfg4 = SimConfig(paths=3 * BLOCK + 17, seed=9, workers=4)
    a = simulate_dividend_paths(two_state, 1, 1.0, cfg1)
    b = simulate_dividend_paths(two_state, 1, 1.0, cfg4)
    assert np.array_equal(a.samples, b.samples) and a.mean == b.mean
    s = JointState((0, 1))
    a = simulate_dividend_paths(coupled_mtd, s, None, cfg1)
    b = simulate_dividend_paths(coupled_mtd, s, None, cfg4)
    assert np.array_equal(a.samples, b.samples)
    assert np.array_equal(a.covariance, b.covariance)


def test_standard_error_scales_with_paths():
    model = random_markov(np.random.default_rng(1), 3)
    se1 = simulate_dividend_paths(model, 0, 1.0, SimConfig(paths=20_000, seed=1)).std_error
    se4 = simulate_dividend_paths(model, 0, 1.0, SimConfig(paths=80_000, seed=1)).std_error
    assert 1.5 <= se1 / se4 <= 2.5


def test_bankruptcy_is_absorbing():
    p = BinomialGeometricParams(1.0, 0.05, 0.5, 0.5, 0.1)
    res = simulate_dividend_paths(DividendStepProcess.hurley_geometric(p), SimConfig(paths=4000, seed=2))
    # with q_b = 0.5 about half the paths die in the first period and contribute nothing
    assert np.mean(res.samples == 0.0) == pytest.approx(0.5, abs=0.03)


def test_additive_floor_is_counted():
    proc = DividendStepProcess(0.05, 0.1, (-0.1, 0.1), (0.6, 0.2), 0.0, True)
    res = simulate_dividend_paths(proc, SimConfig(paths=2000, seed=1))
    assert res.floor_hits > 0
    assert np.all(res.samples >= 0)


def test_unknown_model_type():
    with pytest.raises(TypeError):
        simulate_dividend_paths(object())


def test_dk_constant_rates_match_gordon():
    res = dk_simulate(const(0.02), const(0.07), 1.0, SimConfig(paths=100, horizon=1500))
    assert res.std_error == 0.0
    assert res.mean == pytest.approx(gordon_price(GordonParams(1.0, 0.02, 0.07)), abs=1e-8)
    assert res.tail_estimate < 1e-8


def test_dk_unit_factors():
    res = dk_simulate(const(0.0), const(0.0), 2.5, SimConfig(paths=10, horizon=40))
    assert res.mean == pytest.approx(2.5 * 40)
    assert math.isinf(res.tail_estimate)
    with pytest.raises(HorizonTooShort):
        dk_simulate(const(0.0), const(0.0), 2.5, SimConfig(paths=10, horizon=40), strict=True)


def test_dk_lognormal_stable_across_seeds():
    # y = exp(N(mu, s^2)) with E[y] = 0.97
    s = 0.05
    mu = math.log(0.97) - s * s / 2
    growth = lambda rng, n, step: np.exp(rng.normal(mu, s, n)) - 1.0
    res = [dk_simulate(growth, const(0.0), 1.0, SimConfig(paths=20_000, horizon=800, seed=k)) for k in (1, 2)]
    diff = abs(res[0].mean - res[1].mean)
    assert diff <= 3 * math.hypot(res[0].std_error, res[1].std_error)
    expected = 0.97 / 0.03
    for r in res:
        assert abs(r.mean - expected) <= 4 * r.std_error + 1e-6
