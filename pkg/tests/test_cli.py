import datetime as dt
import json
import subprocess
import sys

import numpy as np
import pytest

from ddm.cli import run
from ddm.deterministic import GordonParams, gordon_price
from ddm.estimation import (
    discretize_states,
    estimate_cross_transitions,
    estimate_lambda,
    estimate_transition_matrix,
    growth_series,
)
from ddm.io import ingest_dividends
from ddm.markov import solve_psi1
from ddm.core import MarkovGrowthModel
from ddm.mtd import JointState, MtdModel, covariance_matrix, solve_all_products

P = np.array([[0.8, 0.2], [0.3, 0.7]])
G = np.array([0.97, 1.06])


def synthetic_csv(path, seed, n=240):
    rng = np.random.default_rng(seed)
    s, d = 0, 1.0
    lines = ["date,dividend"]
    for t in range(n):
        lines.append(f"{dt.date(1990, 1, 1) + dt.timedelta(days=31 * t)},{float(d)!r}")
        s = rng.choice(2, p=P[s])
        d *= G[s] * (1 + rng.normal(0, 0.002))
    path.write_text("\n".join(lines) + "\n")
    return path


def call(capsys, *argv):
    code = run([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def call_json(capsys, *argv):
    code, out, err = call(capsys, *argv, "--format", "json")
    assert code == 0, err
    return json.loads(out)


def test_gordon_table(capsys):
    code, out, _ = call(capsys, "value", "--model", "gordon", "--d0", 1, "--g", 0.02, "--ke", 0.07)
    assert code == 0
    assert "20.4" in out


def test_domain_error_exit_code(capsys):
    code, _, err = call(capsys, "value", "--model", "gordon", "--d0", 1, "--g", 0.08, "--ke", 0.07)
    assert code == 1
    assert err.startswith("NonConvergent")


def test_transversality_error_name(capsys):
    code, _, err = call(
        capsys, "value", "--model", "markov", "--growth-states", 0.2, "--matrix", "[[1]]", "--ke", 0.1
    )
    assert code == 1 and err.startswith("TransversalityViolated")


def test_io_error_exit_code(capsys, tmp_path):
    code, _, err = call(capsys, "value", "--model", "markov", "--input", tmp_path / "missing.csv", "--ke", 0.1)
    assert code == 2


def test_parse_error_is_domain_error(capsys, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("date,dividend\n2020-01-01,-1\n")
    code, _, err = call(capsys, "value", "--model", "markov", "--input", bad, "--ke", 0.1)
    assert code == 1 and err.startswith("NonPositiveDividend")


def test_missing_parameter(capsys):
    code, _, err = call(capsys, "value", "--model", "gordon", "--d0", 1)
    assert code == 2 and "--g" in err


def test_table_uses_six_significant_digits(capsys):
    code, out, _ = call(capsys, "value", "--model", "gordon", "--d0", 1, "--g", 0.03, "--ke", 0.07)
    assert "25.75" in out
    rep = call_json(capsys, "value", "--model", "gordon", "--d0", 1, "--g", 0.031, "--ke", 0.07)
    code, out, _ = call(capsys, "value", "--model", "gordon", "--d0", 1, "--g", 0.031, "--ke", 0.07)
    assert f"{rep['price']:.6g}" in out
    assert repr(rep["price"]) not in out


def test_markov_pipeline_matches_library(capsys, tmp_path):
    csv = synthetic_csv(tmp_path / "divs.csv", 1)
    rep = call_json(capsys, "value", "--model", "markov", "--states", 2, "--input", csv, "--ke", 0.1)
    series = ingest_dividends(csv)
    states, idx = discretize_states(growth_series(series), 2)
    model = MarkovGrowthModel.build(states.factors, estimate_transition_matrix(idx, 2).p, 0.1)
    expected = series.last * solve_psi1(model).psi1
    np.testing.assert_allclose(rep["state_prices"], expected, rtol=1e-12)
    assert rep["price"] == pytest.approx(expected[rep["inputs"]["state"]], rel=1e-12)
    for key in ("model", "price", "psi1", "g_bar", "g_bar2", "conditions", "residuals"):
        assert key in rep
    assert rep["conditions"] == {"A1": True, "A2": True}


def test_growth_rates_convention(capsys):
    rep = call_json(
        capsys, "value", "--model", "markov", "--growth-states", 0.02, "--matrix", "[[1]]", "--ke", 0.07
    )
    assert rep["price"] == pytest.approx(gordon_price(GordonParams(1, 0.02, 0.07)), abs=1e-10)


def test_constant_growth_pipeline_is_gordon(capsys, tmp_path):
    csv = tmp_path / "const.csv"
    csv.write_text("date,dividend\n" + "".join(f"{2000 + t}-06-30,{1.5 * 1.03**t!r}\n" for t in range(25)))
    rep = call_json(capsys, "value", "--model", "markov", "--states", 1, "--input", csv, "--ke", 0.08)
    d_last = 1.5 * 1.03**24
    assert rep["price"] == pytest.approx(gordon_price(GordonParams(d_last, 0.03, 0.08)), abs=1e-9)


def test_mtd_risk_matches_library(capsys, tmp_path):
    a = synthetic_csv(tmp_path / "a.csv", 2)
    b = synthetic_csv(tmp_path / "b.csv", 3)
    rep = call_json(capsys, "risk", "--model", "mtd", "--inputs", a, b, "--ke", 0.1, 0.1)
    cov = np.array(rep["covariance"])
    assert cov.shape == (2, 2)
    np.testing.assert_allclose(cov, cov.T, atol=1e-12)

    series = [ingest_dividends(a), ingest_dividends(b)]
    fitted = [discretize_states(growth_series(s), 2) for s in series]
    idx = [f[1] for f in fitted]
    cross = [[estimate_cross_transitions(idx[w], idx[f], 2) for f in range(2)] for w in range(2)]
    lam = estimate_lambda(idx, cross, 2).lam
    model = MtdModel(tuple(f[0] for f in fitted), lam, tuple(tuple(row) for row in cross), (0.1, 0.1))
    state = JointState(rep["inputs"]["state"])
    expected = covariance_matrix(model, solve_all_products(model), state, [s.last for s in series])
    np.testing.assert_allclose(cov, expected, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(rep["variance"], np.diag(expected), rtol=1e-10)


@pytest.mark.parametrize(
    "argv",
    [
        ["--model", "gordon", "--d0", 1, "--g", 0.02, "--ke", 0.07],
        ["--model", "h-model", "--d0", 1, "--ga", 0.1, "--gn", 0.04, "--h", 5, "--ke", 0.09],
        ["--model", "three-stage", "--eps", 2, "--pia", 0.3, "--pin", 0.6, "--ga", 0.12, "--gn", 0.04,
         "--n1", 5, "--n2", 10, "--keh", 0.1, "--ked", 0.09, "--kest", 0.08],
        ["--model", "hurley-general-geometric", "--d0", 1, "--ke", 0.09, "--outcomes=0.05:0.4,-0.02:0.3"],
        ["--model", "yao-additive", "--d0", 1, "--step", 0.05, "--qu", 0.5, "--qd", 0.2, "--ke", 0.08],
        ["--model", "markov", "--growth-states", 0.05, -0.05, "--matrix", "[[0.7,0.3],[0.2,0.8]]",
         "--ke", 0.1, "--state", 1, "--d", 2.0],
    ],
)
def test_json_round_trip(capsys, tmp_path, argv):
    first = call_json(capsys, "value", *argv)
    saved = tmp_path / "report.json"
    saved.write_text(json.dumps(first))
    model = argv[1]
    again = call_json(capsys, "value", "--model", model, "--params", saved)
    assert again == first


def test_mtd_round_trip(capsys, tmp_path):
    a = synthetic_csv(tmp_path / "a.csv", 4)
    b = synthetic_csv(tmp_path / "b.csv", 5)
    first = call_json(capsys, "risk", "--model", "mtd", "--inputs", a, b, "--ke", 0.1)
    again = call_json(capsys, "risk", "--model", "mtd", "--params", json.dumps(first))
    assert again == first


SIM = ["simulate", "--model", "markov", "--growth-states", 0.05, -0.05,
       "--matrix", "[[0.7,0.3],[0.2,0.8]]", "--ke", 0.1, "--paths", 5000]


def test_simulate_is_reproducible(capsys):
    _, first, _ = call(capsys, *SIM, "--seed", 7)
    _, second, _ = call(capsys, *SIM, "--seed", 7)
    _, other, _ = call(capsys, *SIM, "--seed", 8)
    assert first == second
    assert first != other


def test_seed_from_environment(capsys, monkeypatch):
    monkeypatch.setenv("DDM_SEED", "7")
    _, env, _ = call(capsys, *SIM)
    monkeypatch.delenv("DDM_SEED")
    _, explicit, _ = call(capsys, *SIM, "--seed", 7)
    assert env == explicit
    rep = json.loads(call(capsys, *SIM, "--seed", 7, "--format", "json")[1])
    assert rep["seed"] == 7 and rep["std_error"] > 0


def test_simulate_step_model(capsys):
    rep = call_json(capsys, "simulate", "--model", "yao-geometric", "--d0", 1, "--step", 0.05,
                    "--qu", 0.5, "--qd", 0.2, "--ke", 0.08, "--paths", 20000)
    assert abs(rep["price"] - 1.015 / 0.065) <= 4 * rep["std_error"]


def test_simulate_mtd(capsys, tmp_path):
    a = synthetic_csv(tmp_path / "a.csv", 2)
    b = synthetic_csv(tmp_path / "b.csv", 3)
    risk = call_json(capsys, "risk", "--model", "mtd", "--inputs", a, b, "--ke", 0.1)
    sim = call_json(capsys, "simulate", "--model", "mtd", "--params", json.dumps(risk), "--paths", 20000)
    for p, mu, se in zip(risk["price"], sim["price"], sim["std_error"]):
        assert abs(p - mu) <= 4 * se


def test_estimate_markov(capsys, tmp_path):
    csv = synthetic_csv(tmp_path / "divs.csv", 1, n=600)
    rep = call_json(capsys, "estimate", "--model", "markov", "--input", csv, "--states", 2)
    np.testing.assert_allclose(np.array(rep["matrix"]).sum(axis=1), 1.0)
    assert len(rep["growth_states"]) == 2
    assert "conditions" not in rep
    rep = call_json(capsys, "estimate", "--model", "markov", "--input", csv, "--states", 2, "--ke", 0.1)
    assert rep["conditions"]["A1"]


def test_estimate_capm(capsys, tmp_path):
    rng = np.random.default_rng(3)
    mkt = rng.normal(0.01, 0.04, 60)
    stock = 0.002 + 1.3 * (mkt - 0.002) + rng.normal(0, 0.01, 60)
    for name, x in (("s.csv", stock), ("m.csv", mkt)):
        rows = "".join(f"{dt.date(2010, 1, 1) + dt.timedelta(days=30 * t)},{float(v)!r}\n" for t, v in enumerate(x))
        (tmp_path / name).write_text("date,return\n" + rows)
    rep = call_json(capsys, "estimate", "--model", "capm", "--returns", tmp_path / "s.csv",
                    "--market", tmp_path / "m.csv", "--rf", 0.002, "--periods-per-year", 12)
    assert rep["beta"] == pytest.approx(1.3, abs=0.05)
    assert rep["k_e"] == pytest.approx((1 + rep["k_e_period"]) ** 12 - 1)


def test_risk_rejects_closed_form_models(capsys):
    code, _, err = call(capsys, "risk", "--model", "gordon", "--d0", 1, "--g", 0.02, "--ke", 0.07)
    assert code == 2


def test_module_entry_point():
    out = subprocess.run(
        [sys.executable, "-m", "ddm", "value", "--model", "gordon", "--d0", "1", "--g", "0.02", "--ke", "0.07"],
        capture_output=True, text=True, check=True,
    )
    assert "20.4" in out.stdout
    help_text = subprocess.run([sys.executable, "-m", "ddm", "value", "--help"], capture_output=True, text=True).stdout
    assert "rates" in help_text
