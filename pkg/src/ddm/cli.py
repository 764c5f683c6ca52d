"""Command-line interface: ``ddm {value,estimate,risk,simulate} --model NAME``.

Growth inputs on the command line are rates (0.02 = 2%); Markov models
convert them to gross factors (1.02) internally. Every report echoes the
fully resolved model inputs under ``inputs``; feeding that object back via
``--params`` reproduces the same numbers.

Exit status: 0 on success, 1 on a model/domain error (the error class name
is printed verbatim), 2 on I/O or usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import binomial as bn
from . import deterministic as det
from .core import MarkovGrowthModel, residual_norm
from .errors import DdmError, DimensionMismatch, InsufficientHistory
from .estimation import (
    CapmInputs,
    capm_cost_of_equity,
    discretize_states,
    estimate_cross_transitions,
    estimate_lambda,
    estimate_transition_matrix,
    growth_series,
)
from .io import ingest_dividends, ingest_returns
from .markov import (
    check_conditions,
    price_and_risk,
    psi1_system,
    psi2_system,
    solve_psi2,
    variance_ratio,
)
from .mtd import JointState, MtdModel, check_multi_conditions, covariance_matrix, solve_all_products
from .simulation import DividendStepProcess, SimConfig, dk_simulate, simulate_dividend_paths

log = logging.getLogger("ddm")

DETERMINISTIC = ("gordon", "two-stage", "h-model", "three-stage")
STEP_MODELS = (
    "hurley-additive",
    "hurley-geometric",
    "hurley-general-additive",
    "hurley-general-geometric",
    "yao-additive",
    "yao-geometric",
)
MODELS = DETERMINISTIC + STEP_MODELS + ("markov", "mtd", "capm")

# flag name -> inputs key, per model
_FLAGS = {
    "gordon": {"d0": "d0", "g": "g", "ke": "k_e"},
    "two-stage": {"d0": "d0", "gh": "g_h", "keh": "k_e_h", "n": "n", "gst": "g_st", "kest": "k_e_st"},
    "h-model": {"d0": "d0", "ga": "g_a", "gn": "g_n", "h": "h", "ke": "k_e"},
    "three-stage": {
        "eps": "eps0", "pia": "pi_a", "pin": "pi_n", "ga": "g_a", "gn": "g_n",
        "n1": "n1", "n2": "n2", "keh": "k_e_h", "ked": "k_e_d", "kest": "k_e_st",
    },
    "hurley-additive": {"d0": "d0", "delta": "delta", "q": "q", "qb": "q_b", "ke": "k_e"},
    "hurley-geometric": {"d0": "d0", "g": "g", "q": "q", "qb": "q_b", "ke": "k_e"},
    "hurley-general-additive": {"d0": "d0", "ke": "k_e", "outcomes": "outcomes"},
    "hurley-general-geometric": {"d0": "d0", "ke": "k_e", "outcomes": "outcomes"},
    "yao-additive": {"d0": "d0", "step": "step", "qu": "q_u", "qd": "q_d", "ke": "k_e"},
    "yao-geometric": {"d0": "d0", "step": "step", "qu": "q_u", "qd": "q_d", "ke": "k_e"},
}
_DEFAULTS = {"q_b": 0.0}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# Input resolution
# ---------------------------------------------------------------------------


def _scalar(x):
    return x[0] if isinstance(x, list) and len(x) == 1 else x


def _flag_inputs(args, model: str) -> dict:
    out = {}
    for flag, key in _FLAGS[model].items():
        v = getattr(args, flag, None)
        if v is None:
            if key in _DEFAULTS:
                out[key] = _DEFAULTS[key]
                continue
            raise UsageError(f"--{flag} is required for model {model}")
        out[key] = _scalar(v)
    if "outcomes" in out:
        out["outcomes"] = [[float(a) for a in s.split(":")] for s in out["outcomes"].split(",")]
    if model == "three-stage":
        out["n1"], out["n2"] = int(out["n1"]), int(out["n2"])
        out["decline_dividends"] = det.interpolate_decline_dividends(
            out["eps0"], out["pi_a"], out["pi_n"], out["g_a"], out["g_n"], out["n1"], out["n2"]
        )
    if model == "two-stage":
        out["n"] = int(out["n"])
    return out


def _fit_markov(args) -> dict:
    series = ingest_dividends(args.input)
    growth = growth_series(series)
    m = args.states or 2
    states, idx = discretize_states(growth, m)
    p = estimate_transition_matrix(idx, m, args.smoothing)
    current = states.nearest(1.0 + growth[-1])
    ke = _scalar(args.ke) if args.ke is not None else None
    return {
        "ticker": series.ticker,
        "growth_states": (states.factors - 1.0).tolist(),
        "matrix": p.p.tolist(),
        "k_e": ke,
        "state": int(current),
        "d": series.last,
        "observations": len(series),
    }


def _markov_inputs(args, need_ke=True) -> dict:
    if args.input:
        out = _fit_markov(args)
    else:
        if args.growth_states is None or args.matrix is None:
            raise UsageError("markov needs --input, or --growth-states with --matrix")
        out = {
            "growth_states": list(args.growth_states),
            "matrix": json.loads(args.matrix),
            "k_e": _scalar(args.ke),
            "state": args.state if args.state is not None else 0,
            "d": args.d if args.d is not None else 1.0,
        }
    if args.state is not None:
        out["state"] = args.state
    if args.d is not None:
        out["d"] = args.d
    if need_ke and out.get("k_e") is None:
        raise UsageError("--ke is required")
    return out


def _align_growth(series_list):
    """Growth rates per stock on the dates common to all, keyed by the later date."""
    by_date = []
    for s in series_list:
        g = growth_series(s)
        by_date.append(dict(zip(s.dates[1:], g)))
    common = sorted(set.intersection(*(set(d) for d in by_date)))
    if len(common) < 2:
        raise InsufficientHistory("dividend histories share fewer than two growth dates")
    return common, [np.array([d[t] for t in common]) for d in by_date]


def _fit_mtd(args) -> dict:
    series = [ingest_dividends(p) for p in args.inputs]
    _, growths = _align_growth(series)
    m = args.states or 2
    fitted = [discretize_states(g, m) for g in growths]
    idx = [f[1] for f in fitted]
    gamma = len(series)
    cross = [[estimate_cross_transitions(idx[b], idx[a], m, args.smoothing) for a in range(gamma)]
             for b in range(gamma)]
    lam = estimate_lambda(idx, cross, m).lam
    ke = args.ke
    if ke is not None and len(ke) == 1:
        ke = ke * gamma
    return {
        "tickers": [s.ticker for s in series],
        "growth_states": [(f[0].factors - 1.0).tolist() for f in fitted],
        "lambda": lam.tolist(),
        "cross": [[p.p.tolist() for p in row] for row in cross],
        "k_e": ke,
        "state": [int(f[0].nearest(1.0 + g[-1])) for f, g in zip(fitted, growths)],
        "d": [s.last for s in series],
        "observations": len(growths[0]),
    }


def _mtd_inputs(args, need_ke=True) -> dict:
    if not args.inputs:
        raise UsageError("mtd needs --inputs (two or more dividend CSVs) or --params")
    out = _fit_mtd(args)
    if need_ke and out.get("k_e") is None:
        raise UsageError("--ke is required (one rate, or one per stock)")
    if out.get("k_e") is not None and len(out["k_e"]) != len(out["d"]):
        raise DimensionMismatch(f"{len(out['k_e'])} discount rates for {len(out['d'])} stocks")
    return out


def resolve_inputs(args, need_ke=True) -> dict:
    if args.params:
        text = args.params
        if not text.lstrip().startswith("{"):
            text = Path(text).read_text()
        obj = json.loads(text)
        return obj.get("inputs", obj)
    if args.model in _FLAGS:
        return _flag_inputs(args, args.model)
    if args.model == "markov":
        return _markov_inputs(args, need_ke)
    if args.model == "mtd":
        return _mtd_inputs(args, need_ke)
    raise UsageError(f"model {args.model} takes no valuation inputs")


def markov_model(inp: dict) -> MarkovGrowthModel:
    factors = 1.0 + np.asarray(inp["growth_states"], dtype=float)
    return MarkovGrowthModel.build(factors, inp["matrix"], inp["k_e"])


def mtd_model(inp: dict) -> MtdModel:
    return MtdModel(
        states=tuple(1.0 + np.asarray(g, dtype=float) for g in inp["growth_states"]),
        lam=np.asarray(inp["lambda"], dtype=float),
        cross=tuple(tuple(np.asarray(p, dtype=float) for p in row) for row in inp["cross"]),
        discounts=tuple(inp["k_e"]),
    )


def step_process(model: str, inp: dict) -> DividendStepProcess:
    if model == "hurley-additive":
        return DividendStepProcess.hurley_additive(bn.BinomialAdditiveParams(**inp))
    if model == "hurley-geometric":
        return DividendStepProcess.hurley_geometric(bn.BinomialGeometricParams(**inp))
    if model.startswith("hurley-general"):
        out = bn.GeneralizedOutcomes.of(inp["outcomes"])
        return DividendStepProcess.general(inp["d0"], inp["k_e"], out, model.endswith("additive"))
    return DividendStepProcess.yao(bn.TrinomialParams(**inp), model == "yao-additive")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _conditions(rep) -> dict:
    return {"g_bar": rep.g_bar, "g_bar2": rep.g_bar2, "conditions": rep.as_dict()}


def _markov_solution(inp):
    model = markov_model(inp)
    rep = check_conditions(model)
    sol = solve_psi2(model)
    a1, b1 = psi1_system(model)
    a2, b2 = psi2_system(model, sol.psi1)
    residuals = {"psi1": residual_norm(a1, sol.psi1, b1), "psi2": residual_norm(a2, sol.psi2, b2)}
    return model, rep, sol, residuals


def cmd_value(model: str, inp: dict) -> dict:
    out = {}
    if model == "gordon":
        out["price"] = det.gordon_price(det.GordonParams(**inp))
    elif model == "two-stage":
        out["price"] = det.two_stage_price(det.TwoStageParams(**inp))
    elif model == "h-model":
        out["price"] = det.h_model_price(det.HModelParams(**inp))
    elif model == "three-stage":
        out["price"] = det.three_stage_price(det.ThreeStageParams(**inp))
    elif model == "hurley-additive":
        out["price"], out["lower_bound"] = bn.hurley_additive(bn.BinomialAdditiveParams(**inp))
    elif model == "hurley-geometric":
        out["price"], out["lower_bound"] = bn.hurley_geometric(bn.BinomialGeometricParams(**inp))
    elif model == "hurley-general-additive":
        out["price"] = bn.hurley_general_additive(inp["d0"], inp["k_e"], bn.GeneralizedOutcomes.of(inp["outcomes"]))
    elif model == "hurley-general-geometric":
        out["price"] = bn.hurley_general_geometric(inp["d0"], inp["k_e"], bn.GeneralizedOutcomes.of(inp["outcomes"]))
    elif model == "yao-additive":
        out["price"] = bn.yao_additive(bn.TrinomialParams(**inp))
    elif model == "yao-geometric":
        out["price"] = bn.yao_geometric(bn.TrinomialParams(**inp))
    elif model == "markov":
        mk, rep, sol, res = _markov_solution(inp)
        d, s = inp["d"], inp["state"]
        out["price"] = d * float(sol.psi1[s])
        out["state_prices"] = (d * sol.psi1).tolist()
        out["psi1"] = sol.psi1.tolist()
        out.update(_conditions(rep))
        out["residuals"] = res
    elif model == "mtd":
        mt = mtd_model(inp)
        sol = solve_all_products(mt)
        k = JointState(inp["state"]).flat(mt)
        reps = check_multi_conditions(mt)
        out["price"] = (np.asarray(inp["d"]) * sol.psi1[:, k]).tolist()
        out["psi1"] = sol.psi1.tolist()
        out["g_bar"] = [r.g_bar for r in reps]
        out["g_bar2"] = [r.g_bar2 for r in reps]
        out["conditions"] = [r.as_dict() for r in reps]
        out["residuals"] = {"joint": sol.residual}
    else:
        raise UsageError(f"value is not defined for model {model}")
    return out


def cmd_risk(model: str, inp: dict) -> dict:
    if model == "markov":
        mk, rep, sol, res = _markov_solution(inp)
        d, s = inp["d"], inp["state"]
        pr = price_and_risk(mk, s, d, sol)
        out = {
            "price": pr.price,
            "second_moment": pr.second_moment,
            "variance": pr.variance,
            "psi1": sol.psi1.tolist(),
            "psi2": sol.psi2.tolist(),
            "state_variance": (d * d * variance_ratio(sol.psi1, sol.psi2)).tolist(),
        }
        out.update(_conditions(rep))
        out["residuals"] = res
        return out
    if model == "mtd":
        mt = mtd_model(inp)
        sol = solve_all_products(mt)
        state = JointState(inp["state"])
        k = state.flat(mt)
        cov = covariance_matrix(mt, sol, state, inp["d"])
        reps = check_multi_conditions(mt)
        return {
            "price": (np.asarray(inp["d"]) * sol.psi1[:, k]).tolist(),
            "variance": np.diag(cov).tolist(),
            "covariance": cov.tolist(),
            "psi1": sol.psi1[:, k].tolist(),
            "psi2": sol.psi2[:, k].tolist(),
            "g_bar": [r.g_bar for r in reps],
            "g_bar2": [r.g_bar2 for r in reps],
            "conditions": [r.as_dict() for r in reps],
            "residuals": {"joint": sol.residual},
        }
    raise UsageError(f"risk is defined for markov and mtd, not {model}")


def cmd_simulate(model: str, inp: dict, cfg: SimConfig) -> dict:
    if model == "markov":
        mk = markov_model(inp)
        res = simulate_dividend_paths(mk, inp["state"], inp["d"], cfg)
        return {
            "price": res.mean, "std_error": res.std_error,
            "second_moment": res.second_moment, "second_moment_se": res.second_moment_se,
            "variance": res.variance, "horizon": res.horizon, "paths": res.paths,
            "tail_bound": res.tail_bound,
        }
    if model == "mtd":
        mt = mtd_model(inp)
        res = simulate_dividend_paths(mt, JointState(inp["state"]), inp["d"], cfg)
        return {
            "price": res.means.tolist(), "std_error": res.mean_se.tolist(),
            "covariance": res.covariance.tolist(),
            "covariance_se": res.covariance_se.tolist(),
            "horizon": res.horizon, "paths": res.paths,
        }
    if model in STEP_MODELS:
        res = simulate_dividend_paths(step_process(model, inp), cfg)
        return {
            "price": res.mean, "std_error": res.std_error, "variance": res.variance,
            "horizon": res.horizon, "paths": res.paths, "floor_hits": res.floor_hits,
            "tail_bound": res.tail_bound,
        }
    if model == "gordon":
        g_sd = inp.get("g_sd", 0.0)
        k_sd = inp.get("k_e_sd", 0.0)
        g_mu, k_mu = inp["g"], inp["k_e"]
        gs = lambda rng, n, j: g_mu + g_sd * rng.standard_normal(n)
        ks = lambda rng, n, j: k_mu + k_sd * rng.standard_normal(n)
        if cfg.horizon is None:
            ratio = (1 + g_mu) / (1 + k_mu)
            h = math.ceil(math.log(cfg.tail_tolerance * (1 - ratio) / inp["d0"]) / math.log(ratio)) if ratio < 1 else 1000
            cfg = SimConfig(cfg.paths, max(h, 1), cfg.seed, cfg.tail_tolerance, cfg.workers)
        res = dk_simulate(gs, ks, inp["d0"], cfg)
        return {"price": res.mean, "std_error": res.std_error, "horizon": res.horizon,
                "paths": res.paths, "tail_estimate": res.tail_estimate}
    raise UsageError(f"simulate is not defined for model {model}")


def cmd_estimate(args) -> dict:
    if args.model == "capm":
        if not (args.returns and args.market):
            raise UsageError("capm needs --returns and --market")
        d_s, r_s = ingest_returns(args.returns)
        d_m, r_m = ingest_returns(args.market)
        if d_s != d_m:
            common = sorted(set(d_s) & set(d_m))
            r_s = np.array([dict(zip(d_s, r_s))[t] for t in common])
            r_m = np.array([dict(zip(d_m, r_m))[t] for t in common])
        if args.rf_file:
            d_f, r_f = ingest_returns(args.rf_file)
            lookup = dict(zip(d_f, r_f))
            dates = sorted(set(d_s) & set(d_m))
            rf = np.array([lookup[t] for t in dates])
        else:
            rf = args.rf
        est = capm_cost_of_equity(CapmInputs(r_s, r_m, rf))
        k_e = est.k_e
        if args.periods_per_year != 1:
            k_e = (1.0 + est.k_e) ** args.periods_per_year - 1.0
        return {"inputs": {"periods": len(r_s)}, "beta": est.beta, "alpha": est.alpha,
                "k_e_period": est.k_e, "k_e": k_e}
    if args.model == "markov":
        inp = _markov_inputs(args, need_ke=False)
        mk = markov_model({**inp, "k_e": inp["k_e"] or 1.0})
        out = {"inputs": inp, "growth_states": inp["growth_states"], "matrix": inp["matrix"]}
        if inp["k_e"] is not None:
            out.update(_conditions(check_conditions(mk)))
        return out
    if args.model == "mtd":
        inp = _mtd_inputs(args, need_ke=False)
        out = {"inputs": inp, "growth_states": inp["growth_states"], "lambda": inp["lambda"],
               "cross": inp["cross"]}
        if inp["k_e"] is not None:
            reps = check_multi_conditions(mtd_model(inp))
            out["g_bar"] = [r.g_bar for r in reps]
            out["g_bar2"] = [r.g_bar2 for r in reps]
            out["conditions"] = [r.as_dict() for r in reps]
        return out
    raise UsageError(f"estimate is defined for markov, mtd and capm, not {args.model}")


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    raise TypeError(f"{type(x).__name__} is not JSON serializable")


def _fmt(v) -> str:
    if isinstance(v, bool) or v is None:
        return str(v)
    if isinstance(v, (float, np.floating)):
        return f"{v:.6g}"
    if isinstance(v, dict):
        return "  ".join(f"{k}={_fmt(x)}" for k, x in v.items())
    if isinstance(v, (list, tuple)):
        if v and isinstance(v[0], (list, tuple)):
            return "\n" + "\n".join("    " + _fmt(row) for row in v)
        return "  ".join(_fmt(x) for x in v)
    return str(v)


def render(report: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report, indent=2, default=_jsonable)
    lines = []
    for k, v in report.items():
        if k == "inputs":
            continue
        lines.append(f"{k:<18}{_fmt(v)}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ddm",
        description="Dividend discount model valuation. Growth inputs are rates (0.02 = 2%%); "
        "Markov models convert them to gross factors internally.",
    )
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("value", "fundamental price (per state for Markov models)"),
        ("estimate", "fit states, transition matrices, lambda weights or CAPM k_e"),
        ("risk", "price variance and inter-stock covariance"),
        ("simulate", "Monte Carlo estimates with standard errors"),
    ]:
        c = sub.add_parser(name, help=help_)
        c.add_argument("--model", required=True, choices=MODELS)
        c.add_argument("--format", choices=("table", "json"), default="table")
        c.add_argument("--params", help="JSON object (or file) of model inputs, e.g. a previous report")
        num = dict(type=float, default=None)
        for flag in ("d0", "g", "gh", "keh", "gst", "kest", "ga", "gn", "h", "eps", "pia", "pin",
                     "ked", "delta", "q", "qb", "step", "qu", "qd", "d", "g-sd", "ke-sd"):
            c.add_argument(f"--{flag}", **num)
        c.add_argument("--ke", type=float, nargs="+", help="discount rate(s) k_e")
        for flag in ("n", "n1", "n2"):
            c.add_argument(f"--{flag}", type=int)
        c.add_argument("--outcomes", help="comma-separated value:prob pairs, e.g. --outcomes=0.1:0.3,-0.05:0.2")
        c.add_argument("--input", help="dividend CSV (date,dividend)")
        c.add_argument("--inputs", nargs="+", help="dividend CSVs, one per stock")
        c.add_argument("--states", type=int, help="number of growth states (default 2)")
        c.add_argument("--smoothing", type=float, default=0.0, help="Laplace smoothing of transition counts")
        c.add_argument("--growth-states", type=float, nargs="+", help="Markov growth states as rates")
        c.add_argument("--matrix", help="transition matrix as JSON, e.g. [[0.8,0.2],[0.3,0.7]]")
        c.add_argument("--state", type=int, help="current state index (0-based)")
        c.add_argument("--returns", help="stock returns CSV (date,return)")
        c.add_argument("--market", help="market returns CSV (date,return)")
        c.add_argument("--rf", type=float, default=0.0, help="constant risk-free rate per period")
        c.add_argument("--rf-file", help="risk-free returns CSV (date,return)")
        c.add_argument("--periods-per-year", type=int, default=1)
        c.add_argument("--paths", type=int, default=100_000)
        c.add_argument("--horizon", type=int)
        c.add_argument("--seed", type=int, default=int(os.environ.get("DDM_SEED", "0")))
        c.add_argument("--workers", type=int, default=1)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "estimate":
            report = {"model": args.model, "command": "estimate", **cmd_estimate(args)}
        else:
            inp = resolve_inputs(args)
            if args.model == "gordon" and args.command == "simulate":
                inp = {**inp, "g_sd": inp.get("g_sd", args.g_sd or 0.0),
                       "k_e_sd": inp.get("k_e_sd", args.ke_sd or 0.0)}
            report = {"model": args.model, "command": args.command, "inputs": inp}
            if args.command == "value":
                report.update(cmd_value(args.model, inp))
            elif args.command == "risk":
                report.update(cmd_risk(args.model, inp))
            else:
                cfg = SimConfig(args.paths, args.horizon, args.seed, workers=args.workers)
                report["seed"] = args.seed
                report.update(cmd_simulate(args.model, inp, cfg))
    except DdmError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2
    except (TypeError, KeyError, json.JSONDecodeError) as exc:
        print(f"bad parameters: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(render(report, args.format))
    return 0


def main():
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    sys.exit(run())
