"""Experiment runners.

Each experiment is a ``setup`` that builds everything shared by the
replicates (data, oracles, pilot runs) and a ``replicate`` function that
returns result rows for one replicate.  Random streams are
``make_rng(seed, replicate, stream)``; setup uses the reserved replicate key
``SETUP`` so that replicate results do not depend on how many replicates run
or on which worker runs them.
"""

from __future__ import annotations

import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from evd import evidence_is as eis
from evd import kernels, theory, zratio
from evd.core import SimConfig, make_rng
from evd.harness import oracles
from evd.harness.config import ConfigError
from evd.harness.summary import write_csv, write_summary
from evd.models import (
    ErgmModel,
    GaussianBlock,
    GaussianPrecisionModel,
    GeometricModel,
    IsingModel,
    PoissonModel,
    SpinBlockUniform,
    generate_toy_datasets,
    toy_log_bayes_factor,
)
from evd.smc import MoveConfig, ResamplingPolicy, TemperingSchedule, WeightMode, smc_run

SETUP = 2**31 - 1
WORKERS_ENV = "EVD_WORKERS"


def _vector(value):
    if isinstance(value, (int, float)):
        return np.array([float(value)])
    return np.array([float(v) for v in str(value).split(",")])


def _sim(b):
    return SimConfig("gibbs", int(b))


def _row(group, report, oracle=None, **extra):
    row = report.row()
    row.pop("estimator")
    row["group"] = group
    row["estimate"] = row.pop("log_evidence")
    row["oracle"] = oracle
    row.update(extra)
    return row


def _logw_var(report):
    w = report.log_weights
    w = w[np.isfinite(w)]
    return float(np.var(w, ddof=1)) if len(w) > 1 else float("nan")


def _pilot_proposal(model, y, steps, scale, sim, rng, inflate=1.0):
    pilot = kernels.adaptive_pilot(model, y, steps, scale, sim, rng)
    return pilot, eis.GaussianProposal.from_samples(pilot.samples, inflate=inflate)


# -- toy Poisson vs geometric ------------------------------------------------------


def toy_setup(cfg):
    n = cfg.model_param("n", 100)
    rng = make_rng(cfg.seed, SETUP)
    return {"n": n, "datasets": generate_toy_datasets(cfg.replicates, n, rng)}


def toy_replicate(cfg, shared, i):
    y = shared["datasets"][i]
    n = shared["n"]
    truth = toy_log_bayes_factor(y)
    exact = SimConfig("exact")
    pil = cfg.estimator("pilot", steps=1000, scale=0.1)
    per_model = {}
    for j, model in enumerate((PoissonModel(n), GeometricModel(n))):
        rng = make_rng(cfg.seed, i, j)
        pilot, prop = _pilot_proposal(model, y, pil["steps"], pil["scale"], exact, rng)
        out = {}
        if "mavis" in cfg.estimators:
            c = cfg.estimator("mavis", p=100, k=1000, m=1)
            theta_hat = pilot.mean
            out["mavis"] = eis.mavis(
                model, y, prop, c["p"], c["k"], c["m"], theta_hat, model.exact_log_z(theta_hat), exact,
                make_rng(cfg.seed, i, j, 1), log_z_exact=True,
            )
        if "sl" in cfg.estimators:
            c = cfg.estimator("sl", p=1000, m=100, inflate=2.0)
            wide = eis.GaussianProposal.from_samples(pilot.samples, inflate=c["inflate"])
            out["sl-is"] = eis.sl_is(model, y, wide, c["p"], c["m"], make_rng(cfg.seed, i, j, 2), exact)
        if "abc" in cfg.estimators:
            c = cfg.estimator("abc", p=1000, eps=0.1, r=100, inflate=2.0)
            wide = eis.GaussianProposal.from_samples(pilot.samples, inflate=c["inflate"])
            out["abc-is"] = eis.abc_is(model, y, wide, c["p"], c["eps"], c["r"], make_rng(cfg.seed, i, j, 3), exact)
        per_model[model.name] = out
    rows = []
    for group in per_model["poisson"]:
        a, b = per_model["poisson"][group], per_model["geometric"][group]
        bf = eis.log_bayes_factor(a, b)
        rows.append(
            {
                "group": group,
                "estimate": bf.log_bf,
                "oracle": truth,
                "bias_class": str(bf.bias),
                "ess": min(a.ess, b.ess),
                "sweeps": a.sweeps + b.sweeps,
                "summary_marginal": int(bf.summary_marginal),
                "log_evidence_1": a.log_evidence,
                "log_evidence_2": b.log_evidence,
                "ess_1": a.ess,
                "ess_2": b.ess,
                "wall_time": a.wall_time + b.wall_time,
            }
        )
    return rows


# -- Ising importance sampling ----------------------------------------------------


def _ising_model(cfg):
    return IsingModel(
        cfg.model_param("rows", 10),
        cfg.model_param("cols", 10),
        cfg.model_param("order", "first"),
        cfg.model_param("prior_low", 0.0),
        cfg.model_param("prior_high", 2.0),
    )


def _ising_data(cfg, model):
    theta = _vector(cfg.model_param("theta", 0.3))
    sweeps = cfg.model_param("data_sweeps", 1000)
    return model.simulate(theta[None, :], _sim(sweeps), make_rng(cfg.seed, SETUP, 0), None)[0]


def _ising_truth(cfg, model, y):
    limit = cfg.model_param("oracle_max_cols", 12)
    if model.cols > limit or not model.has_exact_log_z:
        print(f"notice: no exact evidence for a {model.rows}x{model.cols} lattice; oracle column omitted", file=sys.stderr)
        return None
    return oracles.ising_log_evidence(model, y)


def ising_evidence_setup(cfg):
    model = _ising_model(cfg)
    y = _ising_data(cfg, model)
    pil = cfg.estimator("pilot", steps=10000, b=20, scale=0.1)
    pilot = kernels.adaptive_pilot(model, y, pil["steps"], pil["scale"], _sim(pil["b"]), make_rng(cfg.seed, SETUP, 1))
    theta_hat = pilot.mean
    lz = cfg.estimator("logz", p=200, t=100)
    log_z_hat, diag = zratio.smc_log_z(theta_hat, model, lz["p"], lz["t"], make_rng(cfg.seed, SETUP, 2))
    return {
        "model": model,
        "y": y,
        "truth": _ising_truth(cfg, model, y),
        "theta_hat": theta_hat,
        "log_z_hat": log_z_hat,
        "proposal": eis.GaussianProposal(pilot.mean, pilot.cov),
        "pilot_acceptance": pilot.acceptance,
    }


def ising_evidence_replicate(cfg, shared, i):
    model, y, truth = shared["model"], shared["y"], shared["truth"]
    prop = shared["proposal"]
    rows = []
    common = {"theta_hat": float(shared["theta_hat"][0]), "log_z_hat": shared["log_z_hat"]}
    # both estimators see the same parameter draws so their weights can be compared pairwise
    P = cfg.estimator("savis", p=1000)["p"]
    theta = prop.sample(make_rng(cfg.seed, i, 0), P)
    if "savis" in cfg.estimators:
        c = cfg.estimator("savis", p=P, m=100, b=20)
        q_u = zratio.ModelAuxiliary(model, shared["theta_hat"], shared["log_z_hat"], exact=False)
        r = eis.savis(model, y, prop, c["p"], c["m"], q_u, _sim(c["b"]), make_rng(cfg.seed, i, 1), theta=theta)
        rows.append(_row("savis", r, truth, logw_var=_logw_var(r), wall_time=r.wall_time, **common))
    if "mavis" in cfg.estimators:
        c = cfg.estimator("mavis", p=P, m=10, k=189, b=20)
        r = eis.mavis(
            model, y, prop, c["p"], c["k"], c["m"], shared["theta_hat"], shared["log_z_hat"], _sim(c["b"]),
            make_rng(cfg.seed, i, 2), theta=theta,
        )
        rows.append(_row("mavis", r, truth, logw_var=_logw_var(r), wall_time=r.wall_time, **common))
    return rows


# -- Ising SMC ---------------------------------------------------------------------


def _smc_scale(cfg, model, y, section):
    c = cfg.estimator(section)
    if "initial_scale" in c:
        return float(c["initial_scale"])
    steps = c.get("pilot_steps", 200)
    pilot = kernels.adaptive_pilot(model, y, steps, 0.1, _sim(c.get("move_b", 10)), make_rng(cfg.seed, SETUP, 3))
    return float(np.sqrt(np.max(np.diag(pilot.cov))))


def ising_smc_setup(cfg):
    model = _ising_model(cfg)
    y = _ising_data(cfg, model)
    return {"model": model, "y": y, "truth": _ising_truth(cfg, model, y), "initial_scale": _smc_scale(cfg, model, y, "smc")}


def ising_smc_replicate(cfg, shared, i):
    model, y = shared["model"], shared["y"]
    c = cfg.estimator("smc", p=500, m=20, b=10, move_b=10, block=1)
    schedule = TemperingSchedule.data_points(model.n_sites, c["block"], SpinBlockUniform(c["block"]))
    weights = WeightMode("unbiased", c["m"], _sim(c["b"]))
    move = MoveConfig("exchange", _sim(c["move_b"]), initial_scale=shared["initial_scale"])
    r, _ = smc_run(model, y, schedule, weights, move, c["p"], rng=make_rng(cfg.seed, i, 0))
    return [_row(f"smc-{model.order}", r, shared["truth"], initial_scale=shared["initial_scale"], wall_time=r.wall_time)]


# -- precision matrix SMC ----------------------------------------------------------


def _precision_data(cfg, d=10, n=30):
    d = cfg.model_param("d", d)
    n = cfg.model_param("n", n)
    var = cfg.model_param("data_var", 0.1)
    model = GaussianPrecisionModel(d, n)
    y = make_rng(cfg.seed, SETUP).normal(0.0, np.sqrt(var), (n, d))
    return model, y


def _resampling(c):
    return ResamplingPolicy(c.get("scheme", "systematic"), c.get("trigger", "ess"), c.get("threshold", 0.5))


def precision_smc_setup(cfg):
    model, y = _precision_data(cfg)
    return {"model": model, "y": y, "truth": model.log_evidence(y)}


def precision_smc_replicate(cfg, shared, i):
    model, y = shared["model"], shared["y"]
    c = cfg.estimator("smc", p=2000, m=200, weights="unbiased", move="mh")
    q_w = GaussianBlock.from_precision(model.mle_precision(y))
    schedule = TemperingSchedule.data_points(model.n, 1, q_w)
    weights = WeightMode(c["weights"], c["m"], SimConfig("exact"))
    move = MoveConfig(c["move"], SimConfig("exact"))
    r, _ = smc_run(model, y, schedule, weights, move, c["p"], _resampling(c), rng=make_rng(cfg.seed, i, 0))
    return [_row(r.estimator, r, shared["truth"], wall_time=r.wall_time)]


# -- bias accumulation -------------------------------------------------------------

SAMPLERS = {
    "exact-mh": ("exact", "mh"),
    "unbiased-mh": ("unbiased", "mh"),
    "bridge-mh": ("bridge", "mh"),
    "bridge-perfect": ("bridge", "perfect"),
}


def bias_setup(cfg):
    model, y = _precision_data(cfg, d=1, n=500)
    prefix = np.array([model.log_evidence(y, k) for k in range(1, model.n + 1)])
    samplers = cfg.estimator("smc", samplers="exact-mh,unbiased-mh,bridge-mh,bridge-perfect")["samplers"]
    names = [s.strip() for s in samplers.split(",")]
    unknown = set(names) - set(SAMPLERS)
    if unknown:
        raise ConfigError(f"unknown samplers {sorted(unknown)}; expected some of {sorted(SAMPLERS)}")
    return {"model": model, "y": y, "truth": prefix[-1], "prefix": prefix, "samplers": names}


def bias_replicate(cfg, shared, i):
    model, y = shared["model"], shared["y"]
    c = cfg.estimator("smc", p=50, m=20)
    q_w = GaussianBlock.from_precision(model.mle_precision(y))
    schedule = TemperingSchedule.data_points(model.n, 1, q_w)
    rows = []
    for k, name in enumerate(SAMPLERS):
        if name not in shared["samplers"]:
            continue
        wkind, mkind = SAMPLERS[name]
        weights = WeightMode(wkind, c["m"], SimConfig("exact"))
        r, trace = smc_run(model, y, schedule, weights, MoveConfig(mkind, SimConfig("exact")), c["p"], _resampling(c),
                           rng=make_rng(cfg.seed, i, k))
        curve = np.array([row["log_evidence"] for row in trace])
        rows.append(_row(name, r, shared["truth"], wall_time=r.wall_time, _curve=curve))
    return rows


def bias_curves(rows, prefix):
    """Per-iteration bias and MSE of each sampler against the prefix evidences."""
    out = []
    groups = sorted({r["group"] for r in rows})
    for g in groups:
        curves = np.array([r["_curve"] for r in rows if r["group"] == g])
        err = curves - prefix[None, : curves.shape[1]]
        reps = len(curves)
        for t in range(curves.shape[1]):
            out.append(
                {
                    "group": g,
                    "t": t + 1,
                    "oracle": float(prefix[t]),
                    "mean": float(curves[:, t].mean()),
                    "bias": float(err[:, t].mean()),
                    "se": float(err[:, t].std(ddof=1) / np.sqrt(reps)) if reps > 1 else float("nan"),
                    "mse": float(np.mean(err[:, t] ** 2)),
                }
            )
    return out


# -- flow bound sweep ---------------------------------------------------------------


def prop1_setup(cfg):
    return {}


def prop1_replicate(cfg, shared, i):
    n = cfg.model_param("n", 6)
    T = cfg.model_param("t", 40)
    rows = theory.prop1_sweep(
        cfg.model_param("instances", 1000),
        make_rng(cfg.seed, i),
        n=n,
        T=T,
        alpha=cfg.model_param("alpha", 0.6),
        gamma_rel=cfg.model_param("gamma_rel", 0.05),
        log_g_band=cfg.model_param("log_g_band", 1.0),
    )
    return [
        {
            "group": "prop1",
            "estimate": r["sup_tv"],
            "instance": r["instance"],
            "bound": r["bound"],
            "margin": r["margin"],
            "gamma_rel": r["gamma_rel"],
            "eps_m": r["eps_m"],
            "eps_g": r["eps_g"],
            "lemma1_ok": r["lemma1_ok"],
            "holds": int(r["margin"] >= 0),
        }
        for r in rows
    ]


# -- ERGM on synthetic graphs --------------------------------------------------------


def ergm_setup(cfg):
    nodes = cfg.model_param("nodes", 6)
    prior_var = cfg.model_param("prior_var", 25.0)
    # shared summaries so that likelihood-free Bayes factors compare like with like
    full = ErgmModel(nodes, ("edges", "twostars"), prior_var)
    edges = ErgmModel(nodes, ("edges",), prior_var, summary_statistics=("edges", "twostars"))
    theta = _vector(cfg.model_param("theta", "-0.5,0.1"))
    y = full.simulate(theta[None, :], SimConfig("exact"), make_rng(cfg.seed, SETUP, 0), None)[0]
    pil = cfg.estimator("pilot", steps=4000, b=10, scale=0.3)
    lz = cfg.estimator("logz", p=200, t=100)
    fitted = {}
    for j, model in enumerate((edges, full)):
        pilot, prop = _pilot_proposal(model, y, pil["steps"], pil["scale"], _sim(pil["b"]), make_rng(cfg.seed, SETUP, 1, j),
                                      inflate=pil.get("inflate", 1.5))
        log_z_hat, _ = zratio.smc_log_z(pilot.mean, model, lz["p"], lz["t"], make_rng(cfg.seed, SETUP, 2, j))
        fitted[model.name] = {
            "model": model,
            "proposal": prop,
            "theta_hat": pilot.mean,
            "log_z_hat": log_z_hat,
            "truth": oracles.ergm_log_evidence(model, y),
        }
    # the summary marginal is the data evidence times the number of graphs sharing the summary
    stats, log_counts = full._distinct_stats()
    log_count = float(log_counts[np.all(stats == full.summary(y), axis=1)][0])
    return {
        "y": y,
        "fitted": fitted,
        "truth": fitted[edges.name]["truth"] - fitted[full.name]["truth"],
        "summary_log_count": log_count,
    }


def ergm_replicate(cfg, shared, i):
    y = shared["y"]
    reports = {}
    for j, (name, f) in enumerate(shared["fitted"].items()):
        model, prop = f["model"], f["proposal"]
        if "savis" in cfg.estimators:
            c = cfg.estimator("savis", p=500, m=50, b=10)
            q_u = zratio.ModelAuxiliary(model, f["theta_hat"], f["log_z_hat"], exact=False)
            r = eis.savis(model, y, prop, c["p"], c["m"], q_u, _sim(c["b"]), make_rng(cfg.seed, i, j, 0))
            reports.setdefault("savis", {})[name] = r
        if "mavis" in cfg.estimators:
            c = cfg.estimator("mavis", p=500, m=5, k=50, b=10)
            r = eis.mavis(model, y, prop, c["p"], c["k"], c["m"], f["theta_hat"], f["log_z_hat"], _sim(c["b"]),
                          make_rng(cfg.seed, i, j, 1))
            reports.setdefault("mavis", {})[name] = r
        if "sl" in cfg.estimators:
            c = cfg.estimator("sl", p=500, m=100, b=10)
            r = eis.sl_is(model, y, prop, c["p"], c["m"], make_rng(cfg.seed, i, j, 2), _sim(c["b"]))
            reports.setdefault("sl", {})[name] = r
    rows = []
    for method, per_model in reports.items():
        for name, r in per_model.items():
            truth = shared["fitted"][name]["truth"]
            if r.summary_marginal:
                truth += shared["summary_log_count"]
            rows.append(_row(f"{method}-{name}", r, truth, wall_time=r.wall_time))
        a, b = per_model["ergm-edges"], per_model["ergm-edges-twostars"]
        bf = eis.log_bayes_factor(a, b)
        rows.append(
            {
                "group": f"{method}-bf",
                "estimate": bf.log_bf,
                "oracle": shared["truth"],
                "bias_class": str(bf.bias),
                "ess": min(a.ess, b.ess),
                "sweeps": a.sweeps + b.sweeps,
                "wall_time": a.wall_time + b.wall_time,
            }
        )
    return rows


# -- driver ------------------------------------------------------------------------------


@dataclass(frozen=True)
class Experiment:
    setup: object
    replicate: object
    sections: frozenset
    default_estimators: tuple = ()


EXPERIMENTS = {
    "toy-bf": Experiment(toy_setup, toy_replicate, frozenset({"pilot", "mavis", "sl", "abc"}), ("mavis", "sl", "abc")),
    "ising-evidence": Experiment(
        ising_evidence_setup, ising_evidence_replicate, frozenset({"pilot", "logz", "savis", "mavis"}), ("savis", "mavis")
    ),
    "ising-smc": Experiment(ising_smc_setup, ising_smc_replicate, frozenset({"smc"})),
    "precision-smc": Experiment(precision_smc_setup, precision_smc_replicate, frozenset({"smc"})),
    "bias-accumulation": Experiment(bias_setup, bias_replicate, frozenset({"smc"})),
    "prop1-sweep": Experiment(prop1_setup, prop1_replicate, frozenset()),
    "ergm-synthetic": Experiment(
        ergm_setup, ergm_replicate, frozenset({"pilot", "logz", "savis", "mavis", "sl"}), ("savis", "mavis", "sl")
    ),
}


def workers_from_env():
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError as err:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from err
    if n < 1:
        raise ConfigError(f"{WORKERS_ENV} must be at least 1")
    return n


def _validate(cfg, exp):
    unknown = set(cfg.estimators) - exp.sections
    if unknown:
        raise ConfigError(f"{cfg.id}: unknown sections {sorted(unknown)}; allowed {sorted(exp.sections)}")
    if exp.default_estimators and not set(cfg.estimators) & set(exp.default_estimators):
        # no estimator selected: run them all with default budgets
        for name in exp.default_estimators:
            cfg.estimators.setdefault(name, {})


def _one(args):
    exp_id, cfg, shared, i = args
    exp = EXPERIMENTS[exp_id]
    rows = exp.replicate(cfg, shared, i)
    for r in rows:
        r["replicate"] = i
    return rows


def run_replicates(cfg, shared, workers=1):
    """Rows of every replicate, in replicate order whatever the worker count."""
    jobs = [(cfg.id, cfg, shared, i) for i in range(cfg.replicates)]
    if workers == 1 or cfg.replicates == 1:
        results = [_one(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one, jobs))
    return [row for rows in results for row in rows]


TIMING_KEYS = ("wall_time",)


def run_experiment(cfg, workers=None, output=None):
    """Run ``cfg`` and write its CSVs; returns the replicate rows (with private keys)."""
    exp = EXPERIMENTS.get(cfg.id)
    if exp is None:
        raise ConfigError(f"unknown experiment id {cfg.id!r}")
    _validate(cfg, exp)
    workers = workers_from_env() if workers is None else workers
    out = Path(output or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    shared = exp.setup(cfg)
    setup_time = time.perf_counter() - start
    rows = run_replicates(cfg, shared, workers)
    for r in rows:
        r["seed"] = cfg.seed
        r["config_hash"] = cfg.digest
    public = [{k: v for k, v in r.items() if not k.startswith("_") and k not in TIMING_KEYS} for r in rows]
    write_csv(public, out / "replicates.csv")
    write_summary(public, out / "summary.csv")
    timing = [{"replicate": "setup", "group": "", "wall_time": setup_time}]
    timing += [{"replicate": r["replicate"], "group": r["group"], "wall_time": r.get("wall_time", float("nan"))} for r in rows]
    write_csv(timing, out / "timing.csv", order=("replicate", "group", "wall_time"))
    if cfg.id == "bias-accumulation":
        write_csv(bias_curves(rows, shared["prefix"]), out / "curves.csv", order=("group", "t"))
    if cfg.text:
        (out / "config.ini").write_text(cfg.text)
    return rows
