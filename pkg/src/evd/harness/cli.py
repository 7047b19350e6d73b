"""``evd`` command line.

    evd run <config>                      run an experiment, write CSVs
    evd summarise <dir>                   recompute <dir>/summary.csv
    evd prop1 --instances N --seed S      random-instance bound check (CSV on stdout)
    evd oracle <model> key=value ...      print analytic reference values

Exit status: 0 on success, 2 on a configuration error, 3 on a numerical abort.
The worker count comes from ``EVD_WORKERS`` (default 1).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from evd.core import NumericalAbort, make_rng
from evd.harness.config import ConfigError, load_config

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _floats(text):
    return np.array([float(v) for v in str(text).split(",") if v != ""])


def _params(items):
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"expected key=value, got {item!r}")
        out[key.strip().lower()] = value.strip()
    return out


def _need(params, *keys):
    missing = [k for k in keys if k not in params]
    if missing:
        raise ConfigError(f"missing parameter(s): {', '.join(missing)}")


def _oracle_counts(params, fn):
    _need(params, "y")
    return {"log_evidence": fn(_floats(params["y"]).astype(int))}


def oracle_values(model, params):
    """Analytic values for ``evd oracle``; returns an ordered dict of floats."""
    from evd import theory
    from evd.models import (
        ErgmModel,
        GaussianPrecisionModel,
        IsingModel,
        geometric_log_evidence,
        poisson_log_evidence,
        toy_log_bayes_factor,
    )

    try:
        if model == "poisson":
            return _oracle_counts(params, poisson_log_evidence)
        if model == "geometric":
            return _oracle_counts(params, geometric_log_evidence)
        if model == "toy-bf":
            _need(params, "y")
            y = _floats(params["y"]).astype(int)
            return {
                "log_evidence_poisson": poisson_log_evidence(y),
                "log_evidence_geometric": geometric_log_evidence(y),
                "log_bf": toy_log_bayes_factor(y),
            }
        if model == "ising":
            _need(params, "rows", "cols", "theta")
            order = params.get("order", "first")
            m = IsingModel(int(params["rows"]), int(params["cols"]), order)
            theta = _floats(params["theta"])
            if len(theta) != m.dim:
                raise ConfigError(f"{order}-order Ising needs {m.dim} parameter value(s)")
            return {"log_z": m.exact_log_z(theta)}
        if model == "ergm":
            _need(params, "nodes", "theta")
            theta = _floats(params["theta"])
            stats = ("edges",) if len(theta) == 1 else ("edges", "twostars")
            return {"log_z": ErgmModel(int(params["nodes"]), stats).exact_log_z(theta)}
        if model == "precision":
            _need(params, "d")
            d = int(params["d"])
            m = GaussianPrecisionModel(d)
            if "y" in params:
                y = _floats(params["y"]).reshape(-1, d)
            else:
                _need(params, "n", "seed")
                var = float(params.get("data_var", 0.1))
                y = make_rng(int(params["seed"])).normal(0.0, np.sqrt(var), (int(params["n"]), d))
            return {"n": len(y), "log_evidence": m.log_evidence(y)}
        if model == "prop1":
            _need(params, "gamma_rel", "eps_m", "eps_g")
            return {"bound": theory.prop1_bound(float(params["gamma_rel"]), float(params["eps_m"]), float(params["eps_g"]))}
    except ValueError as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(str(err)) from err
    raise ConfigError(f"unknown oracle model {model!r}; expected poisson, geometric, toy-bf, ising, ergm, precision or prop1")


def cmd_run(args):
    from evd.harness.experiments import run_experiment

    cfg = load_config(args.config)
    rows = run_experiment(cfg)
    print(f"{cfg.id}: {len(rows)} rows written to {cfg.output}")
    print((Path(cfg.output) / "summary.csv").read_text(), end="")
    return 0


def cmd_summarise(args):
    from evd.harness.summary import read_rows, write_summary

    src = Path(args.dir) / "replicates.csv"
    if not src.exists():
        raise ConfigError(f"no replicates.csv in {args.dir}")
    write_summary(read_rows(src), Path(args.dir) / "summary.csv")
    print((Path(args.dir) / "summary.csv").read_text(), end="")
    return 0


def cmd_prop1(args):
    from evd import theory

    if args.instances <= 0:
        raise ConfigError("--instances must be positive")
    rows = theory.prop1_sweep(args.instances, make_rng(args.seed), n=args.n, T=args.T)
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        theory.write_rows(rows, out, theory.PROP1_COLUMNS)
    finally:
        if args.output:
            out.close()
    held = sum(r["margin"] >= 0 for r in rows)
    lemma = sum(r["lemma1_ok"] for r in rows)
    worst = min(r["margin"] for r in rows)
    print(f"bound holds in {held}/{len(rows)}; lemma in {lemma}/{len(rows)}; min margin {worst!r}", file=sys.stderr)
    return 0


def cmd_oracle(args):
    for key, value in oracle_values(args.model, _params(args.params)).items():
        print(f"{key}={value!r}" if isinstance(value, float) else f"{key}={value}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="evd", description="Evidence estimation for doubly intractable models.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("summarise", help="summarise a results directory")
    p.add_argument("dir")
    p.set_defaults(func=cmd_summarise)

    p = sub.add_parser("prop1", help="check the flow perturbation bound on random instances")
    p.add_argument("--instances", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n", type=int, default=6)
    p.add_argument("--T", type=int, default=40)
    p.add_argument("--output")
    p.set_defaults(func=cmd_prop1)

    p = sub.add_parser("oracle", help="print analytic values")
    p.add_argument("model")
    p.add_argument("params", nargs="*")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as err:
        print(f"numerical abort: {err}", file=sys.stderr)
        for key, value in err.diagnostics.items():
            print(f"  {key}: {value}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
