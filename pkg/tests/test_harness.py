import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from evd.core import NumericalAbort
from evd.harness import cli, experiments
from evd.harness.config import ConfigError, load_config, parse_config
from evd.harness.summary import read_rows, summarise
from evd.models import geometric_log_evidence, poisson_log_evidence

TINY_ISING = """
[experiment]
id = ising-evidence
seed = 5
replicates = {replicates}
output = out

[model]
rows = 4
cols = 4
data_sweeps = 50
# wide enough that no proposal draw leaves the support
prior_low = -5.0
prior_high = 5.0

[pilot]
steps = 200
b = 2

[logz]
p = 20
t = 10

[savis]
p = 20
m = 3
b = 2

[mavis]
p = 20
m = 2
k = 4
b = 2
"""


def _tiny(tmp_path, replicates=2):
    path = tmp_path / "tiny.ini"
    path.write_text(TINY_ISING.format(replicates=replicates))
    return load_config(path)


# -- configuration -------------------------------------------------------------------


@pytest.mark.parametrize(
    "body",
    [
        "[experiment]\nid = toy-bf\nseed = 1\nreplicates = 0\noutput = x",
        "[experiment]\nid = no-such\nseed = 1\nreplicates = 1\noutput = x",
        "[experiment]\nid = toy-bf\nseed = -1\nreplicates = 1\noutput = x",
        "[experiment]\nid = toy-bf\nseed = 1\nreplicates = 1\noutput = x\n[sl]\np = -5",
        "[experiment]\nid = toy-bf\nseed = 1\nreplicates = 1\noutput = x\n[abc]\neps = 0",
        "[model]\nn = 3",
        "not an ini file",
    ],
)
def test_invalid_configs(body):
    with pytest.raises(ConfigError):
        parse_config(body)


def test_unknown_section_rejected_at_run(tmp_path):
    cfg = parse_config("[experiment]\nid = precision-smc\nseed = 1\nreplicates = 1\noutput = x\n[savis]\np = 3", tmp_path)
    with pytest.raises(ConfigError, match="unknown sections"):
        experiments.run_experiment(cfg)


def test_output_relative_to_config(tmp_path):
    cfg = _tiny(tmp_path)
    assert cfg.output == tmp_path / "out"
    assert cfg.estimator("savis")["m"] == 3 and cfg.model_param("order", "first") == "first"


def test_workers_from_env(monkeypatch):
    monkeypatch.setenv("EVD_WORKERS", "3")
    assert experiments.workers_from_env() == 3
    monkeypatch.setenv("EVD_WORKERS", "zero")
    with pytest.raises(ConfigError):
        experiments.workers_from_env()


# -- summaries -------------------------------------------------------------------------


def test_summary_statistics():
    rows = [{"group": "a", "estimate": v, "oracle": 2.0} for v in (1.0, 2.0, 3.0, 4.0)]
    rows.append({"group": "a", "estimate": float("nan"), "oracle": 2.0})
    (s,) = summarise(rows)
    assert s["count"] == 5 and s["n_undefined"] == 1
    assert (s["min"], s["q1"], s["median"], s["q3"], s["max"]) == (1.0, 1.75, 2.5, 3.25, 4.0)
    assert s["mean"] == 2.5 and s["sd"] == pytest.approx(math.sqrt(5 / 3))
    assert s["bias"] == 0.5 and s["mse"] == pytest.approx((1 + 0 + 1 + 4) / 4)


def test_summary_without_oracle(capsys):
    (s,) = summarise([{"group": "g", "estimate": 1.0, "oracle": None}, {"group": "g", "estimate": 2.0, "oracle": 1.0}])
    assert "bias" not in s and "mse" not in s
    assert "notice" in capsys.readouterr().err
    (s,) = summarise([{"group": "g", "estimate": 1.0}])
    assert math.isnan(s["sd"])


# -- runs --------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("tiny")
    cfg = _tiny(tmp)
    rows = experiments.run_experiment(cfg, workers=1, output=tmp / "a")
    return cfg, rows, tmp


def test_budget_accounting(tiny_run):
    _, rows, _ = tiny_run
    by = {r["group"]: r for r in rows if r["replicate"] == 0}
    # one unit per Gibbs sweep or exact draw, paired runs see the same P
    assert by["savis"]["sweeps"] == 20 * 3 * (2 + 1)
    assert by["mavis"]["sweeps"] == 20 * 2 * (2 + 1 + 4)


def test_output_files(tiny_run):
    cfg, rows, tmp = tiny_run
    out = tmp / "a"
    header = (out / "replicates.csv").read_text().splitlines()[0].split(",")
    assert header[:9] == ["replicate", "group", "estimate", "oracle", "bias_class", "ess", "sweeps", "seed", "config_hash"]
    assert header[9:] == sorted(header[9:]) and "wall_time" not in header
    assert (out / "timing.csv").read_text().startswith("replicate,group,wall_time\nsetup,,")
    assert (out / "config.ini").read_text() == cfg.text
    rep = read_rows(out / "replicates.csv")
    assert len(rep) == 4 and all(r["oracle"] for r in rep)
    assert {r["group"] for r in read_rows(out / "summary.csv")} == {"savis", "mavis"}


def test_rerun_is_byte_identical(tiny_run):
    cfg, _, tmp = tiny_run
    experiments.run_experiment(cfg, workers=1, output=tmp / "b")
    for name in ("replicates.csv", "summary.csv"):
        assert (tmp / "a" / name).read_bytes() == (tmp / "b" / name).read_bytes()


def test_parallel_matches_inline(tiny_run):
    cfg, _, tmp = tiny_run
    experiments.run_experiment(cfg, workers=2, output=tmp / "c")
    assert (tmp / "a" / "replicates.csv").read_bytes() == (tmp / "c" / "replicates.csv").read_bytes()


def test_replicate_independent_of_replicate_count(tiny_run, tmp_path):
    _, rows, _ = tiny_run
    one = experiments.run_experiment(_tiny(tmp_path, replicates=1), workers=1, output=tmp_path / "d")
    assert [r["estimate"] for r in one] == [r["estimate"] for r in rows if r["replicate"] == 0]


def test_summarise_command_regenerates_summary(tiny_run, capsys):
    _, _, tmp = tiny_run
    before = (tmp / "a" / "summary.csv").read_bytes()
    (tmp / "a" / "summary.csv").unlink()
    assert cli.main(["summarise", str(tmp / "a")]) == 0
    assert (tmp / "a" / "summary.csv").read_bytes() == before


def test_prop1_sweep_experiment(tmp_path):
    cfg = parse_config("[experiment]\nid = prop1-sweep\nseed = 3\nreplicates = 1\noutput = o\n[model]\ninstances = 20", tmp_path)
    rows = experiments.run_experiment(cfg)
    assert len(rows) == 20 and all(r["holds"] for r in rows)


# -- command line -----------------------------------------------------------------------


def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[experiment]\nid = toy-bf\nseed = 1\nreplicates = 0\noutput = x")
    assert cli.main(["run", str(bad)]) == 2
    assert "config error" in capsys.readouterr().err
    assert cli.main(["run", str(tmp_path / "missing.ini")]) == 2
    assert cli.main(["summarise", str(tmp_path)]) == 2


def test_cli_numerical_abort_exit_code(tmp_path, monkeypatch, capsys):
    def boom(cfg):
        raise NumericalAbort("NaN incremental weight at step 4", {"t": 4})

    monkeypatch.setattr(experiments, "run_experiment", boom)
    path = tmp_path / "tiny.ini"
    path.write_text(TINY_ISING.format(replicates=1))
    assert cli.main(["run", str(path)]) == 3
    err = capsys.readouterr().err
    assert "numerical abort" in err and "t: 4" in err


def test_cli_oracle(capsys):
    assert cli.main(["oracle", "poisson", "y=1,2"]) == 0
    assert capsys.readouterr().out == f"log_evidence={poisson_log_evidence(np.array([1, 2]))!r}\n"
    assert poisson_log_evidence(np.array([1, 2])) == pytest.approx(math.log(1 / 27))
    assert cli.main(["oracle", "geometric", "y=1,2"]) == 0
    assert geometric_log_evidence(np.array([1, 2])) == pytest.approx(math.log(1 / 60))
    assert cli.main(["oracle", "ising", "rows=1", "cols=1", "theta=0.4"]) == 0
    assert capsys.readouterr().out.strip().endswith(repr(math.log(2.0)))
    assert cli.main(["oracle", "nonsense"]) == 2
    assert cli.main(["oracle", "ising", "rows=2"]) == 2


def test_cli_prop1(capsys):
    assert cli.main(["prop1", "--instances", "5", "--seed", "2"]) == 0
    out, err = capsys.readouterr()
    assert len(out.splitlines()) == 6 and "bound holds in 5/5" in err
    assert cli.main(["prop1", "--instances", "0", "--seed", "2"]) == 2


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "evd.harness.cli", "oracle", "prop1", "gamma_rel=0.1", "eps_m=0.5", "eps_g=0.5"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout == f"bound={4 * 0.1 * 0.5 / (0.5**3 * 0.5)!r}\n"


def test_ergm_likelihood_free_and_mavis_bayes_factors_agree(tmp_path):
    text = (Path(__file__).resolve().parent.parent / "configs" / "ergm-synthetic.ini").read_text()
    cfg = parse_config(text.replace("replicates = 10", "replicates = 2"), tmp_path)
    rows = experiments.run_experiment(cfg, output=tmp_path / "ergm")
    bf = {r["group"]: r["estimate"] for r in rows if r["group"].endswith("-bf") and r["replicate"] == 0}
    truth = next(r["oracle"] for r in rows if r["group"] == "mavis-bf")
    assert abs(bf["sl-bf"] - bf["mavis-bf"]) <= math.log(3)
    assert abs(bf["mavis-bf"] - truth) <= 0.2 and abs(bf["savis-bf"] - truth) <= 0.2
