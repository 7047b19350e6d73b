"""Per-group summaries of replicate rows, and deterministic CSV writing."""

from __future__ import annotations

import csv
import sys

import numpy as np

LEAD = ("replicate", "group", "estimate", "oracle", "bias_class", "ess", "sweeps", "seed", "config_hash")
SUMMARY_COLUMNS = ("group", "count", "n_undefined", "min", "q1", "median", "q3", "max", "mean", "sd", "bias", "mse")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def write_csv(rows, path, order=LEAD):
    """Write dict rows; ``order`` columns first, the rest sorted, floats as ``repr``."""
    keys = {k for r in rows for k in r}
    columns = [k for k in order if k in keys] + sorted(keys - set(order))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for r in rows:
            writer.writerow([_cell(r.get(k)) for k in columns])


def _number(v):
    if v is None or v == "":
        return None
    return float(v)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def summarise(rows):
    """Five-number summary, mean, sd, and bias/MSE against ``oracle`` per group.

    Non-finite estimates are counted in ``n_undefined`` and left out of the
    statistics.  Bias and MSE are left empty, with a notice on stderr, for a
    group in which some row lacks an oracle.
    """
    groups = {}
    for r in rows:
        groups.setdefault(str(r["group"]), []).append(r)
    out = []
    for name in sorted(groups):
        members = groups[name]
        est = np.array([_number(r.get("estimate")) for r in members], dtype=float)
        oracle = [_number(r.get("oracle")) for r in members]
        ok = np.isfinite(est)
        row = {"group": name, "count": len(members), "n_undefined": int((~ok).sum())}
        vals = est[ok]
        if len(vals):
            q = np.quantile(vals, [0.0, 0.25, 0.5, 0.75, 1.0])
            row.update(zip(("min", "q1", "median", "q3", "max"), (float(x) for x in q)))
            row["mean"] = float(vals.mean())
            row["sd"] = float(vals.std(ddof=1)) if len(vals) > 1 else float("nan")
        if any(o is None for o in oracle):
            if any("oracle" in r for r in members):
                print(f"notice: group {name!r} has rows without an oracle; bias and MSE omitted", file=sys.stderr)
        elif len(vals):
            err = vals - np.array(oracle, dtype=float)[ok]
            row["bias"] = float(err.mean())
            row["mse"] = float(np.mean(err**2))
        out.append(row)
    return out


def write_summary(rows, path):
    write_csv(summarise(rows), path, order=SUMMARY_COLUMNS)
