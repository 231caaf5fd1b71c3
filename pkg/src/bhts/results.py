"""Serialization of chain results: JSON summary and long-format trace CSV."""

from __future__ import annotations

import csv
import json

import numpy as np

from .errors import ParseError
from .hyper import ChainConfig, Hyperparameters

STRATUM_SUFFIX = {1: "1", 0: "0"}


def _tolist(x):
    return np.asarray(x).tolist()


def chain_summary(result) -> dict:
    """JSON-ready dict: config echo, posterior means and per-well hit probabilities."""
    d = result.data
    means = result.means
    summary = {
        "pi": means["pi"],
        "n_kept": result.n_kept,
        "underflow_wells": result.underflow,
    }
    for s in (1, 0):
        sfx = STRATUM_SUFFIX[s]
        summary[f"alpha{sfx}"] = float(means["alpha"][s])
        summary[f"tau{sfx}"] = float(means["tau"][s])
        summary[f"mu{sfx}"] = _tolist(means["mu"][s])
        summary[f"sigma2_{sfx}"] = _tolist(means["sigma2"][s])
        summary[f"lambda{sfx}"] = _tolist(means["weights"][s])
    wells = [
        [d.plate_ids[m], int(r), int(c), float(p)]
        for m, r, c, p in zip(d.plate.tolist(), d.rows.tolist(), d.cols.tolist(), result.posterior)
    ]
    return {
        "config": {
            "hyperparameters": result.hyperparameters.to_dict(),
            "chain": result.config.to_dict(),
            **result.extra.get("config_echo", {}),
        },
        "summary": summary,
        "wells": {"columns": ["plate_id", "row", "col", "posterior"], "data": wells},
    }


def write_chain_json(result, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(chain_summary(result), fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_chain_json(path) -> dict:
    """Load a chain summary; returns the parsed dict with wells as tuples."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        wells = [(str(p), int(r), int(c), float(v)) for p, r, c, v in doc["wells"]["data"]]
        doc["config"]["hyperparameters"] = Hyperparameters.from_dict(doc["config"]["hyperparameters"])
        doc["config"]["chain"] = ChainConfig.from_dict(doc["config"]["chain"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: not a chain result ({exc})") from None
    doc["wells"] = wells
    return doc


def trace_rows(result):
    """Yield ``(iteration, parameter, index, value)`` rows in a fixed order."""
    tr = result.traces
    if tr is None:
        return
    for j, it in enumerate(result.kept_iterations.tolist()):
        yield it, "pi", 0, float(tr["pi"][j])
        for s in (1, 0):
            sfx = STRATUM_SUFFIX[s]
            yield it, f"alpha{sfx}", 0, float(tr["alpha"][j, s])
            yield it, f"tau{sfx}", 0, float(tr["tau"][j, s])
        for s in (1, 0):
            sfx = STRATUM_SUFFIX[s]
            for name, key in ((f"mu{sfx}", "mu"), (f"sigma2_{sfx}", "sigma2"), (f"lambda{sfx}", "weights")):
                for k, v in enumerate(tr[key][j, s].tolist()):
                    yield it, name, k, v


def write_trace_csv(result, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("iteration", "parameter", "index", "value"))
        for it, name, k, v in trace_rows(result):
            w.writerow((it, name, k, repr(float(v))))


def posterior_rows(result):
    d = result.data
    for m, r, c, p in zip(d.plate.tolist(), d.rows.tolist(), d.cols.tolist(), result.posterior.tolist()):
        yield d.plate_ids[m], r, c, p


def read_truth_csv(path) -> dict:
    truth = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ["plate_id", "row", "col", "label"]:
            raise ParseError("expected header plate_id,row,col,label", line=1)
        for lineno, rec in enumerate(reader, start=2):
            try:
                truth[(rec[0], int(rec[1]), int(rec[2]))] = int(rec[3])
            except (ValueError, IndexError) as exc:
                raise ParseError(str(exc), line=lineno) from None
    return truth
