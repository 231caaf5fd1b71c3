"""Trace handling and mixing summaries for Gibbs output.

Component labels are not identified, so component traces are sorted per
iteration before storage. ``paired`` mode permutes variances and weights with
the order of the means; ``independent`` sorts every family on its own.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import NumericalError, ParseError


@dataclass
class Trace:
    parameter: str
    index: int
    samples: np.ndarray


@dataclass
class MixingSummary:
    mean: float
    sd: float
    lag1_autocorr: float
    ess: float
    degenerate: bool = False

    def to_dict(self) -> dict:
        """JSON-safe dict; undefined statistics become ``None``."""
        return {k: (None if isinstance(v, float) and not np.isfinite(v) else v)
                for k, v in asdict(self).items()}


def sort_labels(values, *companions):
    """Sort ``values`` ascending along the last axis.

    With ``companions`` (arrays of the same shape) the same permutation is
    applied to each and a tuple ``(sorted_values, *permuted_companions)`` is
    returned.
    """
    values = np.asarray(values)
    order = np.argsort(values, axis=-1, kind="stable")
    out = np.take_along_axis(values, order, axis=-1)
    if not companions:
        return out
    return (out, *(np.take_along_axis(np.asarray(c), order, axis=-1) for c in companions))


def sort_component_draw(mu, sigma2, weights, mode: str = "paired"):
    """Label-sort one draw of per-stratum component arrays (shape ``(..., K)``)."""
    if mode == "paired":
        return sort_labels(mu, sigma2, weights)
    if mode == "independent":
        return sort_labels(mu), sort_labels(sigma2), np.asarray(weights)
    return np.asarray(mu), np.asarray(sigma2), np.asarray(weights)


def autocorrelation(x) -> np.ndarray:
    """Sample autocorrelation at all lags (biased normalization, FFT based)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    xc = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    return acov / acov[0]


def effective_sample_size(x) -> float:
    """ESS with Geyer's initial positive sequence truncation."""
    x = np.asarray(x, dtype=float)
    n = x.size
    rho = autocorrelation(x)
    total = 0.0
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        total += pair
    tau = -1.0 + 2.0 * total
    # antithetic chains can drive tau below zero; cap as in common practice
    tau = max(tau, 1.0 / np.log10(n))
    return n / tau


def summarize_mixing(trace) -> MixingSummary:
    samples = np.asarray(trace.samples if isinstance(trace, Trace) else trace, dtype=float)
    n = samples.size
    if n < 10:
        raise NumericalError("need at least 10 samples to summarize mixing")
    mean = float(samples.mean())
    sd = float(samples.std(ddof=1))
    if sd == 0 or np.ptp(samples) == 0:
        return MixingSummary(mean, 0.0, float("nan"), float(n), degenerate=True)
    rho = autocorrelation(samples)
    return MixingSummary(mean, sd, float(rho[1]), float(effective_sample_size(samples)))


def read_trace_csv(path) -> list[Trace]:
    """Parse ``iteration,parameter,index,value`` rows into one Trace per (parameter, index)."""
    series: dict[tuple[str, int], list[tuple[int, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["iteration", "parameter", "index", "value"]:
            raise ParseError("expected header iteration,parameter,index,value", line=1)
        for lineno, rec in enumerate(reader, start=2):
            try:
                it, name, idx, val = int(rec[0]), rec[1], int(rec[2]), float(rec[3])
            except (ValueError, IndexError) as exc:
                raise ParseError(str(exc), line=lineno) from None
            series.setdefault((name, idx), []).append((it, val))
    traces = []
    for (name, idx), pts in series.items():
        pts.sort()
        traces.append(Trace(name, idx, np.array([v for _, v in pts])))
    return traces


def summarize_traces(traces) -> dict:
    out = {}
    for t in traces:
        out.setdefault(t.parameter, {})[str(t.index)] = summarize_mixing(t).to_dict()
    return out


def write_summary_json(summary: dict, path, config: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"config": config or {}, "summary": summary}, fh, indent=2, sort_keys=True,
                  allow_nan=False)
        fh.write("\n")
