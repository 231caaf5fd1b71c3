"""Hit lists and Bayesian false discovery rate control from posterior hit probabilities.

For a threshold ``r`` the estimated FDR of the selection ``{p > r}`` is the
mean of ``1 - p`` over the selected wells.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError


@dataclass(frozen=True)
class HitCall:
    plate_id: str
    row: int
    col: int
    posterior: float
    is_hit: bool
    threshold_used: float


def _check(posteriors) -> np.ndarray:
    p = np.asarray(posteriors, dtype=float).ravel()
    if np.any(~(p >= 0) | ~(p <= 1)):
        raise ValidationError("posterior probabilities must lie in [0, 1]")
    return p


def estimate_fdr(posteriors, r: float) -> float:
    p = _check(posteriors)
    sel = p > r
    k = int(sel.sum())
    if k == 0:
        raise NumericalError(f"no posterior exceeds r={r}; FDR undefined")
    return float((1.0 - p[sel]).sum() / k)


def fdr_table(posteriors):
    """FDR at every candidate threshold (0 and each distinct posterior value).

    Returns ``(thresholds, fdr, n_selected)`` sorted by increasing threshold,
    omitting thresholds that select nothing.
    """
    p = _check(posteriors)
    if p.size == 0:
        raise ValidationError("empty posterior vector")
    cand = np.unique(np.concatenate([[0.0], p]))
    desc = np.sort(p)[::-1]
    cum_false = np.cumsum(1.0 - desc)
    # number of posteriors strictly greater than each candidate
    n_sel = p.size - np.searchsorted(np.sort(p), cand, side="right")
    keep = n_sel > 0
    cand, n_sel = cand[keep], n_sel[keep]
    fdr = cum_false[n_sel - 1] / n_sel
    return cand, fdr, n_sel


def threshold_for_fdr(posteriors, target: float) -> float:
    """Smallest candidate threshold whose estimated FDR is at most ``target``."""
    if not 0 < target < 1:
        raise ValidationError("FDR target must lie in (0, 1)")
    thr, fdr, _ = fdr_table(posteriors)
    ok = np.flatnonzero(fdr <= target)
    if ok.size == 0:
        raise NumericalError(f"no threshold attains FDR <= {target}")
    return float(thr[ok[0]])


def call_hits(wells, r: float) -> list[HitCall]:
    """``wells`` is an iterable of ``(plate_id, row, col, posterior)``; a ChainResult works too."""
    if hasattr(wells, "posterior") and hasattr(wells, "data"):
        from .results import posterior_rows
        wells = posterior_rows(wells)
    return [HitCall(pid, int(row), int(col), float(p), bool(p > r), float(r))
            for pid, row, col, p in wells]


def write_hits_csv(calls, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("plate_id", "row", "col", "posterior", "is_hit", "threshold"))
        for h in calls:
            w.writerow((h.plate_id, h.row, h.col, repr(h.posterior), int(h.is_hit), repr(h.threshold_used)))


def write_fdr_table_csv(posteriors, path) -> None:
    thr, fdr, n = fdr_table(posteriors)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("threshold", "fdr", "hits_selected"))
        for t, f, k in zip(thr.tolist(), fdr.tolist(), n.tolist()):
            w.writerow((repr(t), repr(f), k))
