"""ROC/AUC, thresholded B-score AUC curves and the prior-location sensitivity scan."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import rankdata

from .errors import ValidationError
from .hyper import ChainConfig, Hyperparameters
from .plate import Campaign, compound_stats


@dataclass
class RocCurve:
    """ROC points ordered by decreasing threshold (so fpr and tpr increase)."""

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float

    @property
    def points(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist(), self.thresholds.tolist()))

    def trapezoid(self) -> float:
        return float(np.sum(np.diff(self.fpr) * (self.tpr[1:] + self.tpr[:-1]) / 2.0))


def _labels(labels, n) -> np.ndarray:
    y = np.asarray(labels).astype(int).ravel()
    if y.size != n:
        raise ValidationError("scores and labels differ in length")
    if not set(np.unique(y)) <= {0, 1}:
        raise ValidationError("labels must be binary")
    if y.min() == y.max():
        raise ValidationError("both classes must be present")
    return y


def auc_mann_whitney(scores, labels) -> float:
    """Probability a random positive outscores a random negative, ties counting 1/2."""
    s = np.asarray(scores, dtype=float).ravel()
    y = _labels(labels, s.size)
    ranks = rankdata(s)
    n1 = int(y.sum())
    n0 = y.size - n1
    return float((ranks[y == 1].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def roc_auc(scores, labels) -> RocCurve:
    s = np.asarray(scores, dtype=float).ravel()
    y = _labels(labels, s.size)
    order = np.argsort(-s, kind="stable")
    s_sorted, y_sorted = s[order], y[order]
    last_of_tie = np.r_[np.flatnonzero(np.diff(s_sorted)), s.size - 1]
    tp = np.cumsum(y_sorted)[last_of_tie]
    fp = (last_of_tie + 1) - tp
    n1, n0 = tp[-1], fp[-1]
    fpr = np.r_[0.0, fp / n0]
    tpr = np.r_[0.0, tp / n1]
    thr = np.r_[np.inf, s_sorted[last_of_tie]]
    return RocCurve(fpr, tpr, thr, auc_mann_whitney(s, y))


def write_roc_csv(curve: RocCurve, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("fpr", "tpr", "threshold"))
        for f, t, th in curve.points:
            w.writerow((repr(f), repr(t), repr(th)))


@dataclass
class ThresholdScan:
    thresholds: np.ndarray
    aucs: np.ndarray
    sidedness: str

    @property
    def best_index(self) -> int:
        return int(np.argmax(self.aucs))

    @property
    def best_threshold(self) -> float:
        return float(self.thresholds[self.best_index])

    @property
    def best_auc(self) -> float:
        return float(self.aucs[self.best_index])

    def pairs(self):
        return list(zip(self.thresholds.tolist(), self.aucs.tolist()))


def binarized_auc(scores, labels, t: float, sidedness: str = "greater") -> float:
    """AUC of the hard classifier ``score >= t`` (or ``|score| >= t``): (TPR + TNR) / 2."""
    s = np.asarray(scores, dtype=float)
    y = _labels(labels, s.size).astype(bool)
    x = np.abs(s) if sidedness == "absolute" else s
    call = x >= t
    tpr = call[y].mean()
    tnr = (~call[~y]).mean()
    return float((tpr + tnr) / 2.0)


def bscore_threshold_auc(scores, labels, thresholds=None, sidedness: str = "greater") -> ThresholdScan:
    """Binarized-classifier AUC for every threshold in the grid.

    ``scores`` may be a ScoreTable-like object with a ``scores`` attribute.
    The default grid is every distinct (transformed) score, which yields the
    exact maximum over thresholds.
    """
    if sidedness not in ("greater", "absolute"):
        raise ValidationError("sidedness must be 'greater' or 'absolute'")
    s = np.asarray(getattr(scores, "scores", scores), dtype=float).ravel()
    y = _labels(labels, s.size).astype(bool)
    x = np.abs(s) if sidedness == "absolute" else s
    grid = np.unique(x) if thresholds is None else np.asarray(thresholds, dtype=float).ravel()
    if grid.size == 0:
        raise ValidationError("empty threshold grid")
    pos, neg = np.sort(x[y]), np.sort(x[~y])
    tpr = 1.0 - np.searchsorted(pos, grid, side="left") / pos.size
    tnr = np.searchsorted(neg, grid, side="left") / neg.size
    return ThresholdScan(grid, (tpr + tnr) / 2.0, sidedness)


def write_threshold_scan_csv(scan: ThresholdScan, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("threshold", "auc", "sidedness"))
        for t, a in scan.pairs():
            w.writerow((repr(t), repr(a), scan.sidedness))


def sensitivity_scan(campaign: Campaign, truth: dict, hp_base: Hyperparameters, deltas,
                     cfg: ChainConfig, threads: int = 1):
    """AUC of posterior hit probabilities for each prior-location gap ``mu10 - mu00``.

    The pair is centered on the compound mean. All chains share ``cfg.seed``
    (common random numbers) so that AUC differences reflect the gap alone.
    """
    from .sampler import run_chain

    deltas = [float(d) for d in deltas]
    if not deltas:
        raise ValidationError("empty list of prior gaps")
    mean, _ = compound_stats(campaign)
    out = []
    for d in deltas:
        hp = replace(hp_base, mu10=mean + d / 2.0, mu00=mean - d / 2.0)
        res = run_chain(campaign, hp, cfg, threads=threads)
        keys = [(res.data.plate_ids[m], int(r), int(c))
                for m, r, c in zip(res.data.plate, res.data.rows, res.data.cols)]
        y = np.array([truth[k] for k in keys])
        out.append((d, auc_mann_whitney(res.posterior, y)))
    return out


def write_sensitivity_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("mu_gap", "auc"))
        for d, a in rows:
            w.writerow((repr(d), repr(a)))
