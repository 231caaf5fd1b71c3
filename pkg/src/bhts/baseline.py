"""Classical per-plate hit scores: NPI, Z-score and B-score (median polish / MAD)."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NumericalError, ParseError, ValidationError
from .plate import Plate, WellType

MAD_NORMAL = 1.4826


class ScoreMethod(enum.Enum):
    NPI = "npi"
    Z = "z"
    B = "b"
    POSTERIOR = "posterior"


@dataclass
class ScoreTable:
    """Per-well scores from one method. ``entries`` are (plate_id, row, col, score)."""

    method: ScoreMethod
    entries: list[tuple[str, int, int, float]] = field(default_factory=list)

    def __post_init__(self):
        for e in self.entries:
            if not np.isfinite(e[3]):
                raise NumericalError(f"non-finite score at {e[:3]}")

    def extend(self, other: "ScoreTable") -> None:
        if other.method is not self.method:
            raise ValueError("cannot merge score tables from different methods")
        self.entries.extend(other.entries)

    @property
    def scores(self) -> np.ndarray:
        return np.array([e[3] for e in self.entries], dtype=float)

    def keys(self) -> list[tuple[str, int, int]]:
        return [e[:3] for e in self.entries]

    def as_dict(self) -> dict[tuple[str, int, int], float]:
        return {e[:3]: e[3] for e in self.entries}


def write_score_table(table: ScoreTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("plate_id", "row", "col", "method", "score"))
        for pid, r, c, s in table.entries:
            w.writerow((pid, r, c, table.method.value, repr(float(s))))


def read_score_table(path) -> ScoreTable:
    entries = []
    method = None
    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["plate_id", "row", "col", "method", "score"]:
            raise ParseError("expected header plate_id,row,col,method,score", line=1)
        for lineno, rec in enumerate(reader, start=2):
            try:
                m = ScoreMethod(rec["method"].strip().lower())
                entries.append((rec["plate_id"], int(rec["row"]), int(rec["col"]), float(rec["score"])))
            except (ValueError, TypeError, AttributeError) as exc:
                raise ParseError(str(exc), line=lineno) from None
            if method is None:
                method = m
            elif m is not method:
                raise ParseError("mixed methods in one score table", line=lineno)
    if method is None:
        raise ValidationError(f"{path}: empty score table")
    return ScoreTable(method, entries)


# --- NPI -------------------------------------------------------------------


def npi_score(z, neg_ref: float, pos_ref: float):
    """Normalized percent inhibition, ``(z_p - z) / (z_p - z_n) * 100``."""
    if pos_ref == neg_ref:
        raise NumericalError("positive and negative control references coincide")
    return (pos_ref - np.asarray(z, dtype=float)) / (pos_ref - neg_ref) * 100.0


def plate_npi(plate: Plate, reducer: str = "median") -> ScoreTable:
    if reducer not in ("median", "mean"):
        raise ValueError(f"reducer must be 'median' or 'mean', got {reducer!r}")
    agg = np.median if reducer == "median" else np.mean
    neg = [w.value for w in plate.wells_of(WellType.NEGATIVE)]
    pos = [w.value for w in plate.wells_of(WellType.POSITIVE)]
    if not neg or not pos:
        raise ValidationError(f"plate {plate.plate_id}: NPI needs negative and positive controls")
    z_n, z_p = float(agg(neg)), float(agg(pos))
    comps = plate.compounds
    scores = npi_score([w.value for w in comps], z_n, z_p)
    return ScoreTable(
        ScoreMethod.NPI,
        [(plate.plate_id, w.row, w.col, float(s)) for w, s in zip(comps, scores)],
    )


# --- Z-score ---------------------------------------------------------------


def z_score(plate: Plate) -> ScoreTable:
    comps = plate.compounds
    if len(comps) < 2:
        raise ValidationError(f"plate {plate.plate_id}: Z-score needs two compound wells")
    z = np.array([w.value for w in comps])
    sd = z.std(ddof=1)
    if sd == 0:
        raise NumericalError(f"plate {plate.plate_id}: zero compound variance")
    scores = (z - z.mean()) / sd
    return ScoreTable(
        ScoreMethod.Z,
        [(plate.plate_id, w.row, w.col, float(s)) for w, s in zip(comps, scores)],
    )


# --- B-score ---------------------------------------------------------------


@dataclass
class MedianPolishResult:
    overall: float
    row_effects: np.ndarray
    col_effects: np.ndarray
    residuals: np.ndarray
    iterations: int
    converged: bool

    def fitted(self) -> np.ndarray:
        return self.overall + self.row_effects[:, None] + self.col_effects[None, :]


def median_polish(m, max_iter: int = 100, tol: float = 1e-6) -> MedianPolishResult:
    """Tukey's two-way median polish, sweeping rows first.

    Each iteration removes row medians (folding the median of the column
    effects into the overall term), then column medians (folding the median of
    the row effects). Stops once the largest absolute adjustment the next sweep
    would make is ``<= tol``, so an exactly additive matrix needs one sweep.
    """
    x = np.array(m, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 2:
        raise ValidationError("median polish needs a matrix of at least 2x2")
    if not np.all(np.isfinite(x)):
        raise ValidationError("median polish input has non-finite entries")
    nr, nc = x.shape
    overall = 0.0
    row = np.zeros(nr)
    col = np.zeros(nc)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        rdelta = np.median(x, axis=1)
        x -= rdelta[:, None]
        row += rdelta
        cshift = np.median(col)
        col -= cshift
        overall += cshift

        cdelta = np.median(x, axis=0)
        x -= cdelta[None, :]
        col += cdelta
        rshift = np.median(row)
        row -= rshift
        overall += rshift

        pending = max(
            np.abs(np.median(x, axis=1)).max(),
            np.abs(np.median(x, axis=0)).max(),
            abs(np.median(col)),
            abs(np.median(row)),
        )
        if pending <= tol:
            converged = True
            break
    return MedianPolishResult(overall, row, col, x, it, converged)


def _compound_grid(plate: Plate):
    comps = plate.compounds
    rows = sorted({w.row for w in comps})
    cols = sorted({w.col for w in comps})
    if len(comps) != len(rows) * len(cols):
        raise ValidationError(
            f"plate {plate.plate_id}: compound wells do not form a dense sub-grid"
        )
    ri = {r: i for i, r in enumerate(rows)}
    ci = {c: j for j, c in enumerate(cols)}
    grid = np.empty((len(rows), len(cols)))
    for w in comps:
        grid[ri[w.row], ci[w.col]] = w.value
    return grid, rows, cols


def mad_scores(residuals, mad_scale: float = MAD_NORMAL, floor: float = 0.0) -> np.ndarray:
    """Residuals divided by ``mad_scale * median(|r - median(r)|)``."""
    r = np.asarray(residuals, dtype=float)
    mad = mad_scale * np.median(np.abs(r - np.median(r)))
    if mad <= floor:
        raise NumericalError("median absolute deviation is zero")
    return r / mad


def b_score(plate: Plate, max_iter: int = 100, tol: float = 1e-6,
            mad_scale: float = MAD_NORMAL) -> ScoreTable:
    grid, rows, cols = _compound_grid(plate)
    res = median_polish(grid, max_iter=max_iter, tol=tol).residuals
    # residuals of an exactly additive plate are rounding noise, not signal
    floor = 1e-12 * max(1.0, float(np.abs(grid).max()))
    try:
        scores = mad_scores(res, mad_scale, floor=floor)
    except NumericalError:
        raise NumericalError(f"plate {plate.plate_id}: zero MAD of polish residuals") from None
    return ScoreTable(
        ScoreMethod.B,
        [(plate.plate_id, r, c, float(scores[i, j]))
         for i, r in enumerate(rows) for j, c in enumerate(cols)],
    )


def score_campaign(campaign, method: ScoreMethod | str, **kwargs) -> ScoreTable:
    method = ScoreMethod(method) if isinstance(method, str) else method
    fn = {ScoreMethod.NPI: plate_npi, ScoreMethod.Z: z_score, ScoreMethod.B: b_score}.get(method)
    if fn is None:
        raise ValueError(f"{method.value} is not a per-plate baseline")
    table = ScoreTable(method)
    for p in campaign.plates:
        table.extend(fn(p, **kwargs))
    return table
