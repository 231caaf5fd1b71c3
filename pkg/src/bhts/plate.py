"""Screening campaign data model, CSV ingestion and compound summary statistics.

A campaign is a list of plates; each plate holds wells with a type tag and a
raw readout. Only ``Compound`` wells enter the Bayesian model; controls are
kept for the classical scorers (NPI) and for bookkeeping.

CSV layout (header required)::

    plate_id,row,col,well_type,value

Plate dimensions default to ``(max row + 1, max col + 1)``. A sidecar JSON
file (``<stem>.plates.json``) may declare explicit dimensions and campaign
metadata; :func:`write_campaign_csv` always writes one so that the round trip
is exact.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError

CSV_HEADER = ("plate_id", "row", "col", "well_type", "value")


class WellType(enum.Enum):
    COMPOUND = "compound"
    NEGATIVE = "negative"
    POSITIVE = "positive"
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"

    @classmethod
    def parse(cls, text: str) -> "WellType":
        key = text.strip().lower()
        for member in cls:
            if member.value == key:
                return member
        raise ValueError(f"unknown well type {text!r}")


@dataclass(frozen=True)
class Well:
    row: int
    col: int
    well_type: WellType
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValidationError(f"non-finite value at ({self.row}, {self.col})")
        if self.row < 0 or self.col < 0:
            raise ValidationError(f"negative well coordinate ({self.row}, {self.col})")


@dataclass(frozen=True)
class Plate:
    plate_id: str
    n_rows: int
    n_cols: int
    wells: tuple[Well, ...]

    def __post_init__(self):
        if self.n_rows < 1 or self.n_cols < 1:
            raise ValidationError(f"plate {self.plate_id}: dimensions must be positive")
        seen = set()
        for w in self.wells:
            if w.row >= self.n_rows or w.col >= self.n_cols:
                raise ValidationError(
                    f"plate {self.plate_id}: well ({w.row}, {w.col}) outside "
                    f"{self.n_rows}x{self.n_cols} grid"
                )
            if (w.row, w.col) in seen:
                raise ValidationError(
                    f"plate {self.plate_id}: duplicate well coordinate ({w.row}, {w.col})"
                )
            seen.add((w.row, w.col))

    def wells_of(self, *types: WellType) -> list[Well]:
        return [w for w in self.wells if w.well_type in types]

    @property
    def compounds(self) -> list[Well]:
        return self.wells_of(WellType.COMPOUND)

    @property
    def n_compounds(self) -> int:
        return sum(1 for w in self.wells if w.well_type is WellType.COMPOUND)


@dataclass(frozen=True)
class Campaign:
    plates: tuple[Plate, ...]
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.plates) < 1:
            raise ValidationError("a campaign needs at least one plate")
        ids = [p.plate_id for p in self.plates]
        if len(set(ids)) != len(ids):
            raise ValidationError("plate ids must be unique")

    @property
    def n_plates(self) -> int:
        return len(self.plates)

    def count(self, well_type: WellType) -> int:
        return sum(1 for p in self.plates for w in p.wells if w.well_type is well_type)

    def compound_values(self) -> np.ndarray:
        return np.array(
            [w.value for p in self.plates for w in p.wells if w.well_type is WellType.COMPOUND],
            dtype=float,
        )

    def plate(self, plate_id: str) -> Plate:
        for p in self.plates:
            if p.plate_id == plate_id:
                return p
        raise KeyError(plate_id)


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".plates.json")


def parse_campaign_csv(path, dims_path=None) -> Campaign:
    """Read a campaign CSV, validating every row.

    ``dims_path`` defaults to the ``<stem>.plates.json`` sidecar when present.
    """
    path = Path(path)
    dims: dict[str, tuple[int, int]] = {}
    metadata: dict[str, str] = {}
    if dims_path is None and sidecar_path(path).exists():
        dims_path = sidecar_path(path)
    if dims_path is not None:
        with open(dims_path, encoding="utf-8") as fh:
            side = json.load(fh)
        for pid, d in side.get("plates", {}).items():
            dims[pid] = (int(d["n_rows"]), int(d["n_cols"]))
        metadata = {str(k): str(v) for k, v in side.get("metadata", {}).items()}

    order: list[str] = []
    rows: dict[str, list[Well]] = {}
    seen: set[tuple[str, int, int]] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip().lower() for h in header) != CSV_HEADER:
            raise ParseError(f"expected header {','.join(CSV_HEADER)}", line=1)
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != 5:
                raise ParseError(f"expected 5 fields, got {len(rec)}", line=lineno)
            pid = rec[0].strip()
            if not pid:
                raise ParseError("empty plate_id", line=lineno)
            try:
                r, c = int(rec[1]), int(rec[2])
                wt = WellType.parse(rec[3])
                value = float(rec[4])
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
            if r < 0 or c < 0:
                raise ParseError(f"negative coordinate ({r}, {c})", line=lineno)
            if not math.isfinite(value):
                raise ValidationError(f"line {lineno}: non-finite value {rec[4]!r}")
            key = (pid, r, c)
            if key in seen:
                raise ValidationError(
                    f"line {lineno}: duplicate well coordinate ({r}, {c}) on plate {pid}"
                )
            seen.add(key)
            if pid not in rows:
                order.append(pid)
                rows[pid] = []
            rows[pid].append(Well(r, c, wt, value))

    plates = []
    for pid in order:
        wells = rows[pid]
        n_rows = max(w.row for w in wells) + 1
        n_cols = max(w.col for w in wells) + 1
        if pid in dims:
            n_rows, n_cols = dims[pid]
        plates.append(Plate(pid, n_rows, n_cols, tuple(wells)))
    return Campaign(tuple(plates), metadata)


def write_campaign_csv(campaign: Campaign, path) -> None:
    """Write ``campaign`` as CSV plus its dimensions/metadata sidecar."""
    if not isinstance(campaign, Campaign):
        raise ValidationError("expected a Campaign")
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for p in campaign.plates:
            for w in p.wells:
                writer.writerow((p.plate_id, w.row, w.col, w.well_type.value, repr(float(w.value))))
    side = {
        "metadata": dict(sorted(campaign.metadata.items())),
        "plates": {p.plate_id: {"n_rows": p.n_rows, "n_cols": p.n_cols} for p in campaign.plates},
    }
    with open(sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(side, fh, indent=1)
        fh.write("\n")


def compound_stats(campaign: Campaign) -> tuple[float, float]:
    """Mean and unbiased variance over all compound wells (controls ignored)."""
    z = campaign.compound_values()
    if z.size < 2:
        raise ValidationError("need at least two compound wells")
    return float(z.mean()), float(z.var(ddof=1))
