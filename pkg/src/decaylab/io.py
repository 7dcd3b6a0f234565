"""CSV and JSON input/output.

Input schemas:

* units CSV: ``unit_id,latitude,longitude,<outcome...>,<covariate...>``
  (an optional ``distance_km`` column short-circuits the distance
  stage); rows whose selected outcome is missing or unparseable are
  dropped and counted in the ingestion report.
* sources CSV: ``source_id,latitude,longitude``.
* panel CSV: ``unit_id,year,outcome,treated_post,distance_km`` plus any
  number of 0/1 modifier columns.

JSON written by the pipeline uses sorted keys and a trailing newline so
identical runs serialize byte-identically.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyFile, MissingColumn, ParseError
from .estimation import Sample
from .geo import GeoPoint, SourceSet, build_distance_table
from .panel import PanelObservation

__all__ = [
    "IngestionReport",
    "read_units_csv",
    "ingest_units",
    "read_sources_csv",
    "read_panel_csv",
    "write_panel_csv",
    "write_distance_csv",
    "write_decay_curve_csv",
    "write_comparison_csv",
    "write_field_csv",
    "write_json",
    "read_json",
]

KNOWN_COVARIATES = ("median_age", "pct_bachelors", "pct_female", "income")
_MISSING = {"", "na", "nan", "null", "none", "."}


@dataclass
class IngestionReport:
    """What happened while reading an input table."""

    path: str
    n_rows_read: int = 0
    n_rows_kept: int = 0
    dropped: list[dict] = field(default_factory=list)

    def drop(self, row_number: int, reason: str) -> None:
        self.dropped.append({"row": row_number, "reason": reason})

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "n_rows_read": self.n_rows_read,
            "n_rows_kept": self.n_rows_kept,
            "dropped": self.dropped,
        }


def _open_reader(path: str | Path) -> tuple[csv.DictReader, list[str]]:
    handle = open(path, newline="")
    reader = csv.DictReader(handle)
    if reader.fieldnames is None:
        handle.close()
        raise EmptyFile(f"{path} has no header row")
    return reader, [name.strip() for name in reader.fieldnames]


def _require(columns: list[str], required: tuple[str, ...], path: str | Path) -> None:
    missing = [c for c in required if c not in columns]
    if missing:
        raise MissingColumn(f"{path} is missing required columns: {missing}")


def _parse_float(raw: str | None) -> float | None:
    if raw is None:
        return None
    text = raw.strip()
    if text.lower() in _MISSING:
        return None
    return float(text)


def read_units_csv(
    path: str | Path, outcome: str
) -> tuple[list[dict], list[str], IngestionReport]:
    """Read a units table, dropping rows with a missing/bad outcome.

    Returns (rows, columns, report); each row dict carries parsed
    floats for every numeric column present plus the unit id.
    """
    reader, columns = _open_reader(path)
    _require(columns, ("unit_id", "latitude", "longitude"), path)
    if outcome not in columns:
        raise MissingColumn(f"{path} has no outcome column {outcome!r}")
    numeric_columns = [c for c in columns if c != "unit_id"]
    report = IngestionReport(path=str(path))
    rows: list[dict] = []
    for line_number, raw in enumerate(reader, start=2):
        report.n_rows_read += 1
        parsed: dict = {"unit_id": (raw.get("unit_id") or "").strip()}
        if not parsed["unit_id"]:
            report.drop(line_number, "missing unit_id")
            continue
        try:
            for column in numeric_columns:
                parsed[column] = _parse_float(raw.get(column))
        except ValueError as exc:
            report.drop(line_number, f"unparseable value: {exc}")
            continue
        if parsed.get("latitude") is None or parsed.get("longitude") is None:
            report.drop(line_number, "missing coordinates")
            continue
        if parsed.get(outcome) is None or not math.isfinite(parsed[outcome]):
            report.drop(line_number, f"missing outcome {outcome!r}")
            continue
        rows.append(parsed)
    report.n_rows_kept = len(rows)
    if report.n_rows_read == 0:
        raise EmptyFile(f"{path} contains no data rows")
    if not rows:
        raise ParseError(f"no usable rows in {path}; first problem: {report.dropped[0]}")
    return rows, columns, report


def ingest_units(
    path: str | Path,
    outcome: str,
    sources: SourceSet | None = None,
) -> tuple[Sample, IngestionReport]:
    """Build an estimation sample from a units CSV.

    Distances come from the ``distance_km`` column when present,
    otherwise from a nearest-source query against ``sources``.
    """
    rows, columns, report = read_units_csv(path, outcome)
    unit_ids = [r["unit_id"] for r in rows]
    lats = np.array([r["latitude"] for r in rows])
    lons = np.array([r["longitude"] for r in rows])
    if "distance_km" in columns and all(r.get("distance_km") is not None for r in rows):
        distances = np.array([r["distance_km"] for r in rows])
    else:
        if sources is None:
            raise MissingColumn(
                f"{path} has no usable distance_km column and no sources were supplied"
            )
        records = build_distance_table(
            [(uid, GeoPoint(la, lo)) for uid, la, lo in zip(unit_ids, lats, lons)], sources
        )
        distances = np.array([rec.distance_km for rec in records])
    covariates = {}
    for name in KNOWN_COVARIATES:
        if name in columns and all(r.get(name) is not None for r in rows):
            covariates[name] = np.array([r[name] for r in rows])
    sample = Sample(
        unit_ids=unit_ids,
        distances_km=distances,
        outcomes=np.array([r[outcome] for r in rows]),
        latitudes=lats,
        longitudes=lons,
        covariates=covariates,
    )
    return sample, report


def read_sources_csv(path: str | Path) -> SourceSet:
    reader, columns = _open_reader(path)
    _require(columns, ("source_id", "latitude", "longitude"), path)
    items = []
    for line_number, raw in enumerate(reader, start=2):
        sid = (raw.get("source_id") or "").strip()
        try:
            lat = _parse_float(raw.get("latitude"))
            lon = _parse_float(raw.get("longitude"))
        except ValueError as exc:
            raise ParseError(f"{path} line {line_number}: {exc}") from exc
        if not sid or lat is None or lon is None:
            raise ParseError(f"{path} line {line_number}: incomplete source row")
        items.append((sid, GeoPoint(lat, lon)))
    if not items:
        raise EmptyFile(f"{path} contains no sources")
    return SourceSet.from_items(items)


def read_panel_csv(path: str | Path) -> list[PanelObservation]:
    reader, columns = _open_reader(path)
    required = ("unit_id", "year", "outcome", "treated_post", "distance_km")
    _require(columns, required, path)
    modifier_columns = [c for c in columns if c not in required]
    panel: list[PanelObservation] = []
    for line_number, raw in enumerate(reader, start=2):
        try:
            panel.append(
                PanelObservation(
                    unit_id=(raw.get("unit_id") or "").strip(),
                    year=int(raw["year"]),
                    outcome=float(raw["outcome"]),
                    treated_post=int(raw["treated_post"]),
                    distance_km=float(raw["distance_km"]),
                    modifiers=tuple(
                        (name, int(raw[name])) for name in modifier_columns if raw.get(name)
                    ),
                )
            )
        except (KeyError, ValueError) as exc:
            raise ParseError(f"{path} line {line_number}: {exc}") from exc
    if not panel:
        raise EmptyFile(f"{path} contains no panel rows")
    return panel


def write_panel_csv(path: str | Path, panel: list[PanelObservation]) -> None:
    modifier_names = sorted({name for obs in panel for name, _ in obs.modifiers})
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["unit_id", "year", "outcome", "treated_post", "distance_km", *modifier_names]
        )
        for obs in panel:
            mods = dict(obs.modifiers)
            writer.writerow(
                [
                    obs.unit_id,
                    obs.year,
                    repr(obs.outcome),
                    obs.treated_post,
                    repr(obs.distance_km),
                    *[mods.get(name, 0) for name in modifier_names],
                ]
            )


def write_distance_csv(path: str | Path, records) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["unit_id", "distance_km", "nearest_source_id"])
        for rec in records:
            writer.writerow([rec.unit_id, repr(rec.distance_km), rec.nearest_source_id])


def write_decay_curve_csv(path: str | Path, rows: list[dict], model_names: list[str]) -> None:
    """Plot-ready decay curve: binned means with CIs plus fitted values."""
    header = [
        "d_km",
        "binned_mean",
        "binned_ci_lo",
        "binned_ci_hi",
        "bin_n",
        *[f"fitted_{name}" for name in model_names],
    ]
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_number(row.get(column)) for column in header])


def write_comparison_csv(path: str | Path, rows: list[dict]) -> None:
    header = ["model", "q", "rate", "rmse", "r2", "loglik", "aic", "bic", "delta_aic", "best"]
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_number(row.get(column)) for column in header])


def write_field_csv(path: str | Path, grid) -> None:
    """Field snapshot as x[,y],u rows."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        if grid.dim == 1:
            writer.writerow(["x_km", "u"])
            for x, u in zip(grid.axis_centers(0), grid.values):
                writer.writerow([repr(float(x)), repr(float(u))])
        else:
            writer.writerow(["x_km", "y_km", "u"])
            ys = grid.axis_centers(1)
            for i, x in enumerate(grid.axis_centers(0)):
                for j, y in enumerate(ys):
                    writer.writerow([repr(float(x)), repr(float(y)), repr(float(grid.values[i, j]))])


def _csv_number(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return value


def write_json(path: str | Path, payload: dict) -> None:
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True, allow_nan=True)
        handle.write("\n")


def read_json(path: str | Path) -> dict:
    with open(path) as handle:
        return json.load(handle)
