"""Property-sales table: ingestion, validation, derived columns and summaries.

The table is held in a :class:`pandas.DataFrame` wrapped by
:class:`PropertyDataset`.  Operations never mutate a dataset in place; they
return a new one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import (
    DataError,
    DomainError,
    EmptyDatasetError,
    MissingColumnError,
    ParseError,
    ZeroVarianceError,
)
from .spatial import point_distance

STYLES = ("single_family", "condo", "townhomes", "duplex_triplex")
MONTHS = ("jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec")

INT_COLUMNS = ("house_id", "beds", "stories", "parking", "zipcode", "year_built",
               "sale_year", "sale_month")
FLOAT_COLUMNS = ("price", "sqft", "lot_sqft", "baths", "latitude", "longitude")
TEXT_COLUMNS = ("style", "address")
BASE_COLUMNS = ("house_id", "price", "sqft", "lot_sqft", "beds", "baths", "stories",
                "parking", "style", "zipcode", "year_built", "latitude", "longitude",
                "sale_year", "sale_month", "address")
# house_id may be absent from the file; it is then assigned by grouping on address.
OPTIONAL_COLUMNS = ("house_id", "dist_pch")


@dataclass(frozen=True)
class PropertyRecord:
    house_id: int
    price: float
    sqft: float
    lot_sqft: float
    beds: int
    baths: float
    stories: int
    parking: int
    style: str
    zipcode: int
    year_built: int
    latitude: float
    longitude: float
    sale_year: int
    sale_month: int
    address: str


@dataclass(frozen=True)
class Reject:
    row: int
    reason: str


@dataclass(frozen=True)
class PropertyDataset:
    """Immutable columnar table of sold-home records plus derived columns.

    Parameters
    ----------
    frame : DataFrame
        One row per sale.  Base columns follow :data:`BASE_COLUMNS`.
    rejects : tuple of Reject
        Rows dropped at load time, with 1-based data-row numbers.
    derived : tuple of str
        Names of columns added by transforms.
    """

    frame: pd.DataFrame
    rejects: tuple = ()
    derived: tuple = ()

    def __len__(self):
        return len(self.frame)

    def __contains__(self, name):
        return name in self.frame.columns

    def __getitem__(self, name):
        if name not in self.frame.columns:
            raise MissingColumnError(name)
        return self.frame[name].to_numpy()

    @property
    def columns(self):
        return list(self.frame.columns)

    def with_columns(self, columns: Mapping[str, Sequence]) -> "PropertyDataset":
        frame = self.frame.copy()
        names = list(self.derived)
        fresh = {}
        for name, values in columns.items():
            values = np.asarray(values)
            if len(values) != len(frame):
                raise DataError(f"column {name!r} has length {len(values)}, expected {len(frame)}")
            if name in frame.columns:
                frame[name] = values
            else:
                fresh[name] = values
            if name not in names and name not in BASE_COLUMNS:
                names.append(name)
        if fresh:
            frame = pd.concat([frame, pd.DataFrame(fresh, index=frame.index)], axis=1)
        return PropertyDataset(frame, self.rejects, tuple(names))

    def take(self, rows) -> "PropertyDataset":
        """Row subset by integer positions or boolean mask."""
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        return PropertyDataset(self.frame.iloc[rows].reset_index(drop=True), self.rejects,
                               self.derived)

    def records(self):
        for row in self.frame[list(BASE_COLUMNS)].itertuples(index=False):
            yield PropertyRecord(*row)

    @classmethod
    def from_records(cls, records: Iterable[PropertyRecord], **extra) -> "PropertyDataset":
        frame = pd.DataFrame([r.__dict__ for r in records], columns=list(BASE_COLUMNS))
        for name, values in extra.items():
            frame[name] = np.asarray(values)
        return cls(_coerce_types(frame))


def _coerce_types(frame):
    frame = frame.copy()
    for name in INT_COLUMNS:
        if name in frame:
            frame[name] = frame[name].astype(np.int64)
    for name in FLOAT_COLUMNS:
        if name in frame:
            frame[name] = frame[name].astype(np.float64)
    for name in TEXT_COLUMNS:
        if name in frame:
            frame[name] = frame[name].astype(str)
    return frame


def _parse_int(token):
    value = float(token)
    if not value.is_integer():
        raise ValueError(token)
    return int(value)


def _parse_float(token):
    value = float(token)
    if not math.isfinite(value):
        raise ValueError(token)
    return value


def _validate(rec):
    if rec["price"] <= 0:
        return "price must be positive"
    if rec["sqft"] <= 0:
        return "sqft must be positive"
    if not 1 <= rec["sale_month"] <= 12:
        return "sale_month must be in 1..12"
    if rec["style"] not in STYLES:
        return f"unknown style {rec['style']!r}"
    if not -90 <= rec["latitude"] <= 90:
        return "latitude out of range"
    if not -180 <= rec["longitude"] <= 180:
        return "longitude out of range"
    for name in ("lot_sqft", "beds", "baths", "stories", "parking"):
        if rec[name] < 0:
            return f"{name} must be non-negative"
    if "house_id" in rec and rec["house_id"] <= 0:
        return "house_id must be positive"
    return None


def load_csv(path, schema: Mapping[str, str] | None = None) -> PropertyDataset:
    """Read and validate a property-sales CSV.

    Parameters
    ----------
    path : path-like
        CSV with a header row.
    schema : mapping, optional
        Canonical column name -> header name in the file.  Unmapped columns
        are looked up under their canonical name.

    Returns
    -------
    PropertyDataset
        Valid rows, deduplicated by address (first occurrence kept).  Rows
        with missing or out-of-range fields are listed in ``rejects``.

    Raises
    ------
    EmptyDatasetError
        No header, or no data rows.
    MissingColumnError
        A required column is absent from the header.
    ParseError
        A non-empty token cannot be parsed as a number.
    """
    path = Path(path)
    schema = dict(schema or {})
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise EmptyDatasetError(f"{path}: file is empty") from None
    if raw.empty:
        raise EmptyDatasetError(f"{path}: no data rows")

    present = {}
    for name in BASE_COLUMNS + ("dist_pch",):
        header = schema.get(name, name)
        if header in raw.columns:
            present[name] = header
        elif name not in OPTIONAL_COLUMNS:
            raise MissingColumnError(header)

    parsed, rejects = [], []
    for i, row in enumerate(raw.itertuples(index=False), start=1):
        row = dict(zip(raw.columns, row))
        rec, missing = {}, []
        for name, header in present.items():
            token = row[header].strip()
            if token == "" or token.upper() in ("NA", "NAN", "."):
                missing.append(name)
                continue
            if name in TEXT_COLUMNS:
                rec[name] = token
                continue
            try:
                rec[name] = _parse_int(token) if name in INT_COLUMNS else _parse_float(token)
            except ValueError:
                raise ParseError(i, header, token) from None
        if missing:
            rejects.append(Reject(i, "missing " + ", ".join(missing)))
            continue
        reason = _validate(rec)
        if reason:
            rejects.append(Reject(i, reason))
            continue
        parsed.append((i, rec))

    seen = set()
    records = []
    for i, rec in parsed:
        if rec["address"] in seen:
            rejects.append(Reject(i, f"duplicate address {rec['address']!r}"))
            continue
        seen.add(rec["address"])
        records.append(rec)
    if not records:
        raise EmptyDatasetError(f"{path}: no valid rows ({len(rejects)} rejected)")

    frame = pd.DataFrame(records)
    if "house_id" not in frame:
        # group(address): ids follow sorted address order
        order = {a: k for k, a in enumerate(sorted(frame["address"]), start=1)}
        frame["house_id"] = frame["address"].map(order)
    if frame["house_id"].duplicated().any():
        dup = frame.loc[frame["house_id"].duplicated(), "house_id"].iloc[0]
        raise DataError(f"house_id {dup} is not unique after address deduplication")
    extra = [c for c in frame.columns if c not in BASE_COLUMNS]
    frame = _coerce_types(frame[list(BASE_COLUMNS) + extra])
    rejects.sort(key=lambda r: r.row)
    return PropertyDataset(frame, tuple(rejects))


def write_csv(ds: PropertyDataset, path, columns: Sequence[str] | None = None):
    """Write base columns (or ``columns``) so that :func:`load_csv` round-trips them."""
    if columns is None:
        columns = list(BASE_COLUMNS) + (["dist_pch"] if "dist_pch" in ds else [])
    ds.frame[list(columns)].to_csv(path, index=False)


def month_index(year, month):
    """Months elapsed since January 1960."""
    return 12 * (np.asarray(year) - 1960) + np.asarray(month) - 1


def _safe_log(values, name):
    values = np.asarray(values, dtype=float)
    bad = np.flatnonzero(~(values > 0) & ~np.isnan(values))
    if bad.size:
        raise DomainError(f"ln({name}) undefined at row {bad[0] + 1}: value {values[bad[0]]!r}")
    return np.log(values)


def derive_columns(ds: PropertyDataset, price_threshold: float | None = None, *,
                   reference=None, metric: str = "degree_euclidean") -> PropertyDataset:
    """Add the modelling columns used throughout the pipeline.

    Adds lnprice, lnsqft, dist_pch (when ``reference`` is given) and
    lndist_pch, style dummies, month dummies jan..dec, one ``yrYYYY`` dummy
    per observed sale year, time, house_by_year, pricedummy and standardized
    coordinates.

    ``price_threshold`` defaults to the sample mean of price; pricedummy is
    1 when price is at or above it.  ``reference`` is the (latitude,
    longitude) of the coastal highway reference point.
    """
    for name in ("price", "sqft", "style", "sale_year", "sale_month", "house_id",
                 "latitude", "longitude"):
        if name not in ds:
            raise MissingColumnError(name)
    price = ds["price"].astype(float)
    cols = {
        "lnprice": _safe_log(price, "price"),
        "lnsqft": _safe_log(ds["sqft"], "sqft"),
    }
    if reference is not None:
        coords = np.column_stack([ds["latitude"], ds["longitude"]])
        dist = point_distance(coords, reference, metric=metric)
        cols["dist_pch"] = dist
    elif "dist_pch" in ds:
        dist = ds["dist_pch"].astype(float)
    else:
        raise MissingColumnError("dist_pch")
    cols["lndist_pch"] = _safe_log(dist, "dist_pch")

    style = ds["style"]
    for s in STYLES:
        cols[s] = (style == s).astype(np.int64)
    month = ds["sale_month"]
    for k, name in enumerate(MONTHS, start=1):
        cols[name] = (month == k).astype(np.int64)
    year = ds["sale_year"]
    for y in np.unique(year):
        cols[f"yr{y}"] = (year == y).astype(np.int64)
    cols["time"] = month_index(year, month)
    cols["house_by_year"] = ds["house_id"] * year
    if price_threshold is None:
        price_threshold = float(price.mean())
    cols["pricedummy"] = (price >= price_threshold).astype(np.int64)
    cols["std_latitude"] = standardize(ds["latitude"])
    cols["std_longitude"] = standardize(ds["longitude"])
    return ds.with_columns(cols)


def standardize(column) -> np.ndarray:
    """Return ``(x - mean) / sd`` with the sample (n-1) standard deviation."""
    x = np.asarray(column, dtype=float)
    if x.size < 2:
        raise DataError("standardize needs at least two values")
    sd = x.std(ddof=1)
    if sd == 0:
        raise ZeroVarianceError("cannot standardize a constant column")
    return (x - x.mean()) / sd


@dataclass(frozen=True)
class ColumnStats:
    n: int
    mean: float
    sd: float
    min: float
    max: float


@dataclass(frozen=True)
class DescriptiveStats:
    columns: dict = field(default_factory=dict)

    def __getitem__(self, name) -> ColumnStats:
        return self.columns[name]

    def to_dict(self):
        return {name: vars(s) for name, s in self.columns.items()}

    def to_frame(self):
        return pd.DataFrame(self.to_dict()).T[["n", "mean", "sd", "min", "max"]]


def describe(ds: PropertyDataset, columns: Sequence[str]) -> DescriptiveStats:
    """Obs / mean / sd / min / max per column, skipping missing values."""
    out = {}
    for name in columns:
        x = np.asarray(ds[name], dtype=float)
        x = x[~np.isnan(x)]
        n = x.size
        if n == 0:
            out[name] = ColumnStats(0, math.nan, math.nan, math.nan, math.nan)
            continue
        mean = float(x.mean())
        lo, hi = float(x.min()), float(x.max())
        sd = 0.0 if lo == hi else (float(x.std(ddof=1)) if n > 1 else math.nan)
        out[name] = ColumnStats(n, min(max(mean, lo), hi), sd, lo, hi)
    return DescriptiveStats(out)


def correlation_matrix(ds: PropertyDataset, columns: Sequence[str]) -> pd.DataFrame:
    """Pearson correlations over rows complete in all ``columns``."""
    data = np.column_stack([np.asarray(ds[c], dtype=float) for c in columns])
    data = data[~np.isnan(data).any(axis=1)]
    if data.shape[0] < 2:
        raise DataError("correlation needs at least two complete rows")
    centered = data - data.mean(axis=0)
    ss = np.sqrt((centered ** 2).sum(axis=0))
    for name, s in zip(columns, ss):
        if s == 0:
            raise ZeroVarianceError(f"column {name!r} has zero variance")
    corr = (centered.T @ centered) / np.outer(ss, ss)
    corr = np.clip((corr + corr.T) / 2, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return pd.DataFrame(corr, index=list(columns), columns=list(columns))
