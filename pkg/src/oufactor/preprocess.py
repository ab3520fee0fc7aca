"""Preprocessing pipelines: count log-ratios and seasonal adjustment.

Two transforms prepare raw measurements for model fitting. For
sequencing counts, log-ratios against a reference total remove depth
effects; a pseudocount keeps zero counts finite. For daily environmental
records, a day-of-year climatology removes the mean seasonal cycle.
"""

from __future__ import annotations

import csv
import datetime
import warnings
from dataclasses import dataclass

import numpy as np

from .dataio import format_float
from .kalman import TimeSeries

#: Added to every count before taking ratios so zero counts stay finite.
DEFAULT_PSEUDOCOUNT = 0.3

#: Minimum record span (days) below which the day-of-year climatology is
#: considered poorly estimated and a warning is issued.
MIN_CLIMATOLOGY_SPAN_DAYS = 730


@dataclass
class RawCounts:
    """Abundance counts for several taxa plus a reference total.

    Attributes
    ----------
    times : (n,) array
        Strictly increasing observation times.
    counts : (n, p + 1) array
        Nonnegative counts; the last column is the reference total by
        convention (`logratio_transform` can pick another by label).
    labels : list of str
        One name per count column.
    """

    times: np.ndarray
    counts: np.ndarray
    labels: list[str]

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.counts = np.asarray(self.counts, dtype=float)
        if self.times.ndim != 1:
            raise ValueError("times must be 1-dimensional")
        if self.counts.ndim != 2 or self.counts.shape[1] < 2:
            raise ValueError(
                "counts must be 2-dimensional with at least 2 columns "
                "(one taxon plus the reference)"
            )
        if self.counts.shape[0] != self.times.size:
            raise ValueError(
                f"{self.times.size} times but {self.counts.shape[0]} count rows"
            )
        if np.any(np.diff(self.times) <= 0):
            bad = int(np.argmax(np.diff(self.times) <= 0)) + 1
            raise ValueError(
                f"times must be strictly increasing; row {bad} does not "
                "advance"
            )
        if not np.all(np.isfinite(self.counts)):
            raise ValueError("counts must be finite")
        if np.any(self.counts < 0):
            i, j = np.argwhere(self.counts < 0)[0]
            raise ValueError(
                f"counts must be nonnegative; row {i}, column {j} is "
                f"{self.counts[i, j]}"
            )
        self.labels = [str(s) for s in self.labels]
        if len(self.labels) != self.counts.shape[1]:
            raise ValueError(
                f"{self.counts.shape[1]} count columns but "
                f"{len(self.labels)} labels"
            )


def read_counts(path) -> RawCounts:
    """Load a counts table from CSV (header, time column first)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a header row") from None
        if len(header) < 3:
            raise ValueError(
                f"{path}: need a time column plus at least 2 count columns"
            )
        width = len(header)
        times, rows = [], []
        for line_no, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != width:
                raise ValueError(
                    f"{path}: line {line_no}: expected {width} fields, "
                    f"found {len(record)}"
                )
            parsed = []
            for j, cell in enumerate(record):
                text = cell.strip()
                try:
                    parsed.append(float(text))
                except ValueError:
                    raise ValueError(
                        f"{path}: line {line_no}, column {j + 1}: cannot "
                        f"parse value {text!r}"
                    ) from None
            times.append(parsed[0])
            rows.append(parsed[1:])
    if not times:
        raise ValueError(f"{path}: no data rows")
    try:
        return RawCounts(
            times=np.array(times),
            counts=np.array(rows),
            labels=[name.strip() for name in header[1:]],
        )
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


def logratio_transform(
    raw: RawCounts,
    pseudocount: float = DEFAULT_PSEUDOCOUNT,
    reference: str | None = None,
) -> TimeSeries:
    """Log-ratios of taxon counts against the reference total.

    Each output coordinate is log((count + pseudocount) /
    (reference + pseudocount)). By default the last column is the
    reference; pass a label to pick another. The pseudocount keeps zero
    counts finite; exact scale invariance of the ratios holds only in
    the large-count limit.
    """
    if not pseudocount > 0:
        raise ValueError(f"pseudocount must be > 0, got {pseudocount}")
    if reference is None:
        ref_idx = raw.counts.shape[1] - 1
    else:
        try:
            ref_idx = raw.labels.index(reference)
        except ValueError:
            raise ValueError(
                f"reference column {reference!r} not found; available: "
                f"{', '.join(raw.labels)}"
            ) from None
    keep = [j for j in range(raw.counts.shape[1]) if j != ref_idx]
    shifted = raw.counts + pseudocount
    values = np.log(shifted[:, keep] / shifted[:, [ref_idx]])
    return TimeSeries(raw.times.copy(), values)


def logratio_labels(raw: RawCounts, reference: str | None = None) -> list[str]:
    """Output column names of `logratio_transform` (reference dropped)."""
    if reference is None:
        ref_idx = len(raw.labels) - 1
    else:
        ref_idx = raw.labels.index(reference)
    return [s for j, s in enumerate(raw.labels) if j != ref_idx]


def day_of_year(dates) -> np.ndarray:
    """Day-of-year index in 1..365 with Feb 29 pooled into Feb 28."""
    out = np.empty(len(dates), dtype=int)
    for i, d in enumerate(dates):
        day = 28 if (d.month == 2 and d.day == 29) else d.day
        out[i] = datetime.date(2001, d.month, day).timetuple().tm_yday
    return out


@dataclass
class Climatology:
    """Per-coordinate day-of-year means over a training record.

    Attributes
    ----------
    doy : (k,) int array
        Day-of-year indices present in the record, ascending.
    means : (k, p) array
        Mean value per day of year and coordinate; NaN where a day has
        no observed values for a coordinate.
    """

    doy: np.ndarray
    means: np.ndarray

    def lookup(self, doys) -> np.ndarray:
        """Climatology rows for the given day-of-year indices."""
        index = {int(d): i for i, d in enumerate(self.doy)}
        try:
            rows = [index[int(d)] for d in doys]
        except KeyError as exc:
            raise ValueError(
                f"day of year {exc.args[0]} is outside the fitted record"
            ) from None
        return self.means[rows]


def deseasonalize(dates, values) -> tuple[np.ndarray, Climatology]:
    """Subtract the day-of-year mean cycle from a daily record.

    `dates` holds calendar dates (datetime.date objects or ISO strings),
    `values` the (n, p) measurements, NaN rows allowed for missing days.
    Returns the anomaly array and the fitted climatology; by
    construction the anomalies average to zero on every day-of-year of
    the fitted record. Records spanning less than 2 years trigger a
    warning because the climatology is then poorly estimated.
    """
    dates = parse_dates(dates)
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape[0] != len(dates):
        raise ValueError(
            f"{len(dates)} dates but {values.shape[0]} value rows"
        )
    span = (max(dates) - min(dates)).days
    if span < MIN_CLIMATOLOGY_SPAN_DAYS:
        warnings.warn(
            f"record spans {span} days (< {MIN_CLIMATOLOGY_SPAN_DAYS}); the "
            "day-of-year climatology is poorly estimated",
            RuntimeWarning,
            stacklevel=2,
        )
    doys = day_of_year(dates)
    uniq = np.unique(doys)
    means = np.full((uniq.size, values.shape[1]), np.nan)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for i, d in enumerate(uniq):
            means[i] = np.nanmean(values[doys == d], axis=0)
    clim = Climatology(doy=uniq, means=means)
    anomalies = values - clim.lookup(doys)
    return anomalies, clim


def parse_dates(dates) -> list[datetime.date]:
    """Normalize ISO strings, datetimes or dates to datetime.date objects."""
    out = []
    for i, d in enumerate(dates):
        if isinstance(d, datetime.datetime):
            out.append(d.date())
        elif isinstance(d, datetime.date):
            out.append(d)
        else:
            try:
                out.append(datetime.date.fromisoformat(str(d).strip()))
            except ValueError:
                raise ValueError(
                    f"row {i}: cannot parse date {d!r} (expected YYYY-MM-DD)"
                ) from None
    if not out:
        raise ValueError("no dates given")
    return out


def read_dated_series(path) -> tuple[list[datetime.date], np.ndarray, list[str]]:
    """Load a daily record whose time column holds ISO dates.

    Returns the dates, the (n, p) value array (NaN rows for fully blank
    value cells), and the value-column labels. Dates must be strictly
    increasing.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a header row") from None
        if len(header) < 2:
            raise ValueError(
                f"{path}: header must name a date column and at least one "
                "value column"
            )
        p = len(header) - 1
        dates, rows = [], []
        for line_no, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != p + 1:
                raise ValueError(
                    f"{path}: line {line_no}: expected {p + 1} fields, "
                    f"found {len(record)}"
                )
            text = record[0].strip()
            try:
                date = datetime.date.fromisoformat(text)
            except ValueError:
                raise ValueError(
                    f"{path}: line {line_no}, column 1: cannot parse date "
                    f"{text!r} (expected YYYY-MM-DD)"
                ) from None
            cells = [c.strip() for c in record[1:]]
            blank = [c == "" for c in cells]
            if any(blank) and not all(blank):
                j = blank.index(False)
                raise ValueError(
                    f"{path}: line {line_no}: blank cells must cover the "
                    f"whole row (column {j + 2} is filled)"
                )
            if all(blank):
                row = [np.nan] * p
            else:
                row = []
                for j, c in enumerate(cells):
                    try:
                        row.append(float(c))
                    except ValueError:
                        raise ValueError(
                            f"{path}: line {line_no}, column {j + 2}: cannot "
                            f"parse value {c!r}"
                        ) from None
            dates.append(date)
            rows.append(row)
    if not dates:
        raise ValueError(f"{path}: no data rows")
    for i in range(1, len(dates)):
        if dates[i] <= dates[i - 1]:
            raise ValueError(
                f"{path}: dates must be strictly increasing; row {i} "
                f"({dates[i].isoformat()}) does not advance"
            )
    return dates, np.array(rows), [name.strip() for name in header[1:]]


def write_dated_series(path, dates, values, labels) -> None:
    """Write a daily record with ISO dates; NaN rows become blank cells."""
    dates = parse_dates(dates)
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if len(labels) != values.shape[1]:
        raise ValueError(
            f"expected {values.shape[1]} column labels, got {len(labels)}"
        )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", *labels])
        for date, row in zip(dates, values):
            if np.all(np.isnan(row)):
                cells = [""] * values.shape[1]
            else:
                cells = [format_float(v) for v in row]
            writer.writerow([date.isoformat(), *cells])


def write_climatology(path, clim: Climatology, labels) -> None:
    """Write a fitted climatology as CSV (one day of year per row)."""
    if len(labels) != clim.means.shape[1]:
        raise ValueError(
            f"expected {clim.means.shape[1]} column labels, got {len(labels)}"
        )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["doy", *labels])
        for d, row in zip(clim.doy, clim.means):
            cells = ["" if np.isnan(v) else format_float(v) for v in row]
            writer.writerow([str(int(d)), *cells])
