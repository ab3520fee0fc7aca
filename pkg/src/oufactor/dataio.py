"""CSV series files and JSON parameter files.

All writers are deterministic: floats are rendered with 17 significant
digits (which round-trips IEEE doubles exactly), rows keep their input
order, JSON keys are written in a fixed order, and line endings are
always a bare newline. Running the same command twice therefore produces
byte-identical files.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .kalman import TimeSeries
from .params import ModelParams

PARAMS_FORMAT = "oufactor-params"
FIT_FORMAT = "oufactor-fit"
CANONICAL_FORMAT = "oufactor-canonical"
FORMAT_VERSION = 1

_PARAM_KEYS = {
    "format", "version", "m", "p", "theta", "loadings", "obs_mean",
    "noise_var", "diffusion", "info",
}


def format_float(x: float) -> str:
    """Decimal text for a float that parses back to the identical value."""
    return "%.17g" % x


def default_labels(p: int) -> list[str]:
    """Fallback column names y1 .. yp."""
    return [f"y{j + 1}" for j in range(p)]


def read_labels(path) -> list[str]:
    """Value-column names from a series file header (time column dropped)."""
    with open(path, newline="", encoding="utf-8") as fh:
        try:
            header = next(csv.reader(fh))
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a header row") from None
    if len(header) < 2:
        raise ValueError(
            f"{path}: header must name a time column and at least one value column"
        )
    return [name.strip() for name in header[1:]]


def read_series(path) -> TimeSeries:
    """Load an observed series from CSV.

    The file must have a header row; the first column is the observation
    time (a real number), the remaining columns are the observed
    coordinates. A fully blank value row marks a missing observation;
    partially blank rows are rejected. Parse failures report the file
    line and column, and non-increasing times the offending row.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a header row") from None
        if len(header) < 2:
            raise ValueError(
                f"{path}: header must name a time column and at least one value column"
            )
        p = len(header) - 1
        times: list[float] = []
        rows: list[list[float]] = []
        for line_no, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != p + 1:
                raise ValueError(
                    f"{path}: line {line_no}: expected {p + 1} fields, "
                    f"found {len(record)}"
                )
            cell = record[0].strip()
            try:
                t = float(cell)
            except ValueError:
                raise ValueError(
                    f"{path}: line {line_no}, column 1: cannot parse time "
                    f"value {cell!r}"
                ) from None
            cells = [c.strip() for c in record[1:]]
            blank = [c == "" for c in cells]
            if any(blank) and not all(blank):
                j = blank.index(False)
                raise ValueError(
                    f"{path}: line {line_no}: blank cells must cover the whole "
                    f"row (column {j + 2} is filled); partial missingness is "
                    "not supported"
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
            times.append(t)
            rows.append(row)
    if not times:
        raise ValueError(f"{path}: no data rows")
    try:
        return TimeSeries(np.array(times), np.array(rows))
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


def write_series(path, series: TimeSeries, labels=None) -> None:
    """Write a series as CSV; missing rows become blank value cells."""
    if labels is None:
        labels = default_labels(series.p)
    if len(labels) != series.p:
        raise ValueError(
            f"expected {series.p} column labels, got {len(labels)}"
        )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["time", *labels])
        for i in range(series.n):
            out = [format_float(series.times[i])]
            if series.missing[i]:
                out.extend([""] * series.p)
            else:
                out.extend(format_float(v) for v in series.values[i])
            writer.writerow(out)


def params_to_dict(params: ModelParams) -> dict:
    """JSON-ready dictionary of model parameters (row-major matrices)."""
    return {
        "format": PARAMS_FORMAT,
        "version": FORMAT_VERSION,
        "m": params.m,
        "p": params.p,
        "theta": params.theta.tolist(),
        "loadings": params.loadings.tolist(),
        "obs_mean": params.obs_mean.tolist(),
        "noise_var": params.noise_var.tolist(),
        "diffusion": None if params.diffusion is None else params.diffusion.tolist(),
    }


def params_from_dict(doc) -> ModelParams:
    """Rebuild model parameters from a parsed parameter document.

    The document must carry the expected format and version fields;
    unknown keys are rejected so typos do not pass silently.
    """
    if not isinstance(doc, dict):
        raise ValueError("parameter document must be a JSON object")
    fmt = doc.get("format")
    if fmt != PARAMS_FORMAT:
        raise ValueError(
            f"unsupported parameter format {fmt!r}, expected {PARAMS_FORMAT!r}"
        )
    version = doc.get("version")
    if version != FORMAT_VERSION:
        raise ValueError(
            f"unsupported parameter version {version!r}, expected {FORMAT_VERSION}"
        )
    unknown = sorted(set(doc) - _PARAM_KEYS)
    if unknown:
        raise ValueError(f"unknown parameter keys: {', '.join(unknown)}")
    for key in ("m", "p", "theta", "loadings", "obs_mean", "noise_var"):
        if key not in doc:
            raise ValueError(f"parameter document is missing {key!r}")
    m, p = int(doc["m"]), int(doc["p"])
    diffusion = doc["diffusion"] if "diffusion" in doc else None
    params = ModelParams(
        theta=np.asarray(doc["theta"], dtype=float),
        loadings=np.asarray(doc["loadings"], dtype=float),
        obs_mean=np.asarray(doc["obs_mean"], dtype=float),
        noise_var=np.asarray(doc["noise_var"], dtype=float),
        diffusion=None if diffusion is None else np.asarray(diffusion, dtype=float),
    )
    if params.m != m or params.p != p:
        raise ValueError(
            f"declared dimensions (m={m}, p={p}) do not match the matrices "
            f"(m={params.m}, p={params.p})"
        )
    return params


def write_params(path, params: ModelParams, info=None) -> None:
    """Write model parameters as a JSON file.

    `info` is an optional free-form dictionary stored under "info"
    (descriptions, generation seeds and similar notes).
    """
    doc = params_to_dict(params)
    if info is not None:
        doc["info"] = info
    write_json(path, doc)


def read_params(path) -> ModelParams:
    """Load model parameters from a JSON parameter file."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON: {exc}") from None
    try:
        return params_from_dict(doc)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


def load_model_params(path) -> ModelParams:
    """Load parameters from either a parameter file or a fit result file.

    Fit and canonicalization outputs embed the parameter document under
    "params"; plain parameter files are the document itself.
    """
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON: {exc}") from None
    if isinstance(doc, dict) and doc.get("format") in (FIT_FORMAT, CANONICAL_FORMAT):
        doc = doc.get("params")
    try:
        return params_from_dict(doc)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(
        f"object of type {type(value).__name__} is not JSON serializable"
    )


def write_json(path, doc) -> None:
    """Write a JSON document with fixed layout (2-space indent, newline)."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, default=_json_default)
        fh.write("\n")


def example_path(name: str) -> str:
    """Filesystem path of a packaged example dataset.

    All packaged datasets are synthetic, generated by this package's own
    simulator; the `*_params.json` files alongside the CSVs hold the
    generating models.
    """
    from importlib.resources import files

    base = files("oufactor") / "data"
    target = base / name
    if not target.is_file():
        available = ", ".join(sorted(f.name for f in base.iterdir()))
        raise ValueError(
            f"no packaged dataset {name!r}; available: {available}"
        )
    return str(target)
