import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from .errors import IngestError

ASYMMETRY_TOL = 1e-8
FLOAT_FORMAT = "%.17g"
DATE_FORMAT = "%Y-%m-%d"
MAX_LISTED_GAPS = 10

_LINE_PATTERN = re.compile(r"line (\d+)")


@dataclass
class ReturnsTable:
    dates: pd.DatetimeIndex
    values: np.ndarray
    assets: List[str]
    # column means removed at ingestion (zeros when de-meaning is off)
    means: np.ndarray

    @property
    def n_assets(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.values.shape[0]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, index=self.dates, columns=self.assets)


def _exact_floats(cells: np.ndarray) -> np.ndarray:
    # Python float parsing round-trips 17 significant digits exactly
    return np.asarray(cells, dtype=str).astype(float)


def _line(position: int) -> int:
    # header is line 1
    return int(position) + 2


def _read_table(path: Path) -> pd.DataFrame:
    if not path.is_file():
        raise IngestError("missing_file", f"{path} does not exist")
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=True)
    except pd.errors.EmptyDataError as exc:
        raise IngestError("empty", f"{path} holds no data") from exc
    except pd.errors.ParserError as exc:
        match = _LINE_PATTERN.search(str(exc))
        row = int(match.group(1)) if match else None
        raise IngestError("ragged", f"row has more fields than the header in {path}", row=row) from exc


def _parse_dates(raw: pd.Series, path: Path) -> pd.DatetimeIndex:
    dates = pd.to_datetime(raw, format=DATE_FORMAT, errors="coerce")
    bad = np.flatnonzero(dates.isna().to_numpy())
    if bad.size:
        raise IngestError("date", f"{raw.iloc[bad[0]]!r} is not an ISO date in {path}", row=_line(bad[0]))
    index = pd.DatetimeIndex(dates)
    duplicated = np.flatnonzero(index.duplicated())
    if duplicated.size:
        raise IngestError("duplicate_date", f"{index[duplicated[0]].date()} repeats in {path}", row=_line(duplicated[0]))
    backwards = np.flatnonzero(np.diff(index.asi8) <= 0)
    if backwards.size:
        raise IngestError("order", f"dates must be strictly increasing in {path}", row=_line(backwards[0] + 1))
    return index


def ingest_returns(path, demean: bool = True) -> ReturnsTable:
    """Read a `date,asset_1,...,asset_n` CSV into a validated return matrix.

    Returns are de-meaned with full-sample column means unless `demean` is off.
    """
    path = Path(path)
    frame = _read_table(path)
    columns = [str(c).strip() for c in frame.columns]
    if not columns or columns[0].lower() != "date":
        raise IngestError("header", f"first column of {path} must be 'date'", row=1)
    if len(columns) < 2:
        raise IngestError("header", f"{path} has no asset columns", row=1)
    if frame.empty:
        raise IngestError("empty", f"{path} holds no data rows")

    short = frame.isna().any(axis=1).to_numpy()
    if short.any():
        first = int(np.flatnonzero(short)[0])
        raise IngestError("ragged", f"row has fewer fields than the header in {path}", row=_line(first))

    dates = _parse_dates(frame.iloc[:, 0].str.strip(), path)
    cells = frame.iloc[:, 1:].apply(lambda col: col.str.strip())
    values = cells.apply(lambda col: pd.to_numeric(col, errors="coerce")).to_numpy(dtype=float)
    bad_rows = np.flatnonzero(~np.isfinite(values).all(axis=1))
    if bad_rows.size:
        row = int(bad_rows[0])
        column = columns[1 + int(np.flatnonzero(~np.isfinite(values[row]))[0])]
        raise IngestError("nan", f"missing or non-numeric value in column {column} of {path}", row=_line(row))
    values = _exact_floats(cells.to_numpy())

    means = values.mean(axis=0) if demean else np.zeros(values.shape[1])
    logging.info("Ingested returns path=%s dates=%s assets=%s demeaned=%s", path, len(dates), values.shape[1], demean)
    return ReturnsTable(dates, values - means, columns[1:], means)


def _format_gaps(missing: Sequence[pd.Timestamp]) -> str:
    listed = ", ".join(str(d.date()) for d in missing[:MAX_LISTED_GAPS])
    if len(missing) > MAX_LISTED_GAPS:
        listed += f" and {len(missing) - MAX_LISTED_GAPS} more"
    return listed


def _finish_realized(stack: np.ndarray, dates: pd.DatetimeIndex) -> np.ndarray:
    mirrored = np.swapaxes(stack, 1, 2)
    both = ~np.isnan(stack) & ~np.isnan(mirrored)
    with np.errstate(invalid="ignore"):
        asymmetric = both & (np.abs(stack - mirrored) > ASYMMETRY_TOL)
    if asymmetric.any():
        logging.warning(
            "Symmetrized asymmetric realized covariances dates=%s",
            int(asymmetric.any(axis=(1, 2)).sum()),
        )
    filled = np.where(np.isnan(stack), mirrored, stack)
    incomplete = np.flatnonzero(np.isnan(filled).any(axis=(1, 2)))
    if incomplete.size:
        raise IngestError("incomplete", f"realized covariance for {dates[incomplete[0]].date()} has missing entries")
    result = 0.5 * (filled + np.swapaxes(filled, 1, 2))
    smallest = np.linalg.eigvalsh(result)[:, 0]
    scale = np.maximum(np.abs(np.diagonal(result, axis1=1, axis2=2)).max(axis=1), 1.0)
    not_psd = int(np.sum(smallest < -1e-12 * scale))
    if not_psd:
        logging.warning("Realized covariances are not positive semidefinite dates=%s", not_psd)
    return result


def _realized_from_directory(directory: Path, dates: pd.DatetimeIndex, n: int) -> np.ndarray:
    files = [directory / f"{d.strftime(DATE_FORMAT)}.csv" for d in dates]
    missing = [d for d, f in zip(dates, files) if not f.is_file()]
    if missing:
        raise IngestError("missing_date", f"no realized covariance for {_format_gaps(missing)}")
    stack = np.empty((len(dates), n, n))
    for t, file in enumerate(files):
        try:
            matrix = _exact_floats(pd.read_csv(file, header=None, dtype=str).to_numpy())
        except (pd.errors.ParserError, pd.errors.EmptyDataError, ValueError) as exc:
            raise IngestError("matrix", f"cannot read {file}: {exc}") from exc
        if matrix.shape != (n, n):
            raise IngestError("dimension", f"{file} holds a {matrix.shape} matrix, returns have {n} assets")
        stack[t] = matrix
    return stack


def _realized_from_long(path: Path, dates: pd.DatetimeIndex, n: int) -> np.ndarray:
    frame = _read_table(path)
    expected = ["date", "i", "j", "value"]
    if [str(c).strip().lower() for c in frame.columns] != expected:
        raise IngestError("header", f"{path} must have columns {','.join(expected)}", row=1)
    frame.columns = expected
    entry_dates = pd.to_datetime(frame["date"].str.strip(), format=DATE_FORMAT, errors="coerce")
    idx = pd.to_numeric(frame["i"], errors="coerce").to_numpy()
    jdx = pd.to_numeric(frame["j"], errors="coerce").to_numpy()
    values = pd.to_numeric(frame["value"], errors="coerce").to_numpy(dtype=float)
    bad = np.flatnonzero(entry_dates.isna().to_numpy() | np.isnan(idx) | np.isnan(jdx) | ~np.isfinite(values))
    if bad.size:
        raise IngestError("nan", f"malformed realized covariance entry in {path}", row=_line(bad[0]))
    values = _exact_floats(frame["value"].str.strip().to_numpy())
    idx = idx.astype(int)
    jdx = jdx.astype(int)
    outside = np.flatnonzero((idx < 1) | (jdx < 1) | (idx > n) | (jdx > n))
    if outside.size:
        raise IngestError(
            "dimension", f"index ({idx[outside[0]]},{jdx[outside[0]]}) outside 1..{n} in {path}", row=_line(outside[0])
        )
    position = dates.get_indexer(pd.DatetimeIndex(entry_dates))
    keep = position >= 0
    stack = np.full((len(dates), n, n), np.nan)
    stack[position[keep], idx[keep] - 1, jdx[keep] - 1] = values[keep]
    empty = np.isnan(stack).all(axis=(1, 2))
    if empty.any():
        raise IngestError("missing_date", f"no realized covariance for {_format_gaps(list(dates[empty]))}")
    return stack


def ingest_realized_cov(path, dates, n_assets: int) -> np.ndarray:
    """Realized covariance matrices aligned to `dates`.

    `path` is a directory of `YYYY-MM-DD.csv` matrices or one long-format
    `date,i,j,value` file with 1-based indices; a lower triangle is enough.
    """
    path = Path(path)
    index = pd.DatetimeIndex(dates)
    if path.is_dir():
        stack = _realized_from_directory(path, index, n_assets)
    else:
        stack = _realized_from_long(path, index, n_assets)
    return _finish_realized(stack, index)


def write_returns(path, dates, returns, assets: Optional[Sequence[str]] = None) -> None:
    values = np.asarray(returns, dtype=float)
    names = list(assets) if assets is not None else [f"asset_{i + 1}" for i in range(values.shape[1])]
    frame = pd.DataFrame(values, columns=names)
    frame.insert(0, "date", pd.DatetimeIndex(dates).strftime(DATE_FORMAT))
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def write_realized_cov(path, dates, covariances) -> None:
    """Long format, lower triangle only."""
    stack = np.asarray(covariances, dtype=float)
    n = stack.shape[1]
    rows, cols = np.tril_indices(n)
    labels = pd.DatetimeIndex(dates).strftime(DATE_FORMAT)
    frame = pd.DataFrame(
        {
            "date": np.repeat(labels, rows.size),
            "i": np.tile(rows + 1, len(labels)),
            "j": np.tile(cols + 1, len(labels)),
            "value": stack[:, rows, cols].ravel(),
        }
    )
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def synthetic_dates(count: int, start: str = "2000-01-03") -> pd.DatetimeIndex:
    """Business-day calendar for simulated series."""
    return pd.bdate_range(start=start, periods=count)
